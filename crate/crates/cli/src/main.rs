use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dmguide_cli::commands::{self, Ctx};
use dmguide_cli::{CliResult, RunConfig};
use dmguide_core::player::PlayerVariant;

#[derive(Parser)]
#[command(name = "dmguide", version, about = "Train and evaluate DM guidance models")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set ppo.iterations=20`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Directory for artifacts; overrides `paths.work_dir`.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// Global seed; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with oracle labels.
    SynthGen,
    /// Validate and sort a post dump.
    Parse {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Reconstruct episodes from parsed posts.
    BuildEpisodes,
    /// Train the inverse dynamics model on a labeled subset.
    TrainIdm {
        /// Labeled episodes to train on instead of a gold subset.
        #[arg(long)]
        labeled: Option<PathBuf>,
    },
    /// Label the training split with the IDM.
    PseudoLabel,
    /// Turn IDM labels into intent texts.
    MineIntents,
    /// Train the intent generator and intent-to-action classifier.
    TrainIntentGen,
    /// Train the reward and evaluation player models.
    TrainPlayer {
        /// Only train one variant.
        #[arg(long, value_parser = ["reward", "eval"])]
        variant: Option<String>,
    },
    /// Train a supervised DM policy.
    TrainDm {
        #[arg(long, value_parser = ["random", "human", "idm", "mined", "gen"])]
        variant: String,
    },
    /// Fine-tune an intent-conditioned DM policy with PPO.
    TrainDmRl {
        #[arg(long, value_parser = ["mined", "gen"])]
        variant: String,
    },
    /// Score every trained policy on the test split.
    Evaluate,
    /// Run all variants over several seeds and summarize.
    Matrix {
        #[arg(long)]
        seeds: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SynthGen => "synth-gen",
            Command::Parse { .. } => "parse",
            Command::BuildEpisodes => "build-episodes",
            Command::TrainIdm { .. } => "train-idm",
            Command::PseudoLabel => "pseudo-label",
            Command::MineIntents => "mine-intents",
            Command::TrainIntentGen => "train-intent-gen",
            Command::TrainPlayer { .. } => "train-player",
            Command::TrainDm { .. } => "train-dm",
            Command::TrainDmRl { .. } => "train-dm-rl",
            Command::Evaluate => "evaluate",
            Command::Matrix { .. } => "matrix",
        }
    }
}

fn run(cli: Cli) -> CliResult<String> {
    let mut overrides = cli.overrides;
    if let Some(dir) = &cli.work_dir {
        overrides.push(format!("paths.work_dir={}", toml_string(&dir.to_string_lossy())));
    }
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let ctx = Ctx::new(cfg, cli.command.name());
    match &cli.command {
        Command::SynthGen => commands::synth_gen(&ctx),
        Command::Parse { input } => commands::parse(&ctx, input.as_deref()),
        Command::BuildEpisodes => commands::build_episodes(&ctx),
        Command::TrainIdm { labeled } => commands::train_idm_cmd(&ctx, labeled.as_deref()),
        Command::PseudoLabel => commands::pseudo_label_cmd(&ctx),
        Command::MineIntents => commands::mine_intents_cmd(&ctx),
        Command::TrainIntentGen => commands::train_intent_gen(&ctx),
        Command::TrainPlayer { variant } => {
            let variants = match variant.as_deref() {
                Some("reward") => vec![PlayerVariant::Reward],
                Some(_) => vec![PlayerVariant::Eval],
                None => vec![PlayerVariant::Reward, PlayerVariant::Eval],
            };
            commands::train_player_cmd(&ctx, &variants)
        }
        Command::TrainDm { variant } => commands::train_dm(&ctx, variant),
        Command::TrainDmRl { variant } => commands::train_dm_rl(&ctx, variant),
        Command::Evaluate => commands::evaluate(&ctx),
        Command::Matrix { seeds } => commands::matrix(&ctx, seeds.unwrap_or(ctx.cfg.matrix.seeds)),
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_owned()).to_string()
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{}", summary.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
