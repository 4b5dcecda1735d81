//! One function per pipeline stage. Each reads its inputs from the work
//! directory, writes its artifacts there, and returns a one-line summary.

use std::fs;
use std::path::{Path, PathBuf};

use dmguide_core::corpus::{
    build_all_episodes, read_episodes, read_posts, write_episodes, write_posts, Episode, Post, Split,
};
use dmguide_core::dmpolicy::{ppo_log_csv, Policy};
use dmguide_core::evalmetrics::{reports_csv, reports_table, EvalReport};
use dmguide_core::idm::{pseudo_label, train_idm, IdmBundle};
use dmguide_core::intent::{generate_intent, mine_intents, Intent2Action, IntentGenerator};
use dmguide_core::linmodel::Meta;
use dmguide_core::persist::{ArtifactHeader, FORMAT_VERSION};
use dmguide_core::player::{PlayerModel, PlayerVariant};
use dmguide_core::synth::{default_bank, generate_corpus, read_gold, write_gold, GoldLabel};
use dmguide_core::dmpolicy::train_ppo;

use crate::config::{stage_seed, RunConfig};
use crate::error::{CliError, CliResult};
use crate::pipeline::{
    candidate_space, decode, gazetteer, gold_of_split, human_subset, idm_config, join_gold, matrix_csv,
    mined_or_generated, of_split, ppo_with_seed, random_labels, rl_examples, run_matrix, strip_labels,
    synth_config, train_generator, train_i2a, train_player, train_policy, with_generated_intents, SeedRun,
    VARIANTS,
};

pub const POSTS: &str = "posts.jsonl";
pub const GOLD: &str = "gold.jsonl";
pub const PARSED: &str = "parsed_posts.jsonl";
pub const EPISODES: &str = "episodes.jsonl";
pub const HUMAN: &str = "human_labeled.jsonl";
pub const IDM_MODEL: &str = "idm.model";
pub const IDM_LABELED: &str = "idm_labeled.jsonl";
pub const MINED: &str = "mined.jsonl";
pub const INTENT_GEN: &str = "intent_gen.model";
pub const I2A: &str = "intent2action.model";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const MATRIX_CSV: &str = "matrix.csv";
pub const MATRIX_RUNS_CSV: &str = "matrix_runs.csv";
pub const MATRIX_TXT: &str = "matrix.txt";

pub fn player_file(variant: PlayerVariant) -> String {
    format!("pm_{}.model", variant.as_str())
}

/// Policy file of a variant id such as `mined-intent` or `rl-gen-intent`.
pub fn policy_file(variant: &str) -> String {
    format!("policy_{variant}.model")
}

pub fn ppo_log_file(variant: &str) -> String {
    format!("ppo_{variant}.csv")
}

/// Supervised variants accepted by `train-dm`, with their report ids.
pub const DM_VARIANTS: [(&str, &str); 5] = [
    ("random", "random-label"),
    ("human", "human-label"),
    ("idm", "idm-label"),
    ("mined", "mined-intent"),
    ("gen", "gen-intent"),
];

pub const RL_VARIANTS: [(&str, &str); 2] = [("mined", "rl-mined-intent"), ("gen", "rl-gen-intent")];

pub struct Ctx {
    pub cfg: RunConfig,
    pub command: &'static str,
}

impl Ctx {
    pub fn new(cfg: RunConfig, command: &'static str) -> Self {
        Ctx { cfg, command }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.paths.work_dir.join(name)
    }

    pub fn header(&self) -> ArtifactHeader {
        ArtifactHeader::new(self.command, &self.cfg.hash(), self.cfg.seed)
    }

    /// Provenance fields written at the top of every model file.
    pub fn meta(&self) -> Meta {
        let mut m = Meta::new();
        m.insert("format".into(), FORMAT_VERSION.into());
        m.insert("command".into(), self.command.into());
        m.insert("config_hash".into(), self.cfg.hash());
        m.insert("seed".into(), self.cfg.seed.to_string());
        m.insert("n_actions".into(), self.cfg.actions.names.len().to_string());
        m
    }

    /// Path of an upstream artifact, or an error naming its producer.
    pub fn input(&self, name: &str, producer: &'static str) -> CliResult<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::MissingArtifact { path: p, producer })
        }
    }

    fn write_text(&self, name: &str, body: &str) -> CliResult<PathBuf> {
        let p = self.path(name);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::Io {
                path: dir.to_owned(),
                source: e,
            })?;
        }
        let text = format!("{}\n{body}", self.header().to_line());
        fs::write(&p, text).map_err(|e| CliError::Io {
            path: p.clone(),
            source: e,
        })?;
        Ok(p)
    }
}

fn load_episodes(ctx: &Ctx) -> CliResult<Vec<Episode>> {
    Ok(read_episodes(&ctx.input(EPISODES, "build-episodes")?)?)
}

fn load_gold(ctx: &Ctx) -> CliResult<Vec<GoldLabel>> {
    Ok(read_gold(&ctx.input(GOLD, "synth-gen")?)?)
}

fn load_policy(ctx: &Ctx, variant: &str, producer: &'static str) -> CliResult<Policy> {
    Ok(Policy::load(&ctx.input(&policy_file(variant), producer)?)?.0)
}

pub fn synth_gen(ctx: &Ctx) -> CliResult<String> {
    let corpus = generate_corpus(&synth_config(&ctx.cfg), &default_bank())?;
    let h = ctx.header();
    write_posts(&ctx.path(POSTS), Some(&h), &corpus.posts)?;
    write_gold(&ctx.path(GOLD), Some(&h), &corpus.labels)?;
    Ok(format!(
        "{} posts, {} gold episodes -> {}",
        corpus.posts.len(),
        corpus.labels.len(),
        ctx.path(POSTS).display()
    ))
}

/// Validates a post dump and writes it sorted by thread and sequence.
pub fn parse(ctx: &Ctx, input: Option<&Path>) -> CliResult<String> {
    let src = match input {
        Some(p) => p.to_owned(),
        None => ctx.input(POSTS, "synth-gen")?,
    };
    let posts = read_posts(&src)?;
    let threads = dmguide_core::corpus::split_threads(posts);
    let sorted: Vec<Post> = threads.iter().flatten().cloned().collect();
    write_posts(&ctx.path(PARSED), Some(&ctx.header()), &sorted)?;
    Ok(format!("{} posts in {} threads", sorted.len(), threads.len()))
}

pub fn build_episodes(ctx: &Ctx) -> CliResult<String> {
    let posts = read_posts(&ctx.input(PARSED, "parse")?)?;
    let episodes = build_all_episodes(posts, &crate::pipeline::detector(&ctx.cfg)?, ctx.cfg.corpus.window);
    write_episodes(&ctx.path(EPISODES), Some(&ctx.header()), &episodes)?;
    let count = |s| episodes.iter().filter(|e| e.split == s).count();
    Ok(format!(
        "{} episodes (train {}, valid {}, test {})",
        episodes.len(),
        count(Split::Train),
        count(Split::Valid),
        count(Split::Test)
    ))
}

/// Trains the IDM on a gold-labeled subset of the training split.
pub fn train_idm_cmd(ctx: &Ctx, labeled: Option<&Path>) -> CliResult<String> {
    let human = match labeled {
        Some(p) => read_episodes(p)?
            .into_iter()
            .filter(|e| e.guidance_index.is_some())
            .collect(),
        None => {
            let episodes = load_episodes(ctx)?;
            let gold = join_gold(&episodes, &load_gold(ctx)?);
            let gold_train = gold_of_split(&episodes, &gold, Split::Train);
            human_subset(
                &gold_train,
                ctx.cfg.matrix.human_fraction,
                stage_seed(ctx.cfg.seed, "human-subset"),
            )
        }
    };
    write_episodes(&ctx.path(HUMAN), Some(&ctx.header()), &human)?;
    let idm = train_idm(&human, &ctx.cfg.action_set()?, &idm_config(&ctx.cfg))?;
    idm.save(&ctx.path(IDM_MODEL), &ctx.meta())?;
    Ok(format!("IDM trained on {} labeled episodes", human.len()))
}

fn load_idm(ctx: &Ctx) -> CliResult<IdmBundle> {
    Ok(IdmBundle::load(&ctx.input(IDM_MODEL, "train-idm")?)?.0)
}

pub fn pseudo_label_cmd(ctx: &Ctx) -> CliResult<String> {
    let idm = load_idm(ctx)?;
    let train = of_split(&load_episodes(ctx)?, Split::Train);
    let labeled: Vec<Episode> = pseudo_label(&idm, &train)
        .into_iter()
        .filter(|e| e.guidance_index.is_some())
        .collect();
    write_episodes(&ctx.path(IDM_LABELED), Some(&ctx.header()), &labeled)?;
    Ok(format!("{} of {} training episodes labeled", labeled.len(), train.len()))
}

pub fn mine_intents_cmd(ctx: &Ctx) -> CliResult<String> {
    let labeled = read_episodes(&ctx.input(IDM_LABELED, "pseudo-label")?)?;
    let mined = mine_intents(&labeled);
    write_episodes(&ctx.path(MINED), Some(&ctx.header()), &mined)?;
    Ok(format!("{} intents mined", mined.len()))
}

pub fn train_intent_gen(ctx: &Ctx) -> CliResult<String> {
    let mined = read_episodes(&ctx.input(MINED, "mine-intents")?)?;
    let human = read_episodes(&ctx.input(HUMAN, "train-idm")?)?;
    let generator = train_generator(&ctx.cfg, &mined)?;
    generator.save(&ctx.path(INTENT_GEN), &ctx.meta())?;
    let i2a = train_i2a(&ctx.cfg, &human, &mined)?;
    i2a.save(&ctx.path(I2A), &ctx.meta())?;
    Ok(format!("intent generator and intent-to-action trained on {} intents", mined.len()))
}

pub fn train_player_cmd(ctx: &Ctx, variants: &[PlayerVariant]) -> CliResult<String> {
    let episodes = load_episodes(ctx)?;
    let mut out = Vec::new();
    for &v in variants {
        let pm = train_player(&ctx.cfg, &episodes, v)?;
        let mut meta = ctx.meta();
        meta.insert("variant".into(), v.as_str().into());
        pm.save(&ctx.path(&player_file(v)), &meta)?;
        out.push(v.as_str());
    }
    Ok(format!("player models trained: {}", out.join(", ")))
}

fn load_player(ctx: &Ctx, v: PlayerVariant) -> CliResult<PlayerModel> {
    Ok(PlayerModel::load(&ctx.input(&player_file(v), "train-player")?)?.0)
}

fn load_generator(ctx: &Ctx) -> CliResult<IntentGenerator> {
    Ok(IntentGenerator::load(&ctx.input(INTENT_GEN, "train-intent-gen")?)?.0)
}

fn load_i2a(ctx: &Ctx) -> CliResult<Intent2Action> {
    Ok(Intent2Action::load(&ctx.input(I2A, "train-intent-gen")?)?.0)
}

fn report_id(table: &[(&str, &'static str)], variant: &str) -> CliResult<&'static str> {
    table
        .iter()
        .find(|(k, _)| *k == variant)
        .map(|(_, id)| *id)
        .ok_or_else(|| {
            let known: Vec<&str> = table.iter().map(|(k, _)| *k).collect();
            CliError::Config(format!("unknown variant `{variant}`; expected one of {}", known.join(", ")))
        })
}

pub fn train_dm(ctx: &Ctx, variant: &str) -> CliResult<String> {
    let id = report_id(&DM_VARIANTS, variant)?;
    let space = candidate_space(&ctx.cfg, &default_bank())?;
    let (episodes, with_intent) = match variant {
        "random" => (
            random_labels(
                &of_split(&load_episodes(ctx)?, Split::Train),
                stage_seed(ctx.cfg.seed, "random-label"),
            ),
            false,
        ),
        "human" => (read_episodes(&ctx.input(HUMAN, "train-idm")?)?, false),
        "idm" => (read_episodes(&ctx.input(IDM_LABELED, "pseudo-label")?)?, false),
        "mined" => (read_episodes(&ctx.input(MINED, "mine-intents")?)?, true),
        _ => {
            let labeled = read_episodes(&ctx.input(IDM_LABELED, "pseudo-label")?)?;
            (with_generated_intents(&load_generator(ctx)?, &labeled), true)
        }
    };
    let policy = train_policy(&ctx.cfg, &space, &episodes, with_intent, variant)?;
    let mut meta = ctx.meta();
    meta.insert("variant".into(), id.into());
    policy.save(&ctx.path(&policy_file(id)), &meta)?;
    Ok(format!("{id} policy trained on {} episodes", episodes.len()))
}

pub fn train_dm_rl(ctx: &Ctx, variant: &str) -> CliResult<String> {
    let id = report_id(&RL_VARIANTS, variant)?;
    let pm_reward = load_player(ctx, PlayerVariant::Reward)?;
    let i2a = load_i2a(ctx)?;
    let generator = load_generator(ctx)?;
    let init_id = if variant == "mined" { "mined-intent" } else { "gen-intent" };
    let init = load_policy(ctx, init_id, "train-dm")?;
    let train = of_split(&load_episodes(ctx)?, Split::Train);
    let examples = if variant == "mined" {
        let idm = load_idm(ctx)?;
        rl_examples(&train, |e| mined_or_generated(&idm, &generator, e))
    } else {
        rl_examples(&train, |e| generate_intent(&generator, &e.context_text()).text)
    };
    let space = candidate_space(&ctx.cfg, &default_bank())?;
    let stage = format!("train-dm-rl/{variant}");
    let (policy, log) = train_ppo(
        init,
        &examples,
        &space,
        &pm_reward,
        &i2a,
        &ppo_with_seed(&ctx.cfg.ppo, ctx.cfg.seed, &stage),
    )?;
    let mut meta = ctx.meta();
    meta.insert("variant".into(), id.into());
    policy.save(&ctx.path(&policy_file(id)), &meta)?;
    ctx.write_text(&ppo_log_file(id), &ppo_log_csv(&log))?;
    let first = log.first().map_or(0.0, |r| r.mean_reward);
    let last = log.last().map_or(0.0, |r| r.mean_reward);
    Ok(format!("{id}: {} PPO iterations, mean reward {first:.3} -> {last:.3}", log.len()))
}

/// Evaluates every trained policy on the gold-labeled test split.
pub fn evaluate(ctx: &Ctx) -> CliResult<String> {
    let episodes = load_episodes(ctx)?;
    let gold = join_gold(&episodes, &load_gold(ctx)?);
    let test = gold_of_split(&episodes, &gold, Split::Test);
    if test.is_empty() {
        return Err(CliError::Config("no gold-labeled test episodes to evaluate".into()));
    }
    let idm = load_idm(ctx)?;
    let pm_eval = load_player(ctx, PlayerVariant::Eval)?;
    let gaz = gazetteer();
    let evaluator = dmguide_core::evalmetrics::Evaluator {
        idm: &idm,
        pm_eval: &pm_eval,
        gazetteer: &gaz,
    };
    let space = candidate_space(&ctx.cfg, &default_bank())?;
    let references: Vec<String> = test
        .iter()
        .map(|e| e.guidance_sentence().unwrap_or_default().to_owned())
        .collect();
    let mut mined_test = None;
    let mut gen_test = None;
    let mut reports: Vec<EvalReport> = Vec::new();
    for id in VARIANTS {
        let path = ctx.path(&policy_file(id));
        if !path.is_file() {
            continue;
        }
        let policy = Policy::load(&path)?.0;
        let intents: Option<&[String]> = match id {
            "mined-intent" | "rl-mined-intent" => {
                if mined_test.is_none() {
                    let generator = load_generator(ctx)?;
                    mined_test = Some(
                        test.iter()
                            .map(|e| mined_or_generated(&idm, &generator, &strip_labels(e)))
                            .collect::<Vec<_>>(),
                    );
                }
                mined_test.as_deref()
            }
            "gen-intent" | "rl-gen-intent" => {
                if gen_test.is_none() {
                    let generator = load_generator(ctx)?;
                    gen_test = Some(
                        test.iter()
                            .map(|e| generate_intent(&generator, &e.context_text()).text)
                            .collect::<Vec<_>>(),
                    );
                }
                gen_test.as_deref()
            }
            _ => None,
        };
        let outputs = decode(&policy, &space, &test, intents);
        reports.push(evaluator.evaluate_outputs(id, "test", ctx.cfg.seed, &test, &outputs, &references)?);
    }
    if reports.is_empty() {
        return Err(CliError::MissingArtifact {
            path: ctx.path(&policy_file("<variant>")),
            producer: "train-dm",
        });
    }
    ctx.write_text(REPORT_CSV, &reports_csv(&reports))?;
    ctx.write_text(REPORT_TXT, &reports_table(&reports))?;
    Ok(reports_table(&reports))
}

/// Per-seed rows of every variant.
pub fn runs_csv(runs: &[SeedRun]) -> String {
    let reports: Vec<EvalReport> = runs.iter().flat_map(|r| r.reports.iter().cloned()).collect();
    reports_csv(&reports)
}

pub fn matrix(ctx: &Ctx, seeds: usize) -> CliResult<String> {
    let runs = run_matrix(&ctx.cfg, seeds)?;
    let summary = matrix_csv(&runs);
    ctx.write_text(MATRIX_CSV, &summary)?;
    ctx.write_text(MATRIX_RUNS_CSV, &runs_csv(&runs))?;
    let mut table = String::new();
    for r in &runs {
        table.push_str(&format!("seed {}\n", r.seed));
        table.push_str(&reports_table(&r.reports));
        let d = &r.diagnostics;
        table.push_str(&format!(
            "pm_reward_test_accuracy {:.4}  identify_test_accuracy {:.4}  extract_test_accuracy {:.4}  pseudo_label_accuracy {:.4}\n",
            d.pm_reward_test_accuracy, d.identify_test_accuracy, d.extract_test_accuracy, d.pseudo_label_accuracy
        ));
        table.push_str(&format!(
            "probe rl-mined-intent rule {:.4} pm {:.4}; rl-gen-intent rule {:.4} pm {:.4}\n\n",
            d.probe_rl_mined.rule_match, d.probe_rl_mined.pm_match, d.probe_rl_gen.rule_match, d.probe_rl_gen.pm_match
        ));
        for (v, log) in &r.ppo_logs {
            ctx.write_text(&format!("matrix_seed{}_{}", r.seed, ppo_log_file(v)), &ppo_log_csv(log))?;
        }
    }
    ctx.write_text(MATRIX_TXT, &table)?;
    Ok(summary)
}
