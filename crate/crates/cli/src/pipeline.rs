//! Building blocks shared by the stage commands and the experiment matrix.

use std::collections::HashMap;

use dmguide_core::corpus::{build_all_episodes, CheckDetector, Episode, Split};
use dmguide_core::dmpolicy::{
    train_ppo, train_supervised, CandidateSpace, Policy, PpoConfig, PpoLogRow, RlExample, SupervisedExample,
};
use dmguide_core::evalmetrics::{EvalReport, Evaluator};
use dmguide_core::linmodel::TrainConfig;
use dmguide_core::idm::{extract_guidance, identify_examples, pseudo_label, train_idm, IdmBundle, IdmConfig};
use dmguide_core::intent::{
    generate_intent, mine_intents, train_intent2action, train_intent_generator, Intent2Action, IntentGenerator,
};
use dmguide_core::player::{accuracy, predict_action, train_player_model, PlayerModel, PlayerVariant};
use dmguide_core::synth::{
    default_bank, generate_corpus, rule_player_act, GoldLabel, GuidanceTemplate, SynthConfig,
    SynthCorpus,
};
use dmguide_core::textfeat::Gazetteer;
use dmguide_core::{ActionLabel, ActionSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{stage_seed, RunConfig};
use crate::error::{CliError, CliResult};

pub const VARIANTS: [&str; 7] = [
    "random-label",
    "human-label",
    "idm-label",
    "mined-intent",
    "gen-intent",
    "rl-mined-intent",
    "rl-gen-intent",
];

pub fn detector(cfg: &RunConfig) -> CliResult<CheckDetector> {
    let actions = cfg.action_set()?;
    let synonyms: Vec<(String, ActionLabel)> = cfg
        .corpus
        .synonyms
        .iter()
        .map(|(k, v)| (k.clone(), ActionLabel::new(v)))
        .collect();
    Ok(CheckDetector::with_synonyms(actions, &synonyms)?)
}

pub fn synth_config(cfg: &RunConfig) -> SynthConfig {
    SynthConfig {
        seed: stage_seed(cfg.seed, "synth-gen"),
        ..cfg.synth.clone()
    }
}

/// Copies the oracle labels onto a reconstructed episode when its DM turn
/// holds the gold guiding sentence at the gold index.
pub fn attach_gold(episode: &Episode, gold: &GoldLabel) -> Option<Episode> {
    if episode.dm_sentences.get(gold.guidance_index) != Some(&gold.guidance_sentence) {
        return None;
    }
    let mut out = episode.clone();
    out.guidance_index = Some(gold.guidance_index);
    out.intent_text = Some(gold.intent_text.clone());
    out.intended_action = Some(gold.intended_action.clone());
    Some(out)
}

/// Gold-labeled copies of the episodes that have a matching oracle label.
pub fn join_gold(episodes: &[Episode], labels: &[GoldLabel]) -> HashMap<String, Episode> {
    let by_id: HashMap<&str, &GoldLabel> = labels.iter().map(|l| (l.id.as_str(), l)).collect();
    episodes
        .iter()
        .filter_map(|e| {
            let g = attach_gold(e, by_id.get(e.id.as_str())?)?;
            Some((e.id.clone(), g))
        })
        .collect()
}

/// Synthetic corpus, the episodes rebuilt from its posts, and the oracle
/// labels keyed by episode id.
pub struct World {
    pub corpus: SynthCorpus,
    pub episodes: Vec<Episode>,
    pub gold: HashMap<String, Episode>,
}

impl World {
    pub fn build(cfg: &RunConfig, synth: &SynthConfig, bank: &[GuidanceTemplate]) -> CliResult<Self> {
        let corpus = generate_corpus(synth, bank)?;
        let episodes = build_all_episodes(corpus.posts.clone(), &detector(cfg)?, cfg.corpus.window);
        let gold = join_gold(&episodes, &corpus.labels);
        Ok(World { corpus, episodes, gold })
    }

    pub fn split(&self, split: Split) -> Vec<Episode> {
        of_split(&self.episodes, split)
    }

    pub fn gold_split(&self, split: Split) -> Vec<Episode> {
        gold_of_split(&self.episodes, &self.gold, split)
    }
}

pub fn of_split(episodes: &[Episode], split: Split) -> Vec<Episode> {
    episodes.iter().filter(|e| e.split == split).cloned().collect()
}

/// Gold-labeled episodes of a split, in corpus order.
pub fn gold_of_split(episodes: &[Episode], gold: &HashMap<String, Episode>, split: Split) -> Vec<Episode> {
    episodes
        .iter()
        .filter(|e| e.split == split)
        .filter_map(|e| gold.get(&e.id).cloned())
        .collect()
}

/// Random subset of the gold-labeled training episodes.
pub fn human_subset(gold_train: &[Episode], fraction: f64, seed: u64) -> Vec<Episode> {
    let n = ((gold_train.len() as f64 * fraction).ceil() as usize).clamp(1, gold_train.len().max(1));
    let mut idx: Vec<usize> = (0..gold_train.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep: Vec<usize> = idx.into_iter().take(n).collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| gold_train[i].clone()).collect()
}

/// Uniformly random guiding-sentence labels.
pub fn random_labels(episodes: &[Episode], seed: u64) -> Vec<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    episodes
        .iter()
        .filter(|e| !e.dm_sentences.is_empty())
        .map(|e| {
            let mut out = e.clone();
            out.guidance_index = Some(rng.gen_range(0..e.dm_sentences.len()));
            out
        })
        .collect()
}

pub fn supervised_examples(episodes: &[Episode], with_intent: bool) -> Vec<SupervisedExample> {
    episodes
        .iter()
        .filter_map(|e| {
            let target = e.guidance_sentence()?.to_owned();
            let intent = if with_intent {
                Some(e.intent_text.clone()?)
            } else {
                None
            };
            Some(SupervisedExample {
                context: e.context_text(),
                intent,
                target,
            })
        })
        .collect()
}

/// Intent text for an episode: mined when the IDM labels it, generated
/// otherwise.
pub fn mined_or_generated(idm: &IdmBundle, generator: &IntentGenerator, e: &Episode) -> String {
    let labeled = pseudo_label(idm, std::slice::from_ref(e));
    let mined = mine_intents(&labeled);
    match &mined[0].intent_text {
        Some(t) => t.clone(),
        None => generate_intent(generator, &e.context_text()).text,
    }
}

/// Episodes whose intent is the generator's guess from context.
pub fn with_generated_intents(generator: &IntentGenerator, episodes: &[Episode]) -> Vec<Episode> {
    episodes
        .iter()
        .map(|e| {
            let intent = generate_intent(generator, &e.context_text());
            let mut out = e.clone();
            out.intent_text = Some(intent.text);
            out.intended_action = intent.intended_action;
            out
        })
        .collect()
}

pub fn rl_examples(episodes: &[Episode], intent: impl Fn(&Episode) -> String) -> Vec<RlExample> {
    episodes
        .iter()
        .map(|e| RlExample {
            id: e.id.clone(),
            context: e.context_text(),
            intent_text: intent(e),
        })
        .collect()
}

/// Intent/action pairs for the learned intent-to-action fallback: gold
/// paraphrases from the labeled subset plus mined texts.
pub fn intent_pairs(human: &[Episode], mined: &[Episode]) -> Vec<(String, ActionLabel)> {
    let mut pairs = Vec::new();
    for e in human {
        if let (Some(t), Some(a)) = (&e.intent_text, &e.intended_action) {
            pairs.push((t.clone(), a.clone()));
        }
    }
    for e in mined {
        if let (Some(t), Some(a)) = (&e.intent_text, &e.intended_action) {
            pairs.push((t.clone(), a.clone()));
        }
    }
    pairs
}

/// Greedy outputs of a policy on each episode.
pub fn decode(
    policy: &Policy,
    space: &CandidateSpace,
    episodes: &[Episode],
    intents: Option<&[String]>,
) -> Vec<String> {
    episodes
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let ctx = e.context_text();
            let pool = space.pool(&ctx);
            let intent = intents.map(|v| v[i].as_str());
            pool[policy.greedy(&ctx, intent, &pool)].text.clone()
        })
        .collect()
}

/// Share of outputs for which the rule player (no noise) and the reward
/// player model agree with the recorded action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HackingProbe {
    pub rule_match: f64,
    pub pm_match: f64,
}

impl HackingProbe {
    pub fn gap(&self) -> f64 {
        (self.rule_match - self.pm_match).abs()
    }
}

pub fn hacking_probe(
    episodes: &[Episode],
    outputs: &[String],
    pm_reward: &PlayerModel,
    bank: &[GuidanceTemplate],
    seed: u64,
) -> HackingProbe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = episodes.len().max(1) as f64;
    let (mut rule, mut pm) = (0usize, 0usize);
    for (e, o) in episodes.iter().zip(outputs) {
        if rule_player_act(o, bank, 0.0, &mut rng) == e.player_action {
            rule += 1;
        }
        if predict_action(pm_reward, &e.context_text(), o).1 == e.player_action {
            pm += 1;
        }
    }
    HackingProbe {
        rule_match: rule as f64 / n,
        pm_match: pm as f64 / n,
    }
}

/// Held-out diagnostics gathered alongside one matrix run.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub pm_reward_test_accuracy: f64,
    pub identify_test_accuracy: f64,
    pub extract_test_accuracy: f64,
    pub pseudo_label_accuracy: f64,
    pub probe_rl_mined: HackingProbe,
    pub probe_rl_gen: HackingProbe,
}

pub struct SeedRun {
    pub seed: u64,
    pub reports: Vec<EvalReport>,
    pub diagnostics: Diagnostics,
    pub ppo_logs: Vec<(String, Vec<PpoLogRow>)>,
}

impl SeedRun {
    pub fn report(&self, variant: &str) -> &EvalReport {
        self.reports
            .iter()
            .find(|r| r.model_id == variant)
            .expect("every variant is evaluated")
    }
}

/// Fraction of identify examples classified correctly.
pub fn identify_accuracy(idm: &IdmBundle, episodes: &[Episode], actions: &ActionSet, seed: u64) -> f64 {
    let examples = identify_examples(episodes, actions, seed);
    if examples.is_empty() {
        return 0.0;
    }
    let hits = examples
        .iter()
        .filter(|x| idm.is_guidance(&x.context, &x.dm_text, &x.action) == x.guidance)
        .count();
    hits as f64 / examples.len() as f64
}

/// Fraction of gold episodes whose guiding sentence the extractor ranks first.
pub fn extract_accuracy(idm: &IdmBundle, episodes: &[Episode]) -> f64 {
    let labeled: Vec<&Episode> = episodes.iter().filter(|e| e.guidance_index.is_some()).collect();
    if labeled.is_empty() {
        return 0.0;
    }
    let hits = labeled
        .iter()
        .filter(|e| idm.best_sentence(e) == e.guidance_index)
        .count();
    hits as f64 / labeled.len() as f64
}

/// Fraction of gold episodes the full IDM (identify gate then extract) labels correctly.
pub fn pseudo_label_accuracy(idm: &IdmBundle, gold: &[Episode]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let hits = gold
        .iter()
        .filter(|e| extract_guidance(idm, e) == e.guidance_index)
        .count();
    hits as f64 / gold.len() as f64
}

pub fn gazetteer() -> Gazetteer {
    use dmguide_core::synth::{DEFAULT_ENTITIES, DEFAULT_PLACES};
    Gazetteer::new(DEFAULT_ENTITIES.iter().chain(DEFAULT_PLACES.iter()))
}

pub fn with_seed(cfg: &TrainConfig, global: u64, stage: &str) -> TrainConfig {
    cfg.with_seed(stage_seed(global, stage))
}

/// IDM settings with the shared feature dimension and per-stage seeds.
pub fn idm_config(cfg: &RunConfig) -> IdmConfig {
    let mut c = cfg.idm.clone();
    c.dim = cfg.features.dim;
    c.identify_train = with_seed(&c.identify_train, cfg.seed, "train-idm/identify");
    c.extract_train = with_seed(&c.extract_train, cfg.seed, "train-idm/extract");
    c
}

pub fn train_player(cfg: &RunConfig, episodes: &[Episode], variant: PlayerVariant) -> CliResult<PlayerModel> {
    let stage = format!("train-player/{}", variant.as_str());
    Ok(train_player_model(
        episodes,
        variant,
        &cfg.action_set()?,
        cfg.features.dim,
        &with_seed(&cfg.player.train, cfg.seed, &stage),
    )?)
}

pub fn train_generator(cfg: &RunConfig, mined: &[Episode]) -> CliResult<IntentGenerator> {
    Ok(train_intent_generator(
        mined,
        &cfg.action_set()?,
        cfg.features.dim,
        &with_seed(&cfg.intent.generator, cfg.seed, "train-intent-gen"),
    )?)
}

pub fn train_i2a(cfg: &RunConfig, human: &[Episode], mined: &[Episode]) -> CliResult<Intent2Action> {
    Ok(train_intent2action(
        &intent_pairs(human, mined),
        &cfg.action_set()?,
        cfg.features.dim,
        &with_seed(&cfg.intent.intent2action, cfg.seed, "train-intent-gen/i2a"),
    )?)
}

pub fn candidate_space(cfg: &RunConfig, bank: &[GuidanceTemplate]) -> CliResult<CandidateSpace> {
    Ok(CandidateSpace::with_defaults(bank, cfg.policy.k_distractors)?)
}

/// Supervised DM policy for a named variant.
pub fn train_policy(
    cfg: &RunConfig,
    space: &CandidateSpace,
    episodes: &[Episode],
    with_intent: bool,
    variant: &str,
) -> CliResult<Policy> {
    Ok(train_supervised(
        &supervised_examples(episodes, with_intent),
        space,
        with_intent,
        cfg.features.dim,
        cfg.policy.temperature,
        &with_seed(&cfg.policy.train, cfg.seed, &format!("train-dm/{variant}")),
    )?)
}

pub fn ppo_with_seed(cfg: &PpoConfig, global: u64, stage: &str) -> PpoConfig {
    PpoConfig {
        seed: stage_seed(global, stage),
        ..*cfg
    }
}

/// Everything trained before the RL stage for one global seed.
pub struct Prepared {
    pub seed: u64,
    pub bank: Vec<GuidanceTemplate>,
    pub actions: ActionSet,
    pub world: World,
    pub train: Vec<Episode>,
    pub gold_train: Vec<Episode>,
    pub test_gold: Vec<Episode>,
    pub human: Vec<Episode>,
    pub idm: IdmBundle,
    pub idm_labeled: Vec<Episode>,
    pub mined: Vec<Episode>,
    pub pm_reward: PlayerModel,
    pub pm_eval: PlayerModel,
    pub generator: IntentGenerator,
    pub i2a: Intent2Action,
    pub space: CandidateSpace,
    pub p_random: Policy,
    pub p_human: Policy,
    pub p_idm: Policy,
    pub p_mined: Policy,
    pub p_gen: Policy,
    pub mined_test: Vec<String>,
    pub gen_test: Vec<String>,
}

/// Builds the corpus and trains every supervised component.
pub fn prepare(cfg: &RunConfig) -> CliResult<Prepared> {
    let seed = cfg.seed;
    let actions = cfg.action_set()?;
    let bank = default_bank();
    let world = World::build(cfg, &synth_config(cfg), &bank)?;
    let train = world.split(Split::Train);
    let gold_train = world.gold_split(Split::Train);
    let test_gold = world.gold_split(Split::Test);
    if gold_train.is_empty() || test_gold.is_empty() {
        return Err(CliError::Config("synthetic corpus too small for a train/test split".into()));
    }

    let human = human_subset(&gold_train, cfg.matrix.human_fraction, stage_seed(seed, "human-subset"));
    let idm = train_idm(&human, &actions, &idm_config(cfg))?;
    let idm_labeled: Vec<Episode> = pseudo_label(&idm, &train)
        .into_iter()
        .filter(|e| e.guidance_index.is_some())
        .collect();
    let random_labeled = random_labels(&train, stage_seed(seed, "random-label"));

    let pm_reward = train_player(cfg, &world.episodes, PlayerVariant::Reward)?;
    let pm_eval = train_player(cfg, &world.episodes, PlayerVariant::Eval)?;

    let mined = mine_intents(&idm_labeled);
    let generator = train_generator(cfg, &mined)?;
    let i2a = train_i2a(cfg, &human, &mined)?;

    let space = candidate_space(cfg, &bank)?;
    let p_random = train_policy(cfg, &space, &random_labeled, false, "random")?;
    let p_human = train_policy(cfg, &space, &human, false, "human")?;
    let p_idm = train_policy(cfg, &space, &idm_labeled, false, "idm")?;
    let p_mined = train_policy(cfg, &space, &mined, true, "mined")?;
    let p_gen = train_policy(cfg, &space, &with_generated_intents(&generator, &idm_labeled), true, "gen")?;

    let mined_test = test_gold
        .iter()
        .map(|e| mined_or_generated(&idm, &generator, &strip_labels(e)))
        .collect();
    let gen_test = test_gold
        .iter()
        .map(|e| generate_intent(&generator, &e.context_text()).text)
        .collect();
    Ok(Prepared {
        seed,
        bank,
        actions,
        world,
        train,
        gold_train,
        test_gold,
        human,
        idm,
        idm_labeled,
        mined,
        pm_reward,
        pm_eval,
        generator,
        i2a,
        space,
        p_random,
        p_human,
        p_idm,
        p_mined,
        p_gen,
        mined_test,
        gen_test,
    })
}

/// RL examples over the training split: mined intents with a generated
/// fallback, or generated intents throughout.
pub fn rl_train_examples(prep: &Prepared, mined: bool) -> Vec<RlExample> {
    if mined {
        rl_examples(&prep.train, |e| mined_or_generated(&prep.idm, &prep.generator, e))
    } else {
        rl_examples(&prep.train, |e| generate_intent(&prep.generator, &e.context_text()).text)
    }
}

pub fn train_rl(prep: &Prepared, mined: bool, cfg: &PpoConfig) -> CliResult<(Policy, Vec<PpoLogRow>)> {
    let stage = if mined { "train-dm-rl/mined" } else { "train-dm-rl/gen" };
    let init = if mined { &prep.p_mined } else { &prep.p_gen };
    Ok(train_ppo(
        init.clone(),
        &rl_train_examples(prep, mined),
        &prep.space,
        &prep.pm_reward,
        &prep.i2a,
        &ppo_with_seed(cfg, prep.seed, stage),
    )?)
}

impl Prepared {
    pub fn evaluator<'a>(&'a self, gazetteer: &'a Gazetteer) -> Evaluator<'a> {
        Evaluator {
            idm: &self.idm,
            pm_eval: &self.pm_eval,
            gazetteer,
        }
    }

    pub fn references(&self) -> Vec<String> {
        self.test_gold
            .iter()
            .map(|e| e.guidance_sentence().unwrap_or_default().to_owned())
            .collect()
    }

    /// Test intents matching a variant: none, mined or generated.
    pub fn test_intents(&self, variant: &str) -> Option<&[String]> {
        match variant {
            "mined-intent" | "rl-mined-intent" => Some(&self.mined_test),
            "gen-intent" | "rl-gen-intent" => Some(&self.gen_test),
            _ => None,
        }
    }

    pub fn evaluate(&self, variant: &str, policy: &Policy) -> CliResult<(EvalReport, Vec<String>)> {
        let outputs = decode(policy, &self.space, &self.test_gold, self.test_intents(variant));
        let gaz = gazetteer();
        let report = self.evaluator(&gaz).evaluate_outputs(
            variant,
            "test",
            self.seed,
            &self.test_gold,
            &outputs,
            &self.references(),
        )?;
        Ok((report, outputs))
    }
}

/// Runs every variant for one global seed and evaluates on the test split.
pub fn run_seed(cfg: &RunConfig) -> CliResult<SeedRun> {
    let prep = prepare(cfg)?;
    let seed = prep.seed;
    let (p_rl_mined, log_mined) = train_rl(&prep, true, &cfg.ppo)?;
    let (p_rl_gen, log_gen) = train_rl(&prep, false, &cfg.ppo)?;
    let policies: [&Policy; 7] = [
        &prep.p_random,
        &prep.p_human,
        &prep.p_idm,
        &prep.p_mined,
        &prep.p_gen,
        &p_rl_mined,
        &p_rl_gen,
    ];
    let mut reports = Vec::with_capacity(VARIANTS.len());
    let mut outputs_by_variant = HashMap::new();
    for (name, policy) in VARIANTS.iter().zip(policies) {
        let (report, outputs) = prep.evaluate(name, policy)?;
        reports.push(report);
        outputs_by_variant.insert(*name, outputs);
    }

    let probe_seed = stage_seed(seed, "probe");
    let probe = |v: &str| hacking_probe(&prep.test_gold, &outputs_by_variant[v], &prep.pm_reward, &prep.bank, probe_seed);
    let diagnostics = Diagnostics {
        pm_reward_test_accuracy: accuracy(&prep.pm_reward, &prep.world.split(Split::Test)),
        identify_test_accuracy: identify_accuracy(
            &prep.idm,
            &prep.test_gold,
            &prep.actions,
            stage_seed(seed, "identify-eval"),
        ),
        extract_test_accuracy: extract_accuracy(&prep.idm, &prep.test_gold),
        pseudo_label_accuracy: pseudo_label_accuracy(&prep.idm, &prep.gold_train),
        probe_rl_mined: probe(VARIANTS[5]),
        probe_rl_gen: probe(VARIANTS[6]),
    };
    Ok(SeedRun {
        seed,
        reports,
        diagnostics,
        ppo_logs: vec![
            (VARIANTS[5].to_owned(), log_mined),
            (VARIANTS[6].to_owned(), log_gen),
        ],
    })
}

/// Episode as reconstructed from posts, without oracle labels.
pub fn strip_labels(e: &Episode) -> Episode {
    let mut out = e.clone();
    out.guidance_index = None;
    out.intent_text = None;
    out.intended_action = None;
    out
}

/// Runs `n` seeds starting at the configured global seed.
pub fn run_matrix(cfg: &RunConfig, n: usize) -> CliResult<Vec<SeedRun>> {
    (0..n as u64)
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(i);
            run_seed(&c)
        })
        .collect()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// One row per variant with `mean` and `sd` columns for every metric.
pub fn matrix_csv(runs: &[SeedRun]) -> String {
    let names = ["bleu4", "rouge_l", "entity_overlap_mean", "guidance_rate", "action_match_rate", "star_rate"];
    let mut out = String::from("model_id,seeds,n");
    for m in names {
        out.push_str(&format!(",{m}_mean,{m}_sd"));
    }
    out.push('\n');
    for v in VARIANTS {
        let reports: Vec<&EvalReport> = runs.iter().map(|r| r.report(v)).collect();
        let n: usize = reports.iter().map(|r| r.n).sum();
        out.push_str(&format!("{v},{},{n}", runs.len()));
        for (k, _) in names.iter().enumerate() {
            let xs: Vec<f64> = reports.iter().map(|r| r.metrics()[k].1).collect();
            let (m, sd) = mean_sd(&xs);
            out.push_str(&format!(",{m:.6},{sd:.6}"));
        }
        out.push('\n');
    }
    out
}

/// Mean of one metric of one variant across seeds.
pub fn mean_metric(runs: &[SeedRun], variant: &str, metric: &str) -> f64 {
    let xs: Vec<f64> = runs
        .iter()
        .map(|r| {
            r.report(variant)
                .metrics()
                .iter()
                .find(|(k, _)| *k == metric)
                .map(|(_, v)| *v)
                .expect("known metric")
        })
        .collect();
    mean_sd(&xs).0
}

/// Held-out accuracies of the learned components on a cue-separable corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Learnability {
    pub pm_reward_test_accuracy: f64,
    pub identify_test_accuracy: f64,
    pub extract_test_accuracy: f64,
}

/// Trains the reward player model and both IDM models on the gold-labeled
/// training split of a corpus generated under `synth`, and scores them on
/// its test split.
pub fn learnability(cfg: &RunConfig, synth: &SynthConfig) -> CliResult<Learnability> {
    let actions = cfg.action_set()?;
    let world = World::build(cfg, synth, &default_bank())?;
    let gold_train = world.gold_split(Split::Train);
    let test_gold = world.gold_split(Split::Test);
    let pm = train_player(cfg, &world.episodes, PlayerVariant::Reward)?;
    let idm = train_idm(&gold_train, &actions, &idm_config(cfg))?;
    Ok(Learnability {
        pm_reward_test_accuracy: accuracy(&pm, &world.split(Split::Test)),
        identify_test_accuracy: identify_accuracy(&idm, &test_gold, &actions, stage_seed(cfg.seed, "identify-eval")),
        extract_test_accuracy: extract_accuracy(&idm, &test_gold),
    })
}

/// Extract accuracy on the test split with and without the future action.
pub fn extract_with_and_without_action(cfg: &RunConfig, synth: &SynthConfig) -> CliResult<(f64, f64)> {
    let dim = cfg.features.dim;
    let world = World::build(cfg, synth, &default_bank())?;
    let gold_train = world.gold_split(Split::Train);
    let test_gold = world.gold_split(Split::Test);
    let tc = idm_config(cfg).extract_train;
    let mut acc = [0.0; 2];
    for (slot, use_action) in [true, false].into_iter().enumerate() {
        let extract = dmguide_core::idm::train_extract(&gold_train, use_action, dim, &tc)?;
        let bundle = IdmBundle {
            identify: dmguide_core::linmodel::LinearModel::zeros(
                vec![
                    dmguide_core::idm::GUIDANCE_LABEL.into(),
                    dmguide_core::idm::NO_GUIDANCE_LABEL.into(),
                ],
                dim,
            )?,
            extract,
            tau: cfg.idm.tau,
            extract_uses_action: use_action,
        };
        acc[slot] = extract_accuracy(&bundle, &test_gold);
    }
    Ok((acc[0], acc[1]))
}
