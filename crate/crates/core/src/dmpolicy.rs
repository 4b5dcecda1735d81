//! Candidate-pool DM policy: supervised imitation with or without explicit
//! intents, and PPO against a player-model reward.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::ActionLabel;
use crate::error::{Error, Result};
use crate::intent::{intent_to_action, Intent2Action};
use crate::linmodel::{
    self, argmax, log_softmax, softmax, train_listwise, GroupSource, LinearModel, Meta,
    TrainConfig,
};
use crate::player::{predict_action, PlayerModel};
use crate::synth::{GuidanceTemplate, CHITCHAT, DEFAULT_ENTITIES, DEFAULT_PLACES};
use crate::textfeat::{
    content_tokens, entity_mentions, feature_hash, featurize, push_cross_buckets,
    push_ngram_buckets, token_hashes, Gazetteer, SparseVector,
};

/// One guidance utterance the policy can choose.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub template_id: String,
    /// Action of the source template; `None` for chitchat distractors.
    pub action_hint: Option<ActionLabel>,
}

/// Everything needed to build a candidate pool from a context.
#[derive(Debug, Clone)]
pub struct CandidateSpace {
    bank: Vec<GuidanceTemplate>,
    entities: Vec<String>,
    places: Vec<String>,
    gazetteer: Gazetteer,
    pub k_distractors: usize,
}

impl CandidateSpace {
    pub fn new(
        bank: &[GuidanceTemplate],
        entities: &[String],
        places: &[String],
        k_distractors: usize,
    ) -> Result<Self> {
        if bank.is_empty() {
            return Err(Error::Config("candidate bank is empty".into()));
        }
        if entities.is_empty() || places.is_empty() {
            return Err(Error::Config("slot pools must be non-empty".into()));
        }
        let mut bank = bank.to_vec();
        bank.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(CandidateSpace {
            bank,
            entities: entities.to_vec(),
            places: places.to_vec(),
            gazetteer: Gazetteer::new(entities.iter().chain(places)),
            k_distractors,
        })
    }

    pub fn with_defaults(bank: &[GuidanceTemplate], k_distractors: usize) -> Result<Self> {
        let e: Vec<String> = DEFAULT_ENTITIES.iter().map(|s| (*s).to_owned()).collect();
        let p: Vec<String> = DEFAULT_PLACES.iter().map(|s| (*s).to_owned()).collect();
        Self::new(bank, &e, &p, k_distractors)
    }

    /// First pool entity and place mentioned in the context, else the first
    /// pool entries.
    pub fn slots(&self, context: &str) -> (&str, &str) {
        let mentions = entity_mentions(context, &self.gazetteer);
        let entity = mentions
            .iter()
            .find_map(|m| self.entities.iter().find(|e| *e == m))
            .unwrap_or(&self.entities[0]);
        let place = mentions
            .iter()
            .find_map(|m| self.places.iter().find(|p| *p == m))
            .unwrap_or(&self.places[0]);
        (entity, place)
    }

    /// One instantiation per template in id order, then the distractors.
    pub fn pool(&self, context: &str) -> Vec<Candidate> {
        let (entity, place) = self.slots(context);
        let mut out: Vec<Candidate> = self
            .bank
            .iter()
            .map(|t| Candidate {
                text: t.instantiate(entity, place),
                template_id: t.id.clone(),
                action_hint: Some(t.action.clone()),
            })
            .collect();
        let k = self.k_distractors.min(CHITCHAT.len());
        let start = (feature_hash("pool", context) % CHITCHAT.len() as u64) as usize;
        for i in 0..k {
            let j = (start + i) % CHITCHAT.len();
            out.push(Candidate {
                text: CHITCHAT[j].to_owned(),
                template_id: format!("chitchat-{j}"),
                action_hint: None,
            });
        }
        out
    }
}

pub fn gen_candidates(context: &str, space: &CandidateSpace) -> Vec<Candidate> {
    space.pool(context)
}

/// Pool member closest (cosine over n-grams) to `sentence`; ties go low.
pub fn gold_candidate(pool: &[Candidate], sentence: &str, dim: usize) -> usize {
    let target = featurize(&[("s", sentence)], dim);
    let sims: Vec<f64> = pool
        .iter()
        .map(|c| featurize(&[("s", &c.text)], dim).cosine(&target))
        .collect();
    argmax(&sims)
}

/// Hashed context and intent words, shared by every candidate of a state.
#[derive(Debug, Clone)]
pub struct PolicyInput {
    ctx: Vec<u64>,
    int: Vec<u64>,
    value_x: SparseVector,
}

impl PolicyInput {
    pub fn value_features(&self) -> &SparseVector {
        &self.value_x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub scorer: LinearModel,
    pub value: LinearModel,
    pub temperature: f64,
    pub with_intent: bool,
}

impl Policy {
    pub fn new(dim: usize, with_intent: bool, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Policy {
            scorer: LinearModel::scorer(dim),
            value: LinearModel::scorer(dim),
            temperature,
            with_intent,
        })
    }

    pub fn dim(&self) -> usize {
        self.scorer.dim()
    }

    pub fn input(&self, context: &str, intent: Option<&str>) -> PolicyInput {
        let intent = if self.with_intent { intent.unwrap_or("") } else { "" };
        PolicyInput {
            ctx: token_hashes("ctx", &content_tokens(context)),
            int: token_hashes("int", &content_tokens(intent)),
            value_x: featurize(&[("ctx", context), ("int", intent)], self.dim()),
        }
    }

    /// Candidate n-grams, context x candidate and intent x candidate word
    /// conjunctions, each block normalized on its own.
    pub fn candidate_features(&self, input: &PolicyInput, text: &str) -> SparseVector {
        let dim = self.dim();
        let mut own = Vec::new();
        push_ngram_buckets("cand", text, dim, &mut own);
        let cand = token_hashes("cand", &content_tokens(text));
        let mut ctx = Vec::new();
        push_cross_buckets(&input.ctx, &cand, dim, &mut ctx);
        let mut int = Vec::new();
        push_cross_buckets(&input.int, &cand, dim, &mut int);
        SparseVector::from_blocks(dim, vec![own, ctx, int])
    }

    pub fn pool_features(&self, input: &PolicyInput, pool: &[Candidate]) -> Vec<SparseVector> {
        pool.iter()
            .map(|c| self.candidate_features(input, &c.text))
            .collect()
    }

    pub fn scores(&self, feats: &[SparseVector]) -> Vec<f64> {
        feats.iter().map(|x| self.scorer.score(x)).collect()
    }

    fn tempered(&self, feats: &[SparseVector]) -> Vec<f64> {
        self.scores(feats)
            .into_iter()
            .map(|s| s / self.temperature)
            .collect()
    }

    pub fn probabilities(&self, feats: &[SparseVector]) -> Vec<f64> {
        softmax(&self.tempered(feats))
    }

    pub fn state_value(&self, input: &PolicyInput) -> f64 {
        self.value.score(&input.value_x) + self.value.bias()[0]
    }

    /// Index of the highest-scoring candidate.
    pub fn greedy(&self, context: &str, intent: Option<&str>, pool: &[Candidate]) -> usize {
        let input = self.input(context, intent);
        argmax(&self.scores(&self.pool_features(&input, pool)))
    }

    pub fn save(&self, path: &Path, extra: &Meta) -> Result<()> {
        let mut meta = extra.clone();
        meta.insert("temperature".into(), self.temperature.to_string());
        meta.insert("with_intent".into(), self.with_intent.to_string());
        linmodel::save_sections(path, &meta, &[("scorer", &self.scorer), ("value", &self.value)])
    }

    pub fn load(path: &Path) -> Result<(Self, Meta)> {
        let (meta, mut sections) = linmodel::load_sections(path)?;
        let temperature = meta
            .get("temperature")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Format(format!("{}: missing temperature", path.display())))?;
        let with_intent = meta.get("with_intent").is_some_and(|v| v == "true");
        let policy = Policy {
            scorer: linmodel::take_section(&mut sections, "scorer")?,
            value: linmodel::take_section(&mut sections, "value")?,
            temperature,
            with_intent,
        };
        if !(policy.scorer.is_finite() && policy.value.is_finite()) {
            return Err(Error::NonFinite(format!("{}: policy weights", path.display())));
        }
        Ok((policy, meta))
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Samples from `softmax(scores / temperature)`; returns the candidate and
/// its exact log-probability.
pub fn policy_sample<R: Rng + ?Sized>(
    policy: &Policy,
    input: &PolicyInput,
    pool: &[Candidate],
    rng: &mut R,
) -> Result<(Candidate, f64)> {
    if pool.is_empty() {
        return Err(Error::Data("cannot sample from an empty pool".into()));
    }
    let z = policy.tempered(&policy.pool_features(input, pool));
    let i = sample_index(&softmax(&z), rng);
    Ok((pool[i].clone(), log_softmax(&z)[i]))
}

/// One supervised training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedExample {
    pub context: String,
    pub intent: Option<String>,
    /// Labeled guiding sentence.
    pub target: String,
}

struct SupervisedGroups<'a> {
    policy: &'a Policy,
    inputs: Vec<PolicyInput>,
    pools: Vec<Vec<Candidate>>,
    targets: Vec<usize>,
}

impl GroupSource for SupervisedGroups<'_> {
    fn len(&self) -> usize {
        self.inputs.len()
    }
    fn group(&self, i: usize) -> (Vec<SparseVector>, usize) {
        (
            self.policy.pool_features(&self.inputs[i], &self.pools[i]),
            self.targets[i],
        )
    }
}

/// Cross-entropy over each pool against the candidate closest to the label.
pub fn train_supervised(
    examples: &[SupervisedExample],
    space: &CandidateSpace,
    with_intent: bool,
    dim: usize,
    temperature: f64,
    cfg: &TrainConfig,
) -> Result<Policy> {
    if examples.is_empty() {
        return Err(Error::Data("no labeled examples for the DM policy".into()));
    }
    let shell = Policy::new(dim, with_intent, temperature)?;
    let mut groups = SupervisedGroups {
        policy: &shell,
        inputs: Vec::with_capacity(examples.len()),
        pools: Vec::with_capacity(examples.len()),
        targets: Vec::with_capacity(examples.len()),
    };
    for ex in examples {
        let pool = space.pool(&ex.context);
        if pool.is_empty() {
            return Err(Error::Data("empty candidate pool".into()));
        }
        groups.targets.push(gold_candidate(&pool, &ex.target, dim));
        groups.inputs.push(shell.input(&ex.context, ex.intent.as_deref()));
        groups.pools.push(pool);
    }
    let scorer = train_listwise(&groups, dim, cfg)?.model;
    Ok(Policy { scorer, ..shell })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs_per_batch: usize,
    pub batch_size: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub iterations: usize,
    /// Step size of the scorer.
    pub learning_rate: f64,
    /// Step size of the value head.
    pub value_learning_rate: f64,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            epochs_per_batch: 4,
            batch_size: 64,
            value_coef: 0.5,
            entropy_coef: 0.01,
            iterations: 60,
            learning_rate: 10.0,
            value_learning_rate: 0.25,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip.is_nan() || self.clip <= 0.0 {
            return Err(Error::Config("ppo clip must be positive".into()));
        }
        if self.epochs_per_batch == 0 || self.batch_size == 0 {
            return Err(Error::Config("ppo epochs_per_batch and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("ppo learning_rate must be positive".into()));
        }
        // The value head is a least-squares fit on unit-norm features plus a
        // bias, so larger steps oscillate.
        if !(self.value_learning_rate > 0.0 && self.value_learning_rate * self.value_coef < 1.0) {
            return Err(Error::Config(format!(
                "ppo value_learning_rate * value_coef must be in (0, 1), got {}",
                self.value_learning_rate * self.value_coef
            )));
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err(Error::Config("ppo coefficients must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub episode_id: String,
    pub candidate: String,
    pub predicted_action: ActionLabel,
    pub intended_action: ActionLabel,
    pub reward: u8,
}

/// Reward 1 when the player model's predicted action for the utterance
/// matches the action the intent asks for.
pub fn compute_reward(
    episode_id: &str,
    intent_text: &str,
    context: &str,
    utterance: &str,
    pm: &PlayerModel,
    i2a: &Intent2Action,
) -> RewardRecord {
    let intended_action = intent_to_action(intent_text, i2a);
    reward_for(episode_id, &intended_action, context, utterance, pm)
}

fn reward_for(
    episode_id: &str,
    intended: &ActionLabel,
    context: &str,
    utterance: &str,
    pm: &PlayerModel,
) -> RewardRecord {
    let predicted_action = predict_action(pm, context, utterance).1;
    RewardRecord {
        episode_id: episode_id.to_owned(),
        candidate: utterance.to_owned(),
        reward: u8::from(predicted_action == *intended),
        predicted_action,
        intended_action: intended.clone(),
    }
}

/// Clipped surrogate `min(rho * adv, clip(rho, 1 - eps, 1 + eps) * adv)`.
pub fn clipped_surrogate(rho: f64, advantage: f64, eps: f64) -> f64 {
    (rho * advantage).min(rho.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// One collected transition, with everything the update needs.
#[derive(Debug, Clone)]
pub struct PpoSample {
    pub feats: Vec<SparseVector>,
    pub value_x: SparseVector,
    pub action: usize,
    pub logp_old: f64,
    pub reward: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoTerms {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

impl PpoTerms {
    /// Objective being maximized.
    pub fn objective(&self, cfg: &PpoConfig) -> f64 {
        self.surrogate - cfg.value_coef * self.value_loss + cfg.entropy_coef * self.entropy
    }
}

/// Batch means of the surrogate, squared value error and entropy.
pub fn ppo_terms(policy: &Policy, batch: &[PpoSample], cfg: &PpoConfig) -> PpoTerms {
    let mut t = PpoTerms::default();
    for s in batch {
        let z = policy.tempered(&s.feats);
        let logp = log_softmax(&z);
        let rho = (logp[s.action] - s.logp_old).exp();
        t.surrogate += clipped_surrogate(rho, s.advantage, cfg.clip);
        t.entropy -= logp.iter().map(|l| l.exp() * l).sum::<f64>();
        let v = policy.value.score(&s.value_x) + policy.value.bias()[0];
        t.value_loss += (s.reward - v).powi(2);
    }
    let n = batch.len() as f64;
    PpoTerms {
        surrogate: t.surrogate / n,
        value_loss: t.value_loss / n,
        entropy: t.entropy / n,
    }
}

/// Gradient of [`PpoTerms::objective`]: dense scorer weights, dense value
/// weights and the value bias.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoGradient {
    pub scorer: Vec<f64>,
    pub value: Vec<f64>,
    pub value_bias: f64,
}

pub fn ppo_gradient(policy: &Policy, batch: &[PpoSample], cfg: &PpoConfig) -> PpoGradient {
    let dim = policy.dim();
    let n = batch.len() as f64;
    let mut g = PpoGradient {
        scorer: vec![0.0; dim],
        value: vec![0.0; dim],
        value_bias: 0.0,
    };
    for s in batch {
        let z = policy.tempered(&s.feats);
        let logp = log_softmax(&z);
        let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let entropy = -p.iter().zip(&logp).map(|(pi, li)| pi * li).sum::<f64>();
        let rho = (logp[s.action] - s.logp_old).exp();
        let unclipped = rho * s.advantage;
        let clipped = rho.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * s.advantage;
        let surr_weight = if unclipped <= clipped { unclipped } else { 0.0 };
        for (j, x) in s.feats.iter().enumerate() {
            let d_logpi = f64::from(u8::from(j == s.action)) - p[j];
            let d_entropy = -p[j] * (logp[j] + entropy);
            let dz = surr_weight * d_logpi + cfg.entropy_coef * d_entropy;
            if dz.abs() >= linmodel::RESIDUAL_FLOOR {
                let scale = dz / (policy.temperature * n);
                for (i, v) in x.iter() {
                    g.scorer[i] += scale * v;
                }
            }
        }
        let v = policy.value.score(&s.value_x) + policy.value.bias()[0];
        let dv = 2.0 * cfg.value_coef * (s.reward - v) / n;
        for (i, xv) in s.value_x.iter() {
            g.value[i] += dv * xv;
        }
        g.value_bias += dv;
    }
    g
}

fn apply_gradient(policy: &mut Policy, g: &PpoGradient, lr: f64, value_lr: f64) {
    for (w, d) in policy.scorer.weights_raw_mut().iter_mut().zip(&g.scorer) {
        *w += lr * d;
    }
    for (w, d) in policy.value.weights_raw_mut().iter_mut().zip(&g.value) {
        *w += value_lr * d;
    }
    policy.value.bias_mut()[0] += value_lr * g.value_bias;
}

/// State for RL: a context and the intent the DM pursues there.
#[derive(Debug, Clone, PartialEq)]
pub struct RlExample {
    pub id: String,
    pub context: String,
    pub intent_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoLogRow {
    pub iteration: usize,
    pub mean_reward: f64,
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

pub fn ppo_log_csv(rows: &[PpoLogRow]) -> String {
    let mut out = String::from("iteration,mean_reward,surrogate_loss,value_loss,entropy\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            r.iteration, r.mean_reward, r.surrogate_loss, r.value_loss, r.entropy
        );
    }
    out
}

/// Single-step PPO with a learned baseline, starting from `policy`.
pub fn train_ppo(
    mut policy: Policy,
    examples: &[RlExample],
    space: &CandidateSpace,
    pm: &PlayerModel,
    i2a: &Intent2Action,
    cfg: &PpoConfig,
) -> Result<(Policy, Vec<PpoLogRow>)> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::Data("no RL examples".into()));
    }
    let intended: Vec<ActionLabel> = examples
        .iter()
        .map(|e| intent_to_action(&e.intent_text, i2a))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut log = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        let mut reward_sum = 0.0;
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let idx = order[cursor];
            cursor += 1;
            let ex = &examples[idx];
            let input = policy.input(&ex.context, Some(&ex.intent_text));
            let pool = space.pool(&ex.context);
            let feats = policy.pool_features(&input, &pool);
            let z = policy.tempered(&feats);
            let action = sample_index(&softmax(&z), &mut rng);
            let logp_old = log_softmax(&z)[action];
            let rec = reward_for(&ex.id, &intended[idx], &ex.context, &pool[action].text, pm);
            let reward = f64::from(rec.reward);
            reward_sum += reward;
            let baseline = policy.state_value(&input);
            batch.push(PpoSample {
                feats,
                value_x: input.value_x,
                action,
                logp_old,
                reward,
                advantage: reward - baseline,
            });
        }
        let mut terms = PpoTerms::default();
        for _ in 0..cfg.epochs_per_batch {
            terms = ppo_terms(&policy, &batch, cfg);
            let objective = terms.objective(cfg);
            if !objective.is_finite() {
                return Err(Error::NonFinite(format!(
                    "PPO objective {objective} at iteration {iteration} (surrogate {}, value loss {}, entropy {})",
                    terms.surrogate, terms.value_loss, terms.entropy
                )));
            }
            let g = ppo_gradient(&policy, &batch, cfg);
            apply_gradient(&mut policy, &g, cfg.learning_rate, cfg.value_learning_rate);
        }
        if !(policy.scorer.is_finite() && policy.value.is_finite()) {
            return Err(Error::NonFinite(format!("policy weights after iteration {iteration}")));
        }
        log.push(PpoLogRow {
            iteration,
            mean_reward: reward_sum / cfg.batch_size as f64,
            surrogate_loss: -terms.surrogate,
            value_loss: terms.value_loss,
            entropy: terms.entropy,
        });
    }
    Ok((policy, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::default_bank;

    #[test]
    fn pool_size_and_order() {
        let space = CandidateSpace::with_defaults(&default_bank(), 4).unwrap();
        let ctx = "The party rests at the inn in Phandalin with Sildar Hallwinter.";
        let pool = gen_candidates(ctx, &space);
        assert_eq!(pool.len(), 50);
        let ids: Vec<&str> = pool[..46].iter().map(|c| c.template_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert!(pool[46..].iter().all(|c| c.action_hint.is_none()));
        let glint = pool.iter().find(|c| c.template_id == "perception-2").unwrap();
        assert!(glint.text.contains("Phandalin"));
        let medic = pool.iter().find(|c| c.template_id == "medicine-1").unwrap();
        assert!(medic.text.starts_with("Sildar Hallwinter"));
        assert_eq!(pool, gen_candidates(ctx, &space));
    }

    #[test]
    fn missing_slots_fall_back_to_pool_defaults() {
        let space = CandidateSpace::with_defaults(&default_bank(), 0).unwrap();
        assert_eq!(space.slots("Nothing named here."), (DEFAULT_ENTITIES[0], DEFAULT_PLACES[0]));
    }

    #[test]
    fn sampling_examples() {
        let policy = Policy::new(64, false, 1.0).unwrap();
        let input = policy.input("ctx", None);
        let pool: Vec<Candidate> = (0..3)
            .map(|i| Candidate {
                text: format!("Option {i}."),
                template_id: format!("t{i}"),
                action_hint: None,
            })
            .collect();
        let p = policy.probabilities(&policy.pool_features(&input, &pool));
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (c, lp) = policy_sample(&policy, &input, &pool[..1], &mut rng).unwrap();
        assert_eq!(c, pool[0]);
        assert_eq!(lp, 0.0);
        assert!(policy_sample(&policy, &input, &[], &mut rng).is_err());
    }

    #[test]
    fn clipped_surrogate_examples() {
        assert!((clipped_surrogate(1.2, 1.0, 0.2) - 1.2).abs() < 1e-12);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-12);
    }

    #[test]
    fn bad_temperature_rejected() {
        assert!(Policy::new(8, true, 0.0).is_err());
    }
}
