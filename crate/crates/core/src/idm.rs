//! Inverse dynamics labeling: decide whether a DM turn holds guidance and
//! pick the guiding sentence, using the player's future action as input.

use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{ActionLabel, ActionSet};
use crate::corpus::{Episode, Provenance};
use crate::error::{Error, Result};
use crate::linmodel::{
    self, argmax, softmax, train_listwise, train_multinomial, LinearModel, Meta, TrainConfig,
};
use crate::synth::CHITCHAT;
use crate::textfeat::{
    content_tokens, feature_hash, featurize, push_cross_buckets, push_ngram_buckets,
    token_hashes, SparseVector, DEFAULT_DIM,
};

pub const GUIDANCE_LABEL: &str = "guidance";
pub const NO_GUIDANCE_LABEL: &str = "no_guidance";
pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmConfig {
    pub dim: usize,
    pub tau: f64,
    pub extract_uses_action: bool,
    pub identify_train: TrainConfig,
    pub extract_train: TrainConfig,
}

impl Default for IdmConfig {
    fn default() -> Self {
        let base = TrainConfig {
            learning_rate: 2.0,
            l2: 1e-5,
            epochs: 10,
            batch_size: 16,
            seed: 0,
        };
        IdmConfig {
            dim: DEFAULT_DIM,
            tau: DEFAULT_TAU,
            extract_uses_action: true,
            identify_train: TrainConfig { epochs: 100, ..base },
            extract_train: base,
        }
    }
}

impl IdmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1), got {}", self.tau)));
        }
        if !self.dim.is_power_of_two() {
            return Err(Error::Config(format!("dim {} is not a power of two", self.dim)));
        }
        self.identify_train.validate()?;
        self.extract_train.validate()
    }
}

fn action_hash(action: &ActionLabel) -> u64 {
    feature_hash("act", action.as_str())
}

/// Indicators of action tokens and action x DM-word conjunctions.
pub fn identify_features(
    _context: &str,
    dm_text: &str,
    action: &ActionLabel,
    dim: usize,
) -> SparseVector {
    let mut buckets = Vec::new();
    push_ngram_buckets("act", action.as_str(), dim, &mut buckets);
    let words = token_hashes("dm", &content_tokens(dm_text));
    push_cross_buckets(&[action_hash(action)], &words, dim, &mut buckets);
    SparseVector::indicators(dim, buckets)
}

/// Features of one candidate sentence; with an action, adds the action field
/// and action x sentence-word conjunctions.
pub fn extract_features(sentence: &str, action: Option<&ActionLabel>, dim: usize) -> SparseVector {
    let mut buckets = Vec::new();
    push_ngram_buckets("dm", sentence, dim, &mut buckets);
    if let Some(a) = action {
        push_ngram_buckets("act", a.as_str(), dim, &mut buckets);
        let words = token_hashes("dm", &content_tokens(sentence));
        push_cross_buckets(&[action_hash(a)], &words, dim, &mut buckets);
    }
    SparseVector::from_buckets(dim, buckets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyExample {
    pub context: String,
    pub dm_text: String,
    pub action: ActionLabel,
    pub guidance: bool,
}

/// Positives from labeled episodes and their guiding sentences alone; negatives from the same post with the
/// guidance sentence removed, the same post paired with a different action,
/// and out-of-character chitchat posts.
pub fn identify_examples(episodes: &[Episode], actions: &ActionSet, seed: u64) -> Vec<IdentifyExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for e in episodes {
        let Some(g) = e.guidance_index else {
            continue;
        };
        let context = e.context_text();
        out.push(IdentifyExample {
            context: context.clone(),
            dm_text: e.dm_text.clone(),
            action: e.player_action.clone(),
            guidance: true,
        });
        if e.dm_sentences.len() > 1 {
            out.push(IdentifyExample {
                context: context.clone(),
                dm_text: e.dm_sentences[g].clone(),
                action: e.player_action.clone(),
                guidance: true,
            });
        }
        let stripped: Vec<&str> = e
            .dm_sentences
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != g)
            .map(|(_, s)| s.as_str())
            .collect();
        if !stripped.is_empty() {
            out.push(IdentifyExample {
                context: context.clone(),
                dm_text: stripped.join(" "),
                action: e.player_action.clone(),
                guidance: false,
            });
        }
        if actions.len() > 1 {
            let mut other = actions.get(rng.gen_range(0..actions.len())).clone();
            while other == e.player_action {
                other = actions.get(rng.gen_range(0..actions.len())).clone();
            }
            out.push(IdentifyExample {
                context: context.clone(),
                dm_text: e.dm_text.clone(),
                action: other,
                guidance: false,
            });
        }
        let n_chat = rng.gen_range(1..=3);
        let chat: Vec<&str> = CHITCHAT.choose_multiple(&mut rng, n_chat).copied().collect();
        out.push(IdentifyExample {
            context,
            dm_text: chat.join(" "),
            action: e.player_action.clone(),
            guidance: false,
        });
    }
    out
}

pub fn train_identify(examples: &[IdentifyExample], dim: usize, cfg: &TrainConfig) -> Result<LinearModel> {
    let pos = examples.iter().filter(|x| x.guidance).count();
    if pos == 0 || pos == examples.len() {
        return Err(Error::Data(
            "identify training needs both guidance and no-guidance examples".into(),
        ));
    }
    let data: Vec<(SparseVector, usize)> = examples
        .iter()
        .map(|x| {
            (
                identify_features(&x.context, &x.dm_text, &x.action, dim),
                usize::from(!x.guidance),
            )
        })
        .collect();
    Ok(train_multinomial(vec![GUIDANCE_LABEL.into(), NO_GUIDANCE_LABEL.into()], &data, cfg)?.model)
}

fn sentence_group(e: &Episode, use_action: bool, dim: usize) -> Vec<SparseVector> {
    let action = use_action.then_some(&e.player_action);
    e.dm_sentences
        .iter()
        .map(|s| extract_features(s, action, dim))
        .collect()
}

pub fn train_extract(
    episodes: &[Episode],
    use_action: bool,
    dim: usize,
    cfg: &TrainConfig,
) -> Result<LinearModel> {
    let mut groups = Vec::with_capacity(episodes.len());
    for e in episodes {
        let g = e.guidance_index.ok_or_else(|| Error::InvalidEpisode {
            id: e.id.clone(),
            message: "extract training needs guidance_index".into(),
        })?;
        groups.push((sentence_group(e, use_action, dim), g));
    }
    Ok(train_listwise(&groups, dim, cfg)?.model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdmBundle {
    pub identify: LinearModel,
    pub extract: LinearModel,
    pub tau: f64,
    pub extract_uses_action: bool,
}

impl IdmBundle {
    pub fn dim(&self) -> usize {
        self.identify.dim()
    }

    /// Probability that `dm_text` guides toward `action`.
    pub fn identify_prob(&self, context: &str, dm_text: &str, action: &ActionLabel) -> f64 {
        let x = identify_features(context, dm_text, action, self.dim());
        softmax(&self.identify.logits_unchecked(&x))[0]
    }

    pub fn is_guidance(&self, context: &str, dm_text: &str, action: &ActionLabel) -> bool {
        self.identify_prob(context, dm_text, action) >= self.tau
    }

    pub fn sentence_scores(&self, sentences: &[String], action: &ActionLabel) -> Vec<f64> {
        let a = self.extract_uses_action.then_some(action);
        sentences
            .iter()
            .map(|s| self.extract.score(&extract_features(s, a, self.dim())))
            .collect()
    }

    /// Highest-scoring sentence, ignoring the identify gate.
    pub fn best_sentence(&self, episode: &Episode) -> Option<usize> {
        if episode.dm_sentences.is_empty() {
            return None;
        }
        Some(argmax(&self.sentence_scores(&episode.dm_sentences, &episode.player_action)))
    }

    pub fn save(&self, path: &Path, extra: &Meta) -> Result<()> {
        let mut meta = extra.clone();
        meta.insert("tau".into(), self.tau.to_string());
        meta.insert("extract_uses_action".into(), self.extract_uses_action.to_string());
        linmodel::save_sections(path, &meta, &[("identify", &self.identify), ("extract", &self.extract)])
    }

    pub fn load(path: &Path) -> Result<(Self, Meta)> {
        let (meta, mut sections) = linmodel::load_sections(path)?;
        let tau = meta
            .get("tau")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Format(format!("{}: missing tau", path.display())))?;
        let extract_uses_action = meta.get("extract_uses_action").is_none_or(|v| v == "true");
        let bundle = IdmBundle {
            identify: linmodel::take_section(&mut sections, "identify")?,
            extract: linmodel::take_section(&mut sections, "extract")?,
            tau,
            extract_uses_action,
        };
        if bundle.identify.labels() != [GUIDANCE_LABEL, NO_GUIDANCE_LABEL] {
            return Err(Error::Format("identify model must have guidance/no_guidance labels".into()));
        }
        Ok((bundle, meta))
    }
}

/// Trains both IDM models on labeled episodes.
pub fn train_idm(episodes: &[Episode], actions: &ActionSet, cfg: &IdmConfig) -> Result<IdmBundle> {
    cfg.validate()?;
    let labeled: Vec<Episode> = episodes
        .iter()
        .filter(|e| e.guidance_index.is_some())
        .cloned()
        .collect();
    if labeled.is_empty() {
        return Err(Error::Data("no episodes with guidance labels".into()));
    }
    let examples = identify_examples(&labeled, actions, cfg.identify_train.seed);
    let identify = train_identify(&examples, cfg.dim, &cfg.identify_train)?;
    let extract = train_extract(&labeled, cfg.extract_uses_action, cfg.dim, &cfg.extract_train)?;
    Ok(IdmBundle {
        identify,
        extract,
        tau: cfg.tau,
        extract_uses_action: cfg.extract_uses_action,
    })
}

/// Guiding sentence index, or `None` when identify rejects the DM turn.
pub fn extract_guidance(bundle: &IdmBundle, episode: &Episode) -> Option<usize> {
    if episode.dm_sentences.is_empty()
        || !bundle.is_guidance(&episode.context_text(), &episode.dm_text, &episode.player_action)
    {
        return None;
    }
    bundle.best_sentence(episode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Longest,
    Last,
    Similarity,
}

impl FromStr for BaselineMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "longest" => Ok(BaselineMethod::Longest),
            "last" => Ok(BaselineMethod::Last),
            "similarity" => Ok(BaselineMethod::Similarity),
            other => Err(Error::Unknown {
                kind: "baseline method",
                name: other.to_owned(),
            }),
        }
    }
}

pub fn baseline_extract(method: BaselineMethod, episode: &Episode, dim: usize) -> Result<usize> {
    let sents = &episode.dm_sentences;
    if sents.is_empty() {
        return Err(Error::InvalidEpisode {
            id: episode.id.clone(),
            message: "no DM sentences".into(),
        });
    }
    Ok(match method {
        BaselineMethod::Longest => {
            let lens: Vec<f64> = sents.iter().map(|s| s.chars().count() as f64).collect();
            argmax(&lens)
        }
        BaselineMethod::Last => sents.len() - 1,
        BaselineMethod::Similarity => {
            let target = featurize(&[("txt", &episode.player_text)], dim);
            let sims: Vec<f64> = sents
                .iter()
                .map(|s| featurize(&[("txt", s)], dim).cosine(&target))
                .collect();
            argmax(&sims)
        }
    })
}

/// Relabels every episode with the IDM's choice and marks it `idm`.
pub fn pseudo_label(bundle: &IdmBundle, episodes: &[Episode]) -> Vec<Episode> {
    episodes
        .iter()
        .map(|e| {
            let mut out = e.clone();
            out.guidance_index = extract_guidance(bundle, e);
            out.provenance = Provenance::Idm;
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ContextTurn, Role, Split};

    pub(crate) fn table1_episode() -> Episode {
        let dm_text = "A dwarf named Gundren Rockseeker has hired you to transport a wagonload of provisions to the rough-and-tumble settlement of Phandalin, a couple of days' travel southeast of Neverwinter. Clint, you all notice some movements in the bushes nearby the road. Two of the goblins begin charging your wagon.";
        Episode {
            id: "ep-table1".into(),
            context: vec![ContextTurn {
                speaker: "DM".into(),
                role: Role::Dm,
                text: "You have been on the road for a day.".into(),
            }],
            dm_text: dm_text.into(),
            dm_sentences: crate::corpus::split_sentences(dm_text),
            guidance_index: None,
            player_name: "Clint".into(),
            player_text: "Clint makes a perception check. 16".into(),
            player_action: "perception".into(),
            intent_text: None,
            intended_action: None,
            split: Split::Test,
            provenance: Provenance::Human,
        }
    }

    #[test]
    fn baselines() {
        let e = table1_episode();
        assert_eq!(e.dm_sentences.len(), 3);
        assert_eq!(baseline_extract(BaselineMethod::Longest, &e, 1024).unwrap(), 0);
        assert_eq!(baseline_extract(BaselineMethod::Last, &e, 1024).unwrap(), 2);
        assert!("middle".parse::<BaselineMethod>().is_err());
        let mut seven = e.clone();
        seven.dm_sentences = (0..7).map(|i| format!("Sentence {i}.")).collect();
        assert_eq!(baseline_extract(BaselineMethod::Last, &seven, 1024).unwrap(), 6);
        let mut empty = e;
        empty.dm_sentences.clear();
        assert!(baseline_extract(BaselineMethod::Last, &empty, 1024).is_err());
    }

    #[test]
    fn single_class_identify_rejected() {
        let x = IdentifyExample {
            context: "c".into(),
            dm_text: "d".into(),
            action: "stealth".into(),
            guidance: true,
        };
        assert!(train_identify(&[x], 64, &TrainConfig::default()).is_err());
    }

    #[test]
    fn extract_needs_index() {
        let e = table1_episode();
        assert!(train_extract(&[e], true, 64, &TrainConfig::default()).is_err());
    }

    #[test]
    fn one_sentence_post_is_certain() {
        let m = LinearModel::scorer(64);
        let bundle = IdmBundle {
            identify: LinearModel::zeros(vec![GUIDANCE_LABEL.into(), NO_GUIDANCE_LABEL.into()], 64)
                .unwrap(),
            extract: m,
            tau: 0.5,
            extract_uses_action: true,
        };
        let scores = bundle.sentence_scores(&["Only one.".into()], &"stealth".into());
        assert_eq!(softmax(&scores), vec![1.0]);
        let mut e = table1_episode();
        e.dm_sentences = vec!["Only one.".into()];
        e.dm_text = "Only one.".into();
        // zero identify model gives probability 0.5 == tau, which passes
        assert_eq!(extract_guidance(&bundle, &e), Some(0));
        let strict = IdmBundle { tau: 0.6, ..bundle };
        assert_eq!(extract_guidance(&strict, &e), None);
    }
}
