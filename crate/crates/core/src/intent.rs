//! Intent mining from labeled episodes, a context-only intent generator, and
//! the intent-to-action mapper.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::{ActionLabel, ActionSet};
use crate::corpus::Episode;
use crate::error::{Error, Result};
use crate::linmodel::{self, argmax, train_multinomial, LinearModel, Meta, TrainConfig};
use crate::textfeat::{featurize, tokenize, SparseVector};

pub const MINED_TEMPLATE_ID: &str = "mined-v1";
pub const GENERATED_TEMPLATE_ID: &str = "generated-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntentSource {
    Mined,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub text: String,
    pub template_id: String,
    pub intended_action: Option<ActionLabel>,
    pub source: IntentSource,
}

fn mention_form(sentence: &str) -> String {
    sentence
        .trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c == '\u{201d}')
        .to_lowercase()
}

pub fn mined_intent_text(action: &ActionLabel, sentence: &str) -> String {
    format!(
        "The Dungeon Master intends the players to make a {action} check by mentioning: {}",
        mention_form(sentence)
    )
}

pub fn generated_intent_text(action: &ActionLabel) -> String {
    format!("The Dungeon Master intends the players to make a {action} check")
}

pub fn mine_intent(episode: &Episode) -> Result<Intent> {
    let sentence = episode.guidance_sentence().ok_or_else(|| Error::InvalidEpisode {
        id: episode.id.clone(),
        message: "intent mining needs a guidance_index".into(),
    })?;
    Ok(Intent {
        text: mined_intent_text(&episode.player_action, sentence),
        template_id: MINED_TEMPLATE_ID.into(),
        intended_action: Some(episode.player_action.clone()),
        source: IntentSource::Mined,
    })
}

/// Fills `intent_text` / `intended_action` of every episode that has a
/// guidance label; unlabeled episodes pass through unchanged.
pub fn mine_intents(episodes: &[Episode]) -> Vec<Episode> {
    episodes
        .iter()
        .map(|e| {
            let mut out = e.clone();
            if let Ok(intent) = mine_intent(e) {
                out.intent_text = Some(intent.text);
                out.intended_action = intent.intended_action;
            }
            out
        })
        .collect()
}

pub fn context_features(context: &str, dim: usize) -> SparseVector {
    featurize(&[("ctx", context)], dim)
}

/// Predicts the intended action from context alone.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentGenerator {
    pub model: LinearModel,
}

pub fn train_intent_generator(
    episodes: &[Episode],
    actions: &ActionSet,
    dim: usize,
    cfg: &TrainConfig,
) -> Result<IntentGenerator> {
    let mut data = Vec::new();
    for e in episodes {
        let (Some(_), Some(a)) = (&e.intent_text, &e.intended_action) else {
            continue;
        };
        data.push((context_features(&e.context_text(), dim), actions.require(a)?));
    }
    if data.is_empty() {
        return Err(Error::Data("no mined intents to train the intent generator".into()));
    }
    Ok(IntentGenerator {
        model: train_multinomial(actions.names(), &data, cfg)?.model,
    })
}

impl IntentGenerator {
    pub fn predict(&self, context: &str) -> ActionLabel {
        let x = context_features(context, self.model.dim());
        ActionLabel::new(&self.model.labels()[argmax(&self.model.logits_unchecked(&x))])
    }

    pub fn save(&self, path: &Path, meta: &Meta) -> Result<()> {
        linmodel::save_model(path, &self.model, meta)
    }

    pub fn load(path: &Path) -> Result<(Self, Meta)> {
        let (model, meta) = linmodel::load_model(path)?;
        Ok((IntentGenerator { model }, meta))
    }
}

pub fn generate_intent(generator: &IntentGenerator, context: &str) -> Intent {
    let action = generator.predict(context);
    Intent {
        text: generated_intent_text(&action),
        template_id: GENERATED_TEMPLATE_ID.into(),
        intended_action: Some(action),
        source: IntentSource::Generated,
    }
}

pub fn intent_features(text: &str, dim: usize) -> SparseVector {
    featurize(&[("int", text)], dim)
}

/// Keyword matcher with a learned fallback for intents that name no action.
#[derive(Debug, Clone, PartialEq)]
pub struct Intent2Action {
    pub actions: ActionSet,
    pub fallback: LinearModel,
}

pub fn train_intent2action(
    pairs: &[(String, ActionLabel)],
    actions: &ActionSet,
    dim: usize,
    cfg: &TrainConfig,
) -> Result<Intent2Action> {
    let data = pairs
        .iter()
        .map(|(t, a)| Ok((intent_features(t, dim), actions.require(a)?)))
        .collect::<Result<Vec<_>>>()?;
    let fallback = train_multinomial(actions.names(), &data, cfg)?.model;
    Ok(Intent2Action {
        actions: actions.clone(),
        fallback,
    })
}

impl Intent2Action {
    pub fn save(&self, path: &Path, meta: &Meta) -> Result<()> {
        linmodel::save_model(path, &self.fallback, meta)
    }

    pub fn load(path: &Path) -> Result<(Self, Meta)> {
        let (fallback, meta) = linmodel::load_model(path)?;
        let actions = ActionSet::new(fallback.labels().iter())?;
        Ok((Intent2Action { actions, fallback }, meta))
    }
}

/// Earliest action named in the text, else the fallback model's choice.
pub fn intent_to_action(text: &str, i2a: &Intent2Action) -> ActionLabel {
    if let Some((_, a)) = i2a.actions.earliest_mention(&tokenize(text)) {
        return i2a.actions.get(a).clone();
    }
    let x = intent_features(text, i2a.fallback.dim());
    ActionLabel::new(&i2a.fallback.labels()[argmax(&i2a.fallback.logits_unchecked(&x))])
}
