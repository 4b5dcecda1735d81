//! Player models approximating which ability check a DM turn elicits.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::action::{ActionLabel, ActionSet};
use crate::corpus::{Episode, Split};
use crate::error::{Error, Result};
use crate::linmodel::{self, argmax, softmax, train_multinomial, LinearModel, Meta, TrainConfig};
use crate::textfeat::{featurize, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlayerVariant {
    Reward,
    Eval,
}

impl PlayerVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            PlayerVariant::Reward => "reward",
            PlayerVariant::Eval => "eval",
        }
    }

    /// Splits whose episodes train this variant.
    pub fn splits(self) -> &'static [Split] {
        match self {
            PlayerVariant::Reward => &[Split::Train],
            PlayerVariant::Eval => &[Split::Train, Split::Test],
        }
    }
}

impl FromStr for PlayerVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reward" => Ok(PlayerVariant::Reward),
            "eval" => Ok(PlayerVariant::Eval),
            other => Err(Error::Unknown {
                kind: "player model variant",
                name: other.to_owned(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerModel {
    pub model: LinearModel,
    pub variant: PlayerVariant,
    pub actions: ActionSet,
}

pub fn player_features(context: &str, dm_text: &str, dim: usize) -> SparseVector {
    featurize(&[("ctx", context), ("dm", dm_text)], dim)
}

pub fn train_player_model(
    episodes: &[Episode],
    variant: PlayerVariant,
    actions: &ActionSet,
    dim: usize,
    cfg: &TrainConfig,
) -> Result<PlayerModel> {
    let data = episodes
        .iter()
        .filter(|e| variant.splits().contains(&e.split))
        .map(|e| {
            Ok((
                player_features(&e.context_text(), &e.dm_text, dim),
                actions.require(&e.player_action)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    if data.is_empty() {
        return Err(Error::Data(format!(
            "no episodes to train the {} player model",
            variant.as_str()
        )));
    }
    Ok(PlayerModel {
        model: train_multinomial(actions.names(), &data, cfg)?.model,
        variant,
        actions: actions.clone(),
    })
}

impl PlayerModel {
    pub fn distribution(&self, context: &str, dm_text: &str) -> Vec<f64> {
        let x = player_features(context, dm_text, self.model.dim());
        softmax(&self.model.logits_unchecked(&x))
    }

    pub fn save(&self, path: &Path, extra: &Meta) -> Result<()> {
        let mut meta = extra.clone();
        meta.insert("variant".into(), self.variant.as_str().into());
        linmodel::save_model(path, &self.model, &meta)
    }

    pub fn load(path: &Path) -> Result<(Self, Meta)> {
        let (model, meta) = linmodel::load_model(path)?;
        let variant = meta
            .get("variant")
            .ok_or_else(|| Error::Format(format!("{}: missing variant", path.display())))?
            .parse()?;
        let actions = ActionSet::new(model.labels().iter())?;
        Ok((
            PlayerModel {
                model,
                variant,
                actions,
            },
            meta,
        ))
    }
}

/// Action distribution and its argmax (ties to the lowest label index).
pub fn predict_action(pm: &PlayerModel, context: &str, dm_text: &str) -> (Vec<f64>, ActionLabel) {
    let p = pm.distribution(context, dm_text);
    let a = pm.actions.get(argmax(&p)).clone();
    (p, a)
}

/// Fraction of episodes whose recorded action the model predicts.
pub fn accuracy(pm: &PlayerModel, episodes: &[Episode]) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    let hits = episodes
        .iter()
        .filter(|e| predict_action(pm, &e.context_text(), &e.dm_text).1 == e.player_action)
        .count();
    hits as f64 / episodes.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_is_uniform_with_first_label() {
        let actions = ActionSet::default_23();
        let pm = PlayerModel {
            model: LinearModel::zeros(actions.names(), 64).unwrap(),
            variant: PlayerVariant::Reward,
            actions,
        };
        let (p, a) = predict_action(&pm, "ctx", "You notice movements.");
        assert!(p.iter().all(|v| (v - 1.0 / 23.0).abs() < 1e-12));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(a.as_str(), "acrobatics");
        assert_eq!(predict_action(&pm, "ctx", "You notice movements."), (p, a));
    }

    #[test]
    fn eval_variant_uses_superset_of_splits() {
        for s in PlayerVariant::Reward.splits() {
            assert!(PlayerVariant::Eval.splits().contains(s));
        }
        assert!(PlayerVariant::Eval.splits().len() > PlayerVariant::Reward.splits().len());
    }

    #[test]
    fn save_load_keeps_variant() {
        let actions = ActionSet::new(["stealth", "perception"]).unwrap();
        let mut model = LinearModel::zeros(actions.names(), 16).unwrap();
        model.set_weight(1, 3, 0.25);
        let pm = PlayerModel {
            model,
            variant: PlayerVariant::Eval,
            actions,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pm.lin");
        pm.save(&path, &Meta::new()).unwrap();
        let (back, meta) = PlayerModel::load(&path).unwrap();
        assert_eq!(back, pm);
        assert_eq!(meta["variant"], "eval");
        assert!(train_player_model(&[], PlayerVariant::Reward, &pm.actions, 16, &TrainConfig::default()).is_err());
    }
}
