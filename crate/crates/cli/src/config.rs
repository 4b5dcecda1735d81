//! Run configuration: one TOML file with a section per module, plus
//! `section.key=value` overrides from the command line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dmguide_core::dmpolicy::PpoConfig;
use dmguide_core::idm::IdmConfig;
use dmguide_core::linmodel::TrainConfig;
use dmguide_core::synth::SynthConfig;
use dmguide_core::textfeat::DEFAULT_DIM;
use dmguide_core::{ActionLabel, ActionSet, DEFAULT_ACTIONS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding every artifact of a run.
    pub work_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            work_dir: PathBuf::from("work"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionsConfig {
    pub names: Vec<String>,
}

impl Default for ActionsConfig {
    fn default() -> Self {
        ActionsConfig {
            names: DEFAULT_ACTIONS.iter().map(|s| (*s).to_owned()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub window: usize,
    /// Extra words mapped to actions by the check detector.
    pub synonyms: BTreeMap<String, String>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            window: dmguide_core::corpus::DEFAULT_WINDOW,
            synonyms: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub dim: usize,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig { dim: DEFAULT_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntentConfig {
    pub generator: TrainConfig,
    pub intent2action: TrainConfig,
}

impl Default for IntentConfig {
    fn default() -> Self {
        let t = TrainConfig {
            learning_rate: 2.0,
            l2: 1e-5,
            epochs: 10,
            batch_size: 16,
            seed: 0,
        };
        IntentConfig {
            generator: t,
            intent2action: t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlayerConfig {
    pub train: TrainConfig,
}

impl Default for PlayerConfig {
    fn default() -> Self {
        PlayerConfig {
            train: TrainConfig {
                learning_rate: 2.0,
                l2: 1e-5,
                epochs: 10,
                batch_size: 16,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub temperature: f64,
    pub k_distractors: usize,
    pub train: TrainConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            temperature: 1.0,
            k_distractors: 4,
            train: TrainConfig {
                learning_rate: 10.0,
                l2: 1e-5,
                epochs: 3,
                batch_size: 16,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    /// Share of training episodes given gold labels for the human-label
    /// variant and for IDM training.
    pub human_fraction: f64,
    pub seeds: usize,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            human_fraction: 0.05,
            seeds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub actions: ActionsConfig,
    pub corpus: CorpusConfig,
    pub features: FeaturesConfig,
    pub synth: SynthConfig,
    pub idm: IdmConfig,
    pub player: PlayerConfig,
    pub intent: IntentConfig,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
    pub matrix: MatrixConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            paths: PathsConfig::default(),
            actions: ActionsConfig::default(),
            corpus: CorpusConfig::default(),
            features: FeaturesConfig::default(),
            synth: SynthConfig::default(),
            idm: IdmConfig::default(),
            player: PlayerConfig::default(),
            intent: IntentConfig::default(),
            policy: PolicyConfig::default(),
            ppo: PpoConfig::default(),
            matrix: MatrixConfig::default(),
        }
    }
}

/// Seed of a named stage, derived from the global seed.
pub fn stage_seed(global: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

impl RunConfig {
    /// Parses TOML text and applies `section.key=value` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> CliResult<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| CliError::Io {
                path: p.to_owned(),
                source: e,
            })?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> CliResult<()> {
        let actions = self.action_set()?;
        if !self.features.dim.is_power_of_two() {
            return Err(CliError::Config(format!(
                "features.dim = {} is not a power of two",
                self.features.dim
            )));
        }
        if self.corpus.window == 0 {
            return Err(CliError::Config("corpus.window must be >= 1".into()));
        }
        for target in self.corpus.synonyms.values() {
            actions.require(&ActionLabel::new(target))?;
        }
        self.synth.validate()?;
        self.idm.validate()?;
        self.player.train.validate()?;
        self.intent.generator.validate()?;
        self.intent.intent2action.validate()?;
        self.policy.train.validate()?;
        self.ppo.validate()?;
        if !(self.policy.temperature > 0.0) {
            return Err(CliError::Config("policy.temperature must be positive".into()));
        }
        if !(self.matrix.human_fraction > 0.0 && self.matrix.human_fraction <= 1.0) {
            return Err(CliError::Config("matrix.human_fraction must be in (0, 1]".into()));
        }
        if self.matrix.seeds == 0 {
            return Err(CliError::Config("matrix.seeds must be >= 1".into()));
        }
        Ok(())
    }

    pub fn action_set(&self) -> CliResult<ActionSet> {
        Ok(ActionSet::new(&self.actions.names)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form,
    /// with output paths left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = PathsConfig::default();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry((*p).to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert((*last).to_owned(), value);
    Ok(())
}
