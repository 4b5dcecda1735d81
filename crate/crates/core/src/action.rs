//! Ability-check action labels and the configured action inventory.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 18 standard skills followed by five raw ability checks.
pub const DEFAULT_ACTIONS: [&str; 23] = [
    "acrobatics",
    "animal handling",
    "arcana",
    "athletics",
    "deception",
    "history",
    "insight",
    "intimidation",
    "investigation",
    "medicine",
    "nature",
    "perception",
    "performance",
    "persuasion",
    "religion",
    "sleight of hand",
    "stealth",
    "survival",
    "strength",
    "dexterity",
    "constitution",
    "intelligence",
    "wisdom",
];

/// Name of an ability check, stored lowercase with single spaces.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionLabel(String);

impl ActionLabel {
    pub fn new(name: &str) -> Self {
        let normalized = name
            .split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" ");
        ActionLabel(normalized)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ActionLabel {
    fn from(s: &str) -> Self {
        ActionLabel::new(s)
    }
}

/// Ordered, duplicate-free set of actions. Label order defines class indices
/// for every model trained over actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    labels: Vec<ActionLabel>,
    index: HashMap<ActionLabel, usize>,
    /// Lowercase token sequence per label, used for text matching.
    tokens: Vec<Vec<String>>,
}

impl ActionSet {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut labels = Vec::new();
        let mut index = HashMap::new();
        for name in names {
            let label = ActionLabel::new(name.as_ref());
            if label.as_str().is_empty() {
                return Err(Error::Config("empty action name".into()));
            }
            if index.insert(label.clone(), labels.len()).is_some() {
                return Err(Error::Config(format!("duplicate action `{label}`")));
            }
            labels.push(label);
        }
        if labels.is_empty() {
            return Err(Error::Config("action set is empty".into()));
        }
        let tokens = labels
            .iter()
            .map(|l| l.as_str().split(' ').map(str::to_owned).collect())
            .collect();
        Ok(ActionSet {
            labels,
            index,
            tokens,
        })
    }

    pub fn default_23() -> Self {
        Self::new(DEFAULT_ACTIONS).expect("default action set is valid")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[ActionLabel] {
        &self.labels
    }

    pub fn names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.as_str().to_owned()).collect()
    }

    pub fn get(&self, idx: usize) -> &ActionLabel {
        &self.labels[idx]
    }

    pub fn index_of(&self, label: &ActionLabel) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn contains(&self, label: &ActionLabel) -> bool {
        self.index.contains_key(label)
    }

    pub fn require(&self, label: &ActionLabel) -> Result<usize> {
        self.index_of(label).ok_or_else(|| Error::Unknown {
            kind: "action",
            name: label.to_string(),
        })
    }

    /// Token sequence of each label, aligned with `labels()`.
    pub fn token_sequences(&self) -> &[Vec<String>] {
        &self.tokens
    }

    /// Earliest occurrence of any action name in a lowercase token stream.
    /// Returns `(token position, action index)`; when two names start at the
    /// same position the longer one wins.
    pub fn earliest_mention(&self, tokens: &[String]) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, usize)> = None;
        for (action, seq) in self.tokens.iter().enumerate() {
            if let Some(pos) = find_subsequence(tokens, seq) {
                let better = match best {
                    None => true,
                    Some((bp, blen, _)) => pos < bp || (pos == bp && seq.len() > blen),
                };
                if better {
                    best = Some((pos, seq.len(), action));
                }
            }
        }
        best.map(|(pos, _, action)| (pos, action))
    }
}

pub(crate) fn find_subsequence(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack
        .windows(needle.len())
        .position(|w| w.iter().zip(needle).all(|(a, b)| a == b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_set_has_23_unique_actions() {
        let set = ActionSet::default_23();
        assert_eq!(set.len(), 23);
        assert_eq!(set.index_of(&"perception".into()), Some(11));
    }

    #[test]
    fn labels_are_normalized() {
        assert_eq!(ActionLabel::new("  Sleight   of Hand ").as_str(), "sleight of hand");
    }

    #[test]
    fn duplicates_rejected() {
        assert!(ActionSet::new(["stealth", "Stealth"]).is_err());
        assert!(ActionSet::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn earliest_mention_prefers_position() {
        let set = ActionSet::default_23();
        let toks: Vec<String> = "a perception then persuasion"
            .split(' ')
            .map(String::from)
            .collect();
        assert_eq!(set.earliest_mention(&toks), Some((1, 11)));
        let toks: Vec<String> = "try sleight of hand".split(' ').map(String::from).collect();
        assert_eq!(set.earliest_mention(&toks), Some((1, 15)));
    }
}
