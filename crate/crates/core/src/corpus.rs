//! Forum post parsing and reconstruction of DM/player episodes.
//!
//! A post dump is a JSON Lines file of [`Post`] records. Threads are
//! delimited by `seq`: within a thread `seq` strictly increases, so a
//! non-increasing `seq` starts a new thread.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::{ActionLabel, ActionSet};
use crate::persist::{read_jsonl, write_jsonl, ArtifactHeader};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 20;

const CHECK_KEYWORDS: [&str; 4] = ["check", "roll", "rolls", "rolling"];
const KEYWORD_REACH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Dm,
    Player,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Post {
    pub id: String,
    pub author: String,
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to: Option<String>,
    #[serde(default)]
    pub name_mentions: Vec<String>,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbilityCheckEvent {
    pub action: ActionLabel,
    pub roll: Option<u8>,
    /// Character (not byte) offset of the action mention.
    pub char_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextTurn {
    pub speaker: String,
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Human,
    Idm,
    Random,
    Synthetic,
}

/// One (context, DM turn, player action) unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Episode {
    pub id: String,
    pub context: Vec<ContextTurn>,
    pub dm_text: String,
    pub dm_sentences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance_index: Option<usize>,
    pub player_name: String,
    pub player_text: String,
    pub player_action: ActionLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intended_action: Option<ActionLabel>,
    pub split: Split,
    pub provenance: Provenance,
}

impl Episode {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| Error::InvalidEpisode {
            id: self.id.clone(),
            message: message.to_owned(),
        };
        if self.id.is_empty() {
            return Err(bad("empty id"));
        }
        if self.context.is_empty() {
            return Err(bad("context has no turns"));
        }
        if let Some(g) = self.guidance_index {
            if g >= self.dm_sentences.len() {
                return Err(bad(&format!(
                    "guidance_index {g} out of range for {} sentences",
                    self.dm_sentences.len()
                )));
            }
        }
        if self.player_action.as_str().is_empty() {
            return Err(bad("missing player_action"));
        }
        Ok(())
    }

    /// Context turns joined into one text.
    pub fn context_text(&self) -> String {
        join_context(&self.context)
    }

    pub fn guidance_sentence(&self) -> Option<&str> {
        self.guidance_index
            .and_then(|i| self.dm_sentences.get(i))
            .map(String::as_str)
    }
}

pub fn join_context(turns: &[ContextTurn]) -> String {
    turns
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201d}' | '\u{2019}' | ')' | ']')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201c}' | '\u{2018}' | '(' | '[')
}

/// Splits at runs of `.`, `!`, `?` (plus closing quotes) that are followed by
/// whitespace and an uppercase letter, or by the end of text. An ellipsis
/// stays attached to its sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0;
    while i < chars.len() {
        if !is_terminal(chars[i].1) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && is_terminal(chars[j].1) {
            j += 1;
        }
        while j < chars.len() && is_closer(chars[j].1) {
            j += 1;
        }
        let end_byte = chars.get(j).map_or(text.len(), |c| c.0);
        let boundary = if j == chars.len() {
            true
        } else {
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            if k > j && k < chars.len() && is_opener(chars[k].1) {
                k += 1;
            }
            k > j && k < chars.len() && chars[k].1.is_uppercase()
        };
        if boundary {
            let s = text[start..end_byte].trim();
            if !s.is_empty() {
                out.push(s.to_owned());
            }
            start = end_byte;
        }
        i = j.max(i + 1);
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_owned());
    }
    out
}

/// Action detection settings: the inventory plus optional surface synonyms.
#[derive(Debug, Clone)]
pub struct CheckDetector {
    patterns: Vec<(Vec<String>, usize)>,
    actions: ActionSet,
}

impl CheckDetector {
    pub fn new(actions: ActionSet) -> Self {
        Self::with_synonyms(actions, &[]).expect("no synonyms to validate")
    }

    /// `synonyms` maps a surface phrase (e.g. "perceive") to a configured action.
    pub fn with_synonyms(actions: ActionSet, synonyms: &[(String, ActionLabel)]) -> Result<Self> {
        let mut patterns: Vec<(Vec<String>, usize)> = actions
            .token_sequences()
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, seq)| (seq, i))
            .collect();
        for (phrase, action) in synonyms {
            let idx = actions.require(action)?;
            let seq = crate::textfeat::tokenize(phrase);
            if seq.is_empty() {
                return Err(Error::Config(format!("empty synonym for `{action}`")));
            }
            patterns.push((seq, idx));
        }
        Ok(CheckDetector { patterns, actions })
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn detect(&self, text: &str) -> Option<AbilityCheckEvent> {
        let toks = offset_tokens(text);
        let lower: Vec<String> = toks.iter().map(|t| t.0.clone()).collect();
        let keyword_pos: Vec<usize> = lower
            .iter()
            .enumerate()
            .filter(|(_, t)| CHECK_KEYWORDS.contains(&t.as_str()))
            .map(|(i, _)| i)
            .collect();
        // (start, len, action)
        let mut best: Option<(usize, usize, usize)> = None;
        for (seq, action) in &self.patterns {
            let n = seq.len();
            if n > lower.len() {
                continue;
            }
            for start in 0..=lower.len() - n {
                if lower[start..start + n] != seq[..] {
                    continue;
                }
                let last = start + n - 1;
                let near = keyword_pos.iter().any(|&k| {
                    (k < start && start - k <= KEYWORD_REACH)
                        || (k > last && k - last <= KEYWORD_REACH)
                });
                if !near {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bs, bl, _)) => start < bs || (start == bs && n > bl),
                };
                if better {
                    best = Some((start, n, *action));
                }
                break;
            }
        }
        let (start, n, action) = best?;
        let roll = lower[start + n..]
            .iter()
            .filter_map(|t| t.parse::<u32>().ok())
            .find(|v| (1..=20).contains(v))
            .map(|v| v as u8);
        Some(AbilityCheckEvent {
            action: self.actions.get(action).clone(),
            roll,
            char_offset: toks[start].1,
        })
    }
}

/// Lowercase tokens with their character offsets.
fn offset_tokens(text: &str) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut cur_start = 0;
    for (ci, c) in text.chars().enumerate() {
        if c.is_alphanumeric() {
            if cur.is_empty() {
                cur_start = ci;
            }
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push((std::mem::take(&mut cur), cur_start));
        }
    }
    if !cur.is_empty() {
        out.push((cur, cur_start));
    }
    out
}

/// First action name within four tokens of "check"/"roll"/"rolls"/"rolling".
pub fn detect_ability_check(text: &str, actions: &ActionSet) -> Option<AbilityCheckEvent> {
    CheckDetector::new(actions.clone()).detect(text)
}

/// Splits a post stream into threads at every non-increasing `seq`.
pub fn split_threads(posts: Vec<Post>) -> Vec<Vec<Post>> {
    let mut threads: Vec<Vec<Post>> = Vec::new();
    for post in posts {
        let new_thread = threads
            .last()
            .and_then(|t| t.last())
            .is_none_or(|prev| post.seq <= prev.seq);
        if new_thread {
            threads.push(Vec::new());
        }
        threads.last_mut().unwrap().push(post);
    }
    threads
}

/// Deterministic 80/10/10 split keyed on the episode id.
pub fn assign_split(id: &str) -> Split {
    match crate::textfeat::feature_hash("split", id) % 10 {
        0..=7 => Split::Train,
        8 => Split::Valid,
        _ => Split::Test,
    }
}

pub fn episode_id_for(post_id: &str) -> String {
    format!("ep-{post_id}")
}

/// Reconstructs episodes from one thread whose posts are sorted by `seq`.
///
/// For each player post carrying an ability check, the DM turn is the nearest
/// DM post within `window` turns that mentions or replies to that player;
/// otherwise the nearest DM post (any distance) not replying to another
/// player. The DM turn must be preceded by at least one post, which together
/// with up to `window` earlier posts forms the context.
pub fn build_episodes(posts: &[Post], detector: &CheckDetector, window: usize) -> Vec<Episode> {
    debug_assert!(posts.windows(2).all(|w| w[0].seq < w[1].seq));
    let author_by_id: HashMap<&str, (&str, Role)> = posts
        .iter()
        .map(|p| (p.id.as_str(), (p.author.as_str(), p.role)))
        .collect();
    let mut episodes = Vec::new();
    for (j, post) in posts.iter().enumerate() {
        if post.role != Role::Player {
            continue;
        }
        let Some(event) = detector.detect(&post.text) else {
            continue;
        };
        let player = post.author.as_str();
        let reply_author = |p: &Post| {
            p.reply_to
                .as_deref()
                .and_then(|id| author_by_id.get(id).copied())
        };
        let addresses_player = |p: &Post| {
            p.name_mentions.iter().any(|m| m == player)
                || reply_author(p).is_some_and(|(a, _)| a == player)
        };
        let replies_to_other_player = |p: &Post| {
            reply_author(p).is_some_and(|(a, role)| role == Role::Player && a != player)
        };
        let lo = j.saturating_sub(window);
        let addressed = (lo.max(1)..j)
            .rev()
            .find(|&i| posts[i].role == Role::Dm && addresses_player(&posts[i]));
        let dm_idx = addressed.or_else(|| {
            (1..j)
                .rev()
                .find(|&i| posts[i].role == Role::Dm && !replies_to_other_player(&posts[i]))
        });
        let Some(d) = dm_idx else {
            continue;
        };
        let dm = &posts[d];
        let context = posts[d.saturating_sub(window)..d]
            .iter()
            .map(|p| ContextTurn {
                speaker: p.author.clone(),
                role: p.role,
                text: p.text.clone(),
            })
            .collect();
        let id = episode_id_for(&post.id);
        episodes.push(Episode {
            split: assign_split(&id),
            id,
            context,
            dm_text: dm.text.clone(),
            dm_sentences: split_sentences(&dm.text),
            guidance_index: None,
            player_name: player.to_owned(),
            player_text: post.text.clone(),
            player_action: event.action,
            intent_text: None,
            intended_action: None,
            provenance: Provenance::Human,
        });
    }
    episodes
}

/// Builds episodes for every thread of a post stream.
pub fn build_all_episodes(posts: Vec<Post>, detector: &CheckDetector, window: usize) -> Vec<Episode> {
    split_threads(posts)
        .iter()
        .flat_map(|t| build_episodes(t, detector, window))
        .collect()
}

pub fn validate_post(post: &Post) -> Result<()> {
    if post.id.is_empty() {
        return Err(Error::InvalidPost {
            id: post.id.clone(),
            message: "empty id".into(),
        });
    }
    if post.author.trim().is_empty() {
        return Err(Error::InvalidPost {
            id: post.id.clone(),
            message: "empty author".into(),
        });
    }
    Ok(())
}

pub fn read_posts(path: &Path) -> Result<Vec<Post>> {
    let posts: Vec<Post> = read_jsonl(path)?;
    for p in &posts {
        validate_post(p)?;
    }
    Ok(posts)
}

pub fn write_posts(path: &Path, header: Option<&ArtifactHeader>, posts: &[Post]) -> Result<()> {
    write_jsonl(path, header, posts)
}

pub fn read_episodes(path: &Path) -> Result<Vec<Episode>> {
    let episodes: Vec<Episode> = read_jsonl(path)?;
    for e in &episodes {
        e.validate()?;
    }
    Ok(episodes)
}

pub fn write_episodes(
    path: &Path,
    header: Option<&ArtifactHeader>,
    episodes: &[Episode],
) -> Result<()> {
    for e in episodes {
        e.validate()?;
    }
    write_jsonl(path, header, episodes)
}
