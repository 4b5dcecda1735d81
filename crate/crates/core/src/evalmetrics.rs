//! Fluency proxies, groundedness, goal fulfillment and the star-DM rate.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::action::ActionLabel;
use crate::corpus::Episode;
use crate::error::{Error, Result};
use crate::idm::IdmBundle;
use crate::player::{predict_action, PlayerModel};
use crate::textfeat::{extract_entities, tokenize, Gazetteer};

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU: clipped n-gram precisions for n = 1..=max_n (add-one
/// smoothing for n >= 2), geometric mean, brevity penalty.
pub fn bleu(candidate: &str, reference: &str, max_n: usize) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let c_counts = ngram_counts(&cand, n);
        let r_counts = ngram_counts(&refr, n);
        let total: usize = c_counts.values().sum();
        let matched: usize = c_counts
            .iter()
            .map(|(g, c)| (*c).min(r_counts.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if n == 1 {
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let c = cand.len() as f64;
    let r = refr.len() as f64;
    let bp = (1.0 - r / c).min(0.0).exp();
    bp * (log_sum / max_n as f64).exp()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 over tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    match (cand.is_empty(), refr.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let l = lcs_len(&cand, &refr) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / cand.len() as f64;
    let r = l / refr.len() as f64;
    2.0 * p * r / (p + r)
}

/// Share of output entities that also occur in the context; 1 when the
/// output names no entity.
pub fn entity_overlap(context: &str, output: &str, gaz: &Gazetteer) -> f64 {
    let out = extract_entities(output, gaz);
    if out.is_empty() {
        return 1.0;
    }
    let ctx = extract_entities(context, gaz);
    out.intersection(&ctx).count() as f64 / out.len() as f64
}

/// One generated utterance with the state it answers.
#[derive(Debug, Clone, PartialEq)]
pub struct Output<'a> {
    pub context: &'a str,
    pub text: &'a str,
    pub action: &'a ActionLabel,
}

/// Fraction of outputs the identify model accepts as guidance.
pub fn guidance_rate(outputs: &[Output<'_>], idm: &IdmBundle) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::Data("guidance_rate needs at least one output".into()));
    }
    let hits = outputs
        .iter()
        .filter(|o| idm.is_guidance(o.context, o.text, o.action))
        .count();
    Ok(hits as f64 / outputs.len() as f64)
}

/// Fraction of outputs for which the evaluation player model predicts the
/// episode's recorded action.
pub fn action_match_rate(episodes: &[Episode], outputs: &[String], pm: &PlayerModel) -> Result<f64> {
    if episodes.len() != outputs.len() {
        return Err(Error::DimensionMismatch {
            expected: episodes.len(),
            got: outputs.len(),
        });
    }
    if episodes.is_empty() {
        return Err(Error::Data("action_match_rate needs at least one output".into()));
    }
    let hits = episodes
        .iter()
        .zip(outputs)
        .filter(|(e, o)| predict_action(pm, &e.context_text(), o).1 == e.player_action)
        .count();
    Ok(hits as f64 / episodes.len() as f64)
}

pub const STAR_OVERLAP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleFlags {
    pub guidance: bool,
    pub action_match: bool,
    pub entity_overlap: f64,
}

impl SampleFlags {
    pub fn is_star(&self) -> bool {
        self.guidance && self.action_match && self.entity_overlap >= STAR_OVERLAP_THRESHOLD
    }
}

pub fn star_rate(flags: &[SampleFlags]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    flags.iter().filter(|f| f.is_star()).count() as f64 / flags.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub split: String,
    pub seed: u64,
    pub n: usize,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub entity_overlap_mean: f64,
    pub guidance_rate: f64,
    pub action_match_rate: f64,
    pub star_rate: f64,
}

pub const REPORT_NOTE: &str =
    "star = guidance AND action match AND entity overlap >= 0.5 (overlap stands in for human fluency)";

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "model_id,split,seed,n,bleu4,rouge_l,entity_overlap_mean,guidance_rate,action_match_rate,star_rate";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.model_id,
            self.split,
            self.seed,
            self.n,
            self.bleu4,
            self.rouge_l,
            self.entity_overlap_mean,
            self.guidance_rate,
            self.action_match_rate,
            self.star_rate
        )
    }

    pub fn metrics(&self) -> [(&'static str, f64); 6] {
        [
            ("bleu4", self.bleu4),
            ("rouge_l", self.rouge_l),
            ("entity_overlap_mean", self.entity_overlap_mean),
            ("guidance_rate", self.guidance_rate),
            ("action_match_rate", self.action_match_rate),
            ("star_rate", self.star_rate),
        ]
    }
}

pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("{}\n", EvalReport::CSV_HEADER);
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

pub fn reports_table(reports: &[EvalReport]) -> String {
    let mut out = format!("# {REPORT_NOTE}\n");
    let _ = writeln!(
        out,
        "{:<18} {:>5} {:>7} {:>7} {:>7} {:>9} {:>7} {:>7}",
        "model", "n", "bleu4", "rougeL", "entity", "guidance", "action", "star"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<18} {:>5} {:>7.3} {:>7.3} {:>7.3} {:>9.3} {:>7.3} {:>7.3}",
            r.model_id,
            r.n,
            r.bleu4,
            r.rouge_l,
            r.entity_overlap_mean,
            r.guidance_rate,
            r.action_match_rate,
            r.star_rate
        );
    }
    out
}

/// Models shared by every evaluation.
pub struct Evaluator<'a> {
    pub idm: &'a IdmBundle,
    pub pm_eval: &'a PlayerModel,
    pub gazetteer: &'a Gazetteer,
}

impl Evaluator<'_> {
    /// Scores `outputs[i]` for `episodes[i]` against `references[i]`.
    pub fn evaluate_outputs(
        &self,
        model_id: &str,
        split: &str,
        seed: u64,
        episodes: &[Episode],
        outputs: &[String],
        references: &[String],
    ) -> Result<EvalReport> {
        if episodes.len() != outputs.len() || episodes.len() != references.len() {
            return Err(Error::DimensionMismatch {
                expected: episodes.len(),
                got: outputs.len().min(references.len()),
            });
        }
        if episodes.is_empty() {
            return Err(Error::Data("nothing to evaluate".into()));
        }
        let n = episodes.len() as f64;
        let mut flags = Vec::with_capacity(episodes.len());
        let (mut b, mut r, mut ov) = (0.0, 0.0, 0.0);
        for ((e, out), reference) in episodes.iter().zip(outputs).zip(references) {
            let context = e.context_text();
            b += bleu(out, reference, 4);
            r += rouge_l(out, reference);
            let overlap = entity_overlap(&context, out, self.gazetteer);
            ov += overlap;
            flags.push(SampleFlags {
                guidance: self.idm.is_guidance(&context, out, &e.player_action),
                action_match: predict_action(self.pm_eval, &context, out).1 == e.player_action,
                entity_overlap: overlap,
            });
        }
        let count = |f: fn(&SampleFlags) -> bool| flags.iter().filter(|x| f(x)).count() as f64 / n;
        Ok(EvalReport {
            model_id: model_id.to_owned(),
            split: split.to_owned(),
            seed,
            n: episodes.len(),
            bleu4: b / n,
            rouge_l: r / n,
            entity_overlap_mean: ov / n,
            guidance_rate: count(|f| f.guidance),
            action_match_rate: count(|f| f.action_match),
            star_rate: star_rate(&flags),
        })
    }
}
