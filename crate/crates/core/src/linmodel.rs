//! Multinomial logistic regression and shared-weight listwise scorers over
//! hashed sparse features, trained by plain mini-batch gradient descent.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persist::create_parent;
use crate::textfeat::SparseVector;

/// Weight matrix plus bias over `K` labels and `D` features.
///
/// Weights are stored feature-major (`w[j * K + k]`) so one sparse feature
/// touches a contiguous run of `K` values.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    labels: Vec<String>,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            l2: 1e-4,
            epochs: 20,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        if self.learning_rate * self.l2 >= 1.0 {
            return Err(Error::Config(format!(
                "learning_rate * l2 = {} makes weight decay unstable (must be < 1)",
                self.learning_rate * self.l2
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl LinearModel {
    pub fn zeros(labels: Vec<String>, dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("model needs at least one label".into()));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::Config("model labels must be unique".into()));
        }
        let k = labels.len();
        Ok(LinearModel {
            labels,
            dim,
            weights: vec![0.0; k * dim],
            bias: vec![0.0; k],
        })
    }

    /// Single-output scorer (K = 1).
    pub fn scorer(dim: usize) -> Self {
        Self::zeros(vec!["score".into()], dim).expect("one label")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight(&self, label: usize, feature: usize) -> f64 {
        self.weights[feature * self.labels.len() + label]
    }

    pub fn set_weight(&mut self, label: usize, feature: usize, value: f64) {
        let k = self.labels.len();
        self.weights[feature * k + label] = value;
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weights_raw(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_raw_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|w| w.is_finite())
    }

    fn check_dim(&self, x: &SparseVector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// `Wx + b`.
    pub fn logits(&self, x: &SparseVector) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.logits_unchecked(x))
    }

    pub fn logits_unchecked(&self, x: &SparseVector) -> Vec<f64> {
        let k = self.labels.len();
        let mut z = self.bias.clone();
        for (j, v) in x.iter() {
            let row = &self.weights[j * k..(j + 1) * k];
            for (zk, w) in z.iter_mut().zip(row) {
                *zk += w * v;
            }
        }
        z
    }

    /// First-output logit without bias, for shared-weight scorers.
    pub fn score(&self, x: &SparseVector) -> f64 {
        debug_assert_eq!(x.dim(), self.dim);
        let k = self.labels.len();
        x.iter().map(|(j, v)| self.weights[j * k] * v).sum()
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &SparseVector) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Adds `scale * x` to the weight row of `label`.
    pub(crate) fn add_scaled(&mut self, label: usize, x: &SparseVector, scale: f64) {
        let k = self.labels.len();
        for (j, v) in x.iter() {
            self.weights[j * k + label] += scale * v;
        }
    }

    fn decay(&mut self, factor: f64) {
        if factor != 1.0 {
            for w in &mut self.weights {
                *w *= factor;
            }
        }
    }
}

fn check_finite(x: &SparseVector) -> Result<()> {
    if let Some(v) = x.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature value {v}")));
    }
    Ok(())
}

/// Model plus the mean loss of every epoch (index 0 is the loss at
/// initialization, evaluated on the full data).
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: LinearModel,
    pub losses: Vec<f64>,
}

fn validate_examples(
    data: &[(SparseVector, usize)],
    num_labels: usize,
    dim: usize,
) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Data("no training examples".into()));
    }
    for (x, y) in data {
        if *y >= num_labels {
            return Err(Error::Data(format!("label index {y} out of range")));
        }
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.dim(),
            });
        }
        check_finite(x)?;
    }
    Ok(())
}

/// Mean cross-entropy plus `(l2 / 2) * ||W||^2`; the bias is not regularized.
pub fn multinomial_loss(model: &LinearModel, data: &[(SparseVector, usize)], l2: f64) -> f64 {
    let ce: f64 = data
        .iter()
        .map(|(x, y)| -log_softmax(&model.logits_unchecked(x))[*y])
        .sum::<f64>()
        / data.len() as f64;
    ce + 0.5 * l2 * model.weight_norm_sq()
}

/// Analytic gradient of [`multinomial_loss`]: `(dW, db)` with `dW` in the
/// model's feature-major layout.
pub fn multinomial_gradient(
    model: &LinearModel,
    data: &[(SparseVector, usize)],
    l2: f64,
) -> (Vec<f64>, Vec<f64>) {
    let k = model.num_labels();
    let n = data.len() as f64;
    let mut gw: Vec<f64> = model.weights.iter().map(|w| l2 * w).collect();
    let mut gb = vec![0.0; k];
    for (x, y) in data {
        let mut p = softmax(&model.logits_unchecked(x));
        p[*y] -= 1.0;
        for (c, pc) in p.iter().enumerate() {
            gb[c] += pc / n;
            for (j, v) in x.iter() {
                gw[j * k + c] += pc * v / n;
            }
        }
    }
    (gw, gb)
}

/// Trains a `labels.len()`-way softmax classifier.
pub fn train_multinomial(
    labels: Vec<String>,
    data: &[(SparseVector, usize)],
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    let dim = data.first().map(|(x, _)| x.dim()).unwrap_or(0);
    validate_examples(data, labels.len(), dim)?;
    let mut model = LinearModel::zeros(labels, dim)?;
    let k = model.num_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = vec![multinomial_loss(&model, data, cfg.l2)];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len() as f64;
            let mut residuals = Vec::with_capacity(batch.len());
            let mut ce = 0.0;
            for &i in batch {
                let (x, y) = &data[i];
                let z = model.logits_unchecked(x);
                ce -= log_softmax(&z)[*y];
                let mut p = softmax(&z);
                p[*y] -= 1.0;
                flush_tiny(&mut p);
                residuals.push(p);
            }
            epoch_loss += ce / b + 0.5 * cfg.l2 * model.weight_norm_sq();
            batches += 1;
            model.decay(1.0 - cfg.learning_rate * cfg.l2);
            let step = cfg.learning_rate / b;
            for (&i, r) in batch.iter().zip(&residuals) {
                let x = &data[i].0;
                for (j, v) in x.iter() {
                    let row = &mut model.weights[j * k..(j + 1) * k];
                    for (w, rc) in row.iter_mut().zip(r) {
                        *w -= step * rc * v;
                    }
                }
                for (bc, rc) in model.bias.iter_mut().zip(r) {
                    *bc -= step * rc;
                }
            }
        }
        let mean = epoch_loss / batches as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("training loss {mean}")));
        }
        losses.push(mean);
    }
    Ok(Trained { model, losses })
}

/// Residuals below this magnitude are dropped from SGD steps; they would
/// otherwise drive weights into subnormal arithmetic.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

pub(crate) fn flush_tiny(values: &mut [f64]) {
    for v in values {
        if v.abs() < RESIDUAL_FLOOR {
            *v = 0.0;
        }
    }
}

/// Source of listwise training groups: candidate feature vectors and the index
/// of the target candidate.
pub trait GroupSource {
    fn len(&self) -> usize;
    fn group(&self, i: usize) -> (Vec<SparseVector>, usize);
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl GroupSource for [(Vec<SparseVector>, usize)] {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }
    fn group(&self, i: usize) -> (Vec<SparseVector>, usize) {
        self[i].clone()
    }
}

impl GroupSource for Vec<(Vec<SparseVector>, usize)> {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }
    fn group(&self, i: usize) -> (Vec<SparseVector>, usize) {
        self[i].clone()
    }
}

/// Mean over groups of `-log softmax(w . x_i)[target]` plus `(l2/2)||w||^2`.
pub fn listwise_loss<S: GroupSource + ?Sized>(model: &LinearModel, groups: &S, l2: f64) -> f64 {
    let n = groups.len();
    let ce: f64 = (0..n)
        .map(|g| {
            let (items, target) = groups.group(g);
            let s: Vec<f64> = items.iter().map(|x| model.score(x)).collect();
            -log_softmax(&s)[target]
        })
        .sum::<f64>()
        / n as f64;
    ce + 0.5 * l2 * model.weight_norm_sq()
}

/// Trains a shared-weight scorer with softmax cross-entropy over each group.
pub fn train_listwise<S: GroupSource + ?Sized>(
    groups: &S,
    dim: usize,
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    if groups.is_empty() {
        return Err(Error::Data("no training groups".into()));
    }
    let mut model = LinearModel::scorer(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut losses = vec![listwise_loss(&model, groups, cfg.l2)];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len() as f64;
            let mut pending = Vec::with_capacity(batch.len());
            let mut ce = 0.0;
            for &g in batch {
                let (items, target) = groups.group(g);
                if target >= items.len() {
                    return Err(Error::Data(format!(
                        "target {target} outside group of {}",
                        items.len()
                    )));
                }
                for x in &items {
                    if x.dim() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: x.dim(),
                        });
                    }
                    check_finite(x)?;
                }
                let s: Vec<f64> = items.iter().map(|x| model.score(x)).collect();
                ce -= log_softmax(&s)[target];
                let mut p = softmax(&s);
                p[target] -= 1.0;
                flush_tiny(&mut p);
                pending.push((items, p));
            }
            epoch_loss += ce / b + 0.5 * cfg.l2 * model.weight_norm_sq();
            batches += 1;
            model.decay(1.0 - cfg.learning_rate * cfg.l2);
            let step = cfg.learning_rate / b;
            for (items, p) in &pending {
                for (x, pc) in items.iter().zip(p) {
                    if *pc != 0.0 {
                        model.add_scaled(0, x, -step * pc);
                    }
                }
            }
        }
        let mean = epoch_loss / batches as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("training loss {mean}")));
        }
        losses.push(mean);
    }
    Ok(Trained { model, losses })
}

/// Central-difference check of [`multinomial_gradient`].
///
/// Samples `n_coords` coordinates (half from weights touched by the data,
/// the rest from biases and arbitrary weights) and returns the largest
/// relative error `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(
    model: &LinearModel,
    data: &[(SparseVector, usize)],
    l2: f64,
    eps: f64,
    n_coords: usize,
    seed: u64,
) -> f64 {
    assert!(!data.is_empty(), "grad_check needs data");
    let k = model.num_labels();
    let (gw, gb) = multinomial_gradient(model, data, l2);
    let mut active: Vec<usize> = data
        .iter()
        .flat_map(|(x, _)| x.indices().iter().map(|&j| j as usize))
        .collect();
    active.sort_unstable();
    active.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for c in 0..n_coords {
        let label = rng.gen_range(0..k);
        // (is_bias, feature)
        let (is_bias, feature) = match c % 4 {
            0 | 1 if !active.is_empty() => (false, active[rng.gen_range(0..active.len())]),
            2 => (true, 0),
            _ => (false, rng.gen_range(0..model.dim())),
        };
        let (analytic, slot): (f64, &mut f64) = if is_bias {
            (gb[label], &mut probe.bias[label])
        } else {
            (gw[feature * k + label], &mut probe.weights[feature * k + label])
        };
        let orig = *slot;
        *slot = orig + eps;
        let plus = multinomial_loss(&probe, data, l2);
        let slot = if is_bias {
            &mut probe.bias[label]
        } else {
            &mut probe.weights[feature * k + label]
        };
        *slot = orig - eps;
        let minus = multinomial_loss(&probe, data, l2);
        let slot = if is_bias {
            &mut probe.bias[label]
        } else {
            &mut probe.weights[feature * k + label]
        };
        *slot = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

// ---------------------------------------------------------------------------
// Persistence: `linmodel v1 K D`, a tab-separated labels line, K rows of D
// weights, then one line of K biases. `#` lines before the header carry
// `key = value` metadata.

pub type Meta = BTreeMap<String, String>;

pub fn write_model_text(out: &mut String, model: &LinearModel) {
    let k = model.num_labels();
    let d = model.dim();
    let _ = writeln!(out, "linmodel v1 {k} {d}");
    let _ = writeln!(out, "{}", model.labels.join("\t"));
    for label in 0..k {
        let mut first = true;
        for j in 0..d {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{}", model.weights[j * k + label]);
        }
        out.push('\n');
    }
    let bias: Vec<String> = model.bias.iter().map(|b| b.to_string()).collect();
    let _ = writeln!(out, "{}", bias.join(" "));
}

fn fmt_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

/// Parses one model block starting at `lines[*pos]`, advancing `pos`.
pub fn parse_model_block(lines: &[&str], pos: &mut usize) -> Result<LinearModel> {
    let header = lines.get(*pos).ok_or_else(|| fmt_err(*pos + 1, "missing header"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "linmodel" || parts[1] != "v1" {
        return Err(fmt_err(*pos + 1, format!("bad header `{header}`")));
    }
    let k: usize = parts[2].parse().map_err(|e| fmt_err(*pos + 1, e))?;
    let d: usize = parts[3].parse().map_err(|e| fmt_err(*pos + 1, e))?;
    *pos += 1;
    let labels: Vec<String> = lines
        .get(*pos)
        .ok_or_else(|| fmt_err(*pos + 1, "missing labels"))?
        .split('\t')
        .map(str::to_owned)
        .collect();
    if labels.len() != k {
        return Err(fmt_err(*pos + 1, format!("expected {k} labels, found {}", labels.len())));
    }
    *pos += 1;
    let mut model = LinearModel::zeros(labels, d)?;
    for label in 0..k {
        let line = lines.get(*pos).ok_or_else(|| fmt_err(*pos + 1, "missing weight row"))?;
        let mut count = 0;
        for (j, tok) in line.split(' ').enumerate() {
            if j >= d {
                return Err(fmt_err(*pos + 1, "too many weights"));
            }
            let w: f64 = tok.parse().map_err(|e| fmt_err(*pos + 1, e))?;
            if !w.is_finite() {
                return Err(fmt_err(*pos + 1, "non-finite weight"));
            }
            model.weights[j * k + label] = w;
            count += 1;
        }
        if count != d {
            return Err(fmt_err(*pos + 1, format!("expected {d} weights, found {count}")));
        }
        *pos += 1;
    }
    let line = lines.get(*pos).ok_or_else(|| fmt_err(*pos + 1, "missing bias"))?;
    let bias: Vec<f64> = line
        .split(' ')
        .map(|t| t.parse::<f64>().map_err(|e| fmt_err(*pos + 1, e)))
        .collect::<Result<_>>()?;
    if bias.len() != k || bias.iter().any(|b| !b.is_finite()) {
        return Err(fmt_err(*pos + 1, "bad bias line"));
    }
    model.bias = bias;
    *pos += 1;
    Ok(model)
}

pub fn write_meta(out: &mut String, meta: &Meta) {
    for (k, v) in meta {
        let _ = writeln!(out, "# {k} = {v}");
    }
}

/// Reads leading `# key = value` lines.
pub fn parse_meta(lines: &[&str], pos: &mut usize) -> Meta {
    let mut meta = Meta::new();
    while let Some(line) = lines.get(*pos) {
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        if let Some((k, v)) = rest.split_once('=') {
            meta.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        *pos += 1;
    }
    meta
}

pub(crate) fn write_text_file(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn save_model(path: &Path, model: &LinearModel, meta: &Meta) -> Result<()> {
    let mut out = String::new();
    write_meta(&mut out, meta);
    write_model_text(&mut out, model);
    write_text_file(path, &out)
}

pub fn load_model(path: &Path) -> Result<(LinearModel, Meta)> {
    let text = read_text_file(path)?;
    let lines: Vec<&str> = text.lines().collect();
    let mut pos = 0;
    let meta = parse_meta(&lines, &mut pos);
    let model = parse_model_block(&lines, &mut pos)?;
    Ok((model, meta))
}

/// Saves several named models into one file, each block preceded by a
/// `section <name>` line.
pub fn save_sections(path: &Path, meta: &Meta, sections: &[(&str, &LinearModel)]) -> Result<()> {
    let mut out = String::new();
    write_meta(&mut out, meta);
    for (name, model) in sections {
        let _ = writeln!(out, "section {name}");
        write_model_text(&mut out, model);
    }
    write_text_file(path, &out)
}

pub fn load_sections(path: &Path) -> Result<(Meta, Vec<(String, LinearModel)>)> {
    let text = read_text_file(path)?;
    let lines: Vec<&str> = text.lines().collect();
    let mut pos = 0;
    let meta = parse_meta(&lines, &mut pos);
    let mut sections = Vec::new();
    while pos < lines.len() {
        let name = lines[pos]
            .strip_prefix("section ")
            .ok_or_else(|| fmt_err(pos + 1, format!("expected `section <name>`, found `{}`", lines[pos])))?
            .trim()
            .to_owned();
        pos += 1;
        sections.push((name, parse_model_block(&lines, &mut pos)?));
    }
    Ok((meta, sections))
}

/// Removes and returns the section called `name`.
pub fn take_section(sections: &mut Vec<(String, LinearModel)>, name: &str) -> Result<LinearModel> {
    let i = sections
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::Format(format!("missing model section `{name}`")))?;
    Ok(sections.remove(i).1)
}
