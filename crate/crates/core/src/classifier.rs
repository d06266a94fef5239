//! Batch normalization, one ReLU hidden layer and a softmax output, with the
//! forward and backward passes written out by hand.
//!
//! Parameters live in flat row-major vectors: `w1[i * hidden + j]` connects
//! input `i` to hidden unit `j`, `w2[j * classes + c]` hidden `j` to class `c`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::SeededRng;

pub const HIDDEN: usize = 128;
pub const CLASSES: usize = 3;
pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-3;
const LOSS_FLOOR: f64 = 1e-12;
const MAGIC: &str = "lesionmorph-classifier";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training-mode batch normalization needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("class {class} has {count} training samples, need at least 2")]
    ClassTooSmall { class: usize, count: usize },
    #[error("training needs samples from at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("expected rows of width {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label {0} is out of range")]
    BadLabel(usize),
    #[error("corrupt model file: {0}")]
    CorruptModelFile(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(format!("unknown optimizer {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub bn_running_mean: Vec<f64>,
    pub bn_running_var: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub hidden_activation: Activation,
    pub seed: u64,
    pub epochs_trained: usize,
}

/// Gradients in the same layout as the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

struct Cache {
    xhat: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    probs: Vec<Vec<f64>>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

impl ClassifierModel {
    /// Seeded init: weights uniform in `±sqrt(6 / fan_in)` for the ReLU layer
    /// and `±sqrt(3 / fan_in)` for the output layer; biases zero; identity
    /// normalization.
    pub fn new(input_dim: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let l1 = (6.0 / input_dim as f64).sqrt();
        let l2 = (3.0 / hidden as f64).sqrt();
        let w1 = (0..input_dim * hidden).map(|_| rng.uniform(-l1, l1)).collect();
        let w2 = (0..hidden * classes).map(|_| rng.uniform(-l2, l2)).collect();
        Self {
            input_dim,
            hidden,
            classes,
            bn_gamma: vec![1.0; input_dim],
            bn_beta: vec![0.0; input_dim],
            bn_running_mean: vec![0.0; input_dim],
            bn_running_var: vec![1.0; input_dim],
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; classes],
            hidden_activation: Activation::Relu,
            seed,
            epochs_trained: 0,
        }
    }

    pub fn param_count(&self) -> usize {
        4 * self.input_dim + self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn trainable_count(&self) -> usize {
        self.param_count() - 2 * self.input_dim
    }

    /// Moves input column `perm[i]` to position `i`: a model trained on
    /// permuted columns starting from `self.permuted(perm)` sees the same
    /// network.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut m = self.clone();
        for (i, &src) in perm.iter().enumerate() {
            m.bn_gamma[i] = self.bn_gamma[src];
            m.bn_beta[i] = self.bn_beta[src];
            m.bn_running_mean[i] = self.bn_running_mean[src];
            m.bn_running_var[i] = self.bn_running_var[src];
            m.w1[i * self.hidden..(i + 1) * self.hidden]
                .copy_from_slice(&self.w1[src * self.hidden..(src + 1) * self.hidden]);
        }
        m
    }

    fn check_rows(&self, x: &[Vec<f64>]) -> Result<(), ClassifierError> {
        match x.iter().find(|r| r.len() != self.input_dim) {
            Some(r) => Err(ClassifierError::DimensionMismatch {
                expected: self.input_dim,
                found: r.len(),
            }),
            None => Ok(()),
        }
    }

    fn pass(&self, x: &[Vec<f64>], mode: Mode) -> Result<Cache, ClassifierError> {
        self.check_rows(x)?;
        let n = x.len();
        let d = self.input_dim;
        let (mean, var) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(ClassifierError::BatchTooSmall(n));
                }
                column_stats(x, d)
            }
            Mode::Infer => (self.bn_running_mean.clone(), self.bn_running_var.clone()),
        };
        let inv_sd: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
        let xhat: Vec<Vec<f64>> = x
            .iter()
            .map(|r| (0..d).map(|i| (r[i] - mean[i]) * inv_sd[i]).collect())
            .collect();
        let z: Vec<Vec<f64>> = xhat
            .iter()
            .map(|r| (0..d).map(|i| self.bn_gamma[i] * r[i] + self.bn_beta[i]).collect())
            .collect();
        let pre: Vec<Vec<f64>> = z.iter().map(|r| affine(r, &self.w1, &self.b1, self.hidden)).collect();
        let act: Vec<Vec<f64>> = pre.iter().map(|r| r.iter().map(|&v| v.max(0.0)).collect()).collect();
        let probs = act
            .iter()
            .map(|r| softmax(&affine(r, &self.w2, &self.b2, self.classes)))
            .collect();
        Ok(Cache {
            xhat,
            z,
            pre,
            act,
            probs,
            batch_mean: mean,
            batch_var: var,
        })
    }

    /// Class probabilities. Train mode normalizes with the batch's own
    /// statistics and folds them into the running averages.
    pub fn forward(&mut self, x: &[Vec<f64>], mode: Mode) -> Result<Vec<Vec<f64>>, ClassifierError> {
        let cache = self.pass(x, mode)?;
        if mode == Mode::Train {
            self.update_running(&cache);
        }
        Ok(cache.probs)
    }

    /// Inference-mode probabilities without touching any state.
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ClassifierError> {
        Ok(self.pass(x, Mode::Infer)?.probs)
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>, ClassifierError> {
        Ok(self.predict_proba(x)?.iter().map(|p| argmax(p)).collect())
    }

    fn update_running(&mut self, cache: &Cache) {
        for i in 0..self.input_dim {
            self.bn_running_mean[i] = BN_MOMENTUM * self.bn_running_mean[i] + (1.0 - BN_MOMENTUM) * cache.batch_mean[i];
            let v = BN_MOMENTUM * self.bn_running_var[i] + (1.0 - BN_MOMENTUM) * cache.batch_var[i];
            self.bn_running_var[i] = v.max(BN_EPSILON);
        }
    }

    /// Mean cross-entropy of the batch under `mode`, without side effects.
    pub fn loss(&self, x: &[Vec<f64>], y: &[usize], mode: Mode) -> Result<f64, ClassifierError> {
        Ok(loss(&self.pass(x, mode)?.probs, y))
    }

    /// Training-mode loss and its gradient with respect to every trainable
    /// parameter.
    pub fn gradients(&self, x: &[Vec<f64>], y: &[usize]) -> Result<(f64, Gradients), ClassifierError> {
        check_labels(y, self.classes)?;
        let cache = self.pass(x, Mode::Train)?;
        Ok((loss(&cache.probs, y), self.backward(&cache, y)))
    }

    fn backward(&self, cache: &Cache, y: &[usize]) -> Gradients {
        let (n, d, h, c) = (y.len(), self.input_dim, self.hidden, self.classes);
        let inv_n = 1.0 / n as f64;
        let mut g = Gradients {
            bn_gamma: vec![0.0; d],
            bn_beta: vec![0.0; d],
            w1: vec![0.0; d * h],
            b1: vec![0.0; h],
            w2: vec![0.0; h * c],
            b2: vec![0.0; c],
        };
        for s in 0..n {
            let mut dlogit = cache.probs[s].clone();
            dlogit[y[s]] -= 1.0;
            for v in &mut dlogit {
                *v *= inv_n;
            }
            let mut dpre = vec![0.0; h];
            for j in 0..h {
                let a = cache.act[s][j];
                let mut back = 0.0;
                for k in 0..c {
                    g.w2[j * c + k] += a * dlogit[k];
                    back += self.w2[j * c + k] * dlogit[k];
                }
                if cache.pre[s][j] > 0.0 {
                    dpre[j] = back;
                }
            }
            for k in 0..c {
                g.b2[k] += dlogit[k];
            }
            for i in 0..d {
                let zi = cache.z[s][i];
                let mut dz = 0.0;
                for j in 0..h {
                    g.w1[i * h + j] += zi * dpre[j];
                    dz += self.w1[i * h + j] * dpre[j];
                }
                g.bn_gamma[i] += dz * cache.xhat[s][i];
                g.bn_beta[i] += dz;
            }
            for j in 0..h {
                g.b1[j] += dpre[j];
            }
        }
        g
    }

    fn params_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.bn_gamma,
            &mut self.bn_beta,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    fn trainable(&self) -> [&Vec<f64>; 6] {
        [&self.bn_gamma, &self.bn_beta, &self.w1, &self.b1, &self.w2, &self.b2]
    }
}

impl Gradients {
    fn parts(&self) -> [&Vec<f64>; 6] {
        [&self.bn_gamma, &self.bn_beta, &self.w1, &self.b1, &self.w2, &self.b2]
    }
}

fn column_stats(x: &[Vec<f64>], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let mut mean = vec![0.0; d];
    for r in x {
        for i in 0..d {
            mean[i] += r[i];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for r in x {
        for i in 0..d {
            var[i] += (r[i] - mean[i]).powi(2);
        }
    }
    for v in &mut var {
        *v /= n;
    }
    (mean, var)
}

fn affine(x: &[f64], w: &[f64], b: &[f64], out: usize) -> Vec<f64> {
    let mut y = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * out..(i + 1) * out];
        for j in 0..out {
            y[j] += xi * row[j];
        }
    }
    y
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Mean of `-ln p[true]` with probabilities floored at 1e-12.
pub fn loss(probs: &[Vec<f64>], y: &[usize]) -> f64 {
    let total: f64 = probs.iter().zip(y).map(|(p, &t)| -p[t].max(LOSS_FLOOR).ln()).sum();
    total / y.len() as f64
}

fn check_labels(y: &[usize], classes: usize) -> Result<(), ClassifierError> {
    match y.iter().find(|&&t| t >= classes) {
        Some(&t) => Err(ClassifierError::BadLabel(t)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 32,
            learning_rate: 0.001,
            optimizer: Optimizer::Adam,
            seed: 42,
        }
    }
}

impl TrainConfig {
    /// A zero rate is accepted so that a run can be checked for side effects
    /// other than the parameter step.
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.epochs < 1 {
            return Err(ClassifierError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(ClassifierError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(ClassifierError::InvalidConfig(format!(
                "learning_rate must be a non-negative number, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainReport {
    /// `epoch,<i>,<train_loss>,<train_acc>,<val_loss>,<val_acc>` per epoch.
    pub fn log_lines(&self) -> Vec<String> {
        self.epochs
            .iter()
            .map(|e| {
                format!(
                    "epoch,{},{:.6},{:.6},{:.6},{:.6}",
                    e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
                )
            })
            .collect()
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-7;

fn apply_step(model: &mut ClassifierModel, g: &Gradients, cfg: &TrainConfig, adam: &mut Adam) {
    let lr = cfg.learning_rate;
    adam.t += 1;
    let (c1, c2) = (1.0 - ADAM_B1.powi(adam.t), 1.0 - ADAM_B2.powi(adam.t));
    let grads = g.parts();
    for (slot, (param, grad)) in model.params_mut().into_iter().zip(grads).enumerate() {
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (p, &d) in param.iter_mut().zip(grad) {
                    *p -= lr * d;
                }
            }
            Optimizer::Adam => {
                let (m, v) = (&mut adam.m[slot], &mut adam.v[slot]);
                for i in 0..param.len() {
                    let d = grad[i];
                    m[i] = ADAM_B1 * m[i] + (1.0 - ADAM_B1) * d;
                    v[i] = ADAM_B2 * v[i] + (1.0 - ADAM_B2) * d * d;
                    param[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

fn accuracy(probs: &[Vec<f64>], y: &[usize]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let hits = probs.iter().zip(y).filter(|(p, &t)| argmax(p) == t).count();
    hits as f64 / y.len() as f64
}

/// Trains a fresh model seeded from `cfg.seed`.
pub fn train(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    val_x: &[Vec<f64>],
    val_y: &[usize],
    cfg: &TrainConfig,
) -> Result<(ClassifierModel, TrainReport), ClassifierError> {
    let dim = train_x.first().map_or(0, Vec::len);
    let model = ClassifierModel::new(dim, HIDDEN, CLASSES, cfg.seed);
    train_from(model, train_x, train_y, val_x, val_y, cfg)
}

/// Continues training `model`. The normalizer's running statistics start at
/// the training-set column statistics; batches are reshuffled every epoch
/// and a trailing batch of one is merged into its predecessor.
pub fn train_from(
    mut model: ClassifierModel,
    train_x: &[Vec<f64>],
    train_y: &[usize],
    val_x: &[Vec<f64>],
    val_y: &[usize],
    cfg: &TrainConfig,
) -> Result<(ClassifierModel, TrainReport), ClassifierError> {
    cfg.validate()?;
    model.check_rows(train_x)?;
    model.check_rows(val_x)?;
    check_labels(train_y, model.classes)?;
    check_labels(val_y, model.classes)?;
    if train_x.len() != train_y.len() || val_x.len() != val_y.len() {
        return Err(ClassifierError::InvalidConfig("feature and label counts differ".into()));
    }
    let mut counts = vec![0usize; model.classes];
    for &t in train_y {
        counts[t] += 1;
    }
    if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c == 1) {
        return Err(ClassifierError::ClassTooSmall { class, count });
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(ClassifierError::TooFewClasses(present));
    }

    let (mean, var) = column_stats(train_x, model.input_dim);
    model.bn_running_mean = mean;
    model.bn_running_var = var.into_iter().map(|v| v.max(BN_EPSILON)).collect();

    let mut rng = SeededRng::new(cfg.seed);
    let mut adam = Adam {
        m: model.trainable().iter().map(|p| vec![0.0; p.len()]).collect(),
        v: model.trainable().iter().map(|p| vec![0.0; p.len()]).collect(),
        t: 0,
    };
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut bounds: Vec<(usize, usize)> = (0..order.len())
            .step_by(cfg.batch_size)
            .map(|s| (s, (s + cfg.batch_size).min(order.len())))
            .collect();
        if bounds.len() > 1 && bounds[bounds.len() - 1].1 - bounds[bounds.len() - 1].0 == 1 {
            let last = bounds.pop().expect("len > 1");
            bounds.last_mut().expect("len > 1").1 = last.1;
        }
        for (batch, &(s, e)) in bounds.iter().enumerate() {
            let bx: Vec<Vec<f64>> = order[s..e].iter().map(|&i| train_x[i].clone()).collect();
            let by: Vec<usize> = order[s..e].iter().map(|&i| train_y[i]).collect();
            let cache = model.pass(&bx, Mode::Train)?;
            let l = loss(&cache.probs, &by);
            if !l.is_finite() {
                return Err(ClassifierError::NonFiniteLoss { epoch, batch });
            }
            let g = model.backward(&cache, &by);
            model.update_running(&cache);
            apply_step(&mut model, &g, cfg, &mut adam);
        }
        model.epochs_trained += 1;
        let tp = model.predict_proba(train_x)?;
        let vp = model.predict_proba(val_x)?;
        let train_loss = loss(&tp, train_y);
        if !train_loss.is_finite() {
            return Err(ClassifierError::NonFiniteLoss { epoch, batch: bounds.len() });
        }
        report.epochs.push(EpochMetrics {
            epoch,
            train_loss,
            train_acc: accuracy(&tp, train_y),
            val_loss: if val_y.is_empty() { 0.0 } else { loss(&vp, val_y) },
            val_acc: accuracy(&vp, val_y),
        });
    }
    Ok((model, report))
}

/// Largest relative gap between analytic and central-difference gradients
/// (step 1e-5) over up to 64 trainable parameters drawn with `model.seed`.
pub fn gradient_check(model: &ClassifierModel, x: &[Vec<f64>], y: &[usize]) -> Result<f64, ClassifierError> {
    gradient_check_with(model, x, y, 64, model.seed)
}

/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// vanishing gradients from reporting pure rounding noise as error.
pub fn gradient_check_with(
    model: &ClassifierModel,
    x: &[Vec<f64>],
    y: &[usize],
    samples: usize,
    seed: u64,
) -> Result<f64, ClassifierError> {
    const H: f64 = 1e-5;
    let (_, g) = model.gradients(x, y)?;
    let sizes: Vec<usize> = model.trainable().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = SeededRng::new(seed);
    let mut picks: Vec<usize> = (0..total).collect();
    rng.shuffle(&mut picks);
    picks.truncate(samples.min(total));
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for flat in picks {
        let (mut slot, mut idx) = (0, flat);
        while idx >= sizes[slot] {
            idx -= sizes[slot];
            slot += 1;
        }
        let orig = probe.params_mut()[slot][idx];
        probe.params_mut()[slot][idx] = orig + H;
        let up = probe.loss(x, y, Mode::Train)?;
        probe.params_mut()[slot][idx] = orig - H;
        let down = probe.loss(x, y, Mode::Train)?;
        probe.params_mut()[slot][idx] = orig;
        let numeric = (up - down) / (2.0 * H);
        let analytic = g.parts()[slot][idx];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub feature_names: Vec<String>,
    pub train_config: Option<TrainConfig>,
    pub param_count: usize,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelBody {
    model: ClassifierModel,
    metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    version: u32,
    checksum: String,
    body: ModelBody,
}

fn body_digest(body: &ModelBody) -> String {
    let text = serde_json::to_string(body).expect("model serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// JSON document with a magic string, format version, and the SHA-256 of
/// the compact serialization of everything else. Floats are written in
/// shortest round-trip form, so a load/save cycle is bit-exact.
pub fn model_to_string(model: &ClassifierModel, metadata: &ModelMetadata) -> String {
    let body = ModelBody {
        model: model.clone(),
        metadata: metadata.clone(),
    };
    let file = ModelFile {
        magic: MAGIC.into(),
        version: FORMAT_VERSION,
        checksum: body_digest(&body),
        body,
    };
    serde_json::to_string_pretty(&file).expect("model serializes") + "\n"
}

pub fn model_from_str(text: &str) -> Result<(ClassifierModel, ModelMetadata), ClassifierError> {
    let corrupt = |m: String| ClassifierError::CorruptModelFile(m);
    let file: ModelFile = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if file.magic != MAGIC {
        return Err(corrupt(format!("bad magic {:?}", file.magic)));
    }
    if file.version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported version {}", file.version)));
    }
    if body_digest(&file.body) != file.checksum {
        return Err(corrupt("checksum mismatch".into()));
    }
    let m = &file.body.model;
    let shapes_ok = m.bn_gamma.len() == m.input_dim
        && m.bn_beta.len() == m.input_dim
        && m.bn_running_mean.len() == m.input_dim
        && m.bn_running_var.len() == m.input_dim
        && m.w1.len() == m.input_dim * m.hidden
        && m.b1.len() == m.hidden
        && m.w2.len() == m.hidden * m.classes
        && m.b2.len() == m.classes;
    if !shapes_ok {
        return Err(corrupt("parameter shapes do not match the declared dimensions".into()));
    }
    Ok((file.body.model, file.body.metadata))
}

pub fn save_model(path: &Path, model: &ClassifierModel, metadata: &ModelMetadata) -> Result<(), ClassifierError> {
    fs::write(path, model_to_string(model, metadata)).map_err(|e| ClassifierError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_model(path: &Path) -> Result<(ClassifierModel, ModelMetadata), ClassifierError> {
    let text = fs::read_to_string(path).map_err(|e| ClassifierError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(per_class: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = SeededRng::new(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..per_class * CLASSES {
            let c = i % CLASSES;
            x.push((0..dim).map(|d| if d % CLASSES == c { 4.0 } else { 0.0 } + rng.normal()).collect());
            y.push(c);
        }
        (x, y)
    }

    fn meta() -> ModelMetadata {
        ModelMetadata {
            feature_names: vec![],
            train_config: None,
            param_count: 0,
            tool_version: "test".into(),
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let mut m = ClassifierModel::new(4, 8, 3, 1);
        m.w1.iter_mut().for_each(|v| *v = 0.0);
        m.w2.iter_mut().for_each(|v| *v = 0.0);
        let x = vec![vec![1.0, -2.0, 3.0, 0.5], vec![9.0, 9.0, 9.0, 9.0]];
        for p in m.predict_proba(&x).unwrap() {
            for v in p {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn toy_forward_by_hand() {
        // 1 input, 2 hidden, 3 classes: w1 = [2, -1], w2 = [[1, 0, -1], [0.5, 2, 0]]
        let mut m = ClassifierModel::new(1, 2, 3, 0);
        m.w1 = vec![2.0, -1.0];
        m.b1 = vec![0.0, 0.0];
        m.w2 = vec![1.0, 0.0, -1.0, 0.5, 2.0, 0.0];
        m.b2 = vec![0.0; 3];
        m.bn_running_mean = vec![1.0];
        m.bn_running_var = vec![4.0 - BN_EPSILON];
        let p = m.predict_proba(&[vec![2.0], vec![-3.0]]).unwrap();
        // x = 2: xhat = 0.5, hidden = relu(1, -0.5) = (1, 0), logits = (1, 0, -1)
        let e = [1f64.exp(), 1.0, (-1f64).exp()];
        let s: f64 = e.iter().sum();
        for k in 0..3 {
            assert!((p[0][k] - e[k] / s).abs() < 1e-12);
        }
        // x = -3: xhat = -2, hidden = relu(-4, 2) = (0, 2), logits = (1, 4, 0)
        let e = [1f64.exp(), 4f64.exp(), 1.0];
        let s: f64 = e.iter().sum();
        for k in 0..3 {
            assert!((p[1][k] - e[k] / s).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_examples() {
        assert!(loss(&[vec![0.0, 1.0, 0.0]], &[1]) <= 1e-11);
        assert!((loss(&[vec![1.0 / 3.0; 3]], &[2]) - 3f64.ln()).abs() < 1e-12);
        let l = loss(&[vec![0.5, 0.5, 0.0], vec![0.25, 0.25, 0.5]], &[0, 1]);
        assert!((l - (2f64.ln() + 4f64.ln()) / 2.0).abs() < 1e-12);
        assert!((l - 1.0397).abs() < 1e-4);
        // floored, never infinite
        assert!(loss(&[vec![1.0, 0.0, 0.0]], &[1]).is_finite());
    }

    #[test]
    fn argmax_ties_and_shift() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[1.0 / 3.0; 3]), 0);
        let logits = [0.3, -1.2, 0.29];
        let shifted: Vec<f64> = logits.iter().map(|v| v + 1234.5).collect();
        assert_eq!(argmax(&softmax(&logits)), argmax(&softmax(&shifted)));
    }

    #[test]
    fn train_mode_rejects_single_row() {
        let mut m = ClassifierModel::new(2, 4, 3, 0);
        assert!(matches!(m.forward(&[vec![1.0, 2.0]], Mode::Train), Err(ClassifierError::BatchTooSmall(1))));
        assert!(m.forward(&[vec![1.0, 2.0]], Mode::Infer).is_ok());
        assert!(matches!(
            m.forward(&[vec![1.0]], Mode::Infer),
            Err(ClassifierError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn train_mode_updates_running_stats() {
        let mut m = ClassifierModel::new(1, 4, 3, 0);
        m.forward(&[vec![10.0], vec![20.0]], Mode::Train).unwrap();
        assert!((m.bn_running_mean[0] - 0.15).abs() < 1e-12);
        assert!((m.bn_running_var[0] - (0.99 + 0.01 * 25.0)).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            let (x, y) = blobs(3, 5, seed);
            let m = ClassifierModel::new(5, 16, 3, seed);
            let err = gradient_check_with(&m, &x, &y, 400, seed).unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn scalar_probe_on_output_weight() {
        let (x, y) = blobs(2, 4, 9);
        let m = ClassifierModel::new(4, 6, 3, 9);
        let (_, g) = m.gradients(&x, &y).unwrap();
        let h = 1e-5;
        let mut p = m.clone();
        p.w2[7] += h;
        let up = p.loss(&x, &y, Mode::Train).unwrap();
        p.w2[7] -= 2.0 * h;
        let down = p.loss(&x, &y, Mode::Train).unwrap();
        assert!((g.w2[7] - (up - down) / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (x, y) = blobs(40, 6, 1);
        let (vx, vy) = blobs(15, 6, 2);
        let cfg = TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        };
        let (_, report) = train(&x, &y, &vx, &vy, &cfg).unwrap();
        assert_eq!(report.epochs.len(), 50);
        assert!(report.last().unwrap().val_acc >= 0.95);
        assert_eq!(report.log_lines()[0].split(',').count(), 6);
        assert!(report.log_lines()[0].starts_with("epoch,1,"));
    }

    #[test]
    fn sgd_loss_mostly_decreases() {
        let (x, y) = blobs(30, 6, 3);
        let cfg = TrainConfig {
            epochs: 30,
            optimizer: Optimizer::Sgd,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let (_, r) = train(&x, &y, &x, &y, &cfg).unwrap();
        for w in r.epochs.windows(2) {
            assert!(w[1].train_loss <= w[0].train_loss * 1.05);
        }
        assert!(r.last().unwrap().train_loss < r.epochs[0].train_loss);
    }

    #[test]
    fn deterministic_and_zero_rate() {
        let (x, y) = blobs(10, 4, 5);
        let cfg = TrainConfig::default();
        let a = train(&x, &y, &x, &y, &cfg).unwrap();
        let b = train(&x, &y, &x, &y, &cfg).unwrap();
        assert_eq!(model_to_string(&a.0, &meta()), model_to_string(&b.0, &meta()));
        assert_eq!(a.1, b.1);

        let frozen = TrainConfig {
            learning_rate: 0.0,
            epochs: 4,
            ..cfg
        };
        let init = ClassifierModel::new(4, HIDDEN, CLASSES, frozen.seed);
        let before = gradient_check(&init, &x, &y).unwrap();
        let (m, r) = train(&x, &y, &x, &y, &frozen).unwrap();
        assert_eq!(m.trainable(), init.trainable());
        assert_eq!(gradient_check(&m, &x, &y).unwrap(), before);
        let l0 = r.epochs[0].train_loss;
        for e in &r.epochs {
            assert!((e.train_loss - l0).abs() <= 0.01 * l0);
        }
    }

    #[test]
    fn config_and_class_checks() {
        let (x, y) = blobs(3, 2, 0);
        let x6 = &x[..6];
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&x, &y, &x, &y, &bad), Err(ClassifierError::InvalidConfig(_))));
        let one = vec![0, 0, 1, 1, 1, 1];
        assert!(train(x6, &one, x6, &one, &TrainConfig::default()).is_ok());
        let lonely = vec![0, 0, 1, 1, 1, 2];
        assert!(matches!(
            train(x6, &lonely, x6, &lonely, &TrainConfig::default()),
            Err(ClassifierError::ClassTooSmall { class: 2, count: 1 })
        ));
        let single = vec![1; 6];
        assert!(matches!(
            train(x6, &single, x6, &single, &TrainConfig::default()),
            Err(ClassifierError::TooFewClasses(1))
        ));
    }

    #[test]
    fn save_load_round_trip_and_tamper() {
        let (x, y) = blobs(10, 5, 8);
        let (m, _) = train(&x, &y, &x, &y, &TrainConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&path, &m, &meta()).unwrap();
        let (back, _) = load_model(&path).unwrap();
        assert_eq!(back, m);
        let mut rng = SeededRng::new(4);
        let probe: Vec<Vec<f64>> = (0..100).map(|_| (0..5).map(|_| 3.0 * rng.normal()).collect()).collect();
        assert_eq!(back.predict(&probe).unwrap(), m.predict(&probe).unwrap());
        assert_eq!(model_to_string(&back, &meta()), fs::read_to_string(&path).unwrap());

        let text = fs::read_to_string(&path).unwrap();
        let needle = format!("{}", m.b2[0]);
        let tampered = text.replacen(&needle, &format!("{}", m.b2[0] + 1.0), 1);
        assert!(matches!(model_from_str(&tampered), Err(ClassifierError::CorruptModelFile(_))));
        assert!(matches!(model_from_str("{}"), Err(ClassifierError::CorruptModelFile(_))));
    }

    #[test]
    fn permuted_inputs_keep_accuracy() {
        let (x, y) = blobs(20, 6, 11);
        let (vx, vy) = blobs(10, 6, 12);
        let perm = [3, 0, 5, 1, 4, 2];
        let px = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> { rows.iter().map(|r| perm.iter().map(|&p| r[p]).collect()).collect() };
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let init = ClassifierModel::new(6, HIDDEN, CLASSES, cfg.seed);
        let (a, ra) = train_from(init.clone(), &x, &y, &vx, &vy, &cfg).unwrap();
        let (b, rb) = train_from(init.permuted(&perm), &px(&x), &y, &px(&vx), &vy, &cfg).unwrap();
        assert_eq!(ra.last().unwrap().val_acc, rb.last().unwrap().val_acc);
        assert_eq!(a.predict(&vx).unwrap(), b.predict(&px(&vx)).unwrap());
    }
}
