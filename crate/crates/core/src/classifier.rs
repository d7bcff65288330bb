//! Per-iteration matcher: logistic regression or a one-hidden-layer MLP,
//! trained by full-batch momentum gradient descent on class-weighted
//! cross-entropy, early-stopped on validation loss.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, PairId};
use crate::error::{Error, Result};

/// Probabilities are kept inside `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-12;

const LEAK: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierVariant {
    Logistic,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub variant: ClassifierVariant,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Step size at epoch `t` is `learning_rate / (1 + lr_decay * t)`.
    pub lr_decay: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub l2: f64,
    pub class_weighted: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            variant: ClassifierVariant::Logistic,
            max_epochs: 400,
            learning_rate: 0.5,
            momentum: 0.9,
            lr_decay: 0.01,
            patience: 40,
            l2: 1e-3,
            class_weighted: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Params {
    Logistic { w: Vec<f64>, b: f64 },
    Mlp { w1: Vec<f64>, b1: Vec<f64>, w2: Vec<f64>, b2: f64 },
    Constant { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub rng_seed: u64,
    pub epochs_run: usize,
    /// Epoch of the returned snapshot (0 = initialization).
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
    /// Set when the training labels had a single class and a smoothed prior
    /// was returned instead of a trained model.
    pub single_class: bool,
    /// `(training loss, validation loss)` per epoch, starting at epoch 0.
    pub loss_log: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    variant: ClassifierVariant,
    dim: usize,
    params: Params,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub pair_id: PairId,
    pub probability: f64,
    pub predicted_label: Label,
}

impl Prediction {
    pub fn new(pair_id: PairId, probability: f64) -> Self {
        let predicted_label = if probability >= 0.5 {
            Label::Equivalent
        } else {
            Label::Inequivalent
        };
        Prediction {
            pair_id,
            probability,
            predicted_label,
        }
    }

    pub fn entropy(&self) -> f64 {
        binary_entropy(self.probability)
    }
}

/// `-p ln p - (1-p) ln (1-p)`, 0 at the endpoints.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            precision,
            recall,
            f1,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAK * x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Params {
    fn init(variant: ClassifierVariant, dim: usize, rng: &mut ChaCha8Rng) -> Params {
        match variant {
            ClassifierVariant::Logistic => {
                let normal = Normal::new(0.0, 0.01).unwrap();
                Params::Logistic {
                    w: (0..dim).map(|_| normal.sample(rng)).collect(),
                    b: 0.0,
                }
            }
            ClassifierVariant::Mlp { hidden } => {
                let n1 = Normal::new(0.0, (2.0 / dim.max(1) as f64).sqrt()).unwrap();
                let n2 = Normal::new(0.0, (1.0 / hidden.max(1) as f64).sqrt()).unwrap();
                Params::Mlp {
                    w1: (0..hidden * dim).map(|_| n1.sample(rng)).collect(),
                    b1: vec![0.0; hidden],
                    w2: (0..hidden).map(|_| n2.sample(rng)).collect(),
                    b2: 0.0,
                }
            }
        }
    }

    fn zeros_like(&self) -> Params {
        match self {
            Params::Logistic { w, .. } => Params::Logistic {
                w: vec![0.0; w.len()],
                b: 0.0,
            },
            Params::Mlp { w1, b1, w2, .. } => Params::Mlp {
                w1: vec![0.0; w1.len()],
                b1: vec![0.0; b1.len()],
                w2: vec![0.0; w2.len()],
                b2: 0.0,
            },
            Params::Constant { .. } => Params::Constant { p: 0.0 },
        }
    }

    fn hidden(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            Params::Mlp { w1, b1, .. } => {
                let d = x.len();
                Some(
                    b1.iter()
                        .enumerate()
                        .map(|(j, b)| leaky(dot(&w1[j * d..(j + 1) * d], x) + b))
                        .collect(),
                )
            }
            _ => None,
        }
    }

    fn logit(&self, x: &[f64]) -> f64 {
        match self {
            Params::Logistic { w, b } => dot(w, x) + b,
            Params::Mlp { w2, b2, .. } => dot(w2, &self.hidden(x).unwrap()) + b2,
            Params::Constant { p } => (p / (1.0 - p)).ln(),
        }
    }

    /// Flat views for the momentum update.
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Params::Logistic { w, b } => vec![w.as_mut_slice(), std::slice::from_mut(b)],
            Params::Mlp { w1, b1, w2, b2 } => vec![
                w1.as_mut_slice(),
                b1.as_mut_slice(),
                w2.as_mut_slice(),
                std::slice::from_mut(b2),
            ],
            Params::Constant { p } => vec![std::slice::from_mut(p)],
        }
    }

    fn weight_norm_sq(&self) -> f64 {
        match self {
            Params::Logistic { w, .. } => dot(w, w),
            Params::Mlp { w1, w2, .. } => dot(w1, w1) + dot(w2, w2),
            Params::Constant { .. } => 0.0,
        }
    }

    /// Accumulates the gradient of `scale * CE(x, y)` into `grad`.
    fn accumulate_gradient(&self, x: &[f64], y: f64, scale: f64, grad: &mut Params) {
        match (self, grad) {
            (Params::Logistic { .. }, Params::Logistic { w: gw, b: gb }) => {
                let dz = scale * (sigmoid(self.logit(x)) - y);
                gw.iter_mut().zip(x).for_each(|(g, xi)| *g += dz * xi);
                *gb += dz;
            }
            (Params::Mlp { w1, b1, w2, b2 }, Params::Mlp { w1: g1, b1: gb1, w2: g2, b2: gb2 }) => {
                let d = x.len();
                let pre: Vec<f64> = b1
                    .iter()
                    .enumerate()
                    .map(|(j, b)| dot(&w1[j * d..(j + 1) * d], x) + b)
                    .collect();
                let h: Vec<f64> = pre.iter().map(|&v| leaky(v)).collect();
                let dz = scale * (sigmoid(dot(w2, &h) + b2) - y);
                *gb2 += dz;
                for j in 0..h.len() {
                    g2[j] += dz * h[j];
                    let dpre = dz * w2[j] * if pre[j] > 0.0 { 1.0 } else { LEAK };
                    gb1[j] += dpre;
                    g1[j * d..(j + 1) * d]
                        .iter_mut()
                        .zip(x)
                        .for_each(|(g, xi)| *g += dpre * xi);
                }
            }
            _ => unreachable!("gradient buffer shape"),
        }
    }

    fn add_l2(&self, l2: f64, grad: &mut Params) {
        match (self, grad) {
            (Params::Logistic { w, .. }, Params::Logistic { w: gw, .. }) => {
                gw.iter_mut().zip(w).for_each(|(g, v)| *g += l2 * v);
            }
            (Params::Mlp { w1, w2, .. }, Params::Mlp { w1: g1, w2: g2, .. }) => {
                g1.iter_mut().zip(w1).for_each(|(g, v)| *g += l2 * v);
                g2.iter_mut().zip(w2).for_each(|(g, v)| *g += l2 * v);
            }
            _ => {}
        }
    }
}

/// Labeled examples as `(representation, label)`.
pub type Examples<'a> = [(&'a [f64], Label)];

fn cross_entropy(params: &Params, data: &Examples, weights: (f64, f64)) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut total = 0.0;
    let mut norm = 0.0;
    for (x, y) in data {
        let p = clamp_prob(sigmoid(params.logit(x)));
        let (c, l) = if y.is_match() {
            (weights.1, -p.ln())
        } else {
            (weights.0, -(1.0 - p).ln())
        };
        total += c * l;
        norm += c;
    }
    total / norm
}

fn check_dims(data: &Examples, dim: usize) -> Result<()> {
    match data.iter().find(|(x, _)| x.len() != dim) {
        Some((x, _)) => Err(Error::DimensionMismatch {
            expected: dim,
            actual: x.len(),
        }),
        None => Ok(()),
    }
}

/// Trains a fresh model on `train`, keeping the snapshot with the lowest
/// validation loss. With an empty validation set the last epoch is returned.
pub fn train_classifier(
    train: &Examples,
    validation: &Examples,
    cfg: &TrainingConfig,
    rng_seed: u64,
) -> Result<ClassifierModel> {
    let dim = train.first().ok_or(Error::Empty("training set"))?.0.len();
    check_dims(train, dim)?;
    check_dims(validation, dim)?;

    let n = train.len();
    let n_pos = train.iter().filter(|(_, y)| y.is_match()).count();
    if n_pos == 0 || n_pos == n {
        let p = (n_pos as f64 + 1.0) / (n as f64 + 2.0);
        log::warn!("single-class training set ({n} pairs); returning prior p = {p:.4}");
        return Ok(ClassifierModel {
            variant: cfg.variant,
            dim,
            params: Params::Constant { p },
            meta: TrainingMeta {
                rng_seed,
                epochs_run: 0,
                best_epoch: 0,
                best_validation_loss: f64::NAN,
                stopped_early: false,
                single_class: true,
                loss_log: Vec::new(),
            },
        });
    }
    let class_weights = if cfg.class_weighted {
        (
            n as f64 / (2.0 * (n - n_pos) as f64),
            n as f64 / (2.0 * n_pos as f64),
        )
    } else {
        (1.0, 1.0)
    };
    let weight_total: f64 = train
        .iter()
        .map(|(_, y)| if y.is_match() { class_weights.1 } else { class_weights.0 })
        .sum();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut params = Params::init(cfg.variant, dim, &mut rng);
    let mut velocity = params.zeros_like();
    let objective = |p: &Params| cross_entropy(p, train, class_weights) + 0.5 * cfg.l2 * p.weight_norm_sq();
    let val_loss = |p: &Params| {
        if validation.is_empty() {
            f64::NAN
        } else {
            cross_entropy(p, validation, class_weights)
        }
    };

    let mut loss_log = vec![(objective(&params), val_loss(&params))];
    let mut best = (params.clone(), 0usize, loss_log[0].1);
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut grad = params.zeros_like();
        for (x, y) in train {
            let (c, t) = if y.is_match() { (class_weights.1, 1.0) } else { (class_weights.0, 0.0) };
            params.accumulate_gradient(x, t, c / weight_total, &mut grad);
        }
        params.add_l2(cfg.l2, &mut grad);
        let lr = cfg.learning_rate / (1.0 + cfg.lr_decay * (epoch - 1) as f64);
        for ((p, v), g) in params
            .slices_mut()
            .into_iter()
            .zip(velocity.slices_mut())
            .zip(grad.slices_mut())
        {
            for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
                *vi = cfg.momentum * *vi - lr * gi;
                *pi += *vi;
            }
        }
        epochs_run = epoch;
        let entry = (objective(&params), val_loss(&params));
        loss_log.push(entry);
        if validation.is_empty() {
            best = (params.clone(), epoch, f64::NAN);
            continue;
        }
        if entry.1 < best.2 {
            best = (params.clone(), epoch, entry.1);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    Ok(ClassifierModel {
        variant: cfg.variant,
        dim,
        params: best.0,
        meta: TrainingMeta {
            rng_seed,
            epochs_run,
            best_epoch: best.1,
            best_validation_loss: best.2,
            stopped_early,
            single_class: false,
            loss_log,
        },
    })
}

impl ClassifierModel {
    pub fn variant(&self) -> ClassifierVariant {
        self.variant
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Equivalence probability in the open unit interval.
    pub fn predict_prob(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(match &self.params {
            Params::Constant { p } => clamp_prob(*p),
            params => clamp_prob(sigmoid(params.logit(x))),
        })
    }

    pub fn predict(&self, pair_id: PairId, x: &[f64]) -> Result<Prediction> {
        Ok(Prediction::new(pair_id, self.predict_prob(x)?))
    }

    /// Hidden-layer activations (MLP only), usable as an alternative
    /// representation space.
    pub fn hidden_representation(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.params.hidden(x)
    }

    pub fn evaluate_f1(&self, split: &Examples) -> Result<Metrics> {
        if split.is_empty() {
            return Err(Error::Empty("evaluation split"));
        }
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (x, y) in split {
            let predicted = self.predict_prob(x)? >= 0.5;
            match (predicted, y.is_match()) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        Ok(Metrics::from_counts(tp, fp, fn_))
    }

    /// Checkpoint as self-describing JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    #[cfg(test)]
    fn logistic(w: Vec<f64>, b: f64) -> Self {
        ClassifierModel {
            variant: ClassifierVariant::Logistic,
            dim: w.len(),
            params: Params::Logistic { w, b },
            meta: TrainingMeta {
                rng_seed: 0,
                epochs_run: 0,
                best_epoch: 0,
                best_validation_loss: f64::NAN,
                stopped_early: false,
                single_class: false,
                loss_log: Vec::new(),
            },
        }
    }
}
