//! Learn-to-rank training of feature weights and variances.
//!
//! The objective is a pairwise logistic loss over every
//! (mispredicted, correctly predicted) couple of validation pairs,
//! `mean softplus(-k (R_mis - R_ok))`, on the unclamped VaR score. Weights
//! and variances are softplus-reparameterized so they stay positive; the
//! feature expectations are fixed. Each epoch takes one gradient step with
//! backtracking, so the loss never increases.

use serde::Serialize;

use super::{aggregate_distribution, normal_quantile, var_risk_raw, RiskConfig, RiskFeatureSet, RiskModelParams};
use crate::dataset::Label;

/// A validation pair as seen by the risk model.
#[derive(Debug, Clone)]
pub struct ValidationPair {
    pub coverage: Vec<bool>,
    pub probability: f64,
    pub label: Label,
}

impl ValidationPair {
    fn predicted(&self) -> Label {
        if self.probability >= 0.5 {
            Label::Equivalent
        } else {
            Label::Inequivalent
        }
    }

    fn mispredicted(&self) -> bool {
        self.predicted() != self.label
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskTrainingReport {
    /// Ranking loss before training and after every epoch.
    pub loss_history: Vec<f64>,
    pub mispredictions: usize,
    /// Set when validation had no mispredicted (or no correct) pair, in which
    /// case the prior parameters are returned untouched.
    pub untrained: bool,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const VARIANCE_FLOOR: f64 = 1e-12;

struct Problem<'a> {
    pairs: &'a [ValidationPair],
    mu: Vec<Vec<f64>>,
    mis: Vec<usize>,
    ok: Vec<usize>,
    z: f64,
    scale: f64,
    m: usize,
}

impl Problem<'_> {
    fn params(&self, raw: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let w = raw[..self.m].iter().map(|&a| softplus(a)).collect();
        let v = raw[self.m..].iter().map(|&s| softplus(s) + VARIANCE_FLOOR).collect();
        (w, v)
    }

    fn scores(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        self.pairs
            .iter()
            .zip(&self.mu)
            .map(|(p, mu)| {
                let (m, var) = aggregate_distribution(&p.coverage, w, mu, v);
                var_risk_raw(m, var, p.predicted(), self.z)
            })
            .collect()
    }

    fn loss_from_scores(&self, r: &[f64]) -> f64 {
        let mut total = 0.0;
        for &a in &self.mis {
            for &b in &self.ok {
                total += softplus(-self.scale * (r[a] - r[b]));
            }
        }
        total / (self.mis.len() * self.ok.len()) as f64
    }

    fn loss(&self, raw: &[f64]) -> f64 {
        let (w, v) = self.params(raw);
        self.loss_from_scores(&self.scores(&w, &v))
    }

    fn gradient(&self, raw: &[f64]) -> Vec<f64> {
        let m = self.m;
        let (w, v) = self.params(raw);
        let r = self.scores(&w, &v);
        let norm = (self.mis.len() * self.ok.len()) as f64;
        let mut d_r = vec![0.0; self.pairs.len()];
        for &a in &self.mis {
            for &b in &self.ok {
                let g = self.scale * sigmoid(-self.scale * (r[a] - r[b])) / norm;
                d_r[a] -= g;
                d_r[b] += g;
            }
        }
        let mut grad_w = vec![0.0; m];
        let mut grad_v = vec![0.0; m];
        for ((p, mu), &dr) in self.pairs.iter().zip(&self.mu).zip(&d_r) {
            if dr == 0.0 {
                continue;
            }
            let covered: Vec<usize> = (0..m).filter(|&j| p.coverage[j]).collect();
            let total: f64 = covered.iter().map(|&j| w[j]).sum();
            let (mean, var) = aggregate_distribution(&p.coverage, &w, mu, &v);
            let sigma = var.sqrt().max(1e-12);
            let sign = match p.predicted() {
                Label::Inequivalent => 1.0,
                Label::Equivalent => -1.0,
            };
            for &j in &covered {
                let w_hat = w[j] / total;
                let d_mean = (mu[j] - mean) / total;
                let d_var = 2.0 * (w_hat * v[j] - var) / total;
                grad_w[j] += dr * (sign * d_mean + self.z * d_var / (2.0 * sigma));
                grad_v[j] += dr * self.z * w_hat * w_hat / (2.0 * sigma);
            }
        }
        let mut grad = Vec::with_capacity(2 * m);
        grad.extend((0..m).map(|j| grad_w[j] * sigmoid(raw[j])));
        grad.extend((0..m).map(|j| grad_v[j] * sigmoid(raw[m + j])));
        grad
    }
}

/// Pairwise ranking loss of `params` on `pairs` (unclamped scores).
/// `None` when there is no (mispredicted, correct) couple.
pub fn pairwise_ranking_loss(
    pairs: &[ValidationPair],
    features: &RiskFeatureSet,
    params: &RiskModelParams,
    scale: f64,
) -> Option<f64> {
    let problem = problem(pairs, features, params.theta, scale);
    if problem.mis.is_empty() || problem.ok.is_empty() {
        return None;
    }
    Some(problem.loss_from_scores(&problem.scores(&params.weights, &params.variances)))
}

/// Fraction of (mispredicted, correct) couples whose clamped risk orders
/// the mispredicted pair strictly above the correct one.
pub fn ranking_accuracy(pairs: &[ValidationPair], features: &RiskFeatureSet, params: &RiskModelParams) -> Option<f64> {
    let problem = problem(pairs, features, params.theta, 1.0);
    if problem.mis.is_empty() || problem.ok.is_empty() {
        return None;
    }
    let r: Vec<f64> = problem
        .scores(&params.weights, &params.variances)
        .into_iter()
        .map(|x| x.clamp(0.0, 1.0))
        .collect();
    let mut hits = 0usize;
    for &a in &problem.mis {
        for &b in &problem.ok {
            hits += (r[a] > r[b]) as usize;
        }
    }
    Some(hits as f64 / (problem.mis.len() * problem.ok.len()) as f64)
}

fn problem<'a>(pairs: &'a [ValidationPair], features: &RiskFeatureSet, theta: f64, scale: f64) -> Problem<'a> {
    let mu = pairs.iter().map(|p| features.mu_with(p.probability)).collect();
    let (mis, ok): (Vec<usize>, Vec<usize>) = (0..pairs.len()).partition(|&i| pairs[i].mispredicted());
    Problem {
        pairs,
        mu,
        mis,
        ok,
        z: normal_quantile(theta),
        scale,
        m: features.len(),
    }
}

/// Trains weights and variances from the feature set's priors.
pub fn train_risk_model(
    pairs: &[ValidationPair],
    features: &RiskFeatureSet,
    cfg: &RiskConfig,
) -> (RiskModelParams, RiskTrainingReport) {
    let prior = RiskModelParams::prior(features, cfg.theta);
    let problem = problem(pairs, features, cfg.theta, cfg.ranking_scale);
    if problem.mis.is_empty() || problem.ok.is_empty() {
        return (
            prior,
            RiskTrainingReport {
                loss_history: Vec::new(),
                mispredictions: problem.mis.len(),
                untrained: true,
            },
        );
    }
    let m = features.len();
    let mut raw: Vec<f64> = prior
        .weights
        .iter()
        .map(|&w| softplus_inv(w))
        .chain(prior.variances.iter().map(|&v| softplus_inv(v.max(2.0 * VARIANCE_FLOOR))))
        .collect();
    let mut loss = problem.loss(&raw);
    let mut history = vec![loss];
    let mut step = cfg.step;
    for _ in 0..cfg.epochs {
        let grad = problem.gradient(&raw);
        let mut accepted = false;
        for _ in 0..40 {
            let candidate: Vec<f64> = raw.iter().zip(&grad).map(|(r, g)| r - step * g).collect();
            let cand_loss = problem.loss(&candidate);
            if cand_loss <= loss {
                raw = candidate;
                loss = cand_loss;
                step *= 1.25;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        history.push(loss);
        if !accepted {
            break;
        }
    }
    let (weights, variances) = problem.params(&raw);
    debug_assert_eq!(weights.len(), m);
    (
        RiskModelParams {
            weights,
            variances,
            theta: cfg.theta,
        },
        RiskTrainingReport {
            loss_history: history,
            mispredictions: problem.mis.len(),
            untrained: false,
        },
    )
}
