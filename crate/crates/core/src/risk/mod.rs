//! Misprediction risk analysis.
//!
//! Risk features are one-sided rules over raw similarity metrics plus one
//! always-on feature carrying the classifier's probability. Each feature has
//! an equivalence distribution `N(mu_j, var_j)` and a weight `w_j`; a pair's
//! distribution is the weight-normalized combination of the features that
//! cover it, and its risk is the Value-at-Risk of that distribution against
//! the classifier's predicted label.

mod rules;
mod train;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{Label, PairId};
use crate::featurizer::MetricSchema;

pub use rules::{generate_risk_features, Comparison, Condition};
pub use train::{pairwise_ranking_loss, ranking_accuracy, train_risk_model, RiskTrainingReport, ValidationPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskConfig {
    /// VaR confidence, in (0.5, 1).
    pub theta: f64,
    /// Minimum purity of an emitted rule.
    pub tau: f64,
    /// Minimum coverage (fraction of training pairs) of an emitted rule.
    pub c_min: f64,
    pub depth_max: usize,
    pub max_rules: usize,
    /// Candidate split thresholds examined per metric dimension and node.
    pub thresholds_per_dim: usize,
    /// Prior variance of the classifier-output feature.
    pub classifier_variance: f64,
    pub epochs: usize,
    /// Initial gradient step of the ranking-loss descent.
    pub step: f64,
    /// Sharpness of the pairwise logistic ranking loss.
    pub ranking_scale: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig {
            theta: 0.85,
            tau: 0.9,
            c_min: 0.02,
            depth_max: 3,
            max_rules: 64,
            thresholds_per_dim: 16,
            classifier_variance: 0.02,
            epochs: 200,
            step: 1.0,
            ranking_scale: 10.0,
        }
    }
}

/// A one-sided rule: a conjunction of threshold conditions indicating one
/// class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRule {
    pub rule_id: usize,
    pub conditions: Vec<Condition>,
    pub indicated_class: Label,
    pub coverage: f64,
    pub purity: f64,
}

impl RiskRule {
    pub fn matches(&self, metrics: &[f64]) -> bool {
        self.conditions.iter().all(|c| c.holds(metrics))
    }

    pub fn describe(&self, schema: &MetricSchema) -> String {
        let parts: Vec<String> = self.conditions.iter().map(|c| c.describe(schema)).collect();
        format!("{} -> {}", parts.join(" AND "), self.indicated_class)
    }
}

/// Rules plus the classifier-output feature, which is always the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFeatureSet {
    pub rules: Vec<RiskRule>,
    /// Expected equivalence probability of each rule (smoothed rate among
    /// covered training pairs). The classifier feature takes the pair's own
    /// probability instead.
    pub rule_mu: Vec<f64>,
    /// Prior variances for all `m` features.
    pub prior_variance: Vec<f64>,
    /// True when no rule met the thresholds.
    pub classifier_only: bool,
}

impl RiskFeatureSet {
    /// Feature count `m` (rules + classifier feature).
    pub fn len(&self) -> usize {
        self.rules.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn classifier_index(&self) -> usize {
        self.rules.len()
    }

    /// Incidence vector: rule bits, then the always-set classifier bit.
    pub fn cover_pair(&self, metrics: &[f64]) -> Vec<bool> {
        self.rules
            .iter()
            .map(|r| r.matches(metrics))
            .chain(std::iter::once(true))
            .collect()
    }

    /// Per-pair expectation vector with the classifier probability filled in.
    pub fn mu_with(&self, p_classifier: f64) -> Vec<f64> {
        let mut mu = self.rule_mu.clone();
        mu.push(p_classifier);
        mu
    }

    /// One line per feature: predicate, class, coverage, purity, mu, w, var.
    pub fn export_text(&self, schema: &MetricSchema, params: &RiskModelParams) -> String {
        let mut out = String::new();
        for (j, rule) in self.rules.iter().enumerate() {
            let _ = writeln!(
                out,
                "{} | coverage={:.4} purity={:.4} mu={:.4} w={:.4} var={:.6}",
                rule.describe(schema),
                rule.coverage,
                rule.purity,
                self.rule_mu[j],
                params.weights[j],
                params.variances[j],
            );
        }
        let c = self.classifier_index();
        let _ = writeln!(
            out,
            "classifier output | coverage=1.0000 purity=- mu=p w={:.4} var={:.6}",
            params.weights[c], params.variances[c],
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModelParams {
    pub weights: Vec<f64>,
    pub variances: Vec<f64>,
    pub theta: f64,
}

impl RiskModelParams {
    /// Unit weights and the feature set's prior variances.
    pub fn prior(features: &RiskFeatureSet, theta: f64) -> Self {
        RiskModelParams {
            weights: vec![1.0; features.len()],
            variances: features.prior_variance.clone(),
            theta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRiskProfile {
    pub pair_id: PairId,
    pub coverage: Vec<bool>,
    pub mu: f64,
    pub variance: f64,
    pub risk: f64,
}

/// Per-pair `(mu, var)` from the covered features with weights normalized
/// over the covered set. Falls back to uniform weights when every covered
/// weight is zero.
pub fn aggregate_distribution(coverage: &[bool], weights: &[f64], mu: &[f64], variances: &[f64]) -> (f64, f64) {
    let covered = || coverage.iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| j);
    let total: f64 = covered().map(|j| weights[j]).sum();
    let count = covered().count();
    assert!(count > 0, "a pair must be covered by at least one feature");
    let norm = |j: usize| {
        if total > 0.0 {
            weights[j] / total
        } else {
            1.0 / count as f64
        }
    };
    let mean = covered().map(|j| norm(j) * mu[j]).sum();
    let var = covered().map(|j| norm(j).powi(2) * variances[j]).sum();
    (mean, var)
}

/// Standard normal quantile.
pub fn normal_quantile(q: f64) -> f64 {
    Normal::standard().inverse_cdf(q)
}

/// Value-at-Risk of mispredicting, before clamping to `[0, 1]`.
pub(crate) fn var_risk_raw(mu: f64, variance: f64, predicted: Label, z_theta: f64) -> f64 {
    let sigma = variance.max(0.0).sqrt();
    match predicted {
        Label::Inequivalent => mu + sigma * z_theta,
        // 1 - (mu + sigma * z_{1-theta}) with z_{1-theta} = -z_theta.
        Label::Equivalent => 1.0 - mu + sigma * z_theta,
    }
}

/// Misprediction risk in `[0, 1]` at confidence `theta`.
pub fn var_risk(mu: f64, variance: f64, predicted: Label, theta: f64) -> f64 {
    var_risk_raw(mu, variance, predicted, normal_quantile(theta)).clamp(0.0, 1.0)
}

/// A pool pair to score: raw metrics and the classifier's probability.
#[derive(Debug, Clone, Copy)]
pub struct PoolPair<'a> {
    pub pair_id: PairId,
    pub metrics: &'a [f64],
    pub probability: f64,
}

fn predicted(p: f64) -> Label {
    if p >= 0.5 {
        Label::Equivalent
    } else {
        Label::Inequivalent
    }
}

/// Risk profile of every pool pair, in input order.
pub fn score_pool(pool: &[PoolPair], features: &RiskFeatureSet, params: &RiskModelParams) -> Vec<PairRiskProfile> {
    let z = normal_quantile(params.theta);
    pool.par_iter()
        .map(|pair| {
            let coverage = features.cover_pair(pair.metrics);
            let mu_f = features.mu_with(pair.probability);
            let (mu, variance) = aggregate_distribution(&coverage, &params.weights, &mu_f, &params.variances);
            let risk = var_risk_raw(mu, variance, predicted(pair.probability), z).clamp(0.0, 1.0);
            PairRiskProfile {
                pair_id: pair.pair_id,
                coverage,
                mu,
                variance,
                risk,
            }
        })
        .collect()
}
