//! One-sided rule generation.
//!
//! For each class a shallow binary tree is grown over the raw metric
//! dimensions. Splits are chosen to isolate regions dominated by that class
//! (Laplace-smoothed purity of the better child); every node reaching the
//! purity and coverage thresholds becomes a rule and is not split further.

use serde::{Deserialize, Serialize};

use super::{RiskConfig, RiskFeatureSet, RiskRule};
use crate::dataset::Label;
use crate::featurizer::{MetricMatrix, MetricSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Le,
    Gt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub dim: usize,
    pub cmp: Comparison,
    pub threshold: f64,
}

impl Condition {
    pub fn holds(&self, metrics: &[f64]) -> bool {
        match self.cmp {
            Comparison::Le => metrics[self.dim] <= self.threshold,
            Comparison::Gt => metrics[self.dim] > self.threshold,
        }
    }

    pub fn describe(&self, schema: &MetricSchema) -> String {
        let op = match self.cmp {
            Comparison::Le => "<=",
            Comparison::Gt => ">",
        };
        format!("{} {op} {:.4}", schema.dimension_name(self.dim), self.threshold)
    }
}

/// Canonical form: at most one `Le` and one `Gt` per dimension, tightest
/// bound kept, sorted. Logically equal predicates share a canonical form.
fn canonical(conditions: &[Condition]) -> Vec<Condition> {
    let mut out: Vec<Condition> = Vec::new();
    for c in conditions {
        match out.iter_mut().find(|o| o.dim == c.dim && o.cmp == c.cmp) {
            Some(o) => {
                o.threshold = match c.cmp {
                    Comparison::Le => o.threshold.min(c.threshold),
                    Comparison::Gt => o.threshold.max(c.threshold),
                }
            }
            None => out.push(*c),
        }
    }
    out.sort_by(|a, b| {
        a.dim
            .cmp(&b.dim)
            .then((a.cmp == Comparison::Gt).cmp(&(b.cmp == Comparison::Gt)))
    });
    out
}

struct Grower<'a> {
    metrics: &'a MetricMatrix,
    labels: &'a [Label],
    rows: &'a [usize],
    cfg: &'a RiskConfig,
    min_count: usize,
    found: Vec<(Vec<Condition>, Label, usize, usize)>,
}

impl Grower<'_> {
    fn grow(&mut self, class: Label, node: &[usize], conditions: &mut Vec<Condition>, depth: usize) {
        if node.is_empty() {
            return;
        }
        let hits = node.iter().filter(|&&i| self.labels[i] == class).count();
        let purity = hits as f64 / node.len() as f64;
        if !conditions.is_empty() && purity >= self.cfg.tau && node.len() >= self.min_count {
            self.found.push((canonical(conditions), class, node.len(), hits));
            return;
        }
        if node.len() < self.min_count || depth == self.cfg.depth_max || hits == 0 {
            return;
        }
        let Some((dim, threshold)) = self.best_split(class, node) else {
            return;
        };
        let (le, gt): (Vec<usize>, Vec<usize>) = node
            .iter()
            .partition(|&&i| self.metrics.row(self.rows[i])[dim] <= threshold);
        for (child, cmp) in [(le, Comparison::Le), (gt, Comparison::Gt)] {
            conditions.push(Condition { dim, cmp, threshold });
            self.grow(class, &child, conditions, depth + 1);
            conditions.pop();
        }
    }

    /// Midpoints between consecutive distinct values whose label groups are
    /// not both pure in the same class, evenly subsampled to the configured
    /// count.
    fn candidate_thresholds(&self, node: &[usize], dim: usize) -> Vec<f64> {
        let mut values: Vec<(f64, Label)> = node
            .iter()
            .map(|&i| (self.metrics.row(self.rows[i])[dim], self.labels[i]))
            .collect();
        values.sort_by(|a, b| a.0.total_cmp(&b.0));
        // (value, Some(label) if every pair at this value shares it)
        let mut groups: Vec<(f64, Option<Label>)> = Vec::new();
        for (v, y) in values {
            match groups.last_mut() {
                Some((g, l)) if *g == v => {
                    if *l != Some(y) {
                        *l = None;
                    }
                }
                _ => groups.push((v, Some(y))),
            }
        }
        let mids: Vec<f64> = groups
            .windows(2)
            .filter(|w| w[0].1.is_none() || w[0].1 != w[1].1)
            .map(|w| 0.5 * (w[0].0 + w[1].0))
            .collect();
        let k = self.cfg.thresholds_per_dim.max(1);
        if mids.len() <= k {
            return mids;
        }
        (0..k).map(|q| mids[(q * (mids.len() - 1)) / (k - 1).max(1)]).collect()
    }

    /// Split maximizing the smoothed purity of the better child for `class`,
    /// restricted to children that keep the minimum coverage.
    fn best_split(&self, class: Label, node: &[usize]) -> Option<(usize, f64)> {
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for dim in 0..self.metrics.dim() {
            for t in self.candidate_thresholds(node, dim) {
                let (mut n_le, mut h_le, mut n_gt, mut h_gt) = (0usize, 0usize, 0usize, 0usize);
                for &i in node {
                    let hit = self.labels[i] == class;
                    if self.metrics.row(self.rows[i])[dim] <= t {
                        n_le += 1;
                        h_le += hit as usize;
                    } else {
                        n_gt += 1;
                        h_gt += hit as usize;
                    }
                }
                for (n, h) in [(n_le, h_le), (n_gt, h_gt)] {
                    if n < self.min_count {
                        continue;
                    }
                    let score = (h as f64 + 1.0) / (n as f64 + 2.0);
                    let better = match best {
                        None => true,
                        Some((s, bn, _, _)) => score > s || (score == s && n > bn),
                    };
                    if better {
                        best = Some((score, n, dim, t));
                    }
                }
            }
        }
        best.map(|(_, _, dim, t)| (dim, t))
    }
}

/// Grows one-sided rules from labeled training pairs.
///
/// `rows[i]` is the row of training pair `i` in `metrics`, `labels[i]` its
/// label. The classifier-output feature is always appended.
pub fn generate_risk_features(
    metrics: &MetricMatrix,
    rows: &[usize],
    labels: &[Label],
    cfg: &RiskConfig,
) -> RiskFeatureSet {
    assert_eq!(rows.len(), labels.len());
    let n = rows.len();
    let min_count = ((cfg.c_min * n as f64).ceil() as usize).max(1);
    let mut grower = Grower {
        metrics,
        labels,
        rows,
        cfg,
        min_count,
        found: Vec::new(),
    };
    let all: Vec<usize> = (0..n).collect();
    for class in [Label::Inequivalent, Label::Equivalent] {
        grower.grow(class, &all, &mut Vec::new(), 0);
    }

    let mut found = grower.found;
    // Larger coverage first, then purity; stable so tree order breaks ties.
    found.sort_by(|a, b| b.2.cmp(&a.2).then((b.3 * a.2).cmp(&(a.3 * b.2))));
    let mut rules: Vec<RiskRule> = Vec::new();
    let mut rule_mu = Vec::new();
    let mut prior_variance = Vec::new();
    for (conditions, class, covered, hits) in found {
        if rules.len() >= cfg.max_rules {
            break;
        }
        if rules.iter().any(|r| r.conditions == conditions) {
            continue;
        }
        let positives = if class.is_match() { hits } else { covered - hits };
        let a = positives as f64 + 1.0;
        let b = (covered - positives) as f64 + 1.0;
        rule_mu.push(a / (a + b));
        prior_variance.push(a * b / ((a + b).powi(2) * (a + b + 1.0)));
        rules.push(RiskRule {
            rule_id: rules.len(),
            conditions,
            indicated_class: class,
            coverage: covered as f64 / n as f64,
            purity: hits as f64 / covered as f64,
        });
    }
    prior_variance.push(cfg.classifier_variance);
    let classifier_only = rules.is_empty();
    if classifier_only {
        log::warn!("no risk rule met purity {} and coverage {}", cfg.tau, cfg.c_min);
    }
    RiskFeatureSet {
        rules,
        rule_mu,
        prior_variance,
        classifier_only,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>]) -> MetricMatrix {
        MetricMatrix::from_rows(rows[0].len(), rows.to_vec())
    }

    #[test]
    fn separating_dimension_yields_pure_rule() {
        // dim 1 separates: 40% positives with value > 0.7, noise elsewhere.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100 {
            let pos = i < 40;
            let noise = ((i * 37) % 100) as f64 / 100.0;
            rows.push(vec![noise, if pos { 0.8 + noise * 0.1 } else { 0.2 + noise * 0.3 }]);
            labels.push(if pos { Label::Equivalent } else { Label::Inequivalent });
        }
        let m = matrix(&rows);
        let idx: Vec<usize> = (0..100).collect();
        let cfg = RiskConfig {
            tau: 0.9,
            c_min: 0.05,
            ..Default::default()
        };
        let fs = generate_risk_features(&m, &idx, &labels, &cfg);
        let rule = fs
            .rules
            .iter()
            .find(|r| r.indicated_class == Label::Equivalent && r.conditions.iter().any(|c| c.dim == 1))
            .expect("rule on the separating dimension");
        assert_eq!(rule.purity, 1.0);
        assert!((rule.coverage - 0.4).abs() < 1e-12);
        for r in &fs.rules {
            assert!(r.purity >= 0.9 && r.coverage >= 0.05);
            let covered: Vec<usize> = idx.iter().copied().filter(|&i| r.matches(m.row(i))).collect();
            assert!((covered.len() as f64 / 100.0 - r.coverage).abs() < 1e-12);
        }
        assert_eq!(fs.len(), fs.rules.len() + 1);
        assert!(!fs.classifier_only);
        assert!(fs.rule_mu.iter().all(|m| *m > 0.0 && *m < 1.0));
    }

    #[test]
    fn small_leaves_are_rejected() {
        // Only one pair of 100 is positive: any positive leaf covers 1%.
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![if i == 0 { 1.0 } else { 0.0 }]).collect();
        let labels: Vec<Label> = (0..100)
            .map(|i| if i == 0 { Label::Equivalent } else { Label::Inequivalent })
            .collect();
        let idx: Vec<usize> = (0..100).collect();
        let cfg = RiskConfig {
            c_min: 0.05,
            ..Default::default()
        };
        let fs = generate_risk_features(&matrix(&rows), &idx, &labels, &cfg);
        assert!(fs.rules.iter().all(|r| r.indicated_class == Label::Inequivalent));
        assert!(fs.rules.iter().all(|r| r.coverage >= 0.05));
    }

    #[test]
    fn no_rule_leaves_classifier_feature_only() {
        // Labels alternate with no metric signal.
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![0.5]).collect();
        let labels: Vec<Label> = (0..40)
            .map(|i| if i % 2 == 0 { Label::Equivalent } else { Label::Inequivalent })
            .collect();
        let idx: Vec<usize> = (0..40).collect();
        let fs = generate_risk_features(&matrix(&rows), &idx, &labels, &RiskConfig::default());
        assert!(fs.classifier_only);
        assert_eq!(fs.len(), 1);
        assert_eq!(fs.cover_pair(&[0.5]), vec![true]);
    }

    #[test]
    fn year_mismatch_rule_indicates_inequivalent() {
        // Metric layout: [title.jaccard, year.exact]. Matches always share
        // the year; half the non-matches share a near-identical title but
        // differ in year.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let t = (i % 10) as f64 / 10.0;
            match i % 3 {
                0 => {
                    rows.push(vec![0.7 + 0.3 * t, 1.0]);
                    labels.push(Label::Equivalent);
                }
                1 => {
                    rows.push(vec![0.7 + 0.3 * t, 0.0]);
                    labels.push(Label::Inequivalent);
                }
                _ => {
                    rows.push(vec![0.3 * t, if i % 2 == 0 { 1.0 } else { 0.0 }]);
                    labels.push(Label::Inequivalent);
                }
            }
        }
        let idx: Vec<usize> = (0..60).collect();
        let fs = generate_risk_features(&matrix(&rows), &idx, &labels, &RiskConfig::default());
        let schema = MetricSchema::with_ranges(vec!["pair".into()], vec![None]);
        let year_rule = fs
            .rules
            .iter()
            .find(|r| r.conditions == vec![Condition { dim: 1, cmp: Comparison::Le, threshold: 0.5 }])
            .unwrap_or_else(|| panic!("rules: {:?}", fs.rules.iter().map(|r| r.describe(&schema)).collect::<Vec<_>>()));
        assert_eq!(year_rule.indicated_class, Label::Inequivalent);
        assert_eq!(year_rule.purity, 1.0);
    }

    #[test]
    fn canonical_merges_redundant_bounds() {
        let a = canonical(&[
            Condition { dim: 2, cmp: Comparison::Le, threshold: 0.5 },
            Condition { dim: 0, cmp: Comparison::Gt, threshold: 0.1 },
            Condition { dim: 2, cmp: Comparison::Le, threshold: 0.3 },
        ]);
        let b = canonical(&[
            Condition { dim: 0, cmp: Comparison::Gt, threshold: 0.1 },
            Condition { dim: 2, cmp: Comparison::Le, threshold: 0.3 },
        ]);
        assert_eq!(a, b);
    }
}
