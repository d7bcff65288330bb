//! Batch selection.
//!
//! Risk sampling weights every unlabeled pair by an empirical Lipschitz
//! estimate (misprediction risk over distance to the nearest labeled pair)
//! and picks the batch `Q` minimizing the weighted total deviation
//! `sum_i w_i * min_{m in L ∪ Q} d(i, m)` with the labeled pairs `L` held
//! fixed as medoids. Points are addressed by local indices `0..n`; callers
//! order them by ascending pair id so index order is the tie-break order.

mod baselines;
mod brute;
mod fastpam;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PairId;
use crate::error::{Error, Result};
use crate::featurizer::{euclidean, RepresentationMatrix};

pub use baselines::{coreset_greedy_batch, max_entropy_batch, random_batch, select_baseline, SelectionContext};
pub use brute::{brute_force_kmedoids, ENUMERATION_CAP};
pub use fastpam::{weighted_fastpam, FastPamConfig, FastPamResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Risk,
    Random,
    MaxEntropy,
    CoresetGreedy,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Risk,
        StrategyKind::Random,
        StrategyKind::MaxEntropy,
        StrategyKind::CoresetGreedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Risk => "risk",
            StrategyKind::Random => "random",
            StrategyKind::MaxEntropy => "max-entropy",
            StrategyKind::CoresetGreedy => "coreset-greedy",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        match key.as_str() {
            "risk" => Ok(StrategyKind::Risk),
            "random" => Ok(StrategyKind::Random),
            "max-entropy" | "entropy" => Ok(StrategyKind::MaxEntropy),
            "coreset-greedy" | "coreset" | "core-set" => Ok(StrategyKind::CoresetGreedy),
            _ => Err(Error::UnknownStrategy(s.to_string())),
        }
    }
}

/// Pairwise Euclidean distances over a fixed point list.
///
/// Small instances keep the full matrix; beyond [`Distances::DENSE_LIMIT`]
/// points rows are computed on demand. Either way distances are rounded to
/// single precision, which halves the matrix and keeps both backends equal.
#[derive(Debug, Clone)]
pub struct Distances {
    n: usize,
    storage: Storage,
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(Vec<f32>),
    OnDemand { dim: usize, points: Vec<f64> },
}

impl Distances {
    pub const DENSE_LIMIT: usize = 12_000;

    pub fn from_points(points: &[&[f64]]) -> Self {
        if points.len() <= Self::DENSE_LIMIT {
            Self::dense(points)
        } else {
            Self::on_demand(points)
        }
    }

    pub fn dense(points: &[&[f64]]) -> Self {
        let n = points.len();
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for (j, d) in row.iter_mut().enumerate() {
                *d = euclidean(points[i], points[j]) as f32;
            }
        });
        Distances {
            n,
            storage: Storage::Dense(data),
        }
    }

    pub fn on_demand(points: &[&[f64]]) -> Self {
        let dim = points.first().map_or(0, |p| p.len());
        Distances {
            n: points.len(),
            storage: Storage::OnDemand {
                dim,
                points: points.iter().flat_map(|p| p.iter().copied()).collect(),
            },
        }
    }

    /// Distances over scalar coordinates, convenient for line examples.
    pub fn from_line(xs: &[f64]) -> Self {
        let rows: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        Self::dense(&refs)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(d) => d[i * self.n + j] as f64,
            Storage::OnDemand { dim, points } => {
                euclidean(&points[i * dim..(i + 1) * dim], &points[j * dim..(j + 1) * dim]) as f32 as f64
            }
        }
    }

    /// Row `j`, written into `buf`.
    pub fn row<'a>(&self, j: usize, buf: &'a mut Vec<f64>) -> &'a [f64] {
        buf.clear();
        match self.stored_row(j) {
            Some(r) => buf.extend(r.iter().map(|&d| d as f64)),
            None => buf.extend((0..self.n).map(|o| self.get(o, j))),
        }
        buf
    }

    /// Row `j` straight from the matrix, when there is one.
    pub(crate) fn stored_row(&self, j: usize) -> Option<&[f32]> {
        match &self.storage {
            Storage::Dense(d) => Some(&d[j * self.n..(j + 1) * self.n]),
            Storage::OnDemand { .. } => None,
        }
    }
}

/// Weighted total deviation: every non-medoid contributes its weight times
/// the distance to its nearest medoid.
pub fn total_deviation(dist: &Distances, weights: &[f64], medoids: &[usize]) -> Result<f64> {
    if medoids.is_empty() {
        return Err(Error::Empty("medoid set"));
    }
    let is_medoid: BTreeSet<usize> = medoids.iter().copied().collect();
    Ok((0..dist.len())
        .filter(|i| !is_medoid.contains(i))
        .map(|i| {
            let nearest = medoids.iter().map(|&m| dist.get(i, m)).fold(f64::INFINITY, f64::min);
            weights[i] * nearest
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightConfig {
    /// Floor applied to the distance in the Lipschitz estimate.
    pub distance_floor: f64,
    /// Weights are capped at `cap_multiplier` times this quantile.
    pub cap_quantile: f64,
    pub cap_multiplier: Option<f64>,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            distance_floor: 1e-6,
            cap_quantile: 0.999,
            cap_multiplier: Some(10.0),
        }
    }
}

/// Empirical Lipschitz weight per unlabeled pair; labeled pairs weigh 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SampleWeights(pub BTreeMap<PairId, f64>);

impl SampleWeights {
    pub fn get(&self, id: PairId) -> f64 {
        self.0.get(&id).copied().unwrap_or(0.0)
    }

    pub fn scaled(&self, c: f64) -> SampleWeights {
        SampleWeights(self.0.iter().map(|(k, v)| (*k, v * c)).collect())
    }
}

/// `risk / max(min distance to a labeled pair, floor)` for every pair in
/// `risks` that is not labeled, followed by the outlier cap.
pub fn lipschitz_weights(
    risks: &BTreeMap<PairId, f64>,
    reps: &RepresentationMatrix,
    labeled: &BTreeSet<PairId>,
    cfg: &WeightConfig,
) -> Result<SampleWeights> {
    if labeled.is_empty() {
        return Err(Error::Empty("labeled set"));
    }
    let labeled_rows: Vec<&[f64]> = labeled.iter().map(|&id| reps.get(id)).collect();
    let entries: Vec<(PairId, f64)> = risks
        .iter()
        .filter(|(id, _)| !labeled.contains(id))
        .map(|(&id, &r)| (id, r))
        .collect();
    let mut weights: Vec<(PairId, f64)> = entries
        .par_iter()
        .map(|&(id, risk)| {
            let x = reps.get(id);
            let nearest = labeled_rows
                .iter()
                .map(|l| euclidean(x, l))
                .fold(f64::INFINITY, f64::min);
            (id, risk / nearest.max(cfg.distance_floor))
        })
        .collect();
    if let Some(mult) = cfg.cap_multiplier {
        let mut sorted: Vec<f64> = weights.iter().map(|(_, w)| *w).collect();
        if !sorted.is_empty() {
            sorted.sort_by(f64::total_cmp);
            let rank = ((cfg.cap_quantile * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
            let cap = sorted[rank - 1] * mult;
            for (_, w) in weights.iter_mut() {
                *w = w.min(cap);
            }
        }
    }
    Ok(SampleWeights(weights.into_iter().collect()))
}

/// Runs weighted fastPAM over `labeled ∪ pool` and maps the result back to
/// pair ids.
pub fn select_risk_batch(
    reps: &RepresentationMatrix,
    labeled: &BTreeSet<PairId>,
    pool: &BTreeSet<PairId>,
    weights: &SampleWeights,
    budget: usize,
    cfg: &FastPamConfig,
) -> Result<(Vec<PairId>, FastPamResult)> {
    let ids: Vec<PairId> = labeled.union(pool).copied().collect();
    let points: Vec<&[f64]> = ids.iter().map(|&id| reps.get(id)).collect();
    let dist = Distances::from_points(&points);
    let w: Vec<f64> = ids
        .iter()
        .map(|id| if labeled.contains(id) { 0.0 } else { weights.get(*id) })
        .collect();
    let fixed: Vec<usize> = ids
        .iter()
        .enumerate()
        .filter(|(_, id)| labeled.contains(id))
        .map(|(i, _)| i)
        .collect();
    let result = weighted_fastpam(&dist, &w, &fixed, budget, cfg)?;
    let chosen = result.free.iter().map(|&i| ids[i]).collect();
    Ok((chosen, result))
}
