//! Monte Carlo checks of the Lipschitz bounds for stable RNN matchers and of
//! the core-set loss upper bound.
//!
//! Each trial draws a model, an input and a perturbation
//! `X' = X + δG` (`G` standard normal, `δ` log-uniform in `[1e-3, 1]`) and
//! compares the observed loss change with the bound.

mod nets;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::Distances;

pub use nets::{
    project_operator_norm, softmax, softmax_l2_loss, spectral_norm, ERToyModel, ERToySpec, Encoder, FcStack,
    PairTokens, TinyRNNSpec, TinyRnn,
};

/// Slack on every bound comparison.
pub const EPS_NUM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub check: String,
    pub trials: usize,
    pub constant: f64,
    /// Largest observed `lhs / rhs`.
    pub max_ratio: f64,
    /// Smallest observed ratio over trials with a nonzero right-hand side.
    pub min_ratio: f64,
    /// Trials with ratio above `1 + EPS_NUM`.
    pub violations: usize,
}

impl BoundReport {
    fn from_ratios(check: &str, constant: f64, ratios: &[f64]) -> Self {
        let finite = ratios.iter().copied().filter(|r| r.is_finite() && *r > 0.0);
        BoundReport {
            check: check.to_string(),
            trials: ratios.len(),
            constant,
            max_ratio: ratios.iter().copied().fold(0.0, f64::max),
            min_ratio: finite.fold(f64::INFINITY, f64::min),
            violations: ratios.iter().filter(|&&r| r > 1.0 + EPS_NUM).count(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Token rows drawn from `N(0, I/m)`, so each token has roughly unit norm.
fn token_embeddings(rows: usize, m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    gaussian(rows, m, rng) / (m as f64).sqrt()
}

fn perturbation_scale(rng: &mut impl Rng) -> f64 {
    10f64.powf(rng.random_range(-3.0..=0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `||X - X'||₂` with the spectral-norm constant.
    Spectral,
    /// `||X - X'||_F` with the tighter Frobenius constant.
    Frobenius,
}

/// Per-trial ratio `|l(X,y) - l(X',y)| / (K ||X - X'||)` for the stable RNN.
fn lemma1_ratio(spec: &TinyRNNSpec, norm: NormKind, seed: u64, trial: usize) -> f64 {
    let mut rng = trial_rng(seed, trial);
    let net = TinyRnn::random(spec, &mut rng);
    let x = token_embeddings(spec.t, spec.m, &mut rng);
    let delta = perturbation_scale(&mut rng);
    let dx = gaussian(spec.t, spec.m, &mut rng) * delta;
    let y = rng.random_range(0..spec.classes);
    let x2 = &x + &dx;
    let lhs = (net.loss(&x, y) - net.loss(&x2, y)).abs();
    let rhs = match norm {
        NormKind::Spectral => spec.bound_constant() * spectral_norm(&dx),
        NormKind::Frobenius => spec.frobenius_constant() * dx.norm(),
    };
    ratio(lhs, rhs)
}

pub fn check_lemma1(spec: &TinyRNNSpec, trials: usize, seed: u64) -> BoundReport {
    check_lemma1_with(spec, NormKind::Spectral, trials, seed)
}

pub fn check_lemma1_with(spec: &TinyRNNSpec, norm: NormKind, trials: usize, seed: u64) -> BoundReport {
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| lemma1_ratio(spec, norm, seed, t))
        .collect();
    let (name, constant) = match norm {
        NormKind::Spectral => ("lemma1", spec.bound_constant()),
        NormKind::Frobenius => ("lemma1-frobenius", spec.frobenius_constant()),
    };
    BoundReport::from_ratios(name, constant, &ratios)
}

/// Token counts for one pair: at least one token per side and attribute,
/// `max_tokens` in total at most.
fn token_counts(spec: &ERToySpec, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let slots = 2 * spec.n_attributes;
    let total = rng.random_range(slots..=spec.max_tokens.max(slots));
    let mut counts = vec![1usize; slots];
    for _ in slots..total {
        counts[rng.random_range(0..slots)] += 1;
    }
    counts.chunks(2).map(|c| (c[0], c[1])).collect()
}

fn theorem1_ratio(spec: &ERToySpec, seed: u64, trial: usize) -> f64 {
    let mut rng = trial_rng(seed, trial);
    let model = ERToyModel::random(spec, &mut rng);
    let pair = PairTokens {
        attributes: token_counts(spec, &mut rng)
            .into_iter()
            .map(|(l, r)| (token_embeddings(l, spec.m, &mut rng), token_embeddings(r, spec.m, &mut rng)))
            .collect(),
    };
    let delta = perturbation_scale(&mut rng);
    let noise = pair.map(|x| gaussian(x.nrows(), x.ncols(), &mut rng) * delta);
    let perturbed = PairTokens {
        attributes: pair
            .attributes
            .iter()
            .zip(&noise.attributes)
            .map(|((l, r), (nl, nr))| (l + nl, r + nr))
            .collect(),
    };
    let y = rng.random_range(0..2);
    let lhs = (model.loss(&pair, y) - model.loss(&perturbed, y)).abs();
    ratio(lhs, spec.bound_constant() * spectral_norm(&noise.stacked()))
}

pub fn check_theorem1(spec: &ERToySpec, trials: usize, seed: u64) -> BoundReport {
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| theorem1_ratio(spec, seed, t))
        .collect();
    BoundReport::from_ratios("theorem1", spec.bound_constant(), &ratios)
}

/// Both sides of the core-set bound for one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoresetBound {
    pub lhs: f64,
    pub rhs: f64,
}

/// Distance from every point to its nearest center.
pub fn nearest_center_distances(dist: &Distances, centers: &[usize]) -> Result<Vec<f64>> {
    if centers.is_empty() {
        return Err(Error::Empty("center set"));
    }
    Ok((0..dist.len())
        .map(|i| centers.iter().map(|&c| dist.get(i, c)).fold(f64::INFINITY, f64::min))
        .collect())
}

/// `|mean loss over all points - mean loss over centers|` against
/// `(1/n) Σ_i L_i d(i, nearest center)`. Centers must carry zero loss.
pub fn check_theorem2(dist: &Distances, lipschitz: &[f64], centers: &[usize], loss: &[f64]) -> Result<CoresetBound> {
    let n = dist.len();
    for v in [lipschitz.len(), loss.len()] {
        if v != n {
            return Err(Error::DimensionMismatch { expected: n, actual: v });
        }
    }
    if let Some(&c) = centers.iter().find(|&&c| loss[c] != 0.0) {
        return Err(Error::NonZeroCenterLoss { center: c, value: loss[c] });
    }
    let nearest = nearest_center_distances(dist, centers)?;
    let mean_all = loss.iter().sum::<f64>() / n as f64;
    let mean_centers = centers.iter().map(|&c| loss[c]).sum::<f64>() / centers.len() as f64;
    let rhs = lipschitz.iter().zip(&nearest).map(|(l, d)| l * d).sum::<f64>() / n as f64;
    Ok(CoresetBound {
        lhs: (mean_all - mean_centers).abs(),
        rhs,
    })
}

/// How the per-point loss of a random core-set instance is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossConstruction {
    /// `l(x) = L d(x, nearest center)` with one shared `L`; meets the bound.
    Saturating,
    /// `l(x) = u_x L_x d(x, nearest center)`, `u_x ~ U(0,1)`.
    Scaled,
    Zero,
}

fn theorem2_ratio(construction: LossConstruction, seed: u64, trial: usize) -> f64 {
    let mut rng = trial_rng(seed, trial);
    let n = rng.random_range(10..=60);
    let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
    let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
    let dist = Distances::dense(&refs);
    let k = rng.random_range(1..=5);
    let centers: Vec<usize> = rand::seq::index::sample(&mut rng, n, k).into_vec();
    let nearest = nearest_center_distances(&dist, &centers).expect("k >= 1");
    let shared = rng.random_range(0.1..5.0);
    let lipschitz: Vec<f64> = match construction {
        LossConstruction::Saturating => vec![shared; n],
        _ => (0..n).map(|_| rng.random_range(0.0..5.0)).collect(),
    };
    let loss: Vec<f64> = (0..n)
        .map(|i| match construction {
            LossConstruction::Saturating => lipschitz[i] * nearest[i],
            LossConstruction::Scaled => rng.random::<f64>() * lipschitz[i] * nearest[i],
            LossConstruction::Zero => 0.0,
        })
        .collect();
    let b = check_theorem2(&dist, &lipschitz, &centers, &loss).expect("centers have zero loss");
    ratio(b.lhs, b.rhs)
}

pub fn check_theorem2_suite(construction: LossConstruction, trials: usize, seed: u64) -> BoundReport {
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| theorem2_ratio(construction, seed, t))
        .collect();
    let name = match construction {
        LossConstruction::Saturating => "theorem2-saturating",
        LossConstruction::Scaled => "theorem2",
        LossConstruction::Zero => "theorem2-zero",
    };
    BoundReport::from_ratios(name, 1.0, &ratios)
}

/// Default suites at the given trial count.
pub fn run_all(trials: usize, seed: u64) -> Vec<BoundReport> {
    vec![
        check_lemma1(&TinyRNNSpec::default(), trials, seed),
        check_lemma1_with(&TinyRNNSpec::default(), NormKind::Frobenius, trials, seed),
        check_theorem1(&ERToySpec::default(), trials, seed),
        check_theorem2_suite(LossConstruction::Scaled, trials, seed),
        check_theorem2_suite(LossConstruction::Saturating, trials, seed),
    ]
}
