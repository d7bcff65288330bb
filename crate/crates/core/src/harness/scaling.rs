use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::run::{prepare, train_round, validation_subset};
use super::ExperimentConfig;
use crate::dataset::{make_partitions, PartitionSpec};
use crate::error::{Error, Result};
use crate::sampler::{lipschitz_weights, weighted_fastpam, Distances, FastPamConfig};
use crate::PairId;

/// Points for the scaling benchmark: the labeled pairs first, then the pool
/// in a seeded random order, with their Lipschitz weights.
#[derive(Debug, Clone)]
pub struct ScalingPool {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub labeled: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub runtime_ms: f64,
    pub swaps: usize,
    pub td: f64,
}

/// Builds a benchmark pool from one round of the real pipeline: classifier
/// on a seed set of `labeled` pairs, risk model, Lipschitz weights.
pub fn risk_weighted_pool(cfg: &ExperimentConfig, labeled: usize, seed: u64) -> Result<ScalingPool> {
    let prep = prepare(cfg)?;
    let spec = PartitionSpec {
        seed_size: labeled,
        val_fraction: cfg.val_fraction,
        test_fraction: 0.0,
    };
    let state = make_partitions(&prep.corpus, spec, seed)?;
    let validation = validation_subset(&state, cfg.validation_ratio, seed);
    let model = train_round(&prep, &state, &validation, &cfg.classifier, seed, 0)?;
    let scores = super::run::score_round(&prep, &state, &validation, &model, cfg)?;
    let weights = lipschitz_weights(&scores.risks, &prep.reps, state.labeled(), &cfg.weights)?;

    let mut pool: Vec<PairId> = state.unlabeled().iter().copied().collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let order: Vec<PairId> = state.labeled().iter().copied().chain(pool).collect();
    Ok(ScalingPool {
        points: order.iter().map(|&id| prep.reps.get(id).to_vec()).collect(),
        weights: order
            .iter()
            .map(|&id| if state.labeled().contains(&id) { 0.0 } else { weights.get(id) })
            .collect(),
        labeled: state.labeled().len(),
    })
}

/// Runs weighted fastPAM on the first `n` points of the pool for every
/// size, with the pool's labeled points fixed and `budget` free medoids.
/// Sizes are solved in rounds, `repeats` rounds in all, and the fastest wall
/// time per size is kept, so slow spells of the machine hit every size.
pub fn bench_scaling(
    pool: &ScalingPool,
    budget: usize,
    sizes: &[usize],
    repeats: usize,
    cfg: &FastPamConfig,
) -> Result<Vec<ScalingRow>> {
    let mut instances = Vec::with_capacity(sizes.len());
    for &n in sizes {
        if n > pool.points.len() {
            return Err(Error::InsufficientPairs {
                requested: n,
                available: pool.points.len(),
            });
        }
        if n <= pool.labeled {
            return Err(Error::Config(format!("size {n} leaves no pool beyond {} labeled", pool.labeled)));
        }
        let refs: Vec<&[f64]> = pool.points[..n].iter().map(|p| p.as_slice()).collect();
        instances.push(Distances::from_points(&refs));
    }
    let fixed: Vec<usize> = (0..pool.labeled).collect();
    let mut rows: Vec<ScalingRow> = sizes
        .iter()
        .map(|&n| ScalingRow {
            n,
            runtime_ms: f64::INFINITY,
            swaps: 0,
            td: f64::NAN,
        })
        .collect();
    for _ in 0..repeats.max(1) {
        for (row, dist) in rows.iter_mut().zip(&instances) {
            let started = Instant::now();
            let r = weighted_fastpam(dist, &pool.weights[..row.n], &fixed, budget, cfg)?;
            row.runtime_ms = row.runtime_ms.min(started.elapsed().as_secs_f64() * 1e3);
            row.swaps = r.swaps;
            row.td = r.td;
        }
    }
    for row in &rows {
        log::info!("n={}: {:.1} ms, {} swaps", row.n, row.runtime_ms, row.swaps);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PublicationsConfig;
    use crate::harness::DataSource;

    #[test]
    fn small_scaling_table() {
        let cfg = ExperimentConfig {
            data: DataSource::Synthetic(PublicationsConfig {
                works: 200,
                ..Default::default()
            }),
            max_pairs: None,
            ..Default::default()
        };
        let pool = risk_weighted_pool(&cfg, 20, 1).unwrap();
        assert_eq!(pool.labeled, 20);
        assert!(pool.weights[..20].iter().all(|&w| w == 0.0));
        assert!(pool.weights[20..].iter().any(|&w| w > 0.0));
        let rows = bench_scaling(&pool, 10, &[100, 200], 2, &FastPamConfig::default()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].n, 200);
        assert!(matches!(
            bench_scaling(&pool, 10, &[pool.points.len() + 1], 1, &FastPamConfig::default()),
            Err(Error::InsufficientPairs { .. })
        ));
    }
}
