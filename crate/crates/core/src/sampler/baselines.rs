//! Reference strategies: random, max-entropy and greedy core-set.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::StrategyKind;
use crate::classifier::Prediction;
use crate::dataset::PairId;
use crate::error::{Error, Result};
use crate::featurizer::{euclidean, RepresentationMatrix};

/// Everything a baseline may look at when choosing a batch.
pub struct SelectionContext<'a> {
    pub pool: &'a BTreeSet<PairId>,
    pub labeled: &'a BTreeSet<PairId>,
    /// Classifier output for every pool pair.
    pub predictions: &'a [Prediction],
    pub reps: &'a RepresentationMatrix,
}

fn check_budget(budget: usize, pool: usize) -> Result<()> {
    if budget > pool {
        return Err(Error::BudgetTooLarge { budget, pool });
    }
    Ok(())
}

pub fn random_batch(pool: &BTreeSet<PairId>, budget: usize, seed: u64) -> Result<Vec<PairId>> {
    check_budget(budget, pool.len())?;
    let mut ids: Vec<PairId> = pool.iter().copied().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids.truncate(budget);
    ids.sort_unstable();
    Ok(ids)
}

/// Highest predictive entropy first, lowest pair id on ties.
pub fn max_entropy_batch(predictions: &[Prediction], budget: usize) -> Result<Vec<PairId>> {
    check_budget(budget, predictions.len())?;
    let mut scored: Vec<(f64, PairId)> = predictions.iter().map(|p| (p.entropy(), p.pair_id)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut ids: Vec<PairId> = scored.into_iter().take(budget).map(|(_, id)| id).collect();
    ids.sort_unstable();
    Ok(ids)
}

/// Greedy k-center: repeatedly takes the pool pair farthest from every
/// labeled or already chosen pair.
pub fn coreset_greedy_batch(
    pool: &BTreeSet<PairId>,
    labeled: &BTreeSet<PairId>,
    reps: &RepresentationMatrix,
    budget: usize,
) -> Result<Vec<PairId>> {
    check_budget(budget, pool.len())?;
    let ids: Vec<PairId> = pool.iter().copied().collect();
    let mut nearest: Vec<f64> = ids
        .iter()
        .map(|&id| {
            let x = reps.get(id);
            labeled
                .iter()
                .map(|&l| euclidean(x, reps.get(l)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut taken = vec![false; ids.len()];
    let mut chosen = Vec::with_capacity(budget);
    for _ in 0..budget {
        let mut best: Option<usize> = None;
        for i in 0..ids.len() {
            if !taken[i] && best.is_none_or(|b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("budget checked");
        taken[b] = true;
        chosen.push(ids[b]);
        let xb = reps.get(ids[b]);
        for i in 0..ids.len() {
            if !taken[i] {
                nearest[i] = nearest[i].min(euclidean(reps.get(ids[i]), xb));
            }
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

pub fn select_baseline(
    strategy: StrategyKind,
    ctx: &SelectionContext<'_>,
    budget: usize,
    seed: u64,
) -> Result<Vec<PairId>> {
    match strategy {
        StrategyKind::Random => random_batch(ctx.pool, budget, seed),
        StrategyKind::MaxEntropy => max_entropy_batch(ctx.predictions, budget),
        StrategyKind::CoresetGreedy => coreset_greedy_batch(ctx.pool, ctx.labeled, ctx.reps, budget),
        StrategyKind::Risk => Err(Error::UnknownStrategy("risk is not a baseline strategy".into())),
    }
}
