//! Exhaustive k-medoids over small instances, used as a reference.

use super::Distances;
use crate::error::{Error, Result};

/// Upper bound on enumerated subsets.
pub const ENUMERATION_CAP: u128 = 2_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Enumerates every `budget`-subset of the non-fixed points in
/// lexicographic order and returns the first one of minimal weighted total
/// deviation.
pub fn brute_force_kmedoids(
    dist: &Distances,
    weights: &[f64],
    fixed: &[usize],
    budget: usize,
) -> Result<(Vec<usize>, f64)> {
    let n = dist.len();
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: weights.len(),
        });
    }
    let open: Vec<usize> = (0..n).filter(|i| !fixed.contains(i)).collect();
    if budget == 0 {
        return Err(Error::Config("budget must be at least 1".into()));
    }
    if budget > open.len() {
        return Err(Error::BudgetTooLarge {
            budget,
            pool: open.len(),
        });
    }
    let count = binomial(open.len(), budget);
    if count > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            count,
            cap: ENUMERATION_CAP,
        });
    }
    let to_fixed: Vec<f64> = (0..n)
        .map(|i| fixed.iter().map(|&f| dist.get(i, f)).fold(f64::INFINITY, f64::min))
        .collect();

    let mut idx: Vec<usize> = (0..budget).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let chosen: Vec<usize> = idx.iter().map(|&k| open[k]).collect();
        let td: f64 = (0..n)
            .filter(|i| !fixed.contains(i) && !chosen.contains(i))
            .map(|i| {
                let d = chosen.iter().map(|&c| dist.get(i, c)).fold(to_fixed[i], f64::min);
                weights[i] * d
            })
            .sum();
        if best.as_ref().is_none_or(|(_, b)| td < *b) {
            best = Some((chosen, td));
        }
        // next combination
        let m = open.len();
        let Some(pos) = (0..budget).rev().find(|&p| idx[p] < m - budget + p) else {
            break;
        };
        idx[pos] += 1;
        for q in pos + 1..budget {
            idx[q] = idx[q - 1] + 1;
        }
    }
    Ok(best.expect("at least one subset"))
}
