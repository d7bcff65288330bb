//! Weighted fastPAM swap search with a fixed medoid subset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Distances;
use crate::error::{Error, Result};

const NO_SLOT: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FastPamConfig {
    pub max_swaps: usize,
    /// A swap is accepted only if it lowers TD by more than this fraction.
    pub relative_tolerance: f64,
}

impl Default for FastPamConfig {
    fn default() -> Self {
        FastPamConfig {
            max_swaps: 100_000,
            relative_tolerance: 1e-12,
        }
    }
}

impl FastPamConfig {
    fn tolerance(&self, td: f64) -> f64 {
        self.relative_tolerance * td.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastPamResult {
    /// Selected non-fixed medoids, ascending.
    pub free: Vec<usize>,
    pub td: f64,
    pub initial_td: f64,
    pub swaps: usize,
    /// TD after initialization and after every accepted swap.
    pub td_trace: Vec<f64>,
}

struct Assignment {
    nearest: Vec<usize>,
    d_nearest: Vec<f64>,
    d_second: Vec<f64>,
    td: f64,
}

/// Nearest and second-nearest medoid per point. Medoids are scanned in
/// ascending index order with strict comparison, so ties go to the lowest
/// medoid index. A medoid is its own nearest at distance 0.
fn assign(dist: &Distances, weights: &[f64], medoids: &[usize]) -> Assignment {
    let rows: Vec<(usize, f64, f64)> = (0..dist.len())
        .into_par_iter()
        .map(|i| {
            let (mut n1, mut d1, mut d2) = (usize::MAX, f64::INFINITY, f64::INFINITY);
            for &m in medoids {
                let d = if m == i { 0.0 } else { dist.get(i, m) };
                if d < d1 || (d == d1 && m == i) {
                    d2 = d1;
                    d1 = d;
                    n1 = m;
                } else if d < d2 {
                    d2 = d;
                }
            }
            (n1, d1, d2)
        })
        .collect();
    let mut a = Assignment {
        nearest: Vec::with_capacity(rows.len()),
        d_nearest: Vec::with_capacity(rows.len()),
        d_second: Vec::with_capacity(rows.len()),
        td: 0.0,
    };
    for (i, (n, d1, d2)) in rows.into_iter().enumerate() {
        if n != i {
            a.td += weights[i] * d1;
        }
        a.nearest.push(n);
        a.d_nearest.push(d1);
        a.d_second.push(d2);
    }
    a
}

/// Best swap `(delta, candidate, medoid)`, minimal lexicographically.
fn best_swap(
    dist: &Distances,
    weights: &[f64],
    a: &Assignment,
    free: &[usize],
    slot_of: &[usize],
) -> Option<(f64, usize, usize)> {
    let n = dist.len();
    let b = free.len();
    // slot of each point's nearest medoid; fixed medoids map to the spare
    // slot `b`, whose total is ignored
    let slot: Vec<usize> = a
        .nearest
        .iter()
        .map(|&m| match slot_of[m] {
            NO_SLOT => b,
            s => s,
        })
        .collect();
    let candidates: Vec<usize> = (0..n).filter(|&j| a.nearest[j] != j).collect();
    candidates
        .par_iter()
        .map_init(
            || (vec![0.0; b + 1], Vec::new()),
            |(specific, buf), &j| {
                specific.iter_mut().for_each(|s| *s = 0.0);
                let init = -weights[j] * a.d_nearest[j];
                let shared = match dist.stored_row(j) {
                    Some(row) => scan(row, j, init, weights, a, &slot, specific),
                    None => scan(dist.row(j, buf), j, init, weights, a, &slot, specific),
                };
                let specific = &specific[..b];
                let mut best: Option<(f64, usize, usize)> = None;
                for (s, &m) in free.iter().enumerate() {
                    let cand = (shared + specific[s], j, m);
                    if best.is_none_or(|bst| lex_less(cand, bst)) {
                        best = Some(cand);
                    }
                }
                best
            },
        )
        .reduce(
            || None,
            |x, y| match (x, y) {
                (Some(p), Some(q)) => Some(if lex_less(q, p) { q } else { p }),
                (p, None) => p,
                (None, q) => q,
            },
        )
}

/// Shared removal-free gain of adding `j`, starting from `init`; the
/// per-slot removal terms are accumulated into `specific`. Zero weights add
/// exact zeros, so they need no skipping.
#[inline]
fn scan<T: Copy + Into<f64>>(
    row: &[T],
    j: usize,
    init: f64,
    weights: &[f64],
    a: &Assignment,
    slot: &[usize],
    specific: &mut [f64],
) -> f64 {
    let mut shared = init;
    let n = row.len();
    let (weights, d_nearest, d_second, slot) = (&weights[..n], &a.d_nearest[..n], &a.d_second[..n], &slot[..n]);
    for (lo, hi) in [(0, j), (j + 1, n)] {
        let points = row[lo..hi]
            .iter()
            .zip(&weights[lo..hi])
            .zip(&d_nearest[lo..hi])
            .zip(&d_second[lo..hi])
            .zip(&slot[lo..hi]);
        for ((((&doj, &w), &dn), &ds), &s) in points {
            let doj: f64 = doj.into();
            let gain = if doj < dn { w * (doj - dn) } else { 0.0 };
            shared += gain;
            specific[s] += w * (doj.min(ds) - dn) - gain;
        }
    }
    shared
}

fn lex_less(a: (f64, usize, usize), b: (f64, usize, usize)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).is_lt()
}

/// Chooses `budget` medoids among the non-fixed points, keeping `fixed` as
/// medoids throughout, to minimize weighted total deviation.
///
/// Initial medoids are the `budget` heaviest points (lowest index on ties).
pub fn weighted_fastpam(
    dist: &Distances,
    weights: &[f64],
    fixed: &[usize],
    budget: usize,
    cfg: &FastPamConfig,
) -> Result<FastPamResult> {
    let n = dist.len();
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: weights.len(),
        });
    }
    if let Some(&bad) = fixed.iter().find(|&&f| f >= n) {
        return Err(Error::Config(format!("fixed medoid {bad} out of range for {n} points")));
    }
    let mut is_fixed = vec![false; n];
    for &f in fixed {
        is_fixed[f] = true;
    }
    let mut open: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
    if budget == 0 {
        return Err(Error::Config("budget must be at least 1".into()));
    }
    if budget > open.len() {
        return Err(Error::BudgetTooLarge {
            budget,
            pool: open.len(),
        });
    }
    open.sort_by(|&x, &y| weights[y].total_cmp(&weights[x]).then(x.cmp(&y)));
    let mut free: Vec<usize> = open[..budget].to_vec();
    free.sort_unstable();

    let mut medoids: Vec<usize> = fixed.iter().copied().chain(free.iter().copied()).collect();
    medoids.sort_unstable();
    medoids.dedup();
    let mut slot_of = vec![NO_SLOT; n];
    for (s, &m) in free.iter().enumerate() {
        slot_of[m] = s;
    }

    let mut a = assign(dist, weights, &medoids);
    let initial_td = a.td;
    let mut trace = vec![a.td];
    let mut swaps = 0;
    while swaps < cfg.max_swaps {
        let Some((delta, j, m)) = best_swap(dist, weights, &a, &free, &slot_of) else {
            break;
        };
        if delta >= -cfg.tolerance(a.td) || delta >= 0.0 {
            break;
        }
        let s = slot_of[m];
        slot_of[m] = NO_SLOT;
        slot_of[j] = s;
        free[s] = j;
        let pos = medoids.binary_search(&m).expect("medoid present");
        medoids.remove(pos);
        let ins = medoids.binary_search(&j).unwrap_err();
        medoids.insert(ins, j);

        let previous = a.td;
        a = assign(dist, weights, &medoids);
        assert!(
            a.td <= previous,
            "total deviation increased after swap: {previous} -> {}",
            a.td
        );
        trace.push(a.td);
        swaps += 1;
    }
    assert!(a.td <= initial_td);

    free.sort_unstable();
    Ok(FastPamResult {
        free,
        td: a.td,
        initial_td,
        swaps,
        td_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{brute_force_kmedoids, total_deviation};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> FastPamConfig {
        FastPamConfig::default()
    }

    #[test]
    fn line_example() {
        let d = Distances::from_line(&[0.0, 1.0, 10.0, 12.0]);
        let w = [0.0, 1.0, 1.0, 2.0];
        let r = weighted_fastpam(&d, &w, &[0], 1, &cfg()).unwrap();
        assert_eq!(r.free, vec![3]);
        assert_eq!(r.td, 3.0);
        assert_eq!(total_deviation(&d, &w, &[0, 3]).unwrap(), 3.0);
    }

    #[test]
    fn swap_improves_from_bad_start() {
        // heaviest point is an outlier next to others; the better medoid is
        // the centre of the cluster
        let d = Distances::from_line(&[0.0, 10.0, 11.0, 12.0, 13.0]);
        let w = [0.0, 1.0, 1.0, 1.0, 1.1];
        let r = weighted_fastpam(&d, &w, &[0], 1, &cfg()).unwrap();
        assert!(r.swaps >= 1);
        assert!(r.td < r.initial_td);
        let (best, td) = brute_force_kmedoids(&d, &w, &[0], 1).unwrap();
        assert_eq!(r.free, best);
        assert!((r.td - td).abs() < 1e-12);
        assert!(r.td_trace.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn ties_pick_lowest_index() {
        let d = Distances::from_line(&[0.0, 5.0, 5.0, 5.0]);
        let w = [0.0, 1.0, 1.0, 1.0];
        let r = weighted_fastpam(&d, &w, &[0], 1, &cfg()).unwrap();
        assert_eq!(r.free, vec![1]);
        assert_eq!(r.td, 0.0);
    }

    #[test]
    fn zero_weights_keep_initial_choice() {
        let d = Distances::from_line(&[0.0, 1.0, 2.0, 3.0]);
        let w = [0.0; 4];
        let r = weighted_fastpam(&d, &w, &[0], 2, &cfg()).unwrap();
        assert_eq!(r.free, vec![1, 2]);
        assert_eq!(r.swaps, 0);
        assert_eq!(r.td, 0.0);
    }

    #[test]
    fn budget_errors() {
        let d = Distances::from_line(&[0.0, 1.0]);
        assert!(matches!(
            weighted_fastpam(&d, &[0.0, 1.0], &[0], 2, &cfg()),
            Err(Error::BudgetTooLarge { budget: 2, pool: 1 })
        ));
        assert!(matches!(weighted_fastpam(&d, &[0.0, 1.0], &[0], 0, &cfg()), Err(Error::Config(_))));
        assert!(matches!(
            weighted_fastpam(&d, &[1.0], &[0], 1, &cfg()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn no_fixed_medoids() {
        let d = Distances::from_line(&[0.0, 1.0, 2.0, 20.0, 21.0, 22.0]);
        let w = [1.0; 6];
        let r = weighted_fastpam(&d, &w, &[], 2, &cfg()).unwrap();
        assert_eq!(r.free, vec![1, 4]);
        assert_eq!(r.td, 4.0);
    }

    #[test]
    fn max_swaps_bounds_iterations() {
        let d = Distances::from_line(&[0.0, 10.0, 11.0, 12.0, 13.0]);
        let w = [0.0, 1.0, 1.0, 1.0, 1.1];
        let r = weighted_fastpam(&d, &w, &[0], 1, &FastPamConfig { max_swaps: 0, ..cfg() }).unwrap();
        assert_eq!(r.swaps, 0);
        assert_eq!(r.free, vec![4]);
    }

    fn instance(seed: u64, n: usize, fixed: usize) -> (Distances, Vec<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let fixed: Vec<usize> = (0..fixed).collect();
        let w = (0..n).map(|i| if i < fixed.len() { 0.0 } else { rng.random::<f64>() * 5.0 }).collect();
        (Distances::dense(&refs), w, fixed)
    }

    #[test]
    fn matches_brute_force_for_single_medoid() {
        for seed in 0..40 {
            let (d, w, fixed) = instance(seed, 12, 3);
            let r = weighted_fastpam(&d, &w, &fixed, 1, &cfg()).unwrap();
            let (_, td) = brute_force_kmedoids(&d, &w, &fixed, 1).unwrap();
            assert!((r.td - td).abs() <= 1e-9 * td.max(1.0), "seed {seed}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn td_never_exceeds_initial(seed in 0u64..10_000, n in 4usize..30, b in 1usize..4) {
            let (d, w, fixed) = instance(seed, n, 2);
            prop_assume!(b <= n - 2);
            let r = weighted_fastpam(&d, &w, &fixed, b, &cfg()).unwrap();
            prop_assert!(r.td <= r.initial_td);
            let mut medoids = fixed.clone();
            medoids.extend(&r.free);
            let td = total_deviation(&d, &w, &medoids).unwrap();
            prop_assert!((td - r.td).abs() <= 1e-9 * td.max(1.0));
            prop_assert!(r.free.iter().all(|m| !fixed.contains(m)));
        }

        #[test]
        fn weight_scaling_keeps_selection(seed in 0u64..10_000, c in prop::sample::select(vec![0.1, 7.0, 1000.0])) {
            let (d, w, fixed) = instance(seed, 20, 3);
            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let a = weighted_fastpam(&d, &w, &fixed, 3, &cfg()).unwrap();
            let b = weighted_fastpam(&d, &scaled, &fixed, 3, &cfg()).unwrap();
            prop_assert_eq!(a.free, b.free);
            prop_assert!((b.td - c * a.td).abs() <= 1e-9 * (c * a.td).max(1e-12));
        }
    }
}
