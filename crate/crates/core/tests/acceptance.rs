//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.
//!
//! Run with `cargo test -p risk-sampling --test acceptance -- --nocapture`
//! to see the lines.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risk_sampling::harness::{bench_scaling, compare_strategies, risk_weighted_pool, run_active_learning};
use risk_sampling::risk::{ranking_accuracy, train_risk_model, Comparison, Condition, ValidationPair};
use risk_sampling::sampler::{brute_force_kmedoids, total_deviation, weighted_fastpam, Distances, FastPamConfig};
use risk_sampling::verification::run_all;
use risk_sampling::{ExperimentConfig, Label, RiskConfig, RiskFeatureSet, RiskModelParams, RiskRule, StrategyKind};

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

struct Instance {
    dist: Distances,
    weights: Vec<f64>,
    fixed: Vec<usize>,
}

/// Uniform points in the unit square with random positive weights.
fn random_instance(rng: &mut ChaCha8Rng, n: usize, dim: usize, n_fixed: usize) -> Instance {
    let points: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    let weights = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let mut fixed: Vec<usize> = rand::seq::index::sample(rng, n, n_fixed).into_vec();
    fixed.sort_unstable();
    Instance {
        dist: Distances::dense(&refs),
        weights,
        fixed,
    }
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let cfg = FastPamConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut exact_b1 = 0;
    let mut near = [0usize; 2];
    for _ in 0..100 {
        let n = rng.random_range(8..=15);
        let n_fixed = rng.random_range(1..=3);
        let inst = random_instance(&mut rng, n, 2, n_fixed);
        let fp = weighted_fastpam(&inst.dist, &inst.weights, &inst.fixed, 1, &cfg).unwrap();
        let (_, opt) = brute_force_kmedoids(&inst.dist, &inst.weights, &inst.fixed, 1).unwrap();
        exact_b1 += (fp.td == opt) as usize;
        for (slot, b) in [2, 3].into_iter().enumerate() {
            let fp = weighted_fastpam(&inst.dist, &inst.weights, &inst.fixed, b, &cfg).unwrap();
            let (_, opt) = brute_force_kmedoids(&inst.dist, &inst.weights, &inst.fixed, b).unwrap();
            near[slot] += (fp.td <= 1.05 * opt) as usize;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        name: "sampler matches brute force",
        passed: exact_b1 == 100 && near.iter().all(|&c| c >= 95) && secs < 10.0,
        detail: format!(
            "b=1 exact {exact_b1}/100, b=2 within 5% {}/100, b=3 within 5% {}/100, {secs:.2}s",
            near[0], near[1]
        ),
    }
}

fn stress_suite() -> Outcome {
    let cfg = FastPamConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut failures = Vec::new();
    for trial in 0..1000 {
        let n = rng.random_range(10..=80);
        let n_fixed = rng.random_range(0..=6);
        let dim = rng.random_range(1..=4);
        let mut inst = random_instance(&mut rng, n, dim, n_fixed);
        // some instances carry zero weights or a few heavy outliers
        match trial % 3 {
            1 => inst.weights.iter_mut().for_each(|w| {
                if rng.random_bool(0.3) {
                    *w = 0.0
                }
            }),
            2 => inst.weights.iter_mut().for_each(|w| {
                if rng.random_bool(0.05) {
                    *w *= 1e4
                }
            }),
            _ => {}
        }
        let budget = rng.random_range(1..=8.min(n - n_fixed));
        let r = weighted_fastpam(&inst.dist, &inst.weights, &inst.fixed, budget, &cfg).unwrap();
        let mut medoids: Vec<usize> = inst.fixed.iter().chain(&r.free).copied().collect();
        medoids.sort_unstable();
        medoids.dedup();
        let recomputed = total_deviation(&inst.dist, &inst.weights, &medoids).unwrap();
        let ok = r.td_trace.windows(2).all(|p| p[1] < p[0])
            && r.td <= r.initial_td
            && r.td_trace.last() == Some(&r.td)
            && r.free.len() == budget
            && r.free.iter().all(|f| !inst.fixed.contains(f))
            && medoids.len() == inst.fixed.len() + budget
            && (recomputed - r.td).abs() <= 1e-9 * r.td.max(1.0);
        if !ok {
            failures.push(trial);
        }
    }
    Outcome {
        id: 2,
        name: "TD monotone, fixed medoids kept",
        passed: failures.is_empty(),
        detail: format!("{} of 1000 instances violated (first: {:?})", failures.len(), failures.first()),
    }
}

fn scaling_invariance() -> Outcome {
    let cfg = FastPamConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut differing = 0;
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 60, 3, 5);
        let base = weighted_fastpam(&inst.dist, &inst.weights, &inst.fixed, 5, &cfg).unwrap().free;
        for c in [0.1, 7.0, 1000.0] {
            let scaled: Vec<f64> = inst.weights.iter().map(|w| w * c).collect();
            let q = weighted_fastpam(&inst.dist, &scaled, &inst.fixed, 5, &cfg).unwrap().free;
            differing += (q != base) as usize;
        }
    }
    Outcome {
        id: 3,
        name: "selection invariant to weight scale",
        passed: differing == 0,
        detail: format!("{differing} of 150 scaled runs changed Q"),
    }
}

fn bound_suites() -> Outcome {
    let started = Instant::now();
    let reports = run_all(10_000, 0);
    let secs = started.elapsed().as_secs_f64();
    let saturating = reports
        .iter()
        .find(|r| r.check == "theorem2-saturating")
        .expect("saturating suite present");
    let tight = (saturating.max_ratio - 1.0).abs() <= 1e-9 && (saturating.min_ratio - 1.0).abs() <= 1e-9;
    let violations: Vec<String> = reports.iter().map(|r| format!("{}={}", r.check, r.violations)).collect();
    Outcome {
        id: 4,
        name: "bound suites",
        passed: reports.iter().all(|r| r.passed()) && tight && secs < 60.0,
        detail: format!(
            "violations [{}], saturating ratio in [{:.12}, {:.12}], {secs:.1}s",
            violations.join(" "),
            saturating.min_ratio,
            saturating.max_ratio
        ),
    }
}

fn exact_rule_features() -> RiskFeatureSet {
    RiskFeatureSet {
        rules: vec![RiskRule {
            rule_id: 0,
            conditions: vec![Condition {
                dim: 0,
                cmp: Comparison::Gt,
                threshold: 0.5,
            }],
            indicated_class: Label::Inequivalent,
            coverage: 0.1,
            purity: 1.0,
        }],
        rule_mu: vec![0.1],
        prior_variance: vec![0.01, 0.02],
        classifier_only: false,
    }
}

/// Confident false matches, all covered by the rule, among correct pairs
/// of every confidence level.
fn exact_rule_pairs(rng: &mut ChaCha8Rng) -> Vec<ValidationPair> {
    let mut pairs = Vec::new();
    for _ in 0..rng.random_range(5..=20) {
        pairs.push(ValidationPair {
            coverage: vec![true, true],
            probability: rng.random_range(0.6..0.99),
            label: Label::Inequivalent,
        });
    }
    for _ in 0..rng.random_range(30..=80) {
        let p: f64 = rng.random_range(0.51..0.99);
        pairs.push(ValidationPair {
            coverage: vec![false, true],
            probability: p,
            label: Label::Equivalent,
        });
        pairs.push(ValidationPair {
            coverage: vec![false, true],
            probability: 1.0 - p,
            label: Label::Inequivalent,
        });
    }
    pairs
}

fn risk_model_sanity() -> Outcome {
    let features = exact_rule_features();
    let cfg = RiskConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut accuracies = Vec::new();
    let mut loss_increases = 0;
    let mut started_perfect = 0;
    for _ in 0..20 {
        let pairs = exact_rule_pairs(&mut rng);
        let prior = RiskModelParams::prior(&features, cfg.theta);
        started_perfect += (ranking_accuracy(&pairs, &features, &prior) == Some(1.0)) as usize;
        let (params, report) = train_risk_model(&pairs, &features, &cfg);
        loss_increases += report.loss_history.windows(2).filter(|w| w[1] > w[0]).count();
        accuracies.push(ranking_accuracy(&pairs, &features, &params).unwrap_or(0.0));
    }
    let worst = accuracies.iter().copied().fold(1.0, f64::min);
    Outcome {
        id: 5,
        name: "risk model sanity",
        passed: worst == 1.0 && loss_increases == 0,
        detail: format!(
            "min ranking accuracy {worst:.4} over 20 runs ({started_perfect} perfect before training), {loss_increases} loss increases"
        ),
    }
}

fn comparison_run() -> (Outcome, Outcome) {
    let cfg = ExperimentConfig {
        strategies: vec![StrategyKind::Risk, StrategyKind::Random, StrategyKind::MaxEntropy],
        ..ExperimentConfig::default()
    };
    let started = Instant::now();
    let log = run_active_learning(&cfg).expect("comparison run");
    let secs = started.elapsed().as_secs_f64();
    let checks = compare_strategies(&log, 0.8);
    let get = |name| checks.iter().find(|c| c.name == name).expect("check present");
    let (random, entropy, rate) = (get("f1-vs-random"), get("f1-vs-max-entropy"), get("selection-rate-vs-random"));
    let e2e = Outcome {
        id: 6,
        name: "end-to-end comparison",
        passed: random.passed && entropy.passed && secs < 1800.0 && log.environment.corpus_pairs <= 5000,
        detail: format!(
            "{} pairs, {} seeds, {secs:.0}s; vs random {}: {}; vs max-entropy {}: {}",
            log.environment.corpus_pairs,
            cfg.seeds.len(),
            if random.passed { "ok" } else { "behind" },
            random.detail,
            if entropy.passed { "ok" } else { "behind" },
            entropy.detail
        ),
    };
    let sel = Outcome {
        id: 7,
        name: "misprediction selection vs random",
        passed: rate.passed,
        detail: rate.detail.clone(),
    };
    (e2e, sel)
}

fn scalability() -> Outcome {
    let cfg = ExperimentConfig {
        data: risk_sampling::harness::DataSource::Synthetic(risk_sampling::dataset::PublicationsConfig {
            works: 2200,
            ..Default::default()
        }),
        max_pairs: None,
        ..ExperimentConfig::default()
    };
    let pool = risk_weighted_pool(&cfg, 100, 0).expect("scaling pool");
    let rows = bench_scaling(&pool, 100, &[2000, 4000, 8000], 3, &FastPamConfig::default()).expect("scaling run");
    let growth: Vec<f64> = rows.windows(2).map(|w| w[1].runtime_ms / w[0].runtime_ms).collect();
    let swap_ratio = rows[2].swaps as f64 / rows[0].swaps.max(1) as f64;
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("n={} {:.0}ms {} swaps", r.n, r.runtime_ms, r.swaps))
        .collect();
    Outcome {
        id: 8,
        name: "scalability",
        passed: growth.iter().all(|&g| g <= 4.5) && swap_ratio < 4.0,
        detail: format!(
            "{}; runtime growth per doubling {:.2}/{:.2}, swap ratio {swap_ratio:.2}",
            table.join(", "),
            growth[0],
            growth[1]
        ),
    }
}

#[test]
fn acceptance() {
    let mut outcomes = vec![
        oracle_equivalence(),
        stress_suite(),
        scaling_invariance(),
        bound_suites(),
        risk_model_sanity(),
    ];
    let (e2e, sel) = comparison_run();
    outcomes.push(e2e);
    outcomes.push(sel);
    outcomes.push(scalability());

    for o in &outcomes {
        println!(
            "{} [{}] {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail
        );
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.is_empty(), "acceptance criteria failed: {failed:?}");
}
