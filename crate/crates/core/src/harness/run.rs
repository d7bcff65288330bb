use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{DataSource, Environment, ExperimentConfig, IterationRecord, QueryRecord, RunLog};
use crate::classifier::{train_classifier, ClassifierModel, Prediction, TrainingConfig};
use crate::dataset::{generate_publications, load_corpus, make_partitions, Corpus, PartitionSpec, PartitionState};
use crate::error::{Error, Result};
use crate::featurizer::{MetricMatrix, MetricSchema, RepresentationMatrix, Standardizer};
use crate::risk::{generate_risk_features, score_pool, train_risk_model, PoolPair, ValidationPair};
use crate::sampler::{lipschitz_weights, select_baseline, select_risk_batch, SelectionContext, StrategyKind};
use crate::PairId;

/// Corpus with its metrics and representation, shared by every run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus: Corpus,
    pub schema: MetricSchema,
    pub metrics: MetricMatrix,
    pub reps: RepresentationMatrix,
    pub subsampled: bool,
}

impl Prepared {
    pub fn from_corpus(corpus: Corpus) -> Self {
        let schema = MetricSchema::for_corpus(&corpus);
        let metrics = schema.metric_matrix(&corpus);
        let reps = Standardizer::fit(&metrics).transform(&metrics);
        Prepared {
            corpus,
            schema,
            metrics,
            reps,
            subsampled: false,
        }
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let corpus = match &cfg.data {
        DataSource::Files { left, right, pairs } => load_corpus(left, right, pairs)?,
        DataSource::Synthetic(p) => generate_publications(p)?,
    };
    let full = corpus.len();
    let corpus = match cfg.max_pairs {
        Some(max) if max < full => {
            log::info!("subsampling {full} pairs to {max} (seed {})", cfg.subsample_seed);
            corpus.stratified_subsample(max, cfg.subsample_seed)
        }
        _ => corpus,
    };
    let mut prep = Prepared::from_corpus(corpus);
    prep.subsampled = prep.corpus.len() < full;
    Ok(prep)
}

fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The first `ceil(ratio * |V|)` validation pairs of a seeded shuffle.
pub fn validation_subset(state: &PartitionState, ratio: f64, seed: u64) -> Vec<PairId> {
    let mut ids: Vec<PairId> = state.validation().iter().copied().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, 0x7A11)));
    let keep = ((ratio * ids.len() as f64).ceil() as usize).min(ids.len());
    ids.truncate(keep);
    ids.sort_unstable();
    ids
}

/// Trains the round's classifier. The initialization seed depends only on
/// the run seed and the iteration, so every strategy starts from the same
/// model.
pub fn train_round(
    prep: &Prepared,
    state: &PartitionState,
    validation: &[PairId],
    cfg: &TrainingConfig,
    seed: u64,
    iteration: usize,
) -> Result<ClassifierModel> {
    let train: Vec<(&[f64], _)> = state
        .labeled_examples()
        .into_iter()
        .map(|(id, y)| (prep.reps.get(id), y))
        .collect();
    let val: Vec<(&[f64], _)> = validation
        .iter()
        .map(|&id| (prep.reps.get(id), state.known_label(id).expect("validation label")))
        .collect();
    train_classifier(&train, &val, cfg, mix(seed, iteration as u64 + 1))
}

/// Classifier output and misprediction risk over the pool.
#[derive(Debug, Clone)]
pub struct RoundScores {
    pub predictions: Vec<Prediction>,
    pub risks: BTreeMap<PairId, f64>,
}

pub(crate) fn score_round(
    prep: &Prepared,
    state: &PartitionState,
    validation: &[PairId],
    model: &ClassifierModel,
    cfg: &ExperimentConfig,
) -> Result<RoundScores> {
    let labeled = state.labeled_examples();
    let rows: Vec<usize> = labeled.iter().map(|(id, _)| id.0).collect();
    let labels: Vec<_> = labeled.iter().map(|(_, y)| *y).collect();
    let features = generate_risk_features(&prep.metrics, &rows, &labels, &cfg.risk);

    let val_pairs = validation
        .iter()
        .map(|&id| {
            Ok(ValidationPair {
                coverage: features.cover_pair(prep.metrics.row(id.0)),
                probability: model.predict_prob(prep.reps.get(id))?,
                label: state.known_label(id).expect("validation label"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (params, report) = train_risk_model(&val_pairs, &features, &cfg.risk);
    log::debug!(
        "risk model: {} rules, {} validation mispredictions, loss {:?} -> {:?}",
        features.rules.len(),
        report.mispredictions,
        report.loss_history.first(),
        report.loss_history.last()
    );

    let predictions = state
        .unlabeled()
        .par_iter()
        .map(|&id| model.predict(id, prep.reps.get(id)))
        .collect::<Result<Vec<_>>>()?;
    let pool: Vec<PoolPair> = predictions
        .iter()
        .map(|p| PoolPair {
            pair_id: p.pair_id,
            metrics: prep.metrics.row(p.pair_id.0),
            probability: p.probability,
        })
        .collect();
    let risks = score_pool(&pool, &features, &params)
        .into_iter()
        .map(|r| (r.pair_id, r.risk))
        .collect();
    Ok(RoundScores { predictions, risks })
}

fn run_job(
    prep: &Prepared,
    cfg: &ExperimentConfig,
    strategy: StrategyKind,
    seed: u64,
) -> Result<(Vec<IterationRecord>, Vec<QueryRecord>)> {
    let spec = PartitionSpec {
        seed_size: cfg.seed_size,
        val_fraction: cfg.val_fraction,
        test_fraction: cfg.test_fraction,
    };
    let mut state = make_partitions(&prep.corpus, spec, seed)?;
    let validation = validation_subset(&state, cfg.validation_ratio, seed);
    let test: Vec<(&[f64], _)> = state
        .test_examples()
        .into_iter()
        .map(|(id, y)| (prep.reps.get(id), y))
        .collect();
    let mut records = Vec::with_capacity(cfg.iterations + 1);
    let mut queries = Vec::with_capacity(cfg.iterations * cfg.budget);

    for iteration in 0..=cfg.iterations {
        let model = train_round(prep, &state, &validation, &cfg.classifier, seed, iteration)?;
        let m = model.evaluate_f1(&test)?;
        let mut record = IterationRecord {
            strategy,
            seed,
            iteration,
            labeled_size: state.labeled().len(),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            mispred_selected: None,
            batch_risk_mean: None,
            sampler_ms: None,
            swaps: None,
        };
        if iteration == cfg.iterations {
            records.push(record);
            break;
        }
        if state.unlabeled().len() < cfg.budget {
            return Err(Error::PoolExhausted {
                iteration,
                remaining: state.unlabeled().len(),
                budget: cfg.budget,
            });
        }

        let scores = score_round(prep, &state, &validation, &model, cfg)?;
        let started = Instant::now();
        let query: Vec<PairId> = match strategy {
            StrategyKind::Risk => {
                let weights = lipschitz_weights(&scores.risks, &prep.reps, state.labeled(), &cfg.weights)?;
                let (q, result) =
                    select_risk_batch(&prep.reps, state.labeled(), state.unlabeled(), &weights, cfg.budget, &cfg.fastpam)?;
                record.swaps = Some(result.swaps);
                q
            }
            other => {
                let ctx = SelectionContext {
                    pool: state.unlabeled(),
                    labeled: state.labeled(),
                    predictions: &scores.predictions,
                    reps: &prep.reps,
                };
                select_baseline(other, &ctx, cfg.budget, mix(seed, 0xB000 + iteration as u64))?
            }
        };
        record.sampler_ms = Some(started.elapsed().as_secs_f64() * 1e3);

        let by_id: BTreeMap<PairId, &Prediction> = scores.predictions.iter().map(|p| (p.pair_id, p)).collect();
        let mut wrong = 0;
        let mut risk_sum = 0.0;
        for &id in &query {
            let p = by_id[&id];
            let mispredicted = p.predicted_label != state.oracle_label(id)?;
            wrong += mispredicted as usize;
            let risk = scores.risks[&id];
            risk_sum += risk;
            queries.push(QueryRecord {
                strategy,
                seed,
                iteration,
                pair_id: id,
                probability: p.probability,
                risk,
                mispredicted,
            });
        }
        record.mispred_selected = Some(wrong);
        record.batch_risk_mean = Some(risk_sum / query.len() as f64);
        records.push(record);

        let batch: BTreeSet<PairId> = query.into_iter().collect();
        state = state.apply_query(&batch)?;
    }
    Ok((records, queries))
}

/// Runs every (strategy, seed) combination of the config.
pub fn run_active_learning(cfg: &ExperimentConfig) -> Result<RunLog> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    run_prepared(&prep, cfg)
}

pub(crate) fn run_prepared(prep: &Prepared, cfg: &ExperimentConfig) -> Result<RunLog> {
    cfg.validate()?;
    let jobs: Vec<(usize, StrategyKind, u64)> = cfg
        .strategies
        .iter()
        .enumerate()
        .flat_map(|(k, &s)| cfg.seeds.iter().map(move |&seed| (k, s, seed)))
        .collect();
    let mut results = jobs
        .par_iter()
        .map(|&(k, strategy, seed)| {
            log::info!("running {strategy} with seed {seed}");
            run_job(prep, cfg, strategy, seed).map(|r| (k, seed, r))
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|(k, seed, _)| (*k, *seed));

    let mut records = Vec::new();
    let mut queries = Vec::new();
    for (_, _, (r, q)) in results {
        records.extend(r);
        queries.extend(q);
    }
    Ok(RunLog {
        config: cfg.clone(),
        environment: Environment {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: cfg.seeds.clone(),
            corpus_pairs: prep.corpus.len(),
            corpus_positives: prep.corpus.positive_count(),
            subsampled: prep.subsampled,
        },
        records,
        queries,
    })
}

impl Prepared {
    /// Runs the loop on already prepared data.
    pub fn run(&self, cfg: &ExperimentConfig) -> Result<RunLog> {
        run_prepared(self, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PublicationsConfig;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic(PublicationsConfig {
                works: 250,
                ..Default::default()
            }),
            max_pairs: Some(900),
            seed_size: 40,
            budget: 20,
            iterations: 2,
            seeds: vec![1, 2],
            ..Default::default()
        }
    }

    #[test]
    fn grid_and_bookkeeping() {
        let cfg = small_config();
        let log = run_active_learning(&cfg).unwrap();
        assert_eq!(log.records.len(), 4 * 2 * 3);
        for r in &log.records {
            assert_eq!(r.labeled_size, cfg.seed_size + r.iteration * cfg.budget);
            assert_eq!(r.mispred_selected.is_some(), r.iteration < cfg.iterations);
            assert_eq!(r.swaps.is_some(), r.strategy == StrategyKind::Risk && r.iteration < cfg.iterations);
        }
        assert_eq!(log.queries.len(), 4 * 2 * 2 * cfg.budget);
        assert!(log.environment.subsampled);
        assert_eq!(log.environment.corpus_pairs, 900);
        // same classifier before the first query, whatever the strategy
        for seed in &cfg.seeds {
            let first: Vec<f64> = log
                .records
                .iter()
                .filter(|r| r.seed == *seed && r.iteration == 0)
                .map(|r| r.f1)
                .collect();
            assert!(first.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn deterministic() {
        let cfg = ExperimentConfig {
            strategies: vec![StrategyKind::Risk, StrategyKind::Random],
            seeds: vec![5],
            ..small_config()
        };
        let prep = prepare(&cfg).unwrap();
        let mut a = prep.run(&cfg).unwrap();
        let mut b = prep.run(&cfg).unwrap();
        for r in a.records.iter_mut().chain(b.records.iter_mut()) {
            r.sampler_ms = None;
        }
        assert_eq!(a, b);
    }

    #[test]
    fn pool_exhaustion_is_reported() {
        let cfg = ExperimentConfig {
            budget: 400,
            iterations: 3,
            strategies: vec![StrategyKind::Random],
            seeds: vec![0],
            ..small_config()
        };
        assert!(matches!(run_active_learning(&cfg), Err(Error::PoolExhausted { .. })));
    }

    #[test]
    fn validation_subset_sizes() {
        let cfg = small_config();
        let prep = prepare(&cfg).unwrap();
        let spec = PartitionSpec {
            seed_size: 40,
            val_fraction: 0.1,
            test_fraction: 0.2,
        };
        let state = make_partitions(&prep.corpus, spec, 3).unwrap();
        let full = validation_subset(&state, 1.0, 3);
        assert_eq!(full.len(), state.validation().len());
        let half = validation_subset(&state, 0.5, 3);
        assert_eq!(half.len(), state.validation().len().div_ceil(2));
        assert!(half.iter().all(|id| state.validation().contains(id)));
        assert_eq!(half, validation_subset(&state, 0.5, 3));
    }

    #[test]
    fn initial_models_identical_across_strategies() {
        let cfg = small_config();
        let prep = prepare(&cfg).unwrap();
        let spec = PartitionSpec {
            seed_size: cfg.seed_size,
            val_fraction: cfg.val_fraction,
            test_fraction: cfg.test_fraction,
        };
        let state = make_partitions(&prep.corpus, spec, 9).unwrap();
        let val = validation_subset(&state, 1.0, 9);
        let a = train_round(&prep, &state, &val, &cfg.classifier, 9, 0).unwrap();
        let b = train_round(&prep, &state, &val, &cfg.classifier, 9, 0).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
