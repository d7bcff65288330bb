//! The simulated active-learning loop, its run log and the scaling
//! benchmark.

mod output;
mod run;
mod scaling;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierModel, TrainingConfig};
use crate::dataset::{PartitionState, PublicationsConfig};
use crate::error::{Error, Result};
use crate::featurizer::RepresentationMatrix;
use crate::risk::RiskConfig;
use crate::sampler::{FastPamConfig, StrategyKind, WeightConfig};
use crate::PairId;

pub use output::{emit_run_log, RUN_LOG_HEADER};
pub use run::{prepare, run_active_learning, train_round, validation_subset, Prepared, RoundScores};
pub use scaling::{bench_scaling, risk_weighted_pool, ScalingPool, ScalingRow};

/// Where the corpus comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Files { left: PathBuf, right: PathBuf, pairs: PathBuf },
    Synthetic(PublicationsConfig),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(PublicationsConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Stratified subsample cap applied after loading.
    pub max_pairs: Option<usize>,
    pub subsample_seed: u64,
    pub seed_size: usize,
    pub budget: usize,
    /// Query rounds; each run logs `iterations + 1` evaluations.
    pub iterations: usize,
    pub strategies: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Share of the validation split used for early stopping and risk
    /// training.
    pub validation_ratio: f64,
    pub classifier: TrainingConfig,
    pub risk: RiskConfig,
    pub weights: WeightConfig,
    pub fastpam: FastPamConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::default(),
            max_pairs: Some(5000),
            subsample_seed: 0,
            seed_size: 100,
            budget: 100,
            iterations: 5,
            strategies: StrategyKind::ALL.to_vec(),
            seeds: (0..10).collect(),
            val_fraction: 0.1,
            test_fraction: 0.2,
            validation_ratio: 1.0,
            classifier: TrainingConfig::default(),
            risk: RiskConfig::default(),
            weights: WeightConfig::default(),
            fastpam: FastPamConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config; relative data paths are taken relative to the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DataSource::Files { left, right, pairs } = &mut cfg.data {
            for p in [left, right, pairs] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.budget == 0 {
            return fail("budget must be at least 1");
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty");
        }
        if self.strategies.is_empty() {
            return fail("strategies must not be empty");
        }
        if !(self.validation_ratio > 0.0 && self.validation_ratio <= 1.0) {
            return fail("validation_ratio must be in (0, 1]");
        }
        if self.seed_size == 0 {
            return fail("seed_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.val_fraction) || !(0.0..1.0).contains(&self.test_fraction) {
            return fail("split fractions must be in [0, 1)");
        }
        if self.val_fraction + self.test_fraction >= 1.0 {
            return fail("validation and test fractions leave no pool");
        }
        if !(self.risk.theta > 0.5 && self.risk.theta < 1.0) {
            return fail("risk.theta must be in (0.5, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub iteration: usize,
    pub labeled_size: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Pairs of the selected batch the classifier got wrong; absent on the
    /// final, evaluation-only round.
    pub mispred_selected: Option<usize>,
    pub batch_risk_mean: Option<f64>,
    pub sampler_ms: Option<f64>,
    /// fastPAM swaps (risk strategy only).
    pub swaps: Option<usize>,
}

impl IterationRecord {
    pub fn selection_rate(&self, budget: usize) -> Option<f64> {
        self.mispred_selected.map(|m| m as f64 / budget as f64)
    }
}

/// One selected pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub iteration: usize,
    pub pair_id: PairId,
    pub probability: f64,
    pub risk: f64,
    pub mispredicted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub seeds: Vec<u64>,
    pub corpus_pairs: usize,
    pub corpus_positives: usize,
    pub subsampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: ExperimentConfig,
    pub environment: Environment,
    /// Ordered by strategy (config order), seed, iteration.
    pub records: Vec<IterationRecord>,
    pub queries: Vec<QueryRecord>,
}

impl RunLog {
    pub fn records_for(&self, strategy: StrategyKind) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter(move |r| r.strategy == strategy)
    }

    /// Test F1 averaged over seeds, per iteration.
    pub fn mean_f1(&self, strategy: StrategyKind) -> Vec<f64> {
        let mut sums = vec![0.0; self.config.iterations + 1];
        let mut counts = vec![0usize; self.config.iterations + 1];
        for r in self.records_for(strategy) {
            sums[r.iteration] += r.f1;
            counts[r.iteration] += 1;
        }
        sums.iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect()
    }

    /// `(seed, rate)` at one iteration.
    pub fn selection_rates(&self, strategy: StrategyKind, iteration: usize) -> Vec<(u64, f64)> {
        self.records_for(strategy)
            .filter(|r| r.iteration == iteration)
            .filter_map(|r| r.selection_rate(self.config.budget).map(|x| (r.seed, x)))
            .collect()
    }
}

/// Outcome of one directional comparison on a run log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Directional checks of risk sampling against the baselines present in the
/// log: mean F1 at least random's from iteration 1 on, at least
/// max-entropy's on half of those iterations or more, and a higher
/// misprediction selection rate than random's in the first round for at
/// least `min_seed_share` of the seeds.
pub fn compare_strategies(log: &RunLog, min_seed_share: f64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let present = |s| log.config.strategies.contains(&s);
    if !present(StrategyKind::Risk) {
        return out;
    }
    let risk = log.mean_f1(StrategyKind::Risk);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    if present(StrategyKind::Random) {
        let random = log.mean_f1(StrategyKind::Random);
        let passed = (1..risk.len()).all(|i| risk[i] >= random[i]);
        out.push(CheckOutcome {
            name: "f1-vs-random",
            passed,
            detail: format!("risk [{}] random [{}]", fmt(&risk), fmt(&random)),
        });

        let risk_rates = log.selection_rates(StrategyKind::Risk, 0);
        let random_rates = log.selection_rates(StrategyKind::Random, 0);
        let wins = risk_rates
            .iter()
            .filter(|(seed, r)| random_rates.iter().any(|(s, q)| s == seed && r > q))
            .count();
        let needed = (min_seed_share * risk_rates.len() as f64).ceil() as usize;
        out.push(CheckOutcome {
            name: "selection-rate-vs-random",
            passed: !risk_rates.is_empty() && wins >= needed,
            detail: format!("risk ahead in {wins}/{} seeds (need {needed})", risk_rates.len()),
        });
    }
    if present(StrategyKind::MaxEntropy) {
        let entropy = log.mean_f1(StrategyKind::MaxEntropy);
        let later = risk.len().saturating_sub(1);
        let wins = (1..risk.len()).filter(|&i| risk[i] >= entropy[i]).count();
        out.push(CheckOutcome {
            name: "f1-vs-max-entropy",
            passed: later > 0 && 2 * wins >= later,
            detail: format!(
                "risk ahead at {wins}/{later} iterations; risk [{}] max-entropy [{}]",
                fmt(&risk),
                fmt(&entropy)
            ),
        });
    }
    out
}

/// Fraction of `query` whose prediction disagrees with the oracle label.
pub fn misprediction_selection_rate(
    query: &BTreeSet<PairId>,
    model: &ClassifierModel,
    reps: &RepresentationMatrix,
    oracle: &PartitionState,
) -> Result<f64> {
    if query.is_empty() {
        return Err(Error::Empty("query batch"));
    }
    let mut wrong = 0;
    for &id in query {
        if model.predict(id, reps.get(id))?.predicted_label != oracle.oracle_label(id)? {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / query.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig {
            max_pairs: Some(1200),
            seeds: vec![3, 4],
            strategies: vec![StrategyKind::Risk, StrategyKind::Random],
            ..Default::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "budget = 50\nstrategies = [\"risk\", \"max-entropy\"]\n[data]\nkind = \"synthetic\"\nworks = 300\n",
        )
        .unwrap();
        assert_eq!(cfg.budget, 50);
        assert_eq!(cfg.seed_size, 100);
        assert_eq!(cfg.strategies, vec![StrategyKind::Risk, StrategyKind::MaxEntropy]);
        match cfg.data {
            DataSource::Synthetic(p) => assert_eq!(p.works, 300),
            _ => panic!("expected synthetic data"),
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        for text in [
            "budget = 0",
            "seeds = []",
            "validation_ratio = 0.0",
            "validation_ratio = 1.5",
            "val_fraction = 0.6\ntest_fraction = 0.5",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
        assert!(matches!(ExperimentConfig::from_toml("strategies = [\"badge\"]"), Err(Error::Toml(_))));
        assert!(matches!(ExperimentConfig::from_toml("unknown_key = 1"), Err(Error::Toml(_))));
    }

    #[test]
    fn relative_paths_resolve_against_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(
            &path,
            "[data]\nkind = \"files\"\nleft = \"l.csv\"\nright = \"/abs/r.csv\"\npairs = \"p.csv\"\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_file(&path).unwrap();
        let DataSource::Files { left, right, .. } = cfg.data else {
            panic!("expected files");
        };
        assert_eq!(left, dir.path().join("l.csv"));
        assert_eq!(right, PathBuf::from("/abs/r.csv"));
    }
}
