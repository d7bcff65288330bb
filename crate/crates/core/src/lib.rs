//! Risk-weighted core-set active learning for entity resolution.
//!
//! The engine estimates how likely the current matcher is to mispredict each
//! unlabeled record pair, turns those risks into per-point Lipschitz weights
//! and picks the next labeling batch by solving a weighted k-medoids problem
//! in which the already-labeled pairs are fixed medoids.
//!
//! Layout:
//!
//! - [`dataset`]: two-table corpora, splits and the simulated labeling oracle.
//! - [`featurizer`]: per-attribute similarity metrics and the standardized
//!   pair representation used as the clustering metric space.
//! - [`classifier`]: logistic / one-hidden-layer matchers with early stopping.
//! - [`risk`]: one-sided rules, distribution aggregation, VaR scoring and
//!   learn-to-rank training of the risk model.
//! - [`sampler`]: Lipschitz weights, weighted fastPAM with fixed medoids,
//!   an exhaustive oracle and baseline strategies.
//! - [`verification`]: Monte Carlo checks of the Lipschitz and core-set bounds.
//! - [`harness`]: the simulated active-learning loop, run logs and the
//!   scaling benchmark.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod featurizer;
pub mod harness;
pub mod risk;
pub mod sampler;
pub mod verification;

pub use classifier::{ClassifierModel, ClassifierVariant, Metrics, Prediction, TrainingConfig};
pub use dataset::{Corpus, Label, PairId, PartitionState, Record, RecordPair, Split};
pub use error::{Error, Result};
pub use featurizer::{MetricDescriptor, MetricKind, MetricSchema, RepresentationMatrix, Standardizer};
pub use harness::{ExperimentConfig, IterationRecord, RunLog};
pub use risk::{PairRiskProfile, RiskConfig, RiskFeatureSet, RiskModelParams, RiskRule};
pub use sampler::{Distances, FastPamResult, SampleWeights, StrategyKind};
pub use verification::{BoundReport, ERToySpec, TinyRNNSpec};
