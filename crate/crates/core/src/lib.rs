//! Fairness-aware post-processing of binary classifiers.
//!
//! The crate picks a separate decision threshold for a privileged and an
//! unprivileged group so that a preference-weighted combination of utility,
//! statistical parity difference and weighted average odds difference is
//! minimized, subject to a disparate-impact band.
//!
//! The pipeline is:
//!
//! 1. [`cohort`]: load or synthesize scored records.
//! 2. [`fairmetrics`]: evaluate SPD, DI, WAOD and utility at a [`ThresholdPair`].
//! 3. [`tradeoff`]: sample the threshold square to show the fairness-utility space.
//! 4. [`ahp`]: turn three pairwise importance ratings into metric weights.
//! 5. [`optimizer`]: minimize the scalarized objective with a Tree-of-Parzen-Estimators search.

pub mod ahp;
pub mod cohort;
pub mod fairmetrics;
pub mod optimizer;
pub mod rng;
pub mod tradeoff;

pub use ahp::{AhpError, AhpRatings, AhpResult, ComparisonMatrix, Rating, Scales, Weights};
pub use cohort::{Cohort, CohortError, Group, GroupMap, ScoredRecord, SyntheticSpec};
pub use fairmetrics::{
    CostModel, DiBounds, DiRatio, GroupConfusion, GroupConfusions, MetricPoint, ThresholdPair,
};
pub use optimizer::{
    Objective, ObjectiveValue, OptimizationResult, OptimizerConfig, OptimizerError, TpeConfig,
    Trial, TrialStatus,
};
pub use tradeoff::{CloudFilter, MetricRanges, TradeoffCloud, TradeoffError};
