//! Seeded data generators for the simulation designs, the warfarin dosing
//! study, and the replication harness.

pub mod quadratic;
pub mod replicate;
pub mod synthetic;
pub mod warfarin;

pub use quadratic::{gen_10d, oracle_best_response, QuadraticDesign10D, QuadraticModel, TestOracle};
pub use replicate::{replicate, replicate_with, summarize, BandwidthRule, ExperimentSpec, MetricSummary, ReplicationReport};
pub use synthetic::{gen_1d, gen_boundary, outcome_1d, true_value_1d, Sampling1D, SyntheticDesign1D};
pub use warfarin::{loss_band, surrogate_cohort, warfarin_simulate, Cohort, WarfarinConfig, WarfarinDesign, WarfarinReport};
