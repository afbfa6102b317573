//! Experiment orchestration for reservoir-based place recognition.

pub mod config;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod holdout;
pub mod rerank;
pub mod sweep;

pub use config::{ExperimentConfig, ModelKind};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, run_models, ExperimentOutcome};
pub use grid::{grid_search, GridOutcome};
pub use holdout::{holdout_generalization, HoldoutOutcome};
pub use rerank::{rerank_top_k, PairScores};
pub use sweep::{start_point_sweep, SweepOutcome};
