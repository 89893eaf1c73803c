//! Training orchestration, evaluation, parameter sweeps, persistence, and
//! reporting around the `qsagent-core` algorithms.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod rules;
pub mod sweep;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use error::{HarnessError, Result};
pub use eval::{evaluate, AgentKind, Aggregate, EvalOptions, EvalReport, EvalRow};
pub use rules::{export_rules, rules_text};
pub use sweep::{sweep, SweepParam, SweepReport, SweepRow};
pub use train::{train, train_to_dir, training_csv, TrainOutput, TrainRow};
