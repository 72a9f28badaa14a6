//! Experiment orchestration: configuration, training runs, cell evaluation, sweeps and plots.

pub mod config;
pub mod eval;
pub mod plots;
pub mod sweep;
pub mod train;

pub use config::{Cell, ContextKind, EvalConfig, ExperimentConfig, ModelConfig, Split, SweepConfig};
pub use eval::{evaluate, CellResult, EvalReport};
pub use plots::emit_plots;
pub use sweep::{run_sweep, write_sweep, AlphaRow, CheckRow, ResultRow, SweepOutput};
pub use train::{run_training, training_context, training_example, RunSummary, TrainedRun};
