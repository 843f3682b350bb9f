//! Config files, multi-seed runs, checkpoints, plots and presets.

pub mod checkpoint;
pub mod config;
pub mod plots;
pub mod presets;
pub mod runner;

pub use checkpoint::Snapshot;
pub use config::{desk_agent, ExperimentConfig, OUT_ROOT_VAR};
pub use plots::{emit_plots, PlotMode, Series};
pub use presets::{preset, PRESET_NAMES};
pub use runner::{budget_line, resume, run_experiment, run_seed, BudgetLine, SeedResult, Summary, CODE_VERSION};
