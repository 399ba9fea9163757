//! Sweeps, figure pipelines and config handling for the `bistab` binary.

pub mod config;
pub mod error;
pub mod figures;
pub mod sweep;

pub use config::{parse_config, parse_config_str, SweepSpec, Task};
pub use error::{exit, CliError};
pub use figures::{run_figure, FigureOptions, FIGURE_IDS};
pub use sweep::{run_sweep, SweepOutcome, SweepRecord};
