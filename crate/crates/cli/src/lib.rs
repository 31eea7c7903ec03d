//! Configuration, orchestration and CSV output for `wellscatter` runs.

pub mod config;
pub mod output;
pub mod recipes;
pub mod run;

pub use config::{parse_config, ConfigError, Mode, RunConfig};
pub use output::RunManifest;
pub use recipes::emit_figure_recipes;
pub use run::{execute, RunError};
