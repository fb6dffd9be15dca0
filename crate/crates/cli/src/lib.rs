//! Run configuration and the `parse`, `stylize`, `render` and `eval`
//! commands behind the `temo` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_eval, cmd_parse, cmd_render, cmd_stylize, load_checkpoint, Artifacts, RESOLVED_CONFIG};
pub use config::{ProviderSpec, RenderSpec, RunConfig, OUT_DIR_ENV};
pub use error::{exit_code, CliError, CliResult};
