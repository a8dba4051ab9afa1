//! Command-line front end: TOML run configuration, one subcommand per
//! analysis, JSON/CSV/SVG outputs and a fixed exit-code contract.

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

use std::path::Path;

pub use commands::CommandOutput;
pub use config::RunConfig;
pub use error::CliError;

/// Write every file of a command's output under `dir`.
pub fn write_outputs(dir: &Path, out: &CommandOutput) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for (name, contents) in &out.files {
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}
