//! Scenario configs, the multi-engine runner, bundled scenarios and the
//! acceptance suite behind the `edyn` binary.

use std::path::PathBuf;

pub mod acceptance;
pub mod config;
pub mod report;
pub mod runner;
pub mod scenarios;

pub use config::{Engine, ScenarioConfig};
pub use report::ComparisonReport;
pub use runner::{run_scenario, RunOutput};

/// Default output directory when neither `--out` nor the environment sets one.
pub const DEFAULT_OUT_DIR: &str = "edyn-out";
pub const OUT_DIR_ENV: &str = "EDYN_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Numerical(#[from] edyn_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const THRESHOLD: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const NUMERICAL: u8 = 3;
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config { .. } | Self::Io(_) => exit::CONFIG,
            Self::Numerical(_) => exit::NUMERICAL,
        }
    }
}

/// `--out` wins, then `EDYN_OUT_DIR`, then the scenario's own `output.dir`,
/// then `edyn-out`.
pub fn resolve_out_dir(flag: Option<PathBuf>, scenario: Option<&str>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| scenario.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}
