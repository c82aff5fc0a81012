//! Experiment harness behind the `irkm` binary.
//!
//! | module   | role                                             |
//! |----------|--------------------------------------------------|
//! | `config` | JSON experiment configuration and validation     |
//! | `target` | text form of multilinear targets                 |
//! | `runner` | single runs and their trace/summary artifacts    |
//! | `sweep`  | sample-size × seed grids with aggregated CSVs    |
//! | `verify` | quick oracle and invariant self-checks           |

pub mod config;
pub mod runner;
pub mod sweep;
pub mod target;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration; the message starts with the offending key.
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] irkm_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// Process exit code: 2 for configuration errors, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if is_input_error(e) => 2,
            _ => 3,
        }
    }
}

fn is_input_error(e: &irkm_core::Error) -> bool {
    use irkm_core::Error as E;
    matches!(
        e,
        E::FileNotFound(_) | E::Parse { .. } | E::MissingColumn(_) | E::Config(_) | E::AlphaOutOfRange(_)
    )
}

/// `v<crate version> (<git describe>)`.
pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"), " (", env!("IRKM_GIT_DESCRIBE"), ")");

pub fn version_string() -> &'static str {
    VERSION
}
