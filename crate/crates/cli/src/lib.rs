//! Command-line pipeline over the solver core: sample initial conditions,
//! pretrain the auto-decoder, fine-tune a latent code for a held-out
//! sample, evolve the parameters in time, solve the pseudospectral
//! reference, and compare the two.
//!
//! Every command is deterministic given the configuration and master seed;
//! timestamps only ever go to the sidecar `run.log`.

// validation uses `!(x > 0.0)` so NaN is rejected alongside out-of-range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::fmt;

/// Process-level failure classes, mapped to exit codes: configuration
/// errors exit 2, numerical blow-ups 3, missing upstream artifacts 4.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Blowup(String),
    MissingArtifact { path: String, hint: String },
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Blowup(_) => 3,
            CliError::MissingArtifact { .. } => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Blowup(msg) => write!(f, "numerical blow-up: {msg}"),
            CliError::MissingArtifact { path, hint } => {
                write!(f, "missing artifact `{path}` ({hint})")
            }
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ngm_core::io::IoError> for CliError {
    fn from(e: ngm_core::io::IoError) -> Self {
        CliError::Io(e.to_string())
    }
}
