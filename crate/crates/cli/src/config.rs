use serde::{Deserialize, Serialize};
use thiserror::Error;

use prunecrit::criteria::CriterionParams;

use crate::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] prunecrit::Error),
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub alpha: f64,
    pub sigma0_sq: f64,
    pub eps0: f64,
    pub eps0_magnitude: f64,
    pub sp: Vec<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            alpha: 0.05,
            sigma0_sq: 1e-4,
            eps0: 0.01,
            eps0_magnitude: 0.01,
            sp: prunecrit::similarity::DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

/// Everything a run depends on, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub inputs: Vec<String>,
    pub criteria: Vec<String>,
    pub params: CriterionParams,
    pub thresholds: Thresholds,
    pub seed: u64,
    pub out_dir: String,
    pub format: Format,
}

impl RunConfig {
    pub fn new(command: &str, seed: u64, out_dir: &str, format: Format) -> Self {
        RunConfig {
            command: command.to_string(),
            inputs: Vec::new(),
            criteria: Vec::new(),
            params: CriterionParams::default(),
            thresholds: Thresholds::default(),
            seed,
            out_dir: out_dir.to_string(),
            format,
        }
    }
}
