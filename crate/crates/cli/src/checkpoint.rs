//! Model checkpoints: JSON holding every layer's dimensions, activation and
//! flat parameters, plus both temperatures and the clamp bound. Floats use
//! the shortest representation that parses back to the same bits.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shiftcal_core::calibrator::{Forecaster, Method, MethodOutcome};
use shiftcal_core::discriminator::SourceDiscriminator;

use crate::error::{CliError, Result};
use crate::output::{read_json, write_json};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub method: Method,
    pub seed: u64,
    pub data: String,
    pub clamp_bound: f64,
    pub forecaster: Forecaster,
    pub discriminator: Option<SourceDiscriminator>,
}

impl Checkpoint {
    pub fn from_outcome(outcome: &MethodOutcome, data: &str, clamp_bound: f64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            method: outcome.method,
            seed: outcome.seed,
            data: data.to_string(),
            clamp_bound,
            forecaster: outcome.forecaster.clone(),
            discriminator: outcome.discriminator.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = read_json(path)?;
        if ck.format_version != FORMAT_VERSION {
            return Err(CliError::Config(format!(
                "{}: checkpoint format {} is not supported (expected {FORMAT_VERSION})",
                path.display(),
                ck.format_version
            )));
        }
        ck.forecaster.head.validate()?;
        for stage in &ck.forecaster.features.stages {
            stage.validate()?;
        }
        Ok(ck)
    }
}

/// File stem of a method, e.g. `fl-iw-temp`.
pub fn method_slug(method: Method) -> String {
    method.as_str().to_ascii_lowercase().replace('+', "-")
}

pub fn file_name(method: Method, seed: u64) -> String {
    format!("{}-seed{seed}.json", method_slug(method))
}
