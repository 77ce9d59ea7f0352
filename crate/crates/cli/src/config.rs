//! Run configuration: one JSON document per run.
//!
//! ```json
//! {
//!   "scenario": "box-shift",
//!   "sizes": { "source_train": 2000, "source_validation": 1000,
//!              "target_unlabeled": 2000, "target_eval": 2000 },
//!   "data_seed": 1,
//!   "seeds": [0, 1, 2],
//!   "methods": ["Temp", "IW+Temp", "FL+Temp", "FL+IW+Temp"],
//!   "pipeline": { "bins": 15, "clamp_bound": 99.0 },
//!   "out_dir": "out"
//! }
//! ```
//!
//! `data` (four CSV paths) may replace `scenario`. Omitted fields take their
//! defaults, including every `pipeline` field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shiftcal_core::calibrator::{Method, PipelineConfig};
use shiftcal_core::scenarios::{load_csv, PoolSizes, RunPools, Scenario};

use crate::error::{CliError, Result};
use crate::output::read_json;

/// CSV files in the dataset format; `target_unlabeled` may carry labels,
/// which are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFiles {
    pub source_train: PathBuf,
    pub source_validation: PathBuf,
    pub target_unlabeled: PathBuf,
    pub target_eval: PathBuf,
    /// Label count; inferred from the labeled files when absent.
    #[serde(default)]
    pub classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<String>,
    pub data: Option<DataFiles>,
    pub sizes: PoolSizes,
    /// Seed of the sampled pools; every training seed sees the same data.
    pub data_seed: u64,
    pub seeds: Vec<u64>,
    pub methods: Vec<String>,
    pub pipeline: PipelineConfig,
    /// When false, `wall_ms` is written as `NA` and no timings file is
    /// produced, which keeps every output byte-reproducible.
    pub record_wall_clock: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            data: None,
            sizes: PoolSizes::default(),
            data_seed: 0,
            seeds: (0..10).collect(),
            methods: Method::ALL.iter().map(|m| m.to_string()).collect(),
            pipeline: PipelineConfig::default(),
            record_wall_clock: false,
            out_dir: None,
        }
    }
}

impl RunConfig {
    /// Reads and validates; relative data paths resolve against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config: RunConfig = read_json(path)?;
        if let Some(data) = config.data.as_mut() {
            let base = path.parent().unwrap_or(Path::new(""));
            for p in [
                &mut data.source_train,
                &mut data.source_validation,
                &mut data.target_unlabeled,
                &mut data.target_eval,
            ] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.scenario, &self.data) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either `scenario` or `data`, not both".into())),
            (None, None) => return Err(CliError::Config("missing `scenario` or `data`".into())),
            (Some(name), None) => {
                Scenario::builtin(name)?;
            }
            (None, Some(files)) => {
                for p in [
                    &files.source_train,
                    &files.source_validation,
                    &files.target_unlabeled,
                    &files.target_eval,
                ] {
                    if !p.is_file() {
                        return Err(CliError::Config(format!("data file {} does not exist", p.display())));
                    }
                }
            }
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("`seeds` must not be empty".into()));
        }
        self.parsed_methods()?;
        self.pipeline.validate()?;
        Ok(())
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>> {
        if self.methods.is_empty() {
            return Err(CliError::Config("`methods` must not be empty".into()));
        }
        let mut out = Vec::with_capacity(self.methods.len());
        for name in &self.methods {
            let m: Method = name.parse()?;
            if out.contains(&m) {
                return Err(CliError::Config(format!("method {m} listed twice")));
            }
            out.push(m);
        }
        Ok(out)
    }

    /// Short label for reports: the scenario name or "csv".
    pub fn data_label(&self) -> &str {
        self.scenario.as_deref().unwrap_or("csv")
    }

    pub fn load_pools(&self) -> Result<RunPools> {
        if let Some(name) = &self.scenario {
            return Ok(Scenario::builtin(name)?.sample_pools(&self.sizes, self.data_seed)?);
        }
        let files = self.data.as_ref().expect("validated");
        let source_train = load_csv(&files.source_train, files.classes)?;
        let classes = files.classes.unwrap_or(source_train.classes);
        let source_validation = load_csv(&files.source_validation, Some(classes))?;
        let target_unlabeled = load_csv(&files.target_unlabeled, Some(classes))?.unlabeled();
        let target_eval = load_csv(&files.target_eval, Some(classes))?;
        Ok(RunPools {
            source_train,
            source_validation,
            target_unlabeled,
            target_eval,
        })
    }
}
