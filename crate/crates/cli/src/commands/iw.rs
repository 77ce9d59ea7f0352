use std::path::{Path, PathBuf};

use rayon::prelude::*;
use shiftcal_core::calibrator::{run_method, Method, RunInputs};
use shiftcal_core::metrics::{iw_distribution_report, IwReport};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, write_atomic};
use crate::svg::iw_svg;

#[derive(Debug, Clone)]
pub struct IwOutcome {
    pub report: IwReport,
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
}

/// Fits the `IW+Temp` discriminator once per seed and ranks source
/// validation rows by their mean estimated weight across seeds.
pub fn iw_report(config: &RunConfig, top_k: usize, out_dir: &Path) -> Result<IwOutcome> {
    config.validate()?;
    if config.seeds.len() < 2 {
        return Err(CliError::Config("the weight report needs at least two seeds".into()));
    }
    let pools = config.load_pools()?;
    let inputs = RunInputs::from(&pools);
    let runs: Vec<Vec<f64>> = config
        .seeds
        .par_iter()
        .map(|&seed| run_method(Method::IwTemp, inputs, &config.pipeline, seed, None).map(|o| o.validation_weights))
        .collect::<shiftcal_core::Result<_>>()?;
    let report = iw_distribution_report(&runs, top_k)?;
    ensure_dir(out_dir)?;
    let csv_path = out_dir.join("iw_report.csv");
    let svg_path = out_dir.join("iw_report.svg");
    write_atomic(&csv_path, report.to_csv().as_bytes())?;
    let title = format!("estimated weights on {}", config.data_label());
    write_atomic(&svg_path, iw_svg(&report, &title).as_bytes())?;
    Ok(IwOutcome {
        report,
        csv_path,
        svg_path,
    })
}
