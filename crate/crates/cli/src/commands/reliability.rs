use std::path::{Path, PathBuf};

use shiftcal_core::metrics::{reliability_bins, EceReport};
use shiftcal_core::scenarios::load_csv;

use crate::checkpoint::Checkpoint;
use crate::error::Result;
use crate::output::write_atomic;
use crate::svg::reliability_svg;

#[derive(Debug, Clone)]
pub struct ReliabilityOutcome {
    pub report: EceReport,
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
}

/// Bins the checkpoint's forecasts on labeled `data` and writes
/// `<stem>-reliability.csv` and `<stem>-reliability.svg`.
pub fn reliability(checkpoint: &Path, data: &Path, bins: usize, out_dir: &Path) -> Result<ReliabilityOutcome> {
    let ck = Checkpoint::load(checkpoint)?;
    let dataset = load_csv(data, Some(ck.forecaster.classes()))?;
    let report = reliability_bins(&ck.forecaster, &dataset, bins)?;
    let stem = checkpoint
        .file_stem()
        .map_or_else(|| "model".to_string(), |s| s.to_string_lossy().into_owned());
    let csv_path = out_dir.join(format!("{stem}-reliability.csv"));
    let svg_path = out_dir.join(format!("{stem}-reliability.svg"));
    write_atomic(&csv_path, report.to_csv().as_bytes())?;
    let title = format!("{} seed {}", ck.method, ck.seed);
    write_atomic(&svg_path, reliability_svg(&report, &title).as_bytes())?;
    Ok(ReliabilityOutcome {
        report,
        csv_path,
        svg_path,
    })
}
