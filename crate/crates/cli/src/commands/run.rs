use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use shiftcal_core::calibrator::{run_methods, Method, MethodOutcome, RunInputs};
use shiftcal_core::scenarios::to_csv_string;

use crate::checkpoint::{file_name, Checkpoint};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, mean_std, write_atomic, write_json};

pub const RESULTS_HEADER: &str = "method,seed,ece,overconf_ece,cls_error,wall_ms";

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub seed: u64,
    pub ece: f64,
    pub overconf_ece: f64,
    /// Fraction of target evaluation rows whose predicted label is wrong.
    pub cls_error: f64,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<ResultRow>,
    pub out_dir: PathBuf,
    /// Runs whose learned features lost too much source accuracy.
    pub degenerate: Vec<(Method, u64)>,
}

impl ResultRow {
    fn from_outcome(o: &MethodOutcome, record_wall_clock: bool) -> Self {
        Self {
            method: o.method,
            seed: o.seed,
            ece: o.report.ece,
            overconf_ece: o.report.overconfident_ece,
            cls_error: o.classification_error,
            wall_ms: record_wall_clock.then(|| o.timings.iter().map(|t| t.ms).sum()),
        }
    }
}

/// Every (method, seed) pair; seeds run in parallel, each single-threaded.
/// Rows that finished are written even when others fail.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let methods = config.parsed_methods()?;
    let pools = config.load_pools()?;
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("config.json"), config)?;
    let data_dir = out_dir.join("data");
    for (name, ds) in [
        ("source_train", &pools.source_train),
        ("source_validation", &pools.source_validation),
        ("target_unlabeled", &pools.target_unlabeled),
        ("target_eval", &pools.target_eval),
    ] {
        write_atomic(&data_dir.join(format!("{name}.csv")), to_csv_string(ds).as_bytes())?;
    }

    let inputs = RunInputs::from(&pools);
    let per_seed: Vec<(u64, shiftcal_core::Result<Vec<MethodOutcome>>)> = config
        .seeds
        .par_iter()
        .map(|&seed| (seed, run_methods(&methods, inputs, &config.pipeline, seed)))
        .collect();

    let ck_dir = out_dir.join("checkpoints");
    let mut rows = Vec::new();
    let mut timings = String::from("method,seed,stage,ms\n");
    let mut degenerate = Vec::new();
    let mut failures = Vec::new();
    for (seed, result) in per_seed {
        match result {
            Ok(outcomes) => {
                for o in outcomes {
                    Checkpoint::from_outcome(&o, config.data_label(), config.pipeline.clamp_bound)
                        .save(&ck_dir.join(file_name(o.method, seed)))?;
                    for t in &o.timings {
                        let _ = writeln!(timings, "{},{},{},{}", o.method, seed, t.stage, t.ms);
                    }
                    if o.degenerate {
                        degenerate.push((o.method, seed));
                    }
                    rows.push(ResultRow::from_outcome(&o, config.record_wall_clock));
                }
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    // Method order from the config, then seed order from the config.
    let seed_pos = |s: u64| config.seeds.iter().position(|&x| x == s);
    rows.sort_by_key(|r| (methods.iter().position(|&m| m == r.method), seed_pos(r.seed)));

    write_atomic(&out_dir.join("results.csv"), results_csv(&rows).as_bytes())?;
    write_atomic(&out_dir.join("summary.csv"), summary_csv(&methods, &rows).as_bytes())?;
    if config.record_wall_clock {
        write_atomic(&out_dir.join("timings.csv"), timings.as_bytes())?;
    }
    if let Some(first) = failures.first() {
        return Err(CliError::PartialFailure {
            failed: failures.len(),
            total: config.seeds.len(),
            first: first.clone(),
        });
    }
    Ok(RunOutcome {
        rows,
        out_dir: out_dir.to_path_buf(),
        degenerate,
    })
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in rows {
        let wall = r.wall_ms.map_or_else(|| "NA".to_string(), |w| format!("{w:.3}"));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{wall}",
            r.method, r.seed, r.ece, r.overconf_ece, r.cls_error
        );
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per method: run count, then mean, sample std and median of each metric.
pub fn summary_csv(methods: &[Method], rows: &[ResultRow]) -> String {
    let mut out = String::from(
        "method,runs,ece_mean,ece_std,ece_median,overconf_ece_mean,overconf_ece_std,cls_error_mean,cls_error_std\n",
    );
    for &m in methods {
        let of = |f: fn(&ResultRow) -> f64| -> Vec<f64> { rows.iter().filter(|r| r.method == m).map(f).collect() };
        let ece = of(|r| r.ece);
        if ece.is_empty() {
            continue;
        }
        let (em, es) = mean_std(&ece);
        let (om, os) = mean_std(&of(|r| r.overconf_ece));
        let (cm, cs) = mean_std(&of(|r| r.cls_error));
        let _ = writeln!(out, "{m},{},{em},{es},{},{om},{os},{cm},{cs}", ece.len(), median(ece.clone()));
    }
    out
}
