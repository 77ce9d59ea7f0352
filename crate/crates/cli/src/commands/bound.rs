use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use shiftcal_core::metrics::{
    adversarial_instance, lambda_for, random_instance, theorem1_bound_with_lambda, tight_instance, BoundInstance,
    BoundReport,
};
use shiftcal_core::scenarios::{EnumerableDomain, Scenario};
use shiftcal_core::seed;

use crate::error::{CliError, Result};
use crate::output::{ensure_dir, write_atomic, write_json};

/// Largest tolerated negative slack.
pub const SLACK_TOL: f64 = 1e-9;
/// Largest tolerated slack magnitude on the tight instance.
pub const TIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BoundOptions {
    pub scenario: String,
    pub trials: usize,
    pub seed: u64,
    /// Defaults to the domain's largest true weight.
    pub clamp_bound: Option<f64>,
    /// Replaces `(1 + U)⁴`; only for checking that violations are caught.
    pub debug_lambda: Option<f64>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            scenario: "grid-K3".into(),
            trials: 100,
            seed: 0,
            clamp_bound: None,
            debug_lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub instance: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub chain_violations: Vec<String>,
    /// Diagnostic only: the unscaled bounded-loss step, which needs losses ≤ 1.
    pub unit_loss_step: bool,
}

impl BoundRow {
    fn new(instance: String, report: &BoundReport) -> Self {
        Self {
            instance,
            lhs: report.lhs,
            rhs: report.rhs,
            slack: report.slack,
            chain_violations: report.chain.violations(),
            unit_loss_step: report.chain.unit_loss_step_holds(),
        }
    }

    fn holds(&self) -> bool {
        self.slack >= -SLACK_TOL && self.chain_violations.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct BoundSummary {
    pub clamp_bound: f64,
    pub lambda: f64,
    /// Random instances, in trial order.
    pub trials: Vec<BoundRow>,
    pub tight: BoundRow,
    pub adversarial: BoundRow,
    pub csv_path: PathBuf,
}

impl BoundSummary {
    pub fn min_slack(&self) -> f64 {
        self.trials.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn chain_violations(&self) -> usize {
        self.trials.iter().filter(|r| !r.chain_violations.is_empty()).count()
    }

    pub fn bound_violations(&self) -> usize {
        self.trials.iter().filter(|r| r.slack < -SLACK_TOL).count()
    }
}

#[derive(Serialize)]
struct Violation<'a> {
    row: &'a BoundRow,
    clamp_bound: f64,
    lambda: f64,
    instance: &'a BoundInstance,
}

/// Checks the bound and its proof chain on random instances, the tight
/// instance and the adversarial instance. Writes `bound.csv`; on any failure
/// also writes `bound-violation.json` and returns [`CliError::BoundViolation`].
pub fn verify_bound(opts: &BoundOptions, out_dir: &Path) -> Result<BoundSummary> {
    let scenario = Scenario::builtin(&opts.scenario)?;
    let domain = scenario.require_domain()?;
    let u = opts.clamp_bound.unwrap_or_else(|| domain.max_weight());
    let lambda = opts.debug_lambda.unwrap_or_else(|| lambda_for(u));
    let eval = |d: &EnumerableDomain, inst: &BoundInstance| {
        theorem1_bound_with_lambda(d, &inst.forecasts, &inst.g_hat, u, lambda)
    };

    let mut trials = Vec::with_capacity(opts.trials);
    let mut first_bad: Option<(BoundRow, BoundInstance)> = None;
    for trial in 0..opts.trials {
        let inst = random_instance(domain, u, seed::derive(opts.seed, trial as u64))?;
        let row = BoundRow::new(format!("{trial}"), &eval(domain, &inst)?);
        if !row.holds() && first_bad.is_none() {
            first_bad = Some((row.clone(), inst));
        }
        trials.push(row);
    }
    let (det, tight_inst) = tight_instance(domain)?;
    let tight = BoundRow::new("tight".into(), &eval(&det, &tight_inst)?);
    if (!tight.holds() || tight.slack.abs() > TIGHT_TOL) && first_bad.is_none() {
        first_bad = Some((tight.clone(), tight_inst));
    }
    let adv_inst = adversarial_instance(domain)?;
    let adversarial = BoundRow::new("adversarial".into(), &eval(domain, &adv_inst)?);
    if !adversarial.holds() && first_bad.is_none() {
        first_bad = Some((adversarial.clone(), adv_inst));
    }

    ensure_dir(out_dir)?;
    let csv_path = out_dir.join("bound.csv");
    let mut csv = String::from("instance,lhs,rhs,slack,chain_ok,unit_loss_step\n");
    for r in trials.iter().chain([&tight, &adversarial]) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.instance,
            r.lhs,
            r.rhs,
            r.slack,
            r.chain_violations.is_empty(),
            r.unit_loss_step
        );
    }
    write_atomic(&csv_path, csv.as_bytes())?;

    let path = out_dir.join("bound-violation.json");
    if let Some((row, instance)) = first_bad {
        write_json(
            &path,
            &Violation {
                row: &row,
                clamp_bound: u,
                lambda,
                instance: &instance,
            },
        )?;
        return Err(CliError::BoundViolation(format!(
            "instance {} has slack {:e} and {} broken chain links (details in {})",
            row.instance,
            row.slack,
            row.chain_violations.len(),
            path.display()
        )));
    }
    // A violation report from an earlier run no longer applies.
    if path.exists() {
        std::fs::remove_file(&path).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(BoundSummary {
        clamp_bound: u,
        lambda,
        trials,
        tight,
        adversarial,
        csv_path,
    })
}
