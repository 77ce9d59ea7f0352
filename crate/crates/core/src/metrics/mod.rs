//! Evaluation quantities: binned calibration error, reliability bins, the
//! Brier decomposition, the target-calibration bound with its inequality
//! chain, and the importance-weight spread report.

mod bound;
mod brier;
mod iw;

pub use bound::{
    adversarial_instance, bound_chain, lambda_for, random_instance, theorem1_bound, theorem1_bound_with_lambda, tight_instance, BoundChain,
    BoundInstance, BoundReport, ChainLink,
};
pub use brier::{brier_decomposition, BrierDecomposition};
pub use iw::{iw_distribution_report, IwReport, IwRow, DEFAULT_TOP_K};

use serde::{Deserialize, Serialize};

use crate::calibrator::Forecaster;
use crate::error::{Error, Result};
use crate::scenarios::{Dataset, EnumerableDomain, Measure};

pub const DEFAULT_BINS: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub count: usize,
    /// Zero for empty bins.
    pub mean_confidence: f64,
    /// Zero for empty bins.
    pub accuracy: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EceReport {
    pub edges: Vec<f64>,
    pub bins: Vec<BinStats>,
    pub ece: f64,
    pub overconfident_ece: f64,
}

impl EceReport {
    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    /// `(mean confidence, accuracy, mass)` of each nonempty bin.
    pub fn diagram_points(&self) -> Vec<(f64, f64, f64)> {
        self.bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| (b.mean_confidence, b.accuracy, b.mass))
            .collect()
    }

    /// CSV with header `bin,mean_conf,accuracy,mass`, one row per bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,mean_conf,accuracy,mass\n");
        for (i, b) in self.bins.iter().enumerate() {
            out.push_str(&format!("{i},{},{},{}\n", b.mean_confidence, b.accuracy, b.mass));
        }
        out
    }
}

/// `c_b = b / B` for `b = 0..=B`.
pub fn equal_width_edges(bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return Err(Error::invalid("bin count must be at least 1"));
    }
    Ok((0..=bins).map(|b| b as f64 / bins as f64).collect())
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::invalid("need at least two bin edges"));
    }
    if edges[0] != 0.0 || edges[edges.len() - 1] != 1.0 {
        return Err(Error::invalid("bin edges must start at 0 and end at 1"));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("bin edges must be strictly increasing"));
    }
    Ok(())
}

/// Bin `b` holds `edges[b] ≤ conf < edges[b+1]`; the last bin also holds 1.
fn bin_index(edges: &[f64], conf: f64) -> usize {
    let last = edges.len() - 2;
    edges.partition_point(|&e| e <= conf).saturating_sub(1).min(last)
}

/// Core binning on weighted outcomes in `[0, 1]`.
///
/// Each bin contributes mass × |mean confidence − accuracy|, with masses and
/// means weighted by `weights`.
pub fn weighted_report(
    confidences: &[f64],
    outcomes: &[f64],
    weights: &[f64],
    edges: &[f64],
) -> Result<EceReport> {
    validate_edges(edges)?;
    let n = confidences.len();
    for (context, len) in [("outcomes", outcomes.len()), ("weights", weights.len())] {
        if len != n {
            return Err(Error::Shape {
                context,
                expected: n,
                got: len,
            });
        }
    }
    if n == 0 {
        return Err(Error::invalid("calibration error of an empty sample"));
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::invalid(format!("confidence {c} outside [0, 1]")));
    }
    if let Some(o) = outcomes.iter().find(|o| !(0.0..=1.0).contains(*o)) {
        return Err(Error::invalid(format!("outcome {o} outside [0, 1]")));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("total weight must be positive"));
    }

    let nb = edges.len() - 1;
    let mut count = vec![0usize; nb];
    let mut mass = vec![0.0; nb];
    let mut conf_sum = vec![0.0; nb];
    let mut out_sum = vec![0.0; nb];
    for i in 0..n {
        let b = bin_index(edges, confidences[i]);
        count[b] += 1;
        mass[b] += weights[i];
        conf_sum[b] += weights[i] * confidences[i];
        out_sum[b] += weights[i] * outcomes[i];
    }
    let mut ece = 0.0;
    let mut over = 0.0;
    let bins = (0..nb)
        .map(|b| {
            let filled = mass[b] > 0.0;
            let stats = BinStats {
                count: count[b],
                mean_confidence: if filled { conf_sum[b] / mass[b] } else { 0.0 },
                accuracy: if filled { out_sum[b] / mass[b] } else { 0.0 },
                mass: mass[b] / total,
            };
            let gap = stats.mean_confidence - stats.accuracy;
            ece += stats.mass * gap.abs();
            over += stats.mass * gap.max(0.0);
            stats
        })
        .collect();
    Ok(EceReport {
        edges: edges.to_vec(),
        bins,
        ece,
        overconfident_ece: over,
    })
}

fn as_outcomes(correct: &[bool]) -> Vec<f64> {
    correct.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect()
}

pub fn ece_with_edges(confidences: &[f64], correct: &[bool], edges: &[f64]) -> Result<EceReport> {
    weighted_report(confidences, &as_outcomes(correct), &vec![1.0; confidences.len()], edges)
}

/// Binned calibration error with `bins` equal-width bins.
pub fn ece(confidences: &[f64], correct: &[bool], bins: usize) -> Result<EceReport> {
    ece_with_edges(confidences, correct, &equal_width_edges(bins)?)
}

/// One-sided variant counting only bins where confidence exceeds accuracy.
pub fn overconfident_ece(confidences: &[f64], correct: &[bool], bins: usize) -> Result<f64> {
    Ok(ece(confidences, correct, bins)?.overconfident_ece)
}

/// Confidence of the predicted label and whether it matches the true label.
pub fn prediction_vectors(probs: &[Vec<f64>], predicted: &[usize], labels: &[usize]) -> Result<(Vec<f64>, Vec<bool>)> {
    if probs.len() != predicted.len() || probs.len() != labels.len() {
        return Err(Error::Shape {
            context: "prediction vectors",
            expected: probs.len(),
            got: predicted.len().min(labels.len()),
        });
    }
    let conf = probs.iter().zip(predicted).map(|(p, &a)| p[a]).collect();
    let correct = predicted.iter().zip(labels).map(|(a, y)| a == y).collect();
    Ok((conf, correct))
}

/// Reliability bins of a forecaster on labeled evaluation data. Confidence is
/// the forecast probability of the classifier's predicted label.
pub fn reliability_bins(forecaster: &Forecaster, data: &Dataset, bins: usize) -> Result<EceReport> {
    let labels = data.labels()?;
    let mut probs = Vec::with_capacity(data.len());
    let mut predicted = Vec::with_capacity(data.len());
    for x in &data.features {
        let (label, p) = forecaster.predict_with_label(x)?;
        probs.push(p);
        predicted.push(label);
    }
    let (conf, correct) = prediction_vectors(&probs, &predicted, labels)?;
    ece(&conf, &correct, bins)
}

/// Exact reliability bins on an enumerable domain: every point enters with
/// its measure as weight and its probability of a correct prediction as outcome.
pub fn exact_reliability(
    domain: &EnumerableDomain,
    forecasts: &[Vec<f64>],
    predicted: &[usize],
    which: Measure,
    bins: usize,
) -> Result<EceReport> {
    let m = domain.len();
    if forecasts.len() != m || predicted.len() != m {
        return Err(Error::Shape {
            context: "forecast table",
            expected: m,
            got: forecasts.len().min(predicted.len()),
        });
    }
    let conf: Vec<f64> = forecasts.iter().zip(predicted).map(|(f, &a)| f[a]).collect();
    let outcome: Vec<f64> = domain.labels.iter().zip(predicted).map(|(l, &a)| l[a]).collect();
    weighted_report(&conf, &outcome, domain.measure(which), &equal_width_edges(bins)?)
}
