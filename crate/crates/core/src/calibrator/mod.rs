//! Temperature scaling of a forecaster, plain or importance weighted.
//!
//! The fitted objective is the weighted classification error
//! `mean (ŵ + 1/2) · ‖softmax(T·z) − y‖²`; in recalibration mode only the
//! coordinate of the classifier's predicted label enters the loss.

mod pipeline;

pub use pipeline::{
    run_method, run_methods, train_base_classifier, BaseClassifier, Method, MethodOutcome, PipelineConfig,
    RunInputs, StageTiming,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fit_log_scale, softmax, DenseNet, FeatureMap, ScalarFit, SgdConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    Full,
    #[default]
    Recalibration,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `x ↦ softmax(T · head(features(x)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecaster {
    pub features: FeatureMap,
    pub head: DenseNet,
    pub temperature: f64,
    pub mode: CalibrationMode,
}

impl Forecaster {
    pub fn new(features: FeatureMap, head: DenseNet, temperature: f64, mode: CalibrationMode) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self {
            features,
            head,
            temperature,
            mode,
        })
    }

    pub fn classes(&self) -> usize {
        self.head.output_dim()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.head.forward(&self.features.apply(x)?)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict_with_label(x)?.1)
    }

    /// Predicted label (argmax of the raw logits) and the forecast.
    pub fn predict_with_label(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let z = self.logits(x)?;
        let scaled: Vec<f64> = z.iter().map(|v| self.temperature * v).collect();
        Ok((argmax(&z), softmax(&scaled)?))
    }

    pub fn predicted_label(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        Self::new(self.features.clone(), self.head.clone(), temperature, self.mode)
    }
}

/// Logits, labels and estimated weights of the examples used to fit `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBatch {
    pub logits: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Estimated importance weights `ŵ ≥ 0`; all ones for plain scaling.
    pub weights: Vec<f64>,
}

impl CalibrationBatch {
    pub fn new(logits: Vec<Vec<f64>>, labels: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let batch = Self {
            logits,
            labels,
            weights,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn unweighted(logits: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let n = logits.len();
        Self::new(logits, labels, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.logits.len();
        for (context, len) in [("batch labels", self.labels.len()), ("batch weights", self.weights.len())] {
            if len != n {
                return Err(Error::Shape {
                    context,
                    expected: n,
                    got: len,
                });
            }
        }
        if n == 0 {
            return Err(Error::invalid("calibration batch is empty"));
        }
        let k = self.logits[0].len();
        if k < 2 {
            return Err(Error::invalid("calibration needs at least two classes"));
        }
        for (row, &y) in self.logits.iter().zip(&self.labels) {
            if row.len() != k {
                return Err(Error::Shape {
                    context: "batch logits",
                    expected: k,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("batch logits must be finite"));
            }
            if y >= k {
                return Err(Error::invalid(format!("label {y} outside 0..{k}")));
            }
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        Ok(())
    }

    /// `ŵ + 1/2`, which equals `1/ĝ − 1/2` and is at least 1/2.
    pub fn weight_factor(&self, i: usize) -> f64 {
        let factor = self.weights[i] + 0.5;
        debug_assert!(factor >= 0.5);
        factor
    }
}

/// Squared error of `softmax(t·z)` against label `y` and its derivative in `t`.
fn brier_and_grad(z: &[f64], y: usize, t: f64, mode: CalibrationMode) -> Result<(f64, f64)> {
    let scaled: Vec<f64> = z.iter().map(|v| t * v).collect();
    let p = softmax(&scaled)?;
    // dp_k/dt = p_k (z_k − Σ_j p_j z_j)
    let z_bar: f64 = p.iter().zip(z).map(|(pk, zk)| pk * zk).sum();
    let target = |k: usize| if k == y { 1.0 } else { 0.0 };
    Ok(match mode {
        CalibrationMode::Full => p.iter().zip(z).enumerate().fold((0.0, 0.0), |(l, g), (k, (pk, zk))| {
            let r = pk - target(k);
            (l + r * r, g + 2.0 * r * pk * (zk - z_bar))
        }),
        CalibrationMode::Recalibration => {
            let a = argmax(z);
            let r = p[a] - target(a);
            (r * r, 2.0 * r * p[a] * (z[a] - z_bar))
        }
    })
}

fn weighted_loss_grad(batch: &CalibrationBatch, idx: &[usize], t: f64, mode: CalibrationMode) -> Result<(f64, f64)> {
    let (mut loss, mut grad) = (0.0, 0.0);
    for &i in idx {
        let (l, g) = brier_and_grad(&batch.logits[i], batch.labels[i], t, mode)?;
        let factor = batch.weight_factor(i);
        loss += factor * l;
        grad += factor * g;
    }
    let n = idx.len() as f64;
    Ok((loss / n, grad / n))
}

/// Mean of `(ŵ + 1/2) · squared error` at temperature `t`.
pub fn weighted_brier(batch: &CalibrationBatch, t: f64, mode: CalibrationMode) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {t}")));
    }
    let all: Vec<usize> = (0..batch.len()).collect();
    Ok(weighted_loss_grad(batch, &all, t, mode)?.0)
}

pub fn fit_temperature(batch: &CalibrationBatch, config: &SgdConfig, mode: CalibrationMode) -> Result<ScalarFit> {
    batch.validate()?;
    fit_log_scale(batch.len(), config, |idx, t| weighted_loss_grad(batch, idx, t, mode))
}

/// Unweighted mean squared error at temperature `t`.
pub fn plain_brier(logits: &[Vec<f64>], labels: &[usize], t: f64, mode: CalibrationMode) -> Result<f64> {
    let mut total = 0.0;
    for (z, &y) in logits.iter().zip(labels) {
        total += brier_and_grad(z, y, t, mode)?.0;
    }
    Ok(total / logits.len().max(1) as f64)
}

/// Plain temperature scaling without any weight factor.
pub fn fit_temperature_plain(
    logits: &[Vec<f64>],
    labels: &[usize],
    config: &SgdConfig,
    mode: CalibrationMode,
) -> Result<ScalarFit> {
    if logits.len() != labels.len() {
        return Err(Error::Shape {
            context: "plain calibration labels",
            expected: logits.len(),
            got: labels.len(),
        });
    }
    fit_log_scale(logits.len(), config, |idx, t| {
        let (mut loss, mut grad) = (0.0, 0.0);
        for &i in idx {
            let (l, g) = brier_and_grad(&logits[i], labels[i], t, mode)?;
            loss += l;
            grad += g;
        }
        let n = idx.len() as f64;
        Ok((loss / n, grad / n))
    })
}

/// Default temperature-fitting schedule: full-batch descent for 1000 epochs.
pub fn default_temperature_config(seed: u64) -> SgdConfig {
    SgdConfig {
        learning_rate: 1.0,
        epochs: 1000,
        batch_size: usize::MAX,
        seed,
        dropout: 0.0,
    }
}
