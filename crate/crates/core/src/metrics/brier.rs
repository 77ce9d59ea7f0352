use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scenarios::{EnumerableDomain, Measure};

/// Exact expectations of `‖f̂ − y‖²`, `‖f̂ − c‖²` and `‖c‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrierDecomposition {
    pub classification_error: f64,
    pub calibration_error: f64,
    pub sharpness: f64,
}

impl BrierDecomposition {
    /// `classification − (calibration + 1 − sharpness)`; zero up to rounding.
    pub fn residual(&self) -> f64 {
        self.classification_error - (self.calibration_error + 1.0 - self.sharpness)
    }
}

/// Exact decomposition under `which`, with `y` drawn from the label table and
/// `c` from the grouping oracle.
pub fn brier_decomposition(
    domain: &EnumerableDomain,
    forecasts: &[Vec<f64>],
    which: Measure,
) -> Result<BrierDecomposition> {
    let c = domain.oracle_true_calibration(forecasts, which)?;
    let mu = domain.measure(which);
    let (mut cls, mut cal, mut sharp) = (0.0, 0.0, 0.0);
    for i in 0..domain.len() {
        if mu[i] == 0.0 {
            continue;
        }
        let f = &forecasts[i];
        let l = &domain.labels[i];
        // E_y ‖f − y‖² = Σ_k l_k (1 − f_k)² + (1 − l_k) f_k²
        let point_cls: f64 = f
            .iter()
            .zip(l)
            .map(|(fk, lk)| lk * (1.0 - fk).powi(2) + (1.0 - lk) * fk * fk)
            .sum();
        let point_cal: f64 = f.iter().zip(&c[i]).map(|(fk, ck)| (fk - ck).powi(2)).sum();
        let point_sharp: f64 = c[i].iter().map(|ck| ck * ck).sum();
        cls += mu[i] * point_cls;
        cal += mu[i] * point_cal;
        sharp += mu[i] * point_sharp;
    }
    Ok(BrierDecomposition {
        classification_error: cls,
        calibration_error: cal,
        sharpness: sharp,
    })
}
