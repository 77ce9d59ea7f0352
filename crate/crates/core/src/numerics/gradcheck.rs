//! Central finite-difference gradient checker.
//!
//! Only uses forward evaluation of the loss, never the backward pass, so it
//! serves as an independent oracle for [`backprop_grad`](super::backprop_grad).

use super::{backprop_grad, mean_loss, DenseNet, LossKind, TrainData};
use crate::error::Result;

/// Denominator floor for relative errors on near-zero gradient entries.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

pub fn central_differences(
    net: &DenseNet,
    data: &TrainData,
    kind: LossKind,
    step: f64,
) -> Result<Vec<f64>> {
    let base = net.params();
    let mut probe = net.clone();
    let mut params = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        params[i] = base[i] + step;
        probe.set_params(&params)?;
        let up = mean_loss(&probe, data, kind)?;
        params[i] = base[i] - step;
        probe.set_params(&params)?;
        let down = mean_loss(&probe, data, kind)?;
        params[i] = base[i];
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

pub fn check_gradients(net: &DenseNet, data: &TrainData, kind: LossKind, step: f64) -> Result<GradCheck> {
    let analytic = backprop_grad(net, data, kind)?.1.flat();
    let numeric = central_differences(net, data, kind, step)?;
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .enumerate()
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(GradCheck {
        analytic,
        numeric,
        max_rel_error,
        worst_index,
    })
}
