use serde::{Deserialize, Serialize};

use super::{DenseNet, Gradients};
use crate::error::{Error, Result};
use crate::numerics::TrainData;
use crate::seed::Rng;

/// Probability head plus per-example loss applied to a network's raw output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `‖softmax(z) − y‖²`
    SoftmaxSquared,
    /// `(sigmoid(z) − s)²` on a scalar output.
    SigmoidSquared,
    /// `−Σ y_k ln softmax(z)_k`
    SoftmaxCrossEntropy,
}

/// Per-example targets, one row per input.
pub type Targets = Vec<Vec<f64>>;

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("softmax of non-finite logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss of one example and its gradient with respect to the raw output.
pub fn loss_and_grad(kind: LossKind, output: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if output.len() != target.len() {
        return Err(Error::Shape {
            context: "loss target",
            expected: output.len(),
            got: target.len(),
        });
    }
    match kind {
        LossKind::SoftmaxSquared => {
            let p = softmax(output)?;
            let resid: Vec<f64> = p.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect();
            let loss = resid.iter().map(|r| 0.25 * r * r).sum();
            let inner: f64 = p.iter().zip(&resid).map(|(a, r)| a * r).sum();
            let grad = p.iter().zip(&resid).map(|(a, r)| a * (r - inner)).collect();
            Ok((loss, grad))
        }
        LossKind::SoftmaxCrossEntropy => {
            let p = softmax(output)?;
            let mass: f64 = target.iter().sum();
            let loss = -target
                .iter()
                .zip(&p)
                .filter(|(y, _)| **y != 0.0)
                .map(|(y, q)| y * q.ln())
                .sum::<f64>();
            let grad = p.iter().zip(target).map(|(q, y)| q * mass - y).collect();
            Ok((loss, grad))
        }
        LossKind::SigmoidSquared => {
            if output.len() != 1 {
                return Err(Error::Shape {
                    context: "sigmoid head",
                    expected: 1,
                    got: output.len(),
                });
            }
            let s = sigmoid(output[0]);
            let r = s - target[0];
            Ok((r * r, vec![2.0 * r * s * (1.0 - s)]))
        }
    }
}

/// Gradient of the mean weighted loss `(1/n) Σ w_i L_i` over the whole batch.
pub fn backprop_grad(net: &DenseNet, data: &TrainData, kind: LossKind) -> Result<(f64, Gradients)> {
    data.validate()?;
    let all: Vec<usize> = (0..data.len()).collect();
    batch_grad(net, data, &all, kind, None)
}

pub(crate) fn batch_grad(
    net: &DenseNet,
    data: &TrainData,
    idx: &[usize],
    kind: LossKind,
    mut dropout: Option<(f64, &mut Rng)>,
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(net);
    let mut total = 0.0;
    for &i in idx {
        let w = data.weights[i];
        let trace = match dropout.as_mut() {
            Some((rate, rng)) => net.forward_trace(&data.inputs[i], Some((*rate, &mut **rng)))?,
            None => net.forward_trace(&data.inputs[i], None)?,
        };
        if w == 0.0 {
            continue;
        }
        if trace.output.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                epoch: 0,
                detail: "non-finite network output".into(),
            });
        }
        let (loss, mut d_out) = loss_and_grad(kind, &trace.output, &data.targets[i])?;
        total += w * loss;
        d_out.iter_mut().for_each(|d| *d *= w);
        net.backward(&trace, &d_out, &mut grads);
    }
    let n = idx.len().max(1) as f64;
    grads.scale(1.0 / n);
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            detail: format!("loss {loss}"),
        });
    }
    Ok((loss, grads))
}

/// Mean weighted loss over the whole dataset, without dropout.
pub fn mean_loss(net: &DenseNet, data: &TrainData, kind: LossKind) -> Result<f64> {
    let mut total = 0.0;
    for ((x, t), w) in data.inputs.iter().zip(&data.targets).zip(&data.weights) {
        if *w == 0.0 {
            continue;
        }
        let out = net.forward(x)?;
        total += w * loss_and_grad(kind, &out, t)?.0;
    }
    Ok(total / data.len().max(1) as f64)
}
