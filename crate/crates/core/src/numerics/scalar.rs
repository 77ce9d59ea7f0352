use rand::seq::SliceRandom;

use super::SgdConfig;
use crate::error::{Error, Result};
use crate::seed;

/// Bounds of the searched scale, `[0.01, 100]` in log space.
pub const LOG_SCALE_MIN: f64 = -4.605_170_185_988_091;
pub const LOG_SCALE_MAX: f64 = 4.605_170_185_988_092;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFit {
    /// Best scale seen, evaluated on the full data.
    pub scale: f64,
    pub loss: f64,
    /// Full-data loss at scale 1.
    pub initial_loss: f64,
    pub loss_trace: Vec<f64>,
}

/// Fits a positive scale `T = exp(θ)` by gradient descent on θ.
///
/// `eval(indices, T)` returns the mean loss over `indices` and its derivative
/// with respect to `T`. With `batch_size >= n` every epoch is one full-batch
/// step with step halving on overshoot; otherwise each epoch is a reshuffled
/// pass of mini-batch steps. The returned scale is the best full-data value
/// over all epochs, starting from `T = 1`, so it never does worse than `T = 1`.
pub fn fit_log_scale<F>(n: usize, config: &SgdConfig, mut eval: F) -> Result<ScalarFit>
where
    F: FnMut(&[usize], f64) -> Result<(f64, f64)>,
{
    config.validate()?;
    if n == 0 {
        return Err(Error::invalid("cannot fit a temperature on an empty batch"));
    }
    let all: Vec<usize> = (0..n).collect();
    let initial_loss = eval(&all, 1.0)?.0;
    if !initial_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            detail: format!("initial loss {initial_loss}"),
        });
    }
    let mut theta = 0.0f64;
    let mut lr = config.learning_rate;
    let mut best = (1.0, initial_loss);
    let mut trace = Vec::with_capacity(config.epochs);
    let mut order = all.clone();
    let mut rng = seed::rng(config.seed);
    let full_batch = config.batch_size >= n;
    let step = |theta: f64, lr: f64, grad_t: f64| {
        let t = theta.exp();
        (theta - lr * grad_t * t).clamp(LOG_SCALE_MIN, LOG_SCALE_MAX)
    };

    for epoch in 1..=config.epochs {
        let loss = if full_batch {
            let (loss, grad) = eval(&all, theta.exp())?;
            let mut accepted = loss;
            for _ in 0..40 {
                let candidate = step(theta, lr, grad);
                let cand_loss = eval(&all, candidate.exp())?.0;
                if cand_loss <= loss {
                    theta = candidate;
                    accepted = cand_loss;
                    break;
                }
                lr *= 0.5;
            }
            accepted
        } else {
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch_size) {
                let (_, grad) = eval(chunk, theta.exp())?;
                theta = step(theta, lr, grad);
            }
            eval(&all, theta.exp())?.0
        };
        if !loss.is_finite() || !theta.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("temperature loss {loss}"),
            });
        }
        trace.push(loss);
        if loss < best.1 {
            best = (theta.exp(), loss);
        }
    }
    Ok(ScalarFit {
        scale: best.0,
        loss: best.1,
        initial_loss,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(target: f64) -> impl FnMut(&[usize], f64) -> Result<(f64, f64)> {
        move |_, t| Ok(((t - target).powi(2), 2.0 * (t - target)))
    }

    #[test]
    fn finds_interior_minimum() {
        let config = SgdConfig {
            learning_rate: 0.5,
            epochs: 500,
            batch_size: 10,
            ..SgdConfig::default()
        };
        let fit = fit_log_scale(10, &config, quadratic(2.5)).unwrap();
        assert!((fit.scale - 2.5).abs() < 1e-6, "{}", fit.scale);
        assert!(fit.loss <= fit.initial_loss);
    }

    #[test]
    fn clamps_to_search_range() {
        let config = SgdConfig {
            learning_rate: 0.5,
            epochs: 2000,
            batch_size: 10,
            ..SgdConfig::default()
        };
        let fit = fit_log_scale(10, &config, quadratic(1e4)).unwrap();
        assert!((fit.scale - 100.0).abs() < 1e-9);
    }

    #[test]
    fn never_worse_than_unit_scale() {
        // stochastic steps on a noisy objective may wander; the best epoch is kept
        let config = SgdConfig {
            learning_rate: 50.0,
            epochs: 20,
            batch_size: 1,
            ..SgdConfig::default()
        };
        let fit = fit_log_scale(4, &config, |idx, t| {
            let sign = if idx[0] % 2 == 0 { 1.0 } else { -1.0 };
            Ok(((t - 1.0).powi(2), sign * 10.0))
        })
        .unwrap();
        assert!(fit.loss <= fit.initial_loss);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(fit_log_scale(0, &SgdConfig::default(), quadratic(1.0)).is_err());
    }
}
