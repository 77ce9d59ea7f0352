use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{batch_grad, mean_loss};
use super::{DenseNet, LossKind};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Inverted dropout on hidden layers during training passes only.
    pub dropout: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            batch_size: 64,
            seed: 0,
            dropout: 0.0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Inputs, targets and nonnegative per-example loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl TrainData {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let data = Self {
            inputs,
            targets,
            weights,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn unweighted(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        let n = inputs.len();
        Self::new(inputs, targets, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.inputs.len();
        if self.targets.len() != n {
            return Err(Error::Shape {
                context: "targets",
                expected: n,
                got: self.targets.len(),
            });
        }
        if self.weights.len() != n {
            return Err(Error::Shape {
                context: "example weights",
                expected: n,
                got: self.weights.len(),
            });
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid(format!(
                "example weights must be finite and nonnegative, got {w}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: DenseNet,
    /// Full-data loss after each epoch (no dropout).
    pub loss_trace: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_trace.last().copied()
    }
}

/// Mini-batch SGD on the mean weighted loss, reshuffling every epoch.
pub fn sgd_train(
    mut net: DenseNet,
    data: &TrainData,
    kind: LossKind,
    config: &SgdConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    data.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let mut order_rng = seed::rng(config.seed);
    let mut dropout_rng = seed::stage_rng(config.seed, 0xD0);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(config.batch_size) {
            let dropout = (config.dropout > 0.0).then_some((config.dropout, &mut dropout_rng));
            let (loss, grads) = batch_grad(&net, data, chunk, kind, dropout).map_err(|e| match e {
                Error::Diverged { detail, .. } => Error::Diverged { epoch, detail },
                other => other,
            })?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("mini-batch loss {loss}"),
                });
            }
            net.apply_update(&grads, config.learning_rate);
        }
        let loss = mean_loss(&net, data, kind)?;
        if !loss.is_finite() || !net.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("epoch loss {loss}"),
            });
        }
        loss_trace.push(loss);
    }
    Ok(TrainOutcome { net, loss_trace })
}
