//! Indistinguishable feature learning.
//!
//! An auxiliary map ψ on top of the frozen features φ is trained so that a
//! label head F̄ still predicts well from ψ∘φ while a discriminator head D̄
//! cannot tell source from target features. Updates alternate: `disc_steps`
//! steps of D̄ on the squared discrimination loss, then one joint step of
//! (ψ, F̄) on `label Brier − tradeoff · discrimination loss`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::discriminator::{build_discrimination_set, init_head, train_discriminator};
use crate::error::{Error, Result};
use crate::numerics::{
    batch_grad, loss_and_grad, sigmoid, Activation, DenseNet, Gradients, Layer, LossKind, SgdConfig, TrainData,
    TrainOutcome,
};
use crate::scenarios::one_hot;
use crate::seed;

/// Largest tolerated drop in source accuracy before a run is flagged degenerate.
pub const LABEL_GUARD_MARGIN: f64 = 0.10;

/// How the discrimination-loss threshold ends training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopRule {
    /// Stop once the loss falls below the threshold.
    #[default]
    Literal,
    /// Stop once the loss rises above the threshold.
    Inverted,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaltReason {
    Threshold,
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversarialConfig {
    /// Weight of the discrimination term in the generator objective.
    pub tradeoff: f64,
    pub disc_steps: usize,
    /// In `(0, 0.25]`.
    pub threshold: f64,
    pub stop_rule: StopRule,
    pub max_epochs: usize,
    /// Early stop once mean D̄ output exceeds this on source and falls below
    /// its complement on target for `patience` consecutive epochs.
    pub confidence_bound: f64,
    pub patience: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub disc_hidden: usize,
    pub seed: u64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            tradeoff: 1.0,
            disc_steps: 1,
            threshold: 0.2,
            stop_rule: StopRule::Literal,
            max_epochs: 100,
            confidence_bound: 0.95,
            patience: 5,
            dropout: 0.1,
            learning_rate: 0.01,
            batch_size: 64,
            disc_hidden: 16,
            seed: 0,
        }
    }
}

impl AdversarialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tradeoff >= 0.0 && self.tradeoff.is_finite()) {
            return Err(Error::Config(format!("tradeoff must be nonnegative, got {}", self.tradeoff)));
        }
        if self.disc_steps == 0 {
            return Err(Error::Config("discriminator steps must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 0.25) {
            return Err(Error::Config(format!("threshold must lie in (0, 0.25], got {}", self.threshold)));
        }
        if !(self.confidence_bound > 0.5 && self.confidence_bound < 1.0) {
            return Err(Error::Config(format!(
                "confidence bound must lie in (0.5, 1), got {}",
                self.confidence_bound
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be positive".into()));
        }
        self.step_config().validate()
    }

    fn step_config(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            epochs: self.max_epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            dropout: self.dropout,
        }
    }
}

/// Learned maps and per-epoch traces of one adversarial run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiArtifacts {
    pub psi: DenseNet,
    pub label_head: DenseNet,
    pub disc_head: DenseNet,
    /// Fresh discriminator head fitted on frozen ψ features.
    pub retrained_head: Option<DenseNet>,
    pub label_trace: Vec<f64>,
    pub disc_trace: Vec<f64>,
    pub halt: HaltReason,
    pub epochs: usize,
}

/// Linear map initialized to the identity, so training starts from φ.
pub fn identity_psi(dim: usize) -> Result<DenseNet> {
    DenseNet::new(vec![Layer::identity(dim, Activation::Identity)])
}

struct EpochStats {
    label_loss: f64,
    disc_loss: f64,
    mean_source: f64,
    mean_target: f64,
}

fn epoch_stats(
    psi: &DenseNet,
    label_head: &DenseNet,
    disc_head: &DenseNet,
    source: &[Vec<f64>],
    targets: &[Vec<f64>],
    target: &[Vec<f64>],
) -> Result<EpochStats> {
    let mut label_loss = 0.0;
    let (mut src_loss, mut src_mean) = (0.0, 0.0);
    for (x, y) in source.iter().zip(targets) {
        let z = psi.forward(x)?;
        label_loss += loss_and_grad(LossKind::SoftmaxSquared, &label_head.forward(&z)?, y)?.0;
        let g = sigmoid(disc_head.forward(&z)?[0]);
        src_loss += (g - 1.0).powi(2);
        src_mean += g;
    }
    let (mut tgt_loss, mut tgt_mean) = (0.0, 0.0);
    for x in target {
        let g = sigmoid(disc_head.forward(&psi.forward(x)?)?[0]);
        tgt_loss += g * g;
        tgt_mean += g;
    }
    let (ns, nt) = (source.len() as f64, target.len() as f64);
    Ok(EpochStats {
        label_loss: label_loss / ns,
        // balanced mixture of the two pools
        disc_loss: 0.5 * (src_loss / ns + tgt_loss / nt),
        mean_source: src_mean / ns,
        mean_target: tgt_mean / nt,
    })
}

/// Adversarial training of ψ, F̄ and D̄ on φ-features.
///
/// `label_head` seeds F̄; when absent a Glorot-initialized linear head is used.
/// The returned artifacts carry no retrained head yet.
pub fn train_indistinguishable(
    source: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    target: &[Vec<f64>],
    label_head: Option<DenseNet>,
    config: &AdversarialConfig,
) -> Result<PsiArtifacts> {
    config.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::invalid("both feature pools must be nonempty"));
    }
    if labels.len() != source.len() {
        return Err(Error::Shape {
            context: "source labels",
            expected: source.len(),
            got: labels.len(),
        });
    }
    let dim = source[0].len();
    if let Some(row) = source.iter().chain(target).find(|r| r.len() != dim) {
        return Err(Error::Shape {
            context: "feature pool",
            expected: dim,
            got: row.len(),
        });
    }
    if let Some(y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!("label {y} outside 0..{classes}")));
    }

    let mut init_rng = seed::stage_rng(config.seed, 1);
    let mut psi = identity_psi(dim)?;
    let mut head = match label_head {
        Some(h) if h.input_dim() == dim && h.output_dim() == classes => h,
        Some(h) => {
            return Err(Error::Shape {
                context: "label head",
                expected: dim,
                got: h.input_dim(),
            })
        }
        None => DenseNet::init(&[dim, classes], &[Activation::Identity], &mut init_rng)?,
    };
    let mut disc = init_head(dim, config.disc_hidden, seed::derive(config.seed, 2))?;
    let mut order_rng = seed::stage_rng(config.seed, 3);
    let mut dropout_rng = seed::stage_rng(config.seed, 4);

    let targets: Vec<Vec<f64>> = labels.iter().map(|&y| one_hot(y, classes)).collect();
    let mut src_order: Vec<usize> = (0..source.len()).collect();
    let mut tgt_order: Vec<usize> = (0..target.len()).collect();
    let bs = config.batch_size.min(source.len());
    let lr = config.learning_rate;

    let mut label_trace = Vec::new();
    let mut disc_trace = Vec::new();
    let mut confident_run = 0;
    let mut halt = HaltReason::MaxEpochs;
    let mut epochs = 0;

    for epoch in 1..=config.max_epochs {
        let diverged = |detail: String| Error::Diverged { epoch, detail };
        src_order.shuffle(&mut order_rng);
        tgt_order.shuffle(&mut order_rng);
        let mut tgt_cursor = 0;
        for src_batch in src_order.chunks(bs) {
            let tgt_batch: Vec<usize> = (0..src_batch.len())
                .map(|j| tgt_order[(tgt_cursor + j) % tgt_order.len()])
                .collect();
            tgt_cursor = (tgt_cursor + src_batch.len()) % tgt_order.len();

            // discriminator steps on the current ψ features
            let mut inputs = Vec::with_capacity(2 * src_batch.len());
            let mut s = Vec::with_capacity(2 * src_batch.len());
            for &i in src_batch {
                inputs.push(psi.forward(&source[i])?);
                s.push(vec![1.0]);
            }
            for &i in &tgt_batch {
                inputs.push(psi.forward(&target[i])?);
                s.push(vec![0.0]);
            }
            let n = inputs.len();
            let disc_data = TrainData {
                inputs,
                targets: s,
                weights: vec![1.0; n],
            };
            let all: Vec<usize> = (0..n).collect();
            for _ in 0..config.disc_steps {
                let dropout = (config.dropout > 0.0).then_some((config.dropout, &mut dropout_rng));
                let (_, grads) = batch_grad(&disc, &disc_data, &all, LossKind::SigmoidSquared, dropout)
                    .map_err(|e| diverged(e.to_string()))?;
                disc.apply_update(&grads, lr);
            }

            // generator step on (ψ, F̄)
            let mut psi_grads = Gradients::zeros_like(&psi);
            let mut head_grads = Gradients::zeros_like(&head);
            let mut scratch = Gradients::zeros_like(&disc);
            let label_scale = 1.0 / src_batch.len() as f64;
            let disc_scale = -config.tradeoff / n as f64;
            for &i in src_batch {
                let tz = psi.forward_trace(&source[i], None)?;
                let th = head.forward_trace(&tz.output, None)?;
                let (_, mut d) = loss_and_grad(LossKind::SoftmaxSquared, &th.output, &targets[i])?;
                d.iter_mut().for_each(|v| *v *= label_scale);
                let dz = head.backward(&th, &d, &mut head_grads);
                psi.backward(&tz, &dz, &mut psi_grads);
            }
            if config.tradeoff > 0.0 {
                let pairs = src_batch
                    .iter()
                    .map(|&i| (&source[i], 1.0))
                    .chain(tgt_batch.iter().map(|&i| (&target[i], 0.0)));
                for (x, s) in pairs {
                    let tz = psi.forward_trace(x, None)?;
                    let td = disc.forward_trace(&tz.output, None)?;
                    let (_, mut d) = loss_and_grad(LossKind::SigmoidSquared, &td.output, &[s])?;
                    d[0] *= disc_scale;
                    let dz = disc.backward(&td, &d, &mut scratch);
                    psi.backward(&tz, &dz, &mut psi_grads);
                }
            }
            if !psi_grads.is_finite() || !head_grads.is_finite() {
                return Err(diverged("non-finite generator gradient".into()));
            }
            psi.apply_update(&psi_grads, lr);
            head.apply_update(&head_grads, lr);
        }

        let stats = epoch_stats(&psi, &head, &disc, source, &targets, target)?;
        if !(stats.label_loss.is_finite() && stats.disc_loss.is_finite()) {
            return Err(diverged(format!(
                "label loss {}, discrimination loss {}",
                stats.label_loss, stats.disc_loss
            )));
        }
        label_trace.push(stats.label_loss);
        disc_trace.push(stats.disc_loss);
        epochs = epoch;

        let crossed = match config.stop_rule {
            StopRule::Literal => stats.disc_loss < config.threshold,
            StopRule::Inverted => stats.disc_loss > config.threshold,
            StopRule::Disabled => false,
        };
        if crossed {
            halt = HaltReason::Threshold;
            break;
        }
        let confident =
            stats.mean_source > config.confidence_bound && stats.mean_target < 1.0 - config.confidence_bound;
        confident_run = if confident { confident_run + 1 } else { 0 };
        if confident_run >= config.patience {
            halt = HaltReason::EarlyStop;
            break;
        }
    }

    Ok(PsiArtifacts {
        psi,
        label_head: head,
        disc_head: disc,
        retrained_head: None,
        label_trace,
        disc_trace,
        halt,
        epochs,
    })
}

/// Fits a fresh discriminator head on frozen ψ features of the two pools.
pub fn retrain_discriminator(
    psi: &DenseNet,
    source: &[Vec<f64>],
    target: &[Vec<f64>],
    hidden: usize,
    config: &SgdConfig,
) -> Result<TrainOutcome> {
    let src = psi.forward_batch(source)?;
    let tgt = psi.forward_batch(target)?;
    let set = build_discrimination_set(&src, &tgt, seed::derive(config.seed, seed::tag::DISC_SPLIT))?;
    let head = init_head(psi.output_dim(), hidden, seed::derive(config.seed, seed::tag::DISC_INIT))?;
    train_discriminator(head, &set, config)
}

/// Balanced squared discrimination loss of `head` on ψ features.
pub fn discrimination_loss_on(
    psi: &DenseNet,
    head: &DenseNet,
    source: &[Vec<f64>],
    target: &[Vec<f64>],
) -> Result<f64> {
    let mean = |pool: &[Vec<f64>], s: f64| -> Result<f64> {
        let mut total = 0.0;
        for x in pool {
            total += (sigmoid(head.forward(&psi.forward(x)?)?[0]) - s).powi(2);
        }
        Ok(total / pool.len().max(1) as f64)
    };
    Ok(0.5 * (mean(source, 1.0)? + mean(target, 0.0)?))
}

/// Fraction of rows whose argmax of `head(psi(x))` equals the label.
pub fn label_accuracy(psi: Option<&DenseNet>, head: &DenseNet, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let mut hits = 0usize;
    for (x, &y) in features.iter().zip(labels) {
        let z = match psi {
            Some(p) => p.forward(x)?,
            None => x.clone(),
        };
        if crate::calibrator::argmax(&head.forward(&z)?) == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / features.len().max(1) as f64)
}

/// True when the learned head lost more than [`LABEL_GUARD_MARGIN`] accuracy.
pub fn is_degenerate(base_accuracy: f64, learned_accuracy: f64) -> bool {
    learned_accuracy < base_accuracy - LABEL_GUARD_MARGIN
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn pool(n: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(seed);
        (0..n)
            .map(|_| vec![rng.random_range(0.0..1.0) + shift, rng.random_range(0.0..1.0)])
            .collect()
    }

    fn labels_of(xs: &[Vec<f64>]) -> Vec<usize> {
        xs.iter().map(|x| usize::from(x[1] > 0.5)).collect()
    }

    fn quick(tradeoff: f64) -> AdversarialConfig {
        AdversarialConfig {
            tradeoff,
            max_epochs: 15,
            stop_rule: StopRule::Disabled,
            seed: 7,
            ..AdversarialConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let src = pool(120, 0.0, 1);
        let tgt = pool(120, 0.5, 2);
        let y = labels_of(&src);
        let a = train_indistinguishable(&src, &y, 2, &tgt, None, &quick(1.0)).unwrap();
        let b = train_indistinguishable(&src, &y, 2, &tgt, None, &quick(1.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.halt, HaltReason::MaxEpochs);
        assert_eq!(a.epochs, 15);
    }

    #[test]
    fn zero_tradeoff_is_plain_supervised_fit() {
        let src = pool(120, 0.0, 1);
        let tgt = pool(120, 0.5, 2);
        let y = labels_of(&src);
        let art = train_indistinguishable(&src, &y, 2, &tgt, None, &quick(0.0)).unwrap();
        // same ψ/F̄ for two different target pools: the discriminator never feeds back
        let other = pool(120, 3.0, 9);
        let art2 = train_indistinguishable(&src, &y, 2, &other, None, &quick(0.0)).unwrap();
        assert_eq!(art.psi, art2.psi);
        assert_eq!(art.label_head, art2.label_head);
        assert!(art.label_trace.last().unwrap() < art.label_trace.first().unwrap());
    }

    #[test]
    fn same_distribution_stays_near_guess_floor() {
        let src = pool(200, 0.0, 1);
        let tgt = pool(200, 0.0, 2);
        let y = labels_of(&src);
        let art = train_indistinguishable(&src, &y, 2, &tgt, None, &quick(1.0)).unwrap();
        for l in &art.disc_trace {
            assert!((0.2..=0.3).contains(l), "{l}");
        }
    }

    #[test]
    fn literal_rule_halts_on_separable_pools() {
        let src = pool(100, 0.0, 1);
        let tgt = pool(100, 5.0, 2);
        let y = labels_of(&src);
        let config = AdversarialConfig {
            tradeoff: 0.0,
            max_epochs: 200,
            learning_rate: 0.2,
            seed: 3,
            ..AdversarialConfig::default()
        };
        let art = train_indistinguishable(&src, &y, 2, &tgt, None, &config).unwrap();
        assert!(matches!(art.halt, HaltReason::Threshold | HaltReason::EarlyStop));
        assert!(art.epochs < 200);
    }

    #[test]
    fn retraining_leaves_psi_untouched_and_fits_at_least_as_well() {
        let src = pool(150, 0.0, 1);
        let tgt = pool(150, 0.4, 2);
        let y = labels_of(&src);
        let art = train_indistinguishable(&src, &y, 2, &tgt, None, &quick(1.0)).unwrap();
        let before = art.psi.clone();
        let config = SgdConfig {
            learning_rate: 0.5,
            epochs: 300,
            batch_size: 32,
            seed: 5,
            dropout: 0.0,
        };
        let out = retrain_discriminator(&art.psi, &src, &tgt, 16, &config).unwrap();
        assert_eq!(art.psi, before);
        let fresh = discrimination_loss_on(&art.psi, &out.net, &src, &tgt).unwrap();
        let adversarial = discrimination_loss_on(&art.psi, &art.disc_head, &src, &tgt).unwrap();
        assert!(fresh <= adversarial + 1e-6, "{fresh} vs {adversarial}");
        let again = retrain_discriminator(&art.psi, &src, &tgt, 16, &config).unwrap();
        assert_eq!(out.net, again.net);
    }

    #[test]
    fn config_validation() {
        let bad = [
            AdversarialConfig {
                tradeoff: -1.0,
                ..AdversarialConfig::default()
            },
            AdversarialConfig {
                threshold: 0.3,
                ..AdversarialConfig::default()
            },
            AdversarialConfig {
                disc_steps: 0,
                ..AdversarialConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        assert!(AdversarialConfig::default().validate().is_ok());
    }

    #[test]
    fn degenerate_guard() {
        assert!(is_degenerate(0.9, 0.75));
        assert!(!is_degenerate(0.9, 0.85));
    }
}
