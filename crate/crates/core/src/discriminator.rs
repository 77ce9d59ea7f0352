//! Source-discriminator `ĝ(x) ≈ r(s = 1 | x)` and the importance weights it implies.
//!
//! Under the balanced mixture `r`, the Bayes discriminator is
//! `g = p / (p + q) = 1 / (1 + w)`, so a discriminator estimate converts to a
//! weight estimate through `ŵ = 1/ĝ − 1`. Predictions are clamped to
//! `[1/(1+U), 1]`, which keeps every weight in `[0, U]`.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    fit_log_scale, mean_loss, sgd_train, sigmoid, Activation, DenseNet, FeatureMap, LossKind,
    ScalarFit, SgdConfig, TrainData, TrainOutcome,
};
use crate::seed;

pub const DEFAULT_CLAMP_BOUND: f64 = 99.0;

/// Balanced discrimination sample; `s = 1` marks source rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminationSet {
    pub inputs: Vec<Vec<f64>>,
    pub s: Vec<f64>,
}

impl DiscriminationSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn source_count(&self) -> usize {
        self.s.iter().filter(|&&s| s == 1.0).count()
    }

    pub fn train_data(&self) -> TrainData {
        TrainData {
            inputs: self.inputs.clone(),
            targets: self.s.iter().map(|&s| vec![s]).collect(),
            weights: vec![1.0; self.len()],
        }
    }

    /// Same rows with every input mapped through `map`.
    pub fn mapped(&self, map: &FeatureMap) -> Result<Self> {
        Ok(Self {
            inputs: map.apply_batch(&self.inputs)?,
            s: self.s.clone(),
        })
    }
}

/// Subsamples the larger pool without replacement down to the smaller pool's
/// size, labels rows by origin and shuffles.
pub fn build_discrimination_set(
    source: &[Vec<f64>],
    target: &[Vec<f64>],
    seed: u64,
) -> Result<DiscriminationSet> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::invalid("both discrimination pools must be nonempty"));
    }
    let d = source[0].len();
    if let Some(row) = source.iter().chain(target).find(|r| r.len() != d) {
        return Err(Error::Shape {
            context: "discrimination pool",
            expected: d,
            got: row.len(),
        });
    }
    let mut rng = seed::rng(seed);
    let n = source.len().min(target.len());
    let mut pick = |pool: &[Vec<f64>]| -> Vec<Vec<f64>> {
        if pool.len() == n {
            pool.to_vec()
        } else {
            let mut idx = index::sample(&mut rng, pool.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| pool[i].clone()).collect()
        }
    };
    let src = pick(source);
    let tgt = pick(target);
    let mut rows: Vec<(Vec<f64>, f64)> = src
        .into_iter()
        .map(|x| (x, 1.0))
        .chain(tgt.into_iter().map(|x| (x, 0.0)))
        .collect();
    rows.shuffle(&mut rng);
    let (inputs, s) = rows.into_iter().unzip();
    Ok(DiscriminationSet { inputs, s })
}

/// Scalar-logit head: logistic regression when `hidden == 0`, otherwise one
/// ReLU hidden layer.
pub fn init_head(input_dim: usize, hidden: usize, seed: u64) -> Result<DenseNet> {
    let mut rng = seed::rng(seed);
    if hidden == 0 {
        DenseNet::init(&[input_dim, 1], &[Activation::Identity], &mut rng)
    } else {
        DenseNet::init(
            &[input_dim, hidden, 1],
            &[Activation::Relu, Activation::Identity],
            &mut rng,
        )
    }
}

/// Fits the head by minimizing the mean squared discrimination loss
/// `mean (sigmoid(logit) − s)²`.
pub fn train_discriminator(head: DenseNet, set: &DiscriminationSet, config: &SgdConfig) -> Result<TrainOutcome> {
    sgd_train(head, &set.train_data(), LossKind::SigmoidSquared, config)
}

pub fn discrimination_loss(head: &DenseNet, set: &DiscriminationSet) -> Result<f64> {
    mean_loss(head, &set.train_data(), LossKind::SigmoidSquared)
}

/// Temperature `T_g` minimizing `mean (sigmoid(T_g · logit) − s)²` on `validation`.
pub fn calibrate_discriminator(
    head: &DenseNet,
    validation: &DiscriminationSet,
    config: &SgdConfig,
) -> Result<ScalarFit> {
    let logits: Vec<f64> = validation
        .inputs
        .iter()
        .map(|x| head.forward(x).map(|o| o[0]))
        .collect::<Result<_>>()?;
    let s = &validation.s;
    fit_log_scale(logits.len(), config, |idx, t| {
        let (mut loss, mut grad) = (0.0, 0.0);
        for &i in idx {
            let sig = sigmoid(t * logits[i]);
            let r = sig - s[i];
            loss += r * r;
            grad += 2.0 * r * sig * (1.0 - sig) * logits[i];
        }
        let n = idx.len() as f64;
        Ok((loss / n, grad / n))
    })
}

/// Squared discrimination loss of `sigmoid(t · logit)`.
pub fn tempered_loss(head: &DenseNet, set: &DiscriminationSet, t: f64) -> Result<f64> {
    let mut total = 0.0;
    for (x, s) in set.inputs.iter().zip(&set.s) {
        let r = sigmoid(t * head.forward(x)?[0]) - s;
        total += r * r;
    }
    Ok(total / set.len().max(1) as f64)
}

#[inline]
pub fn clamp_g(raw: f64, clamp_bound: f64) -> f64 {
    raw.clamp(1.0 / (1.0 + clamp_bound), 1.0)
}

/// `ŵ = 1/ĝ − 1`.
pub fn weight_from_g(g: f64) -> Result<f64> {
    if !(g > 0.0 && g <= 1.0) {
        return Err(Error::invalid(format!(
            "discriminator value must lie in (0, 1], got {g}"
        )));
    }
    Ok(1.0 / g - 1.0)
}

/// `ĝ = clamp(sigmoid(T_g · ḡ(features(x))), 1/(1+U), 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDiscriminator {
    pub features: FeatureMap,
    pub head: DenseNet,
    pub temperature: f64,
    pub clamp_bound: f64,
}

impl SourceDiscriminator {
    pub fn new(features: FeatureMap, head: DenseNet, temperature: f64, clamp_bound: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
        }
        if !(clamp_bound > 0.0 && clamp_bound.is_finite()) {
            return Err(Error::invalid(format!("clamp bound must be positive, got {clamp_bound}")));
        }
        if head.output_dim() != 1 {
            return Err(Error::Shape {
                context: "discriminator head output",
                expected: 1,
                got: head.output_dim(),
            });
        }
        Ok(Self {
            features,
            head,
            temperature,
            clamp_bound,
        })
    }

    /// Temperature-scaled sigmoid before clamping, from already-mapped features.
    pub fn raw_from_features(&self, z: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.temperature * self.head.forward(z)?[0]))
    }

    pub fn predict_g_from_features(&self, z: &[f64]) -> Result<f64> {
        Ok(clamp_g(self.raw_from_features(z)?, self.clamp_bound))
    }

    pub fn predict_g(&self, x: &[f64]) -> Result<f64> {
        self.predict_g_from_features(&self.features.apply(x)?)
    }

    /// Estimated importance weight, always in `[0, U]`.
    pub fn weight(&self, x: &[f64]) -> Result<f64> {
        weight_from_g(self.predict_g(x)?)
    }

    pub fn weights(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.weight(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Layer;
    use rand::Rng as _;

    fn pool(n: usize, offset: f64) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64 + offset]).collect()
    }

    #[test]
    fn balanced_pools_keep_everything() {
        let set = build_discrimination_set(&pool(100, 0.0), &pool(100, 0.5), 1).unwrap();
        assert_eq!(set.len(), 200);
        assert_eq!(set.source_count(), 100);
    }

    #[test]
    fn larger_pool_is_subsampled() {
        let set = build_discrimination_set(&pool(300, 0.0), &pool(100, 0.5), 1).unwrap();
        assert_eq!(set.len(), 200);
        assert_eq!(set.source_count(), 100);
        let mut src: Vec<f64> = set
            .inputs
            .iter()
            .zip(&set.s)
            .filter(|(_, s)| **s == 1.0)
            .map(|(x, _)| x[0])
            .collect();
        src.sort_by(f64::total_cmp);
        src.dedup();
        assert_eq!(src.len(), 100, "subsample is without replacement");
    }

    #[test]
    fn fixed_seed_gives_identical_subsample() {
        let a = build_discrimination_set(&pool(300, 0.0), &pool(100, 0.5), 9).unwrap();
        let b = build_discrimination_set(&pool(300, 0.0), &pool(100, 0.5), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = build_discrimination_set(&[vec![1.0, 2.0]], &[vec![1.0]], 0).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    fn uniform_pool(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(seed);
        (0..n).map(|_| vec![rng.random_range(lo..hi)]).collect()
    }

    #[test]
    fn identical_pools_stay_near_random_guess_floor() {
        let set = build_discrimination_set(
            &uniform_pool(400, 0.0, 1.0, 1),
            &uniform_pool(400, 0.0, 1.0, 2),
            3,
        )
        .unwrap();
        let head = init_head(1, 8, 4).unwrap();
        let config = SgdConfig {
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 32,
            ..SgdConfig::default()
        };
        let out = train_discriminator(head, &set, &config).unwrap();
        assert!(out.final_loss().unwrap() >= 0.20, "{:?}", out.final_loss());
    }

    #[test]
    fn separated_pools_are_learned() {
        let set = build_discrimination_set(
            &uniform_pool(300, -2.0, -0.5, 1),
            &uniform_pool(300, 0.5, 2.0, 2),
            3,
        )
        .unwrap();
        let head = init_head(1, 0, 4).unwrap();
        let config = SgdConfig {
            learning_rate: 1.0,
            epochs: 200,
            batch_size: 32,
            ..SgdConfig::default()
        };
        let out = train_discriminator(head, &set, &config).unwrap();
        assert!(out.final_loss().unwrap() <= 0.05, "{:?}", out.final_loss());
    }

    #[test]
    fn zero_epochs_leave_head_untouched() {
        let set = build_discrimination_set(&pool(10, 0.0), &pool(10, 0.5), 1).unwrap();
        let head = init_head(1, 4, 2).unwrap();
        let config = SgdConfig {
            epochs: 0,
            ..SgdConfig::default()
        };
        assert_eq!(train_discriminator(head.clone(), &set, &config).unwrap().net, head);
    }

    /// Rows `(x, s)` with `s ~ Bernoulli(sigmoid(x))`, paired with the mirrored
    /// draw `(−x, 1 − s)` so that both classes have equal counts.
    fn calibrated_set(n: usize, seed: u64) -> DiscriminationSet {
        let mut rng = seed::rng(seed);
        let mut inputs = Vec::new();
        let mut s = Vec::new();
        for _ in 0..n {
            let x: f64 = rng.random_range(-3.0..3.0);
            let label = if rng.random::<f64>() < sigmoid(x) { 1.0 } else { 0.0 };
            inputs.push(vec![x]);
            s.push(label);
            inputs.push(vec![-x]);
            s.push(1.0 - label);
        }
        DiscriminationSet { inputs, s }
    }

    fn logistic(scale: f64) -> DenseNet {
        let mut layer = Layer::zeros(1, 1, Activation::Identity);
        layer.weights[0] = scale;
        DenseNet::new(vec![layer]).unwrap()
    }

    fn grid_optimum(head: &DenseNet, set: &DiscriminationSet) -> f64 {
        let mut best = (f64::INFINITY, 1.0);
        let mut t = 0.01;
        while t <= 3.0 {
            let loss = tempered_loss(head, set, t).unwrap();
            if loss < best.0 {
                best = (loss, t);
            }
            t += 1e-3;
        }
        best.1
    }

    fn temperature_config() -> SgdConfig {
        SgdConfig {
            learning_rate: 1.0,
            epochs: 1000,
            batch_size: usize::MAX,
            ..SgdConfig::default()
        }
    }

    #[test]
    fn calibrated_head_keeps_unit_temperature() {
        let set = calibrated_set(2000, 5);
        let head = logistic(1.0);
        let fit = calibrate_discriminator(&head, &set, &temperature_config()).unwrap();
        assert!((0.9..=1.1).contains(&fit.scale), "{}", fit.scale);
        let oracle = grid_optimum(&head, &set);
        assert!((0.9..=1.1).contains(&oracle), "{oracle}");
        assert!(fit.loss <= tempered_loss(&head, &set, 1.0).unwrap() + 1e-9);
    }

    #[test]
    fn overconfident_head_is_cooled() {
        let set = calibrated_set(2000, 6);
        let head = logistic(10.0);
        let fit = calibrate_discriminator(&head, &set, &temperature_config()).unwrap();
        assert!(fit.scale < 1.0, "{}", fit.scale);
        assert!(grid_optimum(&head, &set) < 1.0);
        assert!((fit.scale - grid_optimum(&head, &set)).abs() <= 0.01);
    }

    #[test]
    fn temperature_preserves_ranking() {
        let head = logistic(1.7);
        let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 1.3).sin() * 2.0]).collect();
        let rank = |t: f64| {
            let disc = SourceDiscriminator::new(FeatureMap::default(), head.clone(), t, 1e9).unwrap();
            let g: Vec<f64> = xs.iter().map(|x| disc.predict_g(x).unwrap()).collect();
            let mut idx: Vec<usize> = (0..g.len()).collect();
            idx.sort_by(|&a, &b| g[a].total_cmp(&g[b]));
            idx
        };
        assert_eq!(rank(1.0), rank(0.3));
        assert_eq!(rank(1.0), rank(2.0));
    }

    #[test]
    fn clamp_examples() {
        assert!((clamp_g(0.001, 9.0) - 0.1).abs() < 1e-15);
        assert_eq!(clamp_g(0.8, 9.0), 0.8);
        assert_eq!(clamp_g(sigmoid(1e6), 9.0), 1.0);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(weight_from_g(0.5).unwrap(), 1.0);
        assert_eq!(weight_from_g(1.0).unwrap(), 0.0);
        let u = 9.0;
        assert!((weight_from_g(1.0 / (1.0 + u)).unwrap() - u).abs() < 1e-12);
        assert!(weight_from_g(0.0).is_err());
        assert!(weight_from_g(-0.2).is_err());
        assert!(weight_from_g(1.5).is_err());
    }

    #[test]
    fn predicted_weights_stay_in_clamp_range() {
        let head = logistic(25.0);
        let disc = SourceDiscriminator::new(FeatureMap::default(), head, 1.0, 4.0).unwrap();
        for i in -50..=50 {
            let x = [i as f64 * 0.2];
            let g = disc.predict_g(&x).unwrap();
            assert!(g >= 0.2 && g <= 1.0);
            let w = disc.weight(&x).unwrap();
            assert!((0.0..=4.0 + 1e-12).contains(&w), "{w}");
        }
    }
}
