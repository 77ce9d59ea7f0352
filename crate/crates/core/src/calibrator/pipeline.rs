use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{argmax, default_temperature_config, fit_temperature, CalibrationBatch, CalibrationMode, Forecaster};
use crate::discriminator::{
    build_discrimination_set, calibrate_discriminator, init_head, train_discriminator, SourceDiscriminator,
    DEFAULT_CLAMP_BOUND,
};
use crate::error::{Error, Result};
use crate::featlearn::{is_degenerate, label_accuracy, train_indistinguishable, AdversarialConfig, PsiArtifacts};
use crate::metrics::{reliability_bins, EceReport, DEFAULT_BINS};
use crate::numerics::{sgd_train, Activation, DenseNet, FeatureMap, LossKind, SgdConfig, TrainData};
use crate::scenarios::{Dataset, RunPools};
use crate::seed::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "Temp")]
    Temp,
    #[serde(rename = "IW+Temp")]
    IwTemp,
    #[serde(rename = "FL+Temp")]
    FlTemp,
    #[serde(rename = "FL+IW+Temp")]
    FlIwTemp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Temp, Method::IwTemp, Method::FlTemp, Method::FlIwTemp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Temp => "Temp",
            Method::IwTemp => "IW+Temp",
            Method::FlTemp => "FL+Temp",
            Method::FlIwTemp => "FL+IW+Temp",
        }
    }

    pub fn learns_features(self) -> bool {
        matches!(self, Method::FlTemp | Method::FlIwTemp)
    }

    pub fn uses_weights(self) -> bool {
        matches!(self, Method::IwTemp | Method::FlIwTemp)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}; expected one of Temp, IW+Temp, FL+Temp, FL+IW+Temp")))
    }
}

/// Hyperparameters of every stage. Seeds inside the nested SGD configs are
/// ignored: each stage derives its own from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Width of the classifier's hidden layer, which is the feature map φ.
    pub hidden: usize,
    pub classifier_loss: LossKind,
    pub classifier: SgdConfig,
    /// Hidden width of discriminator heads; 0 gives logistic regression.
    pub disc_hidden: usize,
    pub discriminator: SgdConfig,
    pub disc_temperature: SgdConfig,
    pub forecaster_temperature: SgdConfig,
    pub clamp_bound: f64,
    pub mode: CalibrationMode,
    pub bins: usize,
    pub adversarial: AdversarialConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            classifier_loss: LossKind::SoftmaxSquared,
            classifier: SgdConfig {
                learning_rate: 0.1,
                epochs: 60,
                batch_size: 32,
                seed: 0,
                dropout: 0.0,
            },
            disc_hidden: 16,
            discriminator: SgdConfig {
                learning_rate: 0.2,
                epochs: 60,
                batch_size: 32,
                seed: 0,
                dropout: 0.1,
            },
            disc_temperature: default_temperature_config(0),
            forecaster_temperature: default_temperature_config(0),
            clamp_bound: DEFAULT_CLAMP_BOUND,
            mode: CalibrationMode::Recalibration,
            bins: DEFAULT_BINS,
            adversarial: AdversarialConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("classifier hidden width must be positive".into()));
        }
        if !(self.clamp_bound > 0.0 && self.clamp_bound.is_finite()) {
            return Err(Error::Config(format!("clamp bound must be positive, got {}", self.clamp_bound)));
        }
        if self.bins == 0 {
            return Err(Error::Config("bin count must be positive".into()));
        }
        if self.classifier_loss == LossKind::SigmoidSquared {
            return Err(Error::Config("classifier loss must be a softmax loss".into()));
        }
        for c in [
            &self.classifier,
            &self.discriminator,
            &self.disc_temperature,
            &self.forecaster_temperature,
        ] {
            c.validate()?;
        }
        self.adversarial.validate()
    }
}

/// The four data pools of one run.
#[derive(Debug, Clone, Copy)]
pub struct RunInputs<'a> {
    pub source_train: &'a Dataset,
    pub source_validation: &'a Dataset,
    pub target_unlabeled: &'a Dataset,
    /// Labeled target data, used for evaluation only.
    pub target_eval: &'a Dataset,
}

impl<'a> From<&'a RunPools> for RunInputs<'a> {
    fn from(pools: &'a RunPools) -> Self {
        Self {
            source_train: &pools.source_train,
            source_validation: &pools.source_validation,
            target_unlabeled: &pools.target_unlabeled,
            target_eval: &pools.target_eval,
        }
    }
}

impl RunInputs<'_> {
    fn validate(&self) -> Result<()> {
        for (name, ds) in [
            ("source training", self.source_train),
            ("source validation", self.source_validation),
            ("target unlabeled", self.target_unlabeled),
            ("target evaluation", self.target_eval),
        ] {
            if ds.is_empty() {
                return Err(Error::Config(format!("{name} data is empty")));
            }
            if ds.dim() != self.source_train.dim() {
                return Err(Error::Shape {
                    context: "pool dimension",
                    expected: self.source_train.dim(),
                    got: ds.dim(),
                });
            }
        }
        for (name, ds) in [
            ("source training", self.source_train),
            ("source validation", self.source_validation),
            ("target evaluation", self.target_eval),
        ] {
            if ds.labels.is_none() {
                return Err(Error::Config(format!("{name} data must be labeled")));
            }
        }
        if self.target_unlabeled.len() < 2 {
            return Err(Error::Config("need at least two unlabeled target rows".into()));
        }
        Ok(())
    }
}

/// Classifier `f̄ ∘ φ` trained on labeled source data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseClassifier {
    pub phi: DenseNet,
    pub head: DenseNet,
    pub loss_trace: Vec<f64>,
}

/// `[d → hidden (tanh) → K]`, split into φ and the output layer f̄.
pub fn train_base_classifier(train: &Dataset, config: &PipelineConfig, seed: u64) -> Result<BaseClassifier> {
    let mut init_rng = seed::stage_rng(seed, tag::CLASSIFIER_INIT);
    let net = DenseNet::init(
        &[train.dim(), config.hidden, train.classes],
        &[Activation::Tanh, Activation::Identity],
        &mut init_rng,
    )?;
    let data = TrainData::unweighted(train.features.clone(), train.one_hot()?)?;
    let sgd = config.classifier.with_seed(seed::derive(seed, tag::CLASSIFIER_SGD));
    let out = sgd_train(net, &data, config.classifier_loss, &sgd)?;
    let (phi, head) = out.net.split_last()?;
    Ok(BaseClassifier {
        phi,
        head,
        loss_trace: out.loss_trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub seed: u64,
    pub forecaster: Forecaster,
    pub discriminator: Option<SourceDiscriminator>,
    pub artifacts: Option<PsiArtifacts>,
    /// Calibration error on labeled target data.
    pub report: EceReport,
    pub classification_error: f64,
    /// `ŵ` of each source-validation row used to fit the temperature.
    pub validation_weights: Vec<f64>,
    /// Set when learned features cost more than the tolerated accuracy.
    pub degenerate: bool,
    pub timings: Vec<StageTiming>,
}

struct Stopwatch {
    start: Instant,
    timings: Vec<StageTiming>,
}

impl Stopwatch {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            timings: Vec::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            ms: now.duration_since(self.start).as_secs_f64() * 1e3,
        });
        self.start = now;
    }
}

/// Runs one method end to end. With `weight_override`, those weights replace
/// the discriminator's for the source-validation rows.
pub fn run_method(
    method: Method,
    inputs: RunInputs<'_>,
    config: &PipelineConfig,
    seed: u64,
    weight_override: Option<&[f64]>,
) -> Result<MethodOutcome> {
    config.validate()?;
    inputs.validate()?;
    let mut watch = Stopwatch::new();
    let base = train_base_classifier(inputs.source_train, config, seed)?;
    watch.lap("classifier");
    let mut shared = Shared::new(base);
    run_with_base(method, inputs, config, seed, weight_override, &mut shared, watch)
}

/// Runs several methods on one base classifier; the two feature-learning
/// variants share one ψ.
pub fn run_methods(
    methods: &[Method],
    inputs: RunInputs<'_>,
    config: &PipelineConfig,
    seed: u64,
) -> Result<Vec<MethodOutcome>> {
    config.validate()?;
    inputs.validate()?;
    let mut watch = Stopwatch::new();
    let base = train_base_classifier(inputs.source_train, config, seed)?;
    watch.lap("classifier");
    let mut shared = Shared::new(base);
    let mut outcomes = Vec::with_capacity(methods.len());
    for (i, &m) in methods.iter().enumerate() {
        let w = if i == 0 { std::mem::replace(&mut watch, Stopwatch::new()) } else { Stopwatch::new() };
        outcomes.push(run_with_base(m, inputs, config, seed, None, &mut shared, w)?);
    }
    Ok(outcomes)
}

struct Shared {
    base: BaseClassifier,
    learned: Option<(PsiArtifacts, bool)>,
}

impl Shared {
    fn new(base: BaseClassifier) -> Self {
        Self { base, learned: None }
    }
}

fn learn_features(inputs: RunInputs<'_>, config: &PipelineConfig, seed: u64, base: &BaseClassifier) -> Result<(PsiArtifacts, bool)> {
    let phi = &base.phi;
    let src = phi.forward_batch(&inputs.source_train.features)?;
    let tgt = phi.forward_batch(&inputs.target_unlabeled.features)?;
    let adversarial = AdversarialConfig {
        seed: seed::derive(seed, tag::FEATLEARN),
        ..config.adversarial
    };
    let art = train_indistinguishable(
        &src,
        inputs.source_train.labels()?,
        inputs.source_train.classes,
        &tgt,
        Some(base.head.clone()),
        &adversarial,
    )?;
    let val = phi.forward_batch(&inputs.source_validation.features)?;
    let val_labels = inputs.source_validation.labels()?;
    let base_acc = label_accuracy(None, &base.head, &val, val_labels)?;
    let learned_acc = label_accuracy(Some(&art.psi), &art.label_head, &val, val_labels)?;
    Ok((art, is_degenerate(base_acc, learned_acc)))
}

/// Splits the target pool in the same proportion as source train/validation.
fn split_target(inputs: RunInputs<'_>, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let nt = inputs.target_unlabeled.len();
    let (ntr, nval) = (inputs.source_train.len(), inputs.source_validation.len());
    let cut = ((nt as f64 * ntr as f64 / (ntr + nval) as f64).round() as usize).clamp(1, nt - 1);
    let mut idx: Vec<usize> = (0..nt).collect();
    idx.shuffle(&mut seed::stage_rng(seed, tag::DISC_SPLIT));
    let rows = |ids: &[usize]| ids.iter().map(|&i| inputs.target_unlabeled.features[i].clone()).collect();
    (rows(&idx[..cut]), rows(&idx[cut..]))
}

fn fit_discriminator(
    features: &FeatureMap,
    inputs: RunInputs<'_>,
    config: &PipelineConfig,
    seed: u64,
) -> Result<SourceDiscriminator> {
    let (tgt_train, tgt_val) = split_target(inputs, seed);
    let src_train = features.apply_batch(&inputs.source_train.features)?;
    let src_val = features.apply_batch(&inputs.source_validation.features)?;
    let tgt_train = features.apply_batch(&tgt_train)?;
    let tgt_val = features.apply_batch(&tgt_val)?;
    let split_seed = seed::derive(seed, tag::DISC_SPLIT);
    let train_set = build_discrimination_set(&src_train, &tgt_train, split_seed)?;
    let val_set = build_discrimination_set(&src_val, &tgt_val, split_seed.wrapping_add(1))?;
    let dim = src_train[0].len();
    let head = init_head(dim, config.disc_hidden, seed::derive(seed, tag::DISC_INIT))?;
    let sgd = config.discriminator.with_seed(seed::derive(seed, tag::DISC_SGD));
    let head = train_discriminator(head, &train_set, &sgd)?.net;
    let temp = config.disc_temperature.with_seed(seed::derive(seed, tag::DISC_TEMPERATURE));
    let t_g = calibrate_discriminator(&head, &val_set, &temp)?.scale;
    SourceDiscriminator::new(features.clone(), head, t_g, config.clamp_bound)
}

fn run_with_base(
    method: Method,
    inputs: RunInputs<'_>,
    config: &PipelineConfig,
    seed: u64,
    weight_override: Option<&[f64]>,
    shared: &mut Shared,
    mut watch: Stopwatch,
) -> Result<MethodOutcome> {
    let phi_map = FeatureMap::new(vec![shared.base.phi.clone()])?;
    let (features, head, mut artifacts, degenerate) = if method.learns_features() {
        if shared.learned.is_none() {
            shared.learned = Some(learn_features(inputs, config, seed, &shared.base)?);
            watch.lap("feature-learning");
        }
        let (art, degenerate) = shared.learned.clone().expect("just set");
        let features = phi_map.then(art.psi.clone())?;
        (features, art.label_head.clone(), Some(art), degenerate)
    } else {
        (phi_map, shared.base.head.clone(), None, false)
    };

    let n_val = inputs.source_validation.len();
    let mut discriminator = None;
    let weights = match weight_override {
        Some(w) => {
            if w.len() != n_val {
                return Err(Error::Shape {
                    context: "weight override",
                    expected: n_val,
                    got: w.len(),
                });
            }
            w.to_vec()
        }
        None if method.uses_weights() => {
            let disc = fit_discriminator(&features, inputs, config, seed)?;
            watch.lap("discriminator");
            let w = disc.weights(&inputs.source_validation.features)?;
            if let Some(art) = artifacts.as_mut() {
                art.retrained_head = Some(disc.head.clone());
            }
            discriminator = Some(disc);
            w
        }
        None => vec![1.0; n_val],
    };

    let logits = head.forward_batch(&features.apply_batch(&inputs.source_validation.features)?)?;
    let batch = CalibrationBatch::new(logits, inputs.source_validation.labels()?.to_vec(), weights)?;
    let temp = config
        .forecaster_temperature
        .with_seed(seed::derive(seed, tag::FORECASTER_TEMPERATURE));
    let fit = fit_temperature(&batch, &temp, config.mode)?;
    watch.lap("temperature");

    let forecaster = Forecaster::new(features, head, fit.scale, config.mode)?;
    let report = reliability_bins(&forecaster, inputs.target_eval, config.bins)?;
    let labels = inputs.target_eval.labels()?;
    let mut errors = 0usize;
    for (x, &y) in inputs.target_eval.features.iter().zip(labels) {
        if argmax(&forecaster.logits(x)?) != y {
            errors += 1;
        }
    }
    watch.lap("evaluation");

    Ok(MethodOutcome {
        method,
        seed,
        forecaster,
        discriminator,
        artifacts,
        report,
        classification_error: errors as f64 / labels.len() as f64,
        validation_weights: batch.weights,
        degenerate,
        timings: watch.timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
        assert!("Platt".parse::<Method>().is_err());
    }

    #[test]
    fn default_config_is_valid() {
        PipelineConfig::default().validate().unwrap();
    }
}
