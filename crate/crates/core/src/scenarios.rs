//! Covariate-shift worlds and datasets.
//!
//! A scenario pairs a source density `p(x)` with a target density `q(x)` and
//! one labeling rule `p(y | x)` shared by both. Enumerable domains keep `p`,
//! `q` and the label distribution as finite tables so that `w = q/p`,
//! `g = p/(p+q)` and the true calibration map `c` can be computed exactly.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::softmax;
use crate::seed::{self, Rng};

/// Mass of `q` spread uniformly over the whole source box in "box-shift".
pub const BOX_SHIFT_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Draw {
    SourceLabeled,
    TargetUnlabeled,
    TargetLabeled,
}

/// Features plus optional labels in `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Option<Vec<usize>>, classes: usize) -> Result<Self> {
        let ds = Self {
            features,
            labels,
            classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (i, row) in self.features.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Shape {
                    context: "dataset row",
                    expected: d,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row {i} has a non-finite feature")));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.features.len() {
                return Err(Error::Shape {
                    context: "dataset labels",
                    expected: self.features.len(),
                    got: labels.len(),
                });
            }
            if let Some(bad) = labels.iter().find(|&&y| y >= self.classes) {
                return Err(Error::invalid(format!(
                    "label {bad} out of range for {} classes",
                    self.classes
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels.as_deref().ok_or(Error::MissingLabels)
    }

    pub fn one_hot(&self) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .labels()?
            .iter()
            .map(|&y| one_hot(y, self.classes))
            .collect())
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            classes: self.classes,
        }
    }

    pub fn unlabeled(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}

fn draw_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the cumulative total: take the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

// ─── continuous worlds ──────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: f64 },
    Mixture(Vec<(f64, Density)>),
}

impl Density {
    pub fn dim(&self) -> usize {
        match self {
            Density::UniformBox { lo, .. } => lo.len(),
            Density::Gaussian { mean, .. } => mean.len(),
            Density::Mixture(parts) => parts.first().map_or(0, |(_, d)| d.dim()),
        }
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        match self {
            Density::UniformBox { lo, hi } => {
                let inside = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(v, (a, b))| *a <= *v && *v <= *b);
                if inside {
                    1.0 / lo.iter().zip(hi).map(|(a, b)| b - a).product::<f64>()
                } else {
                    0.0
                }
            }
            Density::Gaussian { mean, std } => {
                let d = mean.len() as f64;
                let sq: f64 = x.iter().zip(mean).map(|(v, m)| (v - m) * (v - m)).sum();
                (-0.5 * sq / (std * std)).exp()
                    / (2.0 * std::f64::consts::PI * std * std).powf(d / 2.0)
            }
            Density::Mixture(parts) => parts.iter().map(|(w, d)| w * d.pdf(x)).sum(),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            Density::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                .collect(),
            Density::Gaussian { mean, std } => mean
                .iter()
                .map(|m| m + std * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            Density::Mixture(parts) => {
                let weights: Vec<f64> = parts.iter().map(|(w, _)| *w).collect();
                parts[draw_categorical(&weights, rng)].1.sample(rng)
            }
        }
    }
}

/// `p(y | x) = softmax(s(x) · (A x + b))` with a sharpness `s(x)` that is either
/// constant or switches between two values inside and outside a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingRule {
    /// `[K × d]`
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub sharpness: Sharpness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharpness {
    Constant(f64),
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
        inside: f64,
        outside: f64,
    },
}

impl LabelingRule {
    /// Softmax of a fixed random linear map drawn from `seed`.
    pub fn random_linear(dim: usize, classes: usize, scale: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut normal = || scale * rng.sample::<f64, _>(StandardNormal);
        let weights = (0..classes)
            .map(|_| (0..dim).map(|_| normal()).collect())
            .collect();
        let bias = (0..classes).map(|_| 0.5 * normal()).collect();
        Self {
            weights,
            bias,
            sharpness: Sharpness::Constant(1.0),
        }
    }

    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        let s = match &self.sharpness {
            Sharpness::Constant(s) => *s,
            Sharpness::Box {
                lo,
                hi,
                inside,
                outside,
            } => {
                let within = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(v, (a, b))| *a <= *v && *v <= *b);
                if within {
                    *inside
                } else {
                    *outside
                }
            }
        };
        let logits: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| s * (b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()))
            .collect();
        softmax(&logits).expect("finite features give finite logits")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousScenario {
    pub name: String,
    pub source: Density,
    pub target: Density,
    pub labeling: LabelingRule,
    /// Supremum of `q/p` when it is finite and known in closed form.
    pub weight_bound: Option<f64>,
}

impl ContinuousScenario {
    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    /// `q(x)/p(x)`; `None` outside the source support.
    pub fn weight(&self, x: &[f64]) -> Option<f64> {
        let p = self.source.pdf(x);
        (p > 0.0).then(|| self.target.pdf(x) / p)
    }
}

// ─── enumerable domains ─────────────────────────────────────────────────────

/// Finite world with exact tables for `p`, `q` and `p(y | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerableDomain {
    pub points: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// `[m × K]`, one probability vector per point.
    pub labels: Vec<Vec<f64>>,
}

const TABLE_TOL: f64 = 1e-12;

impl EnumerableDomain {
    pub fn new(points: Vec<Vec<f64>>, p: Vec<f64>, q: Vec<f64>, labels: Vec<Vec<f64>>) -> Result<Self> {
        let m = points.len();
        if m == 0 || m > 256 {
            return Err(Error::invalid(format!(
                "enumerable domains hold 1..=256 points, got {m}"
            )));
        }
        for (ctx, len) in [("p table", p.len()), ("q table", q.len()), ("label table", labels.len())] {
            if len != m {
                return Err(Error::Shape {
                    context: ctx,
                    expected: m,
                    got: len,
                });
            }
        }
        for (name, table) in [("p", &p), ("q", &q)] {
            if table.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid(format!("{name} has a negative or non-finite entry")));
            }
            let total: f64 = table.iter().sum();
            if (total - 1.0).abs() > TABLE_TOL {
                return Err(Error::invalid(format!("{name} sums to {total}, not 1")));
            }
        }
        if let Some(i) = (0..m).find(|&i| q[i] > 0.0 && p[i] == 0.0) {
            return Err(Error::OutsideSourceSupport { index: i });
        }
        let k = labels[0].len();
        for row in &labels {
            if row.len() != k || k == 0 {
                return Err(Error::Shape {
                    context: "label row",
                    expected: k,
                    got: row.len(),
                });
            }
            let total: f64 = row.iter().sum();
            if row.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > TABLE_TOL {
                return Err(Error::invalid("label row is not a probability vector"));
            }
        }
        Ok(Self {
            points,
            p,
            q,
            labels,
        })
    }

    /// `side × side` grid on `[0,1]²` with seeded random tables. A handful of
    /// points get zero target mass so that `w = 0` and `g = 1` occur.
    pub fn random_grid(side: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = seed::rng(seed);
        let m = side * side;
        let step = 1.0 / side as f64;
        let points: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                vec![
                    (i % side) as f64 * step + step / 2.0,
                    (i / side) as f64 * step + step / 2.0,
                ]
            })
            .collect();
        let p: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let q: Vec<f64> = (0..m)
            .map(|_| {
                if rng.random::<f64>() < 0.125 {
                    0.0
                } else {
                    rng.random_range(0.05..1.0)
                }
            })
            .collect();
        let labels: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let z: Vec<f64> = (0..classes)
                    .map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                softmax(&z).expect("finite logits")
            })
            .collect();
        Self::new(points, normalize(p), normalize(q), labels)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.labels[0].len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn measure(&self, which: Measure) -> &[f64] {
        match which {
            Measure::Source => &self.p,
            Measure::Target => &self.q,
        }
    }

    /// Mixture density `r(x) = (p(x) + q(x)) / 2`.
    pub fn mixture(&self, i: usize) -> f64 {
        0.5 * (self.p[i] + self.q[i])
    }

    /// `U = max q_i / p_i` over the source support.
    pub fn max_weight(&self) -> f64 {
        (0..self.len())
            .filter(|&i| self.p[i] > 0.0)
            .map(|i| self.q[i] / self.p[i])
            .fold(0.0, f64::max)
    }

    pub fn oracle_weight(&self, i: usize) -> Result<f64> {
        if self.p[i] == 0.0 {
            return Err(Error::OutsideSourceSupport { index: i });
        }
        Ok(self.q[i] / self.p[i])
    }

    pub fn oracle_discriminator(&self, i: usize) -> Result<f64> {
        let total = self.p[i] + self.q[i];
        if total == 0.0 {
            return Err(Error::OutsideMixtureSupport { index: i });
        }
        Ok(self.p[i] / total)
    }

    /// `E[y]` under `which`, normalized by the summed measure in the same
    /// order as the grouping oracle, so a constant base-rate forecast is its
    /// own conditional expectation bit for bit.
    pub fn base_rate(&self, which: Measure) -> Vec<f64> {
        let mu = self.measure(which);
        (0..self.classes())
            .map(|coord| {
                let (mut mass, mut weighted) = (0.0, 0.0);
                for (m, l) in mu.iter().zip(&self.labels) {
                    mass += m;
                    weighted += m * l[coord];
                }
                weighted / mass
            })
            .collect()
    }

    /// `c(x_i)_k = E[y_k | f̂(x)_k = f̂(x_i)_k]` under the chosen measure,
    /// grouping points whose forecast coordinate is exactly equal.
    pub fn oracle_true_calibration(&self, forecasts: &[Vec<f64>], which: Measure) -> Result<Vec<Vec<f64>>> {
        let m = self.len();
        let k = self.classes();
        if forecasts.len() != m {
            return Err(Error::Shape {
                context: "forecast table",
                expected: m,
                got: forecasts.len(),
            });
        }
        if let Some(row) = forecasts.iter().find(|r| r.len() != k) {
            return Err(Error::Shape {
                context: "forecast row",
                expected: k,
                got: row.len(),
            });
        }
        let mu = self.measure(which);
        let mut c = vec![vec![0.0; k]; m];
        for coord in 0..k {
            // key: value bits with -0 folded into +0
            let mut groups: HashMap<u64, (f64, f64, f64, usize)> = HashMap::new();
            for i in 0..m {
                let entry = groups
                    .entry((forecasts[i][coord] + 0.0).to_bits())
                    .or_insert((0.0, 0.0, 0.0, 0));
                entry.0 += mu[i];
                entry.1 += mu[i] * self.labels[i][coord];
                entry.2 += self.labels[i][coord];
                entry.3 += 1;
            }
            for i in 0..m {
                let (mass, weighted, plain, count) = groups[&(forecasts[i][coord] + 0.0).to_bits()];
                c[i][coord] = if mass > 0.0 {
                    weighted / mass
                } else {
                    // zero-measure group: no conditional expectation, use the plain mean
                    plain / count as f64
                };
            }
        }
        Ok(c)
    }

    pub fn sample_indices(&self, n: usize, which: Measure, rng: &mut Rng) -> Vec<usize> {
        let mu = self.measure(which);
        (0..n).map(|_| draw_categorical(mu, rng)).collect()
    }

    /// Index of the point with exactly these coordinates.
    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        self.points.iter().position(|pt| pt.as_slice() == x)
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

// ─── scenarios ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Continuous(ContinuousScenario),
    Enumerable { name: String, domain: EnumerableDomain },
}

pub const BUILTIN_SCENARIOS: [&str; 4] = ["box-shift", "box-same", "gauss-shift", "grid-K3"];

/// Seed of the fixed "grid-K3" tables.
pub const GRID_K3_SEED: u64 = 3;

impl Scenario {
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "box-shift" => Ok(Scenario::Continuous(box_world("box-shift", true))),
            "box-same" => Ok(Scenario::Continuous(box_world("box-same", false))),
            "gauss-shift" => Ok(Scenario::Continuous(gauss_shift())),
            "grid-K3" => Ok(Scenario::Enumerable {
                name: name.into(),
                domain: EnumerableDomain::random_grid(8, 3, GRID_K3_SEED)?,
            }),
            other => Err(Error::Config(format!(
                "unknown scenario {other:?}; built-ins are {BUILTIN_SCENARIOS:?}"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Scenario::Continuous(c) => &c.name,
            Scenario::Enumerable { name, .. } => name,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Scenario::Continuous(c) => c.dim(),
            Scenario::Enumerable { domain, .. } => domain.dim(),
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Scenario::Continuous(c) => c.labeling.classes(),
            Scenario::Enumerable { domain, .. } => domain.classes(),
        }
    }

    pub fn domain(&self) -> Option<&EnumerableDomain> {
        match self {
            Scenario::Enumerable { domain, .. } => Some(domain),
            Scenario::Continuous(_) => None,
        }
    }

    /// The enumerable domain, or an unsupported-operation error for
    /// continuous scenarios.
    pub fn require_domain(&self) -> Result<&EnumerableDomain> {
        self.domain().ok_or_else(|| {
            Error::Unsupported(format!(
                "scenario {:?} is continuous; exact evaluation needs an enumerable domain",
                self.name()
            ))
        })
    }

    /// Finite supremum of the importance weight, when known.
    pub fn weight_bound(&self) -> Option<f64> {
        match self {
            Scenario::Continuous(c) => c.weight_bound,
            Scenario::Enumerable { domain, .. } => Some(domain.max_weight()),
        }
    }

    pub fn label_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Scenario::Continuous(c) => Ok(c.labeling.probs(x)),
            Scenario::Enumerable { domain, .. } => domain
                .index_of(x)
                .map(|i| domain.labels[i].clone())
                .ok_or_else(|| Error::invalid("point is not part of the enumerable domain")),
        }
    }

    /// `n` i.i.d. draws; identical `seed` gives identical datasets.
    pub fn sample(&self, n: usize, seed: u64, which: Draw) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        let mut rng = seed::stage_rng(seed, seed::tag::SAMPLE);
        let classes = self.classes();
        let labeled = which != Draw::TargetUnlabeled;
        let (features, labels): (Vec<Vec<f64>>, Vec<usize>) = match self {
            Scenario::Continuous(c) => {
                let density = match which {
                    Draw::SourceLabeled => &c.source,
                    _ => &c.target,
                };
                (0..n)
                    .map(|_| {
                        let x = density.sample(&mut rng);
                        let y = if labeled {
                            draw_categorical(&c.labeling.probs(&x), &mut rng)
                        } else {
                            0
                        };
                        (x, y)
                    })
                    .unzip()
            }
            Scenario::Enumerable { domain, .. } => {
                let measure = match which {
                    Draw::SourceLabeled => Measure::Source,
                    _ => Measure::Target,
                };
                domain
                    .sample_indices(n, measure, &mut rng)
                    .into_iter()
                    .map(|i| {
                        let y = if labeled {
                            draw_categorical(&domain.labels[i], &mut rng)
                        } else {
                            0
                        };
                        (domain.points[i].clone(), y)
                    })
                    .unzip()
            }
        };
        Dataset::new(features, labeled.then_some(labels), classes)
    }
}

/// Sizes of the four pools of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolSizes {
    pub source_train: usize,
    pub source_validation: usize,
    pub target_unlabeled: usize,
    pub target_eval: usize,
}

impl Default for PoolSizes {
    fn default() -> Self {
        Self {
            source_train: 2000,
            source_validation: 1000,
            target_unlabeled: 2000,
            target_eval: 2000,
        }
    }
}

/// Labeled source train/validation, unlabeled target and labeled target
/// evaluation data.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPools {
    pub source_train: Dataset,
    pub source_validation: Dataset,
    pub target_unlabeled: Dataset,
    pub target_eval: Dataset,
}

impl Scenario {
    /// Draws every pool from its own seed stream derived from `seed`.
    pub fn sample_pools(&self, sizes: &PoolSizes, seed: u64) -> Result<RunPools> {
        let pool = |n, k, draw| self.sample(n, seed::derive(seed, k), draw);
        Ok(RunPools {
            source_train: pool(sizes.source_train, 1, Draw::SourceLabeled)?,
            source_validation: pool(sizes.source_validation, 2, Draw::SourceLabeled)?,
            target_unlabeled: pool(sizes.target_unlabeled, 3, Draw::TargetUnlabeled)?,
            target_eval: pool(sizes.target_eval, 4, Draw::TargetLabeled)?,
        })
    }
}

/// Three classes arranged at 120° around (0.6, 0.6). Labels inside the
/// target square are noisier than in the source-only band.
fn box_labeling() -> LabelingRule {
    let weights = (0..3)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / 3.0 + 0.3;
            vec![6.0 * angle.cos(), 6.0 * angle.sin()]
        })
        .collect::<Vec<Vec<f64>>>();
    let bias = weights
        .iter()
        .map(|w: &Vec<f64>| -0.6 * (w[0] + w[1]))
        .collect();
    LabelingRule {
        weights,
        bias,
        sharpness: Sharpness::Box {
            lo: vec![0.3, 0.3],
            hi: vec![1.0, 1.0],
            inside: 0.2,
            outside: 3.0,
        },
    }
}

fn box_world(name: &str, shifted: bool) -> ContinuousScenario {
    let unit = Density::UniformBox {
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
    };
    let (target, bound) = if shifted {
        let square = Density::UniformBox {
            lo: vec![0.3, 0.3],
            hi: vec![1.0, 1.0],
        };
        let bound = (1.0 - BOX_SHIFT_FLOOR) / 0.49 + BOX_SHIFT_FLOOR;
        (
            Density::Mixture(vec![(1.0 - BOX_SHIFT_FLOOR, square), (BOX_SHIFT_FLOOR, unit.clone())]),
            bound,
        )
    } else {
        (unit.clone(), 1.0)
    };
    ContinuousScenario {
        name: name.into(),
        source: unit,
        target,
        labeling: box_labeling(),
        weight_bound: Some(bound),
    }
}

fn gauss_shift() -> ContinuousScenario {
    ContinuousScenario {
        name: "gauss-shift".into(),
        source: Density::Gaussian {
            mean: vec![0.0, 0.0],
            std: 1.0,
        },
        target: Density::Gaussian {
            mean: vec![1.0, 1.0],
            std: 1.0,
        },
        labeling: LabelingRule::random_linear(2, 3, 1.5, 17),
        weight_bound: None,
    }
}

// ─── CSV ────────────────────────────────────────────────────────────────────

/// Writes `f0,...,f{d-1},label` with 17 significant digits per feature.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_csv_string(dataset))?;
    Ok(())
}

pub fn to_csv_string(dataset: &Dataset) -> String {
    let d = dataset.dim();
    let mut out = String::new();
    for j in 0..d {
        let _ = write!(out, "f{j},");
    }
    out.push_str("label\n");
    for (i, row) in dataset.features.iter().enumerate() {
        for v in row {
            let _ = write!(out, "{v:.16e},");
        }
        if let Some(labels) = &dataset.labels {
            let _ = write!(out, "{}", labels[i]);
        }
        out.push('\n');
    }
    out
}

/// Reads the CSV dataset format. `classes`, when given, bounds the labels;
/// otherwise it is inferred as one past the largest label.
pub fn load_csv(path: impl AsRef<Path>, classes: Option<usize>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, classes)
}

pub fn parse_csv(text: &str, classes: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let d = header.len().saturating_sub(1);
    let header_ok = d >= 1
        && header.get(d) == Some("label")
        && (0..d).all(|j| header.get(j) == Some(format!("f{j}").as_str()));
    if !header_ok {
        return Err(Error::Parse {
            line: 1,
            detail: format!("expected header f0,...,f{{d-1}},label; got {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut features = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d + 1 {
            return Err(Error::Parse {
                line,
                detail: format!("expected {} cells, got {}", d + 1, record.len()),
            });
        }
        let row = (0..d)
            .map(|j| {
                let cell = &record[j];
                cell.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        detail: format!("non-numeric feature {cell:?} in column f{j}"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let cell = record[d].trim();
        let label = if cell.is_empty() {
            None
        } else {
            let y = cell.parse::<usize>().map_err(|_| Error::Parse {
                line,
                detail: format!("label {cell:?} is not a nonnegative integer"),
            })?;
            if let Some(k) = classes {
                if y >= k {
                    return Err(Error::Parse {
                        line,
                        detail: format!("label {y} out of range 0..{k}"),
                    });
                }
            }
            Some(y)
        };
        features.push(row);
        labels.push(label);
    }
    let labeled = labels.iter().filter(|l| l.is_some()).count();
    let labels = if labeled == 0 {
        None
    } else if labeled == labels.len() {
        Some(labels.into_iter().map(Option::unwrap).collect::<Vec<_>>())
    } else {
        let first = labels.iter().position(Option::is_none).unwrap_or(0);
        return Err(Error::Parse {
            line: first as u64 + 2,
            detail: "mixed labeled and unlabeled rows".into(),
        });
    };
    let classes = classes.unwrap_or_else(|| {
        labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(1, |m| m + 1)
    });
    Dataset::new(features, labels, classes)
}
