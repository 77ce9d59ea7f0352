//! Exact evaluation of the target calibration bound
//!
//! `E_q‖f̂ − c‖² ≤ E_p[‖f̂ − y‖² (1/ĝ − 1/2)] + λ E_r[(ĝ − s)²] − λ E_r[(g − s)²]`
//!
//! with `λ = (1 + U)⁴`, together with every intermediate step of its proof.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::softmax;
use crate::scenarios::{one_hot, EnumerableDomain, Measure};
use crate::seed;

/// Relative tolerance used when checking chain links.
const LINK_TOL: f64 = 1e-12;

/// One step `lesser ≤ greater`, or `lesser = greater` when `equality` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub name: String,
    pub lesser: f64,
    pub greater: f64,
    pub equality: bool,
}

impl ChainLink {
    fn new(name: &str, lesser: f64, greater: f64, equality: bool) -> Self {
        Self {
            name: name.to_string(),
            lesser,
            greater,
            equality,
        }
    }

    /// Holds up to `tol` relative to the larger magnitude (at least 1).
    pub fn holds(&self, tol: f64) -> bool {
        let scale = 1f64.max(self.lesser.abs()).max(self.greater.abs());
        if self.equality {
            (self.lesser - self.greater).abs() <= tol * scale
        } else {
            self.lesser <= self.greater + tol * scale
        }
    }
}

/// Intermediate quantities of the proof. `L = ‖f̂ − y‖²`, `w` the true and
/// `ŵ = 1/ĝ − 1` the estimated weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundChain {
    /// `E_q L`
    pub target_loss: f64,
    /// `E_p[w L]`
    pub reweighted_loss: f64,
    /// `E_p[ŵ L]`
    pub estimated_weighted_loss: f64,
    /// `E_p[L (w − ŵ)]`
    pub cross_term: f64,
    /// `sqrt(E_p L² · E_p (w − ŵ)²)`
    pub cauchy_schwarz: f64,
    /// `(E_p L² + E_p (w − ŵ)²) / 2`
    pub am_gm: f64,
    /// `(E_p L + E_p (w − ŵ)²) / 2`; dominates `am_gm` only when `L ≤ 1`
    pub bounded_loss: f64,
    /// `max(1, max L)`; `L` reaches 2 for confidently wrong multiclass forecasts
    pub loss_bound: f64,
    /// `(loss_bound · E_p L + E_p (w − ŵ)²) / 2`, which always dominates `am_gm`
    pub scaled_bounded_loss: f64,
    /// `E_p (w − ŵ)²`
    pub weight_error: f64,
    /// `λ E_p (g − ĝ)²`
    pub source_disc_gap: f64,
    /// `2λ E_r (g − ĝ)²`
    pub mixture_disc_gap: f64,
    /// `2λ (E_r (s − ĝ)² − E_r (s − g)²)`
    pub disc_excess: f64,
    /// Largest `L` over labels with positive probability at source-supported points.
    pub max_loss: f64,
}

impl BoundChain {
    pub fn links(&self) -> Vec<ChainLink> {
        vec![
            ChainLink::new("importance identity", self.target_loss, self.reweighted_loss, true),
            ChainLink::new(
                "weight split",
                self.reweighted_loss,
                self.estimated_weighted_loss + self.cross_term,
                true,
            ),
            ChainLink::new("cauchy-schwarz", self.cross_term, self.cauchy_schwarz, false),
            ChainLink::new("am-gm", self.cauchy_schwarz, self.am_gm, false),
            ChainLink::new("bounded loss", self.am_gm, self.scaled_bounded_loss, false),
            ChainLink::new("weight to discriminator", self.weight_error, self.source_disc_gap, false),
            ChainLink::new("source to mixture", self.source_disc_gap, self.mixture_disc_gap, false),
            ChainLink::new("bayes excess", self.mixture_disc_gap, self.disc_excess, true),
        ]
    }

    /// Whether `am_gm ≤ bounded_loss`, the step that assumes `L ≤ 1`.
    pub fn unit_loss_step_holds(&self) -> bool {
        ChainLink::new("unit loss", self.am_gm, self.bounded_loss, false).holds(LINK_TOL)
    }

    /// Names of links that fail at the default tolerance.
    pub fn violations(&self) -> Vec<String> {
        self.links()
            .into_iter()
            .filter(|l| !l.holds(LINK_TOL))
            .map(|l| l.name)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `E_q‖f̂ − c‖²`
    pub lhs: f64,
    /// `E_p[‖f̂ − y‖² (ŵ + 1/2)]`
    pub term_weighted_cls: f64,
    /// `E_r[(ĝ − s)²]`
    pub term_disc_error: f64,
    /// `−λ E_r[(g − s)²]`
    pub term_bayes_disc: f64,
    pub lambda: f64,
    pub clamp_bound: f64,
    pub rhs: f64,
    /// `rhs − lhs`
    pub slack: f64,
    pub chain: BoundChain,
}

impl BoundReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.slack >= -tol
    }
}

/// `λ = (1 + U)⁴`.
pub fn lambda_for(clamp_bound: f64) -> f64 {
    (1.0 + clamp_bound).powi(4)
}

pub fn theorem1_bound(
    domain: &EnumerableDomain,
    forecasts: &[Vec<f64>],
    g_hat: &[f64],
    clamp_bound: f64,
) -> Result<BoundReport> {
    theorem1_bound_with_lambda(domain, forecasts, g_hat, clamp_bound, lambda_for(clamp_bound))
}

/// As [`theorem1_bound`] with an explicit multiplier in place of `(1 + U)⁴`.
pub fn theorem1_bound_with_lambda(
    domain: &EnumerableDomain,
    forecasts: &[Vec<f64>],
    g_hat: &[f64],
    clamp_bound: f64,
    lambda: f64,
) -> Result<BoundReport> {
    let parts = evaluate(domain, forecasts, g_hat, clamp_bound, lambda)?;
    let c = domain.oracle_true_calibration(forecasts, Measure::Target)?;
    let lhs: f64 = (0..domain.len())
        .map(|i| {
            domain.q[i]
                * forecasts[i]
                    .iter()
                    .zip(&c[i])
                    .map(|(f, ck)| (f - ck).powi(2))
                    .sum::<f64>()
        })
        .sum();
    let rhs = parts.weighted_cls + lambda * (parts.disc_error - parts.bayes_error);
    Ok(BoundReport {
        lhs,
        term_weighted_cls: parts.weighted_cls,
        term_disc_error: parts.disc_error,
        term_bayes_disc: -lambda * parts.bayes_error,
        lambda,
        clamp_bound,
        rhs,
        slack: rhs - lhs,
        chain: parts.chain,
    })
}

pub fn bound_chain(
    domain: &EnumerableDomain,
    forecasts: &[Vec<f64>],
    g_hat: &[f64],
    clamp_bound: f64,
) -> Result<BoundChain> {
    Ok(evaluate(domain, forecasts, g_hat, clamp_bound, lambda_for(clamp_bound))?.chain)
}

/// Forecasts and discriminator values at every point of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInstance {
    pub forecasts: Vec<Vec<f64>>,
    pub g_hat: Vec<f64>,
}

/// Forecasts are softmax of Gaussian logits whose scale is drawn from
/// `[0.5, 3]` once per instance; ĝ is uniform on `[1/(1+U), 1]`.
pub fn random_instance(domain: &EnumerableDomain, clamp_bound: f64, seed: u64) -> Result<BoundInstance> {
    if !(clamp_bound > 0.0 && clamp_bound.is_finite()) {
        return Err(Error::invalid(format!("clamp bound must be positive, got {clamp_bound}")));
    }
    let mut rng = seed::rng(seed);
    let scale = rng.random_range(0.5..=3.0);
    let forecasts = (0..domain.len())
        .map(|_| {
            let z: Vec<f64> = (0..domain.classes())
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            softmax(&z)
        })
        .collect::<Result<_>>()?;
    let floor = 1.0 / (1.0 + clamp_bound);
    let g_hat = (0..domain.len()).map(|_| rng.random_range(floor..=1.0)).collect();
    Ok(BoundInstance { forecasts, g_hat })
}

/// Copy of `domain` with each label table replaced by its most likely class,
/// paired with the correct one-hot forecaster and the exact discriminator.
/// Both sides of the bound vanish on this instance.
pub fn tight_instance(domain: &EnumerableDomain) -> Result<(EnumerableDomain, BoundInstance)> {
    let k = domain.classes();
    let labels: Vec<Vec<f64>> = domain
        .labels
        .iter()
        .map(|row| one_hot(crate::calibrator::argmax(row), k))
        .collect();
    let det = EnumerableDomain::new(domain.points.clone(), domain.p.clone(), domain.q.clone(), labels)?;
    let g_hat = (0..det.len())
        .map(|i| det.oracle_discriminator(i))
        .collect::<Result<_>>()?;
    let forecasts = det.labels.clone();
    Ok((det, BoundInstance { forecasts, g_hat }))
}

/// Instance that only the `λ` term can rescue: where `w > 1` the forecaster
/// is confidently wrong (one-hot on the least likely label) and ĝ = 1 assigns
/// zero estimated weight; elsewhere both are exact. Used as a mutation check
/// on the multiplier, since it violates the bound for `λ = 1` on "grid-K3".
pub fn adversarial_instance(domain: &EnumerableDomain) -> Result<BoundInstance> {
    let k = domain.classes();
    let mut forecasts = Vec::with_capacity(domain.len());
    let mut g_hat = Vec::with_capacity(domain.len());
    for i in 0..domain.len() {
        let row = &domain.labels[i];
        if domain.oracle_weight(i)? > 1.0 {
            let least = (0..k).min_by(|&a, &b| row[a].total_cmp(&row[b])).expect("k > 0");
            forecasts.push(one_hot(least, k));
            g_hat.push(1.0);
        } else {
            forecasts.push(row.clone());
            g_hat.push(domain.oracle_discriminator(i)?);
        }
    }
    Ok(BoundInstance { forecasts, g_hat })
}

struct Parts {
    weighted_cls: f64,
    disc_error: f64,
    bayes_error: f64,
    chain: BoundChain,
}

fn check_inputs(domain: &EnumerableDomain, forecasts: &[Vec<f64>], g_hat: &[f64], clamp_bound: f64) -> Result<()> {
    let m = domain.len();
    if forecasts.len() != m || g_hat.len() != m {
        return Err(Error::Shape {
            context: "bound inputs",
            expected: m,
            got: forecasts.len().min(g_hat.len()),
        });
    }
    if let Some(row) = forecasts.iter().find(|r| r.len() != domain.classes()) {
        return Err(Error::Shape {
            context: "forecast row",
            expected: domain.classes(),
            got: row.len(),
        });
    }
    if !(clamp_bound > 0.0 && clamp_bound.is_finite()) {
        return Err(Error::invalid(format!("clamp bound must be positive, got {clamp_bound}")));
    }
    let floor = 1.0 / (1.0 + clamp_bound);
    if let Some(i) = g_hat.iter().position(|g| !(*g >= floor && *g <= 1.0)) {
        return Err(Error::Precondition(format!(
            "discriminator value {} at point {i} outside [{floor}, 1]",
            g_hat[i]
        )));
    }
    for i in 0..m {
        if domain.p[i] > 0.0 && domain.q[i] / domain.p[i] > clamp_bound * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "true weight {} at point {i} exceeds the bound {clamp_bound}",
                domain.q[i] / domain.p[i]
            )));
        }
    }
    Ok(())
}

fn evaluate(
    domain: &EnumerableDomain,
    forecasts: &[Vec<f64>],
    g_hat: &[f64],
    clamp_bound: f64,
    lambda: f64,
) -> Result<Parts> {
    check_inputs(domain, forecasts, g_hat, clamp_bound)?;
    let k = domain.classes();
    let mut target_loss = 0.0;
    let mut reweighted = 0.0;
    let mut est_weighted = 0.0;
    let mut cross = 0.0;
    let mut loss_p = 0.0;
    let mut loss_sq_p = 0.0;
    let mut weight_err = 0.0;
    let mut disc_gap_p = 0.0;
    let mut disc_gap_r = 0.0;
    let mut disc_error = 0.0;
    let mut bayes_error = 0.0;
    let mut weighted_cls = 0.0;
    let mut max_loss: f64 = 0.0;

    for i in 0..domain.len() {
        let (p, q, r) = (domain.p[i], domain.q[i], domain.mixture(i));
        let f = &forecasts[i];
        let labels = &domain.labels[i];
        let norm2: f64 = f.iter().map(|v| v * v).sum();
        // ‖f − e_y‖² = ‖f‖² − 2 f_y + 1
        let (mut loss, mut loss_sq) = (0.0, 0.0);
        for y in 0..k {
            let l = norm2 - 2.0 * f[y] + 1.0;
            loss += labels[y] * l;
            loss_sq += labels[y] * l * l;
            if labels[y] > 0.0 && p > 0.0 {
                max_loss = max_loss.max(l);
            }
        }
        target_loss += q * loss;
        if r > 0.0 {
            let g = domain.oracle_discriminator(i)?;
            let gh = g_hat[i];
            disc_gap_r += r * (g - gh).powi(2);
            disc_error += r * (g * (1.0 - gh).powi(2) + (1.0 - g) * gh * gh);
            bayes_error += r * g * (1.0 - g);
        }
        if p > 0.0 {
            let w = domain.oracle_weight(i)?;
            let g = domain.oracle_discriminator(i)?;
            let w_hat = 1.0 / g_hat[i] - 1.0;
            reweighted += p * w * loss;
            est_weighted += p * w_hat * loss;
            cross += p * (w - w_hat) * loss;
            loss_p += p * loss;
            loss_sq_p += p * loss_sq;
            weight_err += p * (w - w_hat).powi(2);
            disc_gap_p += p * (g - g_hat[i]).powi(2);
            weighted_cls += p * loss * (1.0 / g_hat[i] - 0.5);
        }
    }

    let chain = BoundChain {
        target_loss,
        reweighted_loss: reweighted,
        estimated_weighted_loss: est_weighted,
        cross_term: cross,
        cauchy_schwarz: (loss_sq_p * weight_err).sqrt(),
        am_gm: 0.5 * (loss_sq_p + weight_err),
        bounded_loss: 0.5 * (loss_p + weight_err),
        loss_bound: max_loss.max(1.0),
        scaled_bounded_loss: 0.5 * (max_loss.max(1.0) * loss_p + weight_err),
        weight_error: weight_err,
        source_disc_gap: lambda * disc_gap_p,
        mixture_disc_gap: 2.0 * lambda * disc_gap_r,
        disc_excess: 2.0 * lambda * (disc_error - bayes_error),
        max_loss,
    };
    Ok(Parts {
        weighted_cls,
        disc_error,
        bayes_error,
        chain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two points with deterministic labels and weights 3 and 1/3.
    fn deterministic_domain() -> EnumerableDomain {
        EnumerableDomain::new(
            vec![vec![0.0], vec![1.0]],
            vec![0.25, 0.75],
            vec![0.75, 0.25],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn correct_forecaster_with_oracle_discriminator_is_tight() {
        let domain = deterministic_domain();
        let u = domain.max_weight();
        let forecasts = domain.labels.clone();
        let g: Vec<f64> = (0..2).map(|i| domain.oracle_discriminator(i).unwrap()).collect();
        let report = theorem1_bound(&domain, &forecasts, &g, u).unwrap();
        assert_eq!(report.lhs, 0.0);
        assert_eq!(report.rhs, 0.0);
        assert_eq!(report.slack, 0.0);
        assert!(report.chain.weight_error < 1e-30);
    }

    #[test]
    fn tight_instance_of_grid_is_tight() {
        let domain = EnumerableDomain::random_grid(8, 3, 3).unwrap();
        let (det, inst) = tight_instance(&domain).unwrap();
        let report = theorem1_bound(&det, &inst.forecasts, &inst.g_hat, det.max_weight()).unwrap();
        assert_eq!(report.lhs, 0.0);
        assert!(report.slack.abs() <= 1e-12, "slack {}", report.slack);
    }

    #[test]
    fn random_instance_respects_clamp_band() {
        let domain = EnumerableDomain::random_grid(4, 3, 1).unwrap();
        let u = domain.max_weight();
        let a = random_instance(&domain, u, 9).unwrap();
        assert_eq!(a, random_instance(&domain, u, 9).unwrap());
        assert!(a.g_hat.iter().all(|g| (1.0 / (1.0 + u)..=1.0).contains(g)));
        assert!(a.forecasts.iter().all(|f| (f.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn unit_bound_gives_lambda_sixteen() {
        assert_eq!(lambda_for(1.0), 16.0);
    }

    #[test]
    fn equal_measures_with_unit_weights() {
        let domain = EnumerableDomain::new(
            vec![vec![0.0], vec![1.0]],
            vec![0.4, 0.6],
            vec![0.4, 0.6],
            vec![vec![0.7, 0.3], vec![0.2, 0.8]],
        )
        .unwrap();
        let forecasts = vec![vec![0.6, 0.4], vec![0.5, 0.5]];
        let chain = bound_chain(&domain, &forecasts, &[0.5, 0.5], 1.0).unwrap();
        let plain = 0.4 * (0.7 * (0.16 + 0.16) + 0.3 * (0.36 + 0.36)) + 0.6 * (0.5);
        assert!((chain.target_loss - plain).abs() < 1e-15);
        assert!((chain.reweighted_loss - plain).abs() < 1e-15);
        assert_eq!(chain.weight_error, 0.0);
    }

    #[test]
    fn clamp_violation_is_a_precondition_error() {
        let domain = deterministic_domain();
        let forecasts = domain.labels.clone();
        let err = theorem1_bound(&domain, &forecasts, &[0.1, 0.5], 3.0).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        let err = theorem1_bound(&domain, &forecasts, &[0.5, 0.5], 2.0).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "true weight 3 exceeds 2");
    }

    #[test]
    fn random_instances_respect_chain_and_bound() {
        use rand::Rng as _;
        let domain = EnumerableDomain::random_grid(8, 3, 3).unwrap();
        let u = domain.max_weight();
        let mut rng = crate::seed::rng(42);
        for _ in 0..20 {
            let forecasts: Vec<Vec<f64>> = (0..domain.len())
                .map(|_| {
                    let z: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                    crate::numerics::softmax(&z).unwrap()
                })
                .collect();
            let lo = 1.0 / (1.0 + u);
            let g: Vec<f64> = (0..domain.len()).map(|_| rng.random_range(lo..=1.0)).collect();
            let report = theorem1_bound(&domain, &forecasts, &g, u).unwrap();
            assert!(report.holds(1e-9), "slack {}", report.slack);
            assert!(report.chain.violations().is_empty(), "{:?}", report.chain.violations());
            if report.chain.max_loss <= 1.0 {
                assert!(report.chain.unit_loss_step_holds());
            }
        }
    }
}
