//! Recalibration of classifier probabilities under covariate shift.
//!
//! The pipeline follows four variants that share one substrate:
//!
//! | Variant        | Feature map | Importance weights             |
//! |----------------|-------------|--------------------------------|
//! | `Temp`         | φ           | none (all ones)                |
//! | `IW+Temp`      | φ           | calibrated source-discriminator |
//! | `FL+Temp`      | ψ∘φ         | none (all ones)                |
//! | `FL+IW+Temp`   | ψ∘φ         | retrained discriminator on ψ∘φ |
//!
//! φ is the hidden representation of a classifier trained on labeled source
//! data, ψ is an auxiliary map trained adversarially so that source and target
//! features look alike. The temperature of the forecaster is fitted by
//! minimizing an importance-weighted Brier loss whose weights come from a
//! clamped, temperature-scaled source-discriminator.
//!
//! Modules:
//! - [`numerics`]: dense networks, manual backprop, SGD, gradient checking.
//! - [`scenarios`]: synthetic shift worlds, enumerable domains with exact oracles, CSV I/O.
//! - [`discriminator`]: source-discriminator training, calibration, clamping, weights.
//! - [`calibrator`]: forecaster, weighted temperature scaling, method pipelines.
//! - [`featlearn`]: adversarial indistinguishable feature learning.
//! - [`metrics`]: ECE, reliability bins, Brier decomposition, bound evaluation.

pub mod calibrator;
pub mod discriminator;
pub mod error;
pub mod featlearn;
pub mod metrics;
pub mod numerics;
pub mod scenarios;
pub mod seed;

pub use error::{Error, Result};
