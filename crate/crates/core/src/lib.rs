//! Simulation and verification of selfdecomposable laws through their
//! background driving Lévy process (BDLP).
//!
//! A selfdecomposable random variable `X` can be written as the discounted
//! integral `X = ∫_(0,∞) e^{-s} dY(s)` of a Lévy process `Y`. Stopping that
//! integral at a stopping time `τ` splits it into
//! `X = X_τ + e^{-τ} X'` with `X'` an independent copy of `X`, which on a
//! single trajectory is an exact identity. This crate simulates the
//! trajectories, evaluates the integrals two independent ways, performs the
//! stopping-time factorization, runs the associated perpetuity recursions
//! (`Z = A Z + B`) and provides the statistical tools that turn every
//! distributional claim into a pass/fail check.
//!
//! Modules, bottom-up:
//!
//! - [`rng`]: counter-based, splittable random streams and elementary samplers.
//! - [`levy`]: compound-Poisson-plus-Gaussian paths; shifting and thinning.
//! - [`discount`]: the discounted integral, by jump sum and by parts.
//! - [`decomposition`]: stopping rules and the `X_τ + e^{-τ} X'` factorization.
//! - [`perpetuity`]: affine recursions, backward series, beta-gamma identities.
//! - [`operator`]: the matrix-discounted (`e^{-tQ}`) analogue in `ℝ^d`.
//! - [`stats`]: two-sample KS, empirical characteristic functions, independence
//!   diagnostics and [`stats::StatReport`].

pub mod decomposition;
pub mod discount;
pub mod error;
pub mod levy;
pub mod operator;
pub mod perpetuity;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use rng::RngStream;
