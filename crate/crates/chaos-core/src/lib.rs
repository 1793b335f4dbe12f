//! Tail and density asymptotics for Gaussian and polar chaos.
//!
//! A *Gaussian chaos* is a random variable `h(ξ)` where `h: ℝᵈ → ℝ` is
//! homogeneous of order `α > 0` (that is, `h(x·t) = x^α h(t)` for `x > 0`)
//! and `ξ` is a centered Gaussian vector with covariance `B`. Whitening
//! reduces the problem to `g(η) = h(√B η)` with `η` standard normal, and the
//! polar factorization `η ≙ χ·ζ` (with `χ² ~ χ²_d` independent of `ζ`
//! uniform on the unit sphere) reduces everything to two ingredients:
//!
//! * the maximum `ĝ` of `g` on the unit sphere together with the geometry of
//!   the maximizer set `M` (isolated points, or an `m`-dimensional manifold),
//! * the sphere-restricted Hessian of `g` at the maximizers.
//!
//! From these the crate assembles the leading-order constants `h₀` (tail and
//! density prefactors) and `g₀` (near-maximum level-set law), evaluates the
//! resulting expansions, and verifies every asymptotic against an exact
//! conditional Monte Carlo estimator built on the same polar factorization.
//!
//! Module map:
//!
//! * [`exprlang`] — expression parser over `u1..ud` with exact second-order
//!   forward-mode derivatives and a homogeneity checker.
//! * [`geometry`] — hyperspherical coordinates, tangent frames, sphere
//!   constants, uniform sphere sampling.
//! * [`specfun`] — regularized incomplete gamma, chi-family tails and
//!   densities (also in log space), the truncated second moment of χ², and
//!   the Watson-type leading term.
//! * [`func`] — the [`func::HomogeneousFn`] trait shared by parsed
//!   expressions and built-in chaos functions.
//! * [`maximize`] — multi-start ascent on the sphere, clustering, manifold
//!   dimension detection.
//! * [`hessian`] — tangent Hessians, the normalized matrix `A`,
//!   nondegeneracy checks and pseudo-determinant minors.
//! * [`radial`] — radial models for `χ^α` beyond Gaussian (Weibullian and
//!   tabulated tails) with Gumbel-MDA scaling functions.
//! * [`asymptotics`] — whitening, `h₀` for finite and manifold maximizer
//!   sets, tail/density/polar evaluators, `g₀`, and the universal bound.
//! * [`montecarlo`] — conditional (Rao–Blackwellized) tail and density
//!   estimators, plain MC, product-of-chi-squares determinant sampling.
//! * [`catalog`] — built-in chaos instances with closed-form reference
//!   constants and charts.

pub mod asymptotics;
pub mod catalog;
pub mod exprlang;
pub mod func;
pub mod geometry;
pub mod hessian;
pub mod maximize;
pub mod montecarlo;
pub mod quad;
pub mod radial;
pub mod rng;
pub mod specfun;

pub use func::{EvalError, HomogeneousFn};
pub use rng::CounterRng;
