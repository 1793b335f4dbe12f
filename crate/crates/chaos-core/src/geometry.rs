//! Sphere utilities: hyperspherical coordinates and their Jacobian,
//! deterministic orthonormal tangent frames, surface/volume constants and
//! uniform sphere sampling.
//!
//! Coordinates follow the convention
//!
//! ```text
//! v₁ = r cos φ₁
//! v₂ = r sin φ₁ cos φ₂
//! ...
//! v_d = r sin φ₁ ... sin φ_{d-2} sin φ_{d-1}
//! ```
//!
//! with `φ₁..φ_{d-2} ∈ [0, π)` and `φ_{d-1} ∈ [0, 2π)`, and
//! `det J(r, φ) = r^{d-1} sin^{d-2} φ₁ ... sin φ_{d-2}`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::rng::CounterRng;
use crate::specfun::ln_gamma;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("zero vector has no tangent frame")]
    ZeroVector,
}

/// A point in hyperspherical coordinates; `phi.len() + 1` is the ambient
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct HypersphericalPoint {
    pub r: f64,
    pub phi: Vec<f64>,
}

impl HypersphericalPoint {
    pub fn new(r: f64, phi: Vec<f64>) -> Self {
        assert!(!phi.is_empty(), "need d >= 2");
        assert!(r >= 0.0);
        HypersphericalPoint { r, phi }
    }

    pub fn dim(&self) -> usize {
        self.phi.len() + 1
    }
}

/// Cartesian image of `p`; `‖result‖ = r` up to rounding.
pub fn to_cartesian(p: &HypersphericalPoint) -> DVector<f64> {
    let d = p.dim();
    let mut v = DVector::zeros(d);
    let mut sin_prod = p.r;
    for i in 0..d - 1 {
        v[i] = sin_prod * p.phi[i].cos();
        sin_prod *= p.phi[i].sin();
    }
    v[d - 1] = sin_prod;
    v
}

/// Inverse coordinate transform. The boolean is true when the point sits at
/// a coordinate singularity (some leading angle at 0 or π, i.e. the residual
/// norm under an axis vanishes); trailing angles are then zeroed and the
/// Jacobian must not be evaluated there.
pub fn to_hyperspherical(v: &DVector<f64>) -> (HypersphericalPoint, bool) {
    let d = v.len();
    assert!(d >= 2);
    let r = v.norm();
    let mut phi = vec![0.0; d - 1];
    let mut at_pole = false;
    // tail[i] = sqrt(v_{i+1}^2 + ... + v_d^2), accumulated backwards.
    let mut tail = vec![0.0; d];
    let mut acc = 0.0;
    for i in (0..d).rev() {
        acc += v[i] * v[i];
        tail[i] = acc.sqrt();
    }
    for i in 0..d - 2 {
        let rest = tail[i + 1];
        if rest <= 1e-15 * r.max(1e-300) {
            at_pole = true;
            // Leading angle is exactly 0 or π; the rest are zeroed.
            phi[i] = if v[i] >= 0.0 { 0.0 } else { std::f64::consts::PI };
            for a in phi.iter_mut().skip(i + 1) {
                *a = 0.0;
            }
            return (HypersphericalPoint { r, phi }, at_pole);
        }
        phi[i] = rest.atan2(v[i]);
    }
    let mut last = v[d - 1].atan2(v[d - 2]);
    if last < 0.0 {
        last += 2.0 * std::f64::consts::PI;
    }
    phi[d - 2] = last;
    (HypersphericalPoint { r, phi }, at_pole)
}

/// `det J(r, φ) = r^{d-1} ∏_{i=1}^{d-2} sin^{d-1-i} φ_i`.
pub fn sphere_jacobian(p: &HypersphericalPoint) -> f64 {
    let d = p.dim();
    let mut det = p.r.powi(d as i32 - 1);
    for i in 0..d.saturating_sub(2) {
        det *= p.phi[i].sin().powi((d - 2 - i) as i32);
    }
    det
}

/// An orthonormal basis of the tangent hyperplane at a unit vector.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    pub base: DVector<f64>,
    /// `d-1` orthonormal columns, each orthogonal to `base`.
    pub basis: DMatrix<f64>,
}

/// Deterministic tangent frame from the Householder complement: the
/// reflector sending `v` to `∓e₁` has `d-1` trailing columns orthonormal
/// and orthogonal to `v`. Input is renormalized; identical input yields an
/// identical frame.
pub fn tangent_frame(v: &DVector<f64>) -> Result<TangentFrame, GeometryError> {
    let d = v.len();
    let norm = v.norm();
    if norm < 1e-300 {
        return Err(GeometryError::ZeroVector);
    }
    let unit = v / norm;
    let sign = if unit[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut w = unit.clone();
    w[0] += sign;
    let wtw = w.norm_squared();
    let mut basis = DMatrix::zeros(d, d - 1);
    for j in 1..d {
        // Column j of H = I - 2 w wᵀ / (wᵀw).
        let scale = 2.0 * w[j] / wtw;
        for i in 0..d {
            basis[(i, j - 1)] = (if i == j { 1.0 } else { 0.0 }) - scale * w[i];
        }
    }
    Ok(TangentFrame { base: unit, basis })
}

/// Surface measure of the unit sphere `S_{d-1}`: `2 π^{d/2} / Γ(d/2)`.
pub fn sphere_measure(d: usize) -> f64 {
    assert!(d >= 1);
    let df = d as f64;
    (std::f64::consts::LN_2 + (df / 2.0) * std::f64::consts::PI.ln() - ln_gamma(df / 2.0)).exp()
}

/// Volume of the unit ball in `ℝᵈ`: `π^{d/2} / Γ(d/2 + 1)`.
pub fn ball_volume(d: usize) -> f64 {
    if d == 0 {
        return 1.0;
    }
    let df = d as f64;
    ((df / 2.0) * std::f64::consts::PI.ln() - ln_gamma(df / 2.0 + 1.0)).exp()
}

/// `n` independent uniform points on `S_{d-1}`, deterministic per seed
/// (normalized standard Gaussian draws from the counter generator).
pub fn sample_sphere(d: usize, n: usize, seed: u64) -> Vec<DVector<f64>> {
    assert!(d >= 2 && n >= 1);
    let mut rng = CounterRng::new(seed, 0);
    let mut out = Vec::with_capacity(n);
    let mut buf = vec![0.0; d];
    for _ in 0..n {
        loop {
            rng.fill_gaussian(&mut buf);
            let norm = buf.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                out.push(DVector::from_iterator(d, buf.iter().map(|x| x / norm)));
                break;
            }
        }
    }
    out
}
