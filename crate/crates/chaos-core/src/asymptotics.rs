//! Assembly of the leading-order answers: covariance whitening, the
//! constant `h₀` for finite and manifold maximizer sets, tail and density
//! evaluators, the polar-chaos tail, the near-maximum constant `g₀`, and
//! the universal chi-tail upper bound.
//!
//! With `ĝ` the sphere maximum, `m` the maximizer-manifold dimension and
//! `A = g''_{d-1}/(αĝ) - I` the normalized tangent Hessian, the leading
//! forms are
//!
//! ```text
//! P{g(η) > x}   = (x/ĝ)^{(m-1)/α} e^{-(x/ĝ)^{2/α}/2} (h₀ + O(x^{-2/α}))
//! p_{g(η)}(x)   = (x/ĝ)^{(m+1)/α - 1} e^{-(x/ĝ)^{2/α}/2} (h₀/(αĝ) + ...)
//! h₀ (finite)   = (2π)^{-1/2} Σ_j |det A(v_j)|^{-1/2}
//! h₀ (manifold) = (2π)^{-(m+1)/2} ∫_M |det A_minor(v)|^{-1/2} dV
//! ```
//!
//! and the polar variant replaces the Gaussian chi factor by any radial
//! model in the Gumbel max-domain with scaling function `w`:
//!
//! ```text
//! P{g(η) > x} ~ h₀_polar (x·w(x/ĝ))^{-(d-1-m)/2} P{χ^α > x/ĝ}.
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use std::sync::Arc;
use thiserror::Error;

use crate::func::{EvalError, HomogeneousFn, LinearMapFn};
use crate::geometry::{ball_volume, sphere_measure, to_hyperspherical};
use crate::hessian::{
    nondegeneracy_check, tangent_hessian, HessianError, Nondegeneracy, TangentHessian,
    DEFAULT_RANK_TOL_REL,
};
use crate::quad::gauss_legendre_on;
use crate::radial::{RadialError, RadialModel};
use crate::specfun::{ln_upper_reg_gamma, upper_reg_gamma};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error)]
pub enum WhitenError {
    #[error("covariance is not symmetric: max |B - Bᵀ| = {dev}")]
    NotSymmetric { dev: f64 },
    #[error("covariance has a negative eigenvalue {lambda}")]
    NegativeEigenvalue { lambda: f64 },
    #[error("covariance is (numerically) zero")]
    ZeroMatrix,
    #[error("covariance is {rows}×{cols}, function has dimension {dim}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        dim: usize,
    },
}

#[derive(Debug, Error)]
pub enum AsymError {
    #[error("degenerate tangent Hessian at maximizer {point:?}: eigenvalues of A are {eigenvalues:?}")]
    DegenerateHessian {
        point: Vec<f64>,
        eigenvalues: Vec<f64>,
    },
    #[error("point {point:?} is not a maximum: eigenvalues of A are {eigenvalues:?}")]
    NotAMaximum {
        point: Vec<f64>,
        eigenvalues: Vec<f64>,
    },
    #[error("rank of A at a quadrature node is {found}, expected {expected} (manifold dimension {m})")]
    RankViolation {
        m: usize,
        expected: usize,
        found: usize,
    },
    #[error("chart point leaves the unit sphere by {dev}")]
    ChartNotOnSphere { dev: f64 },
    #[error("chart point is off the maximizer set: g = {value} vs ĝ = {g_hat}")]
    ChartOffManifold { value: f64, g_hat: f64 },
    #[error("charts overlap ({share:.0}% of sampled points coincide); supply a measurable partition")]
    OverlappingCharts { share: f64 },
    #[error("quadrature did not converge to {rel_tol} relative after {levels} refinement levels")]
    QuadratureDidNotConverge { levels: usize, rel_tol: f64 },
    #[error("manifold dimension {0} unsupported here (tensor quadrature handles 1 <= m <= min(3, d-2))")]
    UnsupportedManifoldDim(usize),
    #[error("not implemented: only the leading order has closed-form coefficients")]
    HigherOrderUnavailable,
    #[error("maximizer sits at a hyperspherical pole; the angular form is undefined there")]
    PoleInAngularForm,
    #[error(transparent)]
    Hessian(#[from] HessianError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Radial(#[from] RadialError),
}

// ---------------------------------------------------------------------------
// Whitening
// ---------------------------------------------------------------------------

/// Result of reducing `h(ξ)`, `ξ ~ N(0, B)`, to `g(η)` with `η` standard:
/// `g(u) = h(W u)`. For full-rank `B`, `W = √B` (symmetric square root);
/// for singular `B` the problem drops to `d* = rank B` dimensions and `W`
/// maps `ℝ^{d*}` onto the range of `B`.
pub struct Whitened {
    pub g: Arc<dyn HomogeneousFn>,
    /// The `d × d*` matrix `W`.
    pub transform: DMatrix<f64>,
    /// Original dimension when a rank reduction happened.
    pub reduced_from: Option<usize>,
}

/// Symmetric PSD square root of `b`; eigenvalues below `1e-12 · trace` are
/// clamped to zero.
pub fn symmetric_sqrt(b: &DMatrix<f64>) -> Result<DMatrix<f64>, WhitenError> {
    let (u, lambda) = psd_eigen(b)?;
    let sqrt = DMatrix::from_diagonal(&lambda.map(|l| l.max(0.0).sqrt()));
    Ok(&u * sqrt * u.transpose())
}

fn psd_eigen(b: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>), WhitenError> {
    let d = b.nrows();
    let max_abs = b.abs().max();
    if max_abs == 0.0 {
        return Err(WhitenError::ZeroMatrix);
    }
    let dev = (b - b.transpose()).abs().max();
    if dev > 1e-10 * max_abs {
        return Err(WhitenError::NotSymmetric { dev });
    }
    let sym = (b + b.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let trace: f64 = (0..d).map(|i| b[(i, i)]).sum();
    let tol = 1e-12 * trace.abs().max(max_abs);
    for &l in eig.eigenvalues.iter() {
        if l < -tol {
            return Err(WhitenError::NegativeEigenvalue { lambda: l });
        }
    }
    Ok((eig.eigenvectors, eig.eigenvalues))
}

/// `g(u) = h(√B u)`, with automatic reduction to the range of `B` when the
/// covariance is singular. The sign of dropped-rank eigenvectors is
/// immaterial: `η` is symmetric.
pub fn whiten(h: Arc<dyn HomogeneousFn>, b: &DMatrix<f64>) -> Result<Whitened, WhitenError> {
    let d = h.dim();
    if b.nrows() != d || b.ncols() != d {
        return Err(WhitenError::DimensionMismatch {
            rows: b.nrows(),
            cols: b.ncols(),
            dim: d,
        });
    }
    let (u, lambda) = psd_eigen(b)?;
    let trace: f64 = lambda.iter().sum();
    let tol = 1e-12 * trace.abs().max(lambda.amax());
    let kept: Vec<usize> = (0..d).filter(|&i| lambda[i] > tol).collect();
    if kept.len() == d {
        let w = symmetric_sqrt(b)?;
        let g = Arc::new(LinearMapFn::new(h, w.clone(), "sqrt(B)"));
        return Ok(Whitened {
            g,
            transform: w,
            reduced_from: None,
        });
    }
    if kept.is_empty() {
        return Err(WhitenError::ZeroMatrix);
    }
    let mut w = DMatrix::zeros(d, kept.len());
    for (col, &i) in kept.iter().enumerate() {
        let scale = lambda[i].sqrt();
        for r in 0..d {
            w[(r, col)] = u[(r, i)] * scale;
        }
    }
    let g = Arc::new(LinearMapFn::new(h, w.clone(), "range reduction of B"));
    Ok(Whitened {
        g,
        transform: w,
        reduced_from: Some(d),
    })
}

// ---------------------------------------------------------------------------
// Charts
// ---------------------------------------------------------------------------

type MapFn = Box<dyn Fn(&[f64]) -> DVector<f64> + Sync + Send>;
type JacFn = Box<dyn Fn(&[f64]) -> DMatrix<f64> + Sync + Send>;

/// A parameterization `[0,1]^m → S_{d-1}` of (a piece of) the maximizer
/// manifold, with an optional analytic Jacobian (`d × m`); without one the
/// Jacobian is computed by central differences.
pub struct Chart {
    pub m: usize,
    pub dim: usize,
    map: MapFn,
    jacobian: Option<JacFn>,
}

impl Chart {
    pub fn new(m: usize, dim: usize, map: MapFn) -> Self {
        assert!(m >= 1 && dim >= 2);
        Chart {
            m,
            dim,
            map,
            jacobian: None,
        }
    }

    pub fn with_jacobian(mut self, jac: JacFn) -> Self {
        self.jacobian = Some(jac);
        self
    }

    pub fn point(&self, s: &[f64]) -> DVector<f64> {
        (self.map)(s)
    }

    pub fn jacobian_at(&self, s: &[f64]) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian {
            return j(s);
        }
        let h = f64::EPSILON.powf(1.0 / 3.0);
        let mut jac = DMatrix::zeros(self.dim, self.m);
        let mut buf = s.to_vec();
        for k in 0..self.m {
            buf[k] = s[k] + h;
            let fp = (self.map)(&buf);
            buf[k] = s[k] - h;
            let fm = (self.map)(&buf);
            buf[k] = s[k];
            for i in 0..self.dim {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    /// `√det(JᵀJ)`, the m-volume scale of the parameterization.
    pub fn volume_element(&self, s: &[f64]) -> f64 {
        let j = self.jacobian_at(s);
        (j.transpose() * j).determinant().max(0.0).sqrt()
    }
}

/// Declarative chart description: each output coordinate is a sum of terms
/// `coeff · Π factor`, each factor an affine or trigonometric function of
/// one chart variable (1-based `var`). Loaded from JSON.
#[derive(Debug, Clone, Deserialize)]
pub struct ChartSpec {
    pub m: usize,
    pub dim: usize,
    pub coords: Vec<Vec<TermSpec>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TermSpec {
    pub coeff: f64,
    #[serde(default)]
    pub factors: Vec<FactorSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorSpec {
    Cos {
        var: usize,
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
    Sin {
        var: usize,
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
    Lin {
        var: usize,
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl FactorSpec {
    fn var(&self) -> usize {
        match self {
            FactorSpec::Cos { var, .. }
            | FactorSpec::Sin { var, .. }
            | FactorSpec::Lin { var, .. } => *var,
        }
    }

    fn value(&self, s: &[f64]) -> f64 {
        match self {
            FactorSpec::Cos { var, freq, phase } => (freq * s[var - 1] + phase).cos(),
            FactorSpec::Sin { var, freq, phase } => (freq * s[var - 1] + phase).sin(),
            FactorSpec::Lin { var, scale, offset } => scale * s[var - 1] + offset,
        }
    }

    /// Derivative with respect to its own variable.
    fn deriv(&self, s: &[f64]) -> f64 {
        match self {
            FactorSpec::Cos { var, freq, phase } => -freq * (freq * s[var - 1] + phase).sin(),
            FactorSpec::Sin { var, freq, phase } => freq * (freq * s[var - 1] + phase).cos(),
            FactorSpec::Lin { scale, .. } => *scale,
        }
    }
}

#[derive(Debug, Error)]
pub enum ChartSpecError {
    #[error("chart JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("chart spec: {0}")]
    Invalid(String),
}

impl ChartSpec {
    pub fn from_json_str(text: &str) -> Result<Self, ChartSpecError> {
        let spec: ChartSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), ChartSpecError> {
        if self.m < 1 {
            return Err(ChartSpecError::Invalid("m must be >= 1".into()));
        }
        if self.coords.len() != self.dim {
            return Err(ChartSpecError::Invalid(format!(
                "need {} coordinate expressions, got {}",
                self.dim,
                self.coords.len()
            )));
        }
        for terms in &self.coords {
            for t in terms {
                for f in &t.factors {
                    let v = f.var();
                    if v == 0 || v > self.m {
                        return Err(ChartSpecError::Invalid(format!(
                            "factor variable {v} out of range 1..={}",
                            self.m
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn eval(&self, s: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim,
            self.coords.iter().map(|terms| {
                terms
                    .iter()
                    .map(|t| t.coeff * t.factors.iter().map(|f| f.value(s)).product::<f64>())
                    .sum::<f64>()
            }),
        )
    }

    fn jacobian(&self, s: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.dim, self.m);
        for (i, terms) in self.coords.iter().enumerate() {
            for t in terms {
                for (fi, f) in t.factors.iter().enumerate() {
                    let mut prod = t.coeff * f.deriv(s);
                    for (fj, other) in t.factors.iter().enumerate() {
                        if fi != fj {
                            prod *= other.value(s);
                        }
                    }
                    jac[(i, f.var() - 1)] += prod;
                }
            }
        }
        jac
    }

    pub fn into_chart(self) -> Chart {
        let spec = Arc::new(self);
        let s1 = spec.clone();
        let s2 = spec.clone();
        Chart::new(spec.m, spec.dim, Box::new(move |s| s1.eval(s)))
            .with_jacobian(Box::new(move |s| s2.jacobian(s)))
    }
}

// ---------------------------------------------------------------------------
// h₀, g₀ and the polar constant
// ---------------------------------------------------------------------------

/// Quadrature and rank-decision parameters for manifold integrals.
#[derive(Debug, Clone)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    pub max_levels: usize,
    pub rank_tol_rel: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            rel_tol: 1e-6,
            max_levels: 12,
            rank_tol_rel: DEFAULT_RANK_TOL_REL,
        }
    }
}

fn classify(t: &TangentHessian, rank_tol_rel: f64) -> Result<(), AsymError> {
    match nondegeneracy_check(t, rank_tol_rel) {
        Nondegeneracy::NondegenerateMax => Ok(()),
        Nondegeneracy::Degenerate => Err(AsymError::DegenerateHessian {
            point: t.base.iter().copied().collect(),
            eigenvalues: t.eigenvalues.clone(),
        }),
        Nondegeneracy::NotMax => Err(AsymError::NotAMaximum {
            point: t.base.iter().copied().collect(),
            eigenvalues: t.eigenvalues.clone(),
        }),
    }
}

/// Σ_j w(v_j) |det A(v_j)|^{-1/2} over isolated maximizers, rejecting any
/// degenerate point.
fn minor_sum_finite(
    hessians: &[TangentHessian],
    rank_tol_rel: f64,
    weight: Option<&(dyn Fn(&DVector<f64>) -> f64 + Sync)>,
) -> Result<f64, AsymError> {
    assert!(!hessians.is_empty());
    let mut sum = 0.0;
    for t in hessians {
        classify(t, rank_tol_rel)?;
        let det: f64 = t.det_a();
        let w = weight.map_or(1.0, |f| f(&t.base));
        sum += w / det.abs().sqrt();
    }
    Ok(sum)
}

/// `h₀ = (2π)^{-1/2} Σ_j |det A(v_j)|^{-1/2}` for a finite maximizer set.
pub fn h0_finite(hessians: &[TangentHessian]) -> Result<f64, AsymError> {
    let s = minor_sum_finite(hessians, DEFAULT_RANK_TOL_REL, None)?;
    Ok(s / (2.0 * std::f64::consts::PI).sqrt())
}

/// The same constant assembled in hyperspherical coordinates,
/// `(2π)^{-1/2} (αĝ)^{(d-1)/2} Σ_j |det J(1, φ_j)| / √|det g''(φ_j)|`,
/// with the angular Hessian taken by finite differences. Cross-form check
/// for [`h0_finite`]; undefined at coordinate poles.
pub fn h0_finite_spherical(
    g: &dyn HomogeneousFn,
    points: &[DVector<f64>],
    alpha: f64,
    g_hat: f64,
) -> Result<f64, AsymError> {
    let d = g.dim();
    let mut sum = 0.0;
    for v in points {
        let (p, pole) = to_hyperspherical(v);
        if pole {
            return Err(AsymError::PoleInAngularForm);
        }
        let det_j = crate::geometry::sphere_jacobian(&crate::geometry::HypersphericalPoint::new(
            1.0,
            p.phi.clone(),
        ));
        let hess = angular_hessian(g, &p.phi);
        let det_h = hess.determinant();
        sum += det_j.abs() / det_h.abs().sqrt();
    }
    Ok(sum * (alpha * g_hat).powf((d as f64 - 1.0) / 2.0)
        / (2.0 * std::f64::consts::PI).sqrt())
}

/// FD Hessian of the angular function `φ ↦ g(Ω(φ))` (unit radius).
fn angular_hessian(g: &dyn HomogeneousFn, phi: &[f64]) -> DMatrix<f64> {
    let k = phi.len();
    let f = |w: &[f64]| {
        let p = crate::geometry::HypersphericalPoint::new(1.0, w.to_vec());
        let v = crate::geometry::to_cartesian(&p);
        g.value(v.as_slice()).unwrap_or(f64::NAN)
    };
    let h = crate::func::fd::hessian(&f, phi);
    DMatrix::from_fn(k, k, |i, j| h[i][j])
}

/// Integrate `node_fn` (full integrand, volume element included) over the
/// unit-cube charts with dyadic Gauss–Legendre refinement.
fn integrate_over_charts(
    charts: &[Chart],
    m: usize,
    opts: &QuadratureOptions,
    node_fn: &(dyn Fn(&Chart, &[f64]) -> Result<f64, AsymError> + Sync),
) -> Result<f64, AsymError> {
    assert!(!charts.is_empty(), "need at least one chart");
    if charts.len() > 1 {
        check_overlap(charts)?;
    }
    let mut total = 0.0;
    for chart in charts {
        let mut prev: Option<f64> = None;
        let mut converged = false;
        for level in 0..=opts.max_levels {
            let n = 4usize << level;
            if (n as f64).powi(m as i32) > 4.0e6 {
                break;
            }
            let (nodes, weights) = gauss_legendre_on(n, 0.0, 1.0);
            let mut val = 0.0;
            for idx in TensorIndex::new(n, m) {
                let s: Vec<f64> = idx.iter().map(|&i| nodes[i]).collect();
                let w: f64 = idx.iter().map(|&i| weights[i]).product();
                val += w * node_fn(chart, &s)?;
            }
            if let Some(p) = prev {
                if (val - p).abs() <= opts.rel_tol * val.abs().max(1e-300) {
                    total += val;
                    converged = true;
                    break;
                }
            }
            prev = Some(val);
        }
        if !converged {
            return Err(AsymError::QuadratureDidNotConverge {
                levels: opts.max_levels,
                rel_tol: opts.rel_tol,
            });
        }
    }
    Ok(total)
}

/// Odometer over `{0..n}^m`.
struct TensorIndex {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl TensorIndex {
    fn new(n: usize, m: usize) -> Self {
        TensorIndex {
            n,
            idx: vec![0; m],
            done: false,
        }
    }
}

impl Iterator for TensorIndex {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let mut k = 0;
        loop {
            if k == self.idx.len() {
                self.done = true;
                break;
            }
            self.idx[k] += 1;
            if self.idx[k] < self.n {
                break;
            }
            self.idx[k] = 0;
            k += 1;
        }
        Some(out)
    }
}

/// Sampled-cloud overlap heuristic: if a large share of one chart's grid
/// points sits within half the typical sample spacing of another chart's
/// cloud, the atlas double-counts volume.
fn check_overlap(charts: &[Chart]) -> Result<(), AsymError> {
    let m = charts[0].m;
    let per_axis = match m {
        1 => 48,
        2 => 10,
        _ => 5,
    };
    let clouds: Vec<Vec<DVector<f64>>> = charts
        .iter()
        .map(|c| {
            grid_points(per_axis, m)
                .into_iter()
                .map(|s| c.point(&s))
                .collect()
        })
        .collect();
    for (i, a) in clouds.iter().enumerate() {
        let mut nn: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(k, p)| {
                a.iter()
                    .enumerate()
                    .filter(|(l, _)| *l != k)
                    .map(|(_, q)| (p - q).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        nn.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let delta = 0.5 * nn[nn.len() / 2];
        for (j, b) in clouds.iter().enumerate() {
            if i == j {
                continue;
            }
            let close = b
                .iter()
                .filter(|q| a.iter().any(|p| (*q - p).norm() < delta))
                .count();
            let share = 100.0 * close as f64 / b.len() as f64;
            if share > 20.0 {
                return Err(AsymError::OverlappingCharts { share });
            }
        }
    }
    Ok(())
}

fn grid_points(n: usize, m: usize) -> Vec<Vec<f64>> {
    TensorIndex::new(n, m)
        .map(|idx| idx.iter().map(|&i| (i as f64 + 0.5) / n as f64).collect())
        .collect()
}

/// Integrand at one chart point: verify unit norm and membership in the
/// level set, rank-check `A` against `m`, and return
/// `w(v) |minor(A)|^{-1/2} · volume_element`.
#[allow(clippy::too_many_arguments)]
fn manifold_node_value(
    g: &dyn HomogeneousFn,
    alpha: f64,
    g_hat: f64,
    m: usize,
    opts: &QuadratureOptions,
    weight: Option<&(dyn Fn(&DVector<f64>) -> f64 + Sync)>,
    chart: &Chart,
    s: &[f64],
) -> Result<f64, AsymError> {
    let v = chart.point(s);
    let dev = (v.norm() - 1.0).abs();
    if dev > 1e-9 {
        return Err(AsymError::ChartNotOnSphere { dev });
    }
    let value = g.value(v.as_slice())?;
    if (value - g_hat).abs() > 1e-6 * (1.0 + g_hat.abs()) {
        return Err(AsymError::ChartOffManifold { value, g_hat });
    }
    let t = tangent_hessian(g, &v, alpha, g_hat)?;
    let tol = t.rank_tol(opts.rank_tol_rel);
    if t.eigenvalues.iter().any(|&l| l > tol) {
        return Err(AsymError::NotAMaximum {
            point: v.iter().copied().collect(),
            eigenvalues: t.eigenvalues.clone(),
        });
    }
    let nonzero: Vec<f64> = t
        .eigenvalues
        .iter()
        .copied()
        .filter(|l| l.abs() > tol)
        .collect();
    let expected = g.dim() - 1 - m;
    if nonzero.len() != expected {
        return Err(AsymError::RankViolation {
            m,
            expected,
            found: nonzero.len(),
        });
    }
    let minor: f64 = nonzero.iter().product();
    let w = weight.map_or(1.0, |f| f(&v));
    Ok(w / minor.abs().sqrt() * chart.volume_element(s))
}

fn validate_manifold_dim(d: usize, m: usize) -> Result<(), AsymError> {
    if m < 1 || m + 2 > d || m > 3 {
        return Err(AsymError::UnsupportedManifoldDim(m));
    }
    Ok(())
}

/// `h₀ = (2π)^{-(m+1)/2} ∫_M |det A_minor|^{-1/2} dV` by chart quadrature.
pub fn h0_manifold(
    g: &dyn HomogeneousFn,
    charts: &[Chart],
    alpha: f64,
    g_hat: f64,
    m: usize,
    opts: &QuadratureOptions,
) -> Result<f64, AsymError> {
    validate_manifold_dim(g.dim(), m)?;
    let integral = integrate_over_charts(charts, m, opts, &|chart, s| {
        manifold_node_value(g, alpha, g_hat, m, opts, None, chart, s)
    })?;
    Ok(integral * (-0.5 * (m as f64 + 1.0) * LN_2PI).exp())
}

/// Hyperspherical form of the manifold constant,
/// `(2π)^{-(m+1)/2} (αĝ)^{(d-1-m)/2} ∫ |det J(1,φ)| / √|det g''_{d-1-m}(φ)| dV_φ`,
/// with angular FD Hessians and the chart transported to angle space.
/// Cross-form check for [`h0_manifold`].
pub fn h0_manifold_spherical(
    g: &dyn HomogeneousFn,
    charts: &[Chart],
    alpha: f64,
    g_hat: f64,
    m: usize,
    opts: &QuadratureOptions,
) -> Result<f64, AsymError> {
    let d = g.dim();
    validate_manifold_dim(d, m)?;
    let node = |chart: &Chart, s: &[f64]| -> Result<f64, AsymError> {
        let v = chart.point(s);
        let (p, pole) = to_hyperspherical(&v);
        if pole {
            return Err(AsymError::PoleInAngularForm);
        }
        let det_j = crate::geometry::sphere_jacobian(&crate::geometry::HypersphericalPoint::new(
            1.0,
            p.phi.clone(),
        ));
        // Pseudo-determinant of the angular Hessian: product of the d-1-m
        // eigenvalues of largest magnitude (the rest vanish along M_φ).
        let hess = angular_hessian(g, &p.phi);
        let eig = nalgebra::SymmetricEigen::new(hess);
        let mut mags: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        mags.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
        let spectral = mags.last().unwrap().abs();
        // FD Hessians carry ~1e-9 noise; the rank cut is coarser here.
        let tol = (1e-4 * spectral).max(1e-300);
        let nonzero = mags.iter().filter(|l| l.abs() > tol).count();
        let expected = d - 1 - m;
        if nonzero != expected {
            return Err(AsymError::RankViolation {
                m,
                expected,
                found: nonzero,
            });
        }
        let det: f64 = mags[m..].iter().product();
        let vol = angular_volume_element(chart, s);
        Ok(det_j.abs() / det.abs().sqrt() * vol)
    };
    let integral = integrate_over_charts(charts, m, opts, &node)?;
    Ok(integral
        * (alpha * g_hat).powf((d as f64 - 1.0 - m as f64) / 2.0)
        * (-0.5 * (m as f64 + 1.0) * LN_2PI).exp())
}

/// FD volume element of `s ↦ φ(chart(s))` in flat angle space.
fn angular_volume_element(chart: &Chart, s: &[f64]) -> f64 {
    let m = chart.m;
    let h = 1e-6;
    let phi_of = |s: &[f64]| {
        let (p, _) = to_hyperspherical(&chart.point(s));
        DVector::from_vec(p.phi)
    };
    let base = phi_of(s);
    let mut jac = DMatrix::zeros(base.len(), m);
    let mut buf = s.to_vec();
    for k in 0..m {
        buf[k] = s[k] + h;
        let fp = phi_of(&buf);
        buf[k] = s[k] - h;
        let fm = phi_of(&buf);
        buf[k] = s[k];
        for i in 0..base.len() {
            let mut diff = fp[i] - fm[i];
            // Unwrap the 2π-periodic last angle across the seam.
            if diff.abs() > std::f64::consts::PI {
                diff -= (2.0 * std::f64::consts::PI) * diff.signum();
            }
            jac[(i, k)] = diff / (2.0 * h);
        }
    }
    (jac.transpose() * jac).determinant().max(0.0).sqrt()
}

/// Near-maximum constant for isolated maximizers:
/// `P{g(ζ) > ĝ - t} ~ g₀ t^{(d-1)/2}` with
/// `g₀ = 2^{(d-1)/2} (Vol B_{d-1} / mes S_{d-1}) Σ_j |det(g''_{d-1}(v_j) - αĝ I)|^{-1/2}`.
pub fn g0_finite(hessians: &[TangentHessian], d: usize) -> Result<f64, AsymError> {
    let s = minor_sum_finite(hessians, DEFAULT_RANK_TOL_REL, None)?;
    let alpha_ghat = hessians[0].alpha_ghat;
    let k = d as f64 - 1.0;
    Ok(2.0f64.powf(k / 2.0) * ball_volume(d - 1) / sphere_measure(d)
        * alpha_ghat.powf(-k / 2.0)
        * s)
}

/// Manifold version: `P{g(ζ) > ĝ - t} ~ g₀ t^{(d-1-m)/2}`.
pub fn g0_manifold(
    g: &dyn HomogeneousFn,
    charts: &[Chart],
    alpha: f64,
    g_hat: f64,
    m: usize,
    opts: &QuadratureOptions,
) -> Result<f64, AsymError> {
    let d = g.dim();
    validate_manifold_dim(d, m)?;
    let integral = integrate_over_charts(charts, m, opts, &|chart, s| {
        manifold_node_value(g, alpha, g_hat, m, opts, None, chart, s)
    })?;
    let k = (d - 1 - m) as f64;
    Ok(2.0f64.powf(k / 2.0) * ball_volume(d - 1 - m) / sphere_measure(d)
        * (alpha * g_hat).powf(-k / 2.0)
        * integral)
}

/// Polar-chaos constant for a finite maximizer set, with `density` the law
/// of the angular factor relative to the uniform sphere measure (`v ↦ 1`
/// recovers the Gaussian specialization). In hyperspherical terms this is
/// `(2πĝ²)^{(d-1)/2} Σ_j p_ν(φ_j)/√|det g''(φ_j)|` with
/// `p_ν(φ) = density(v(φ)) |det J(1,φ)| / mes S_{d-1}`.
pub fn polar_h0_finite(
    hessians: &[TangentHessian],
    alpha: f64,
    g_hat: f64,
    d: usize,
    density: &(dyn Fn(&DVector<f64>) -> f64 + Sync),
) -> Result<f64, AsymError> {
    let s = minor_sum_finite(hessians, DEFAULT_RANK_TOL_REL, Some(density))?;
    let k = d as f64 - 1.0;
    Ok((2.0 * std::f64::consts::PI * g_hat / alpha).powf(k / 2.0) / sphere_measure(d) * s)
}

/// Manifold version of [`polar_h0_finite`].
#[allow(clippy::too_many_arguments)]
pub fn polar_h0_manifold(
    g: &dyn HomogeneousFn,
    charts: &[Chart],
    alpha: f64,
    g_hat: f64,
    m: usize,
    density: &(dyn Fn(&DVector<f64>) -> f64 + Sync),
    opts: &QuadratureOptions,
) -> Result<f64, AsymError> {
    let d = g.dim();
    validate_manifold_dim(d, m)?;
    let integral = integrate_over_charts(charts, m, opts, &|chart, s| {
        manifold_node_value(g, alpha, g_hat, m, opts, Some(density), chart, s)
    })?;
    let k = (d - 1 - m) as f64;
    Ok((2.0 * std::f64::consts::PI * g_hat / alpha).powf(k / 2.0) / sphere_measure(d) * integral)
}

// ---------------------------------------------------------------------------
// Evaluators
// ---------------------------------------------------------------------------

/// A numeric evaluation with its natural log and a pre-asymptotic flag
/// (set where the neglected corrections are no longer small).
#[derive(Debug, Clone, Copy)]
pub struct Evaluation {
    pub value: f64,
    pub ln_value: f64,
    pub pre_asymptotic: bool,
}

/// Leading-order expansion data for one chaos: evaluates tails and
/// densities at any `x`. The reserved `order` parameter only accepts 0;
/// higher-order coefficients exist but have no closed form.
#[derive(Debug, Clone, Copy)]
pub struct AsymptoticResult {
    pub d: usize,
    pub alpha: f64,
    pub g_hat: f64,
    pub m: usize,
    pub h0: f64,
}

impl AsymptoticResult {
    fn depth(&self, x: f64) -> f64 {
        (x / self.g_hat).powf(2.0 / self.alpha)
    }

    pub fn ln_tail(&self, x: f64) -> f64 {
        assert!(x > 0.0);
        let z = x / self.g_hat;
        (self.m as f64 - 1.0) / self.alpha * z.ln() - 0.5 * self.depth(x) + self.h0.ln()
    }

    /// `(x/ĝ)^{(m-1)/α} e^{-(x/ĝ)^{2/α}/2} h₀`; flagged pre-asymptotic when
    /// `(x/ĝ)^{2/α} < 10` (corrections ~10% there).
    pub fn tail(&self, x: f64) -> Evaluation {
        let ln = self.ln_tail(x);
        Evaluation {
            value: ln.exp(),
            ln_value: ln,
            pre_asymptotic: self.depth(x) < 10.0,
        }
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        assert!(x > 0.0);
        let z = x / self.g_hat;
        ((self.m as f64 + 1.0) / self.alpha - 1.0) * z.ln() - 0.5 * self.depth(x)
            + (self.h0 / (self.alpha * self.g_hat)).ln()
    }

    pub fn density(&self, x: f64) -> Evaluation {
        let ln = self.ln_density(x);
        Evaluation {
            value: ln.exp(),
            ln_value: ln,
            pre_asymptotic: self.depth(x) < 10.0,
        }
    }

    pub fn tail_order(&self, x: f64, order: usize) -> Result<Evaluation, AsymError> {
        if order > 0 {
            return Err(AsymError::HigherOrderUnavailable);
        }
        Ok(self.tail(x))
    }

    pub fn density_order(&self, x: f64, order: usize) -> Result<Evaluation, AsymError> {
        if order > 0 {
            return Err(AsymError::HigherOrderUnavailable);
        }
        Ok(self.density(x))
    }
}

/// Polar-chaos tail `h₀ (x w(x/ĝ))^{-(d-1-m)/2} P{χ^α > x/ĝ}` for a radial
/// model in the Gumbel max-domain, valid as `x ↑ ĝ·x₊`.
pub fn polar_tail(
    h0_polar: f64,
    model: &RadialModel,
    d: usize,
    m: usize,
    g_hat: f64,
    x: f64,
) -> Result<Evaluation, AsymError> {
    assert!(x > 0.0);
    let w = model.scaling_function(x / g_hat)?;
    let k = (d - 1 - m) as f64;
    let ln_radial = model.ln_tail(x / g_hat)?;
    let ln = h0_polar.ln() - 0.5 * k * (x * w).ln() + ln_radial;
    Ok(Evaluation {
        value: ln.exp(),
        ln_value: ln,
        pre_asymptotic: ln_radial > (1e-3f64).ln(),
    })
}

/// Universal bound `P{h(ξ) > x} <= P{χ^α > x/ĥ} = Q(d/2, (x/ĥ)^{2/α}/2)`,
/// the exact middle member of the chi-tail sandwich; valid for every
/// homogeneous `h` with sphere maximum `ĥ` after whitening.
pub fn upper_bound(h_hat: f64, d: usize, alpha: f64, x: f64) -> f64 {
    assert!(h_hat > 0.0 && x > 0.0);
    upper_reg_gamma(d as f64 / 2.0, 0.5 * (x / h_hat).powf(2.0 / alpha))
}

pub fn ln_upper_bound(h_hat: f64, d: usize, alpha: f64, x: f64) -> f64 {
    assert!(h_hat > 0.0 && x > 0.0);
    ln_upper_reg_gamma(d as f64 / 2.0, 0.5 * (x / h_hat).powf(2.0 / alpha))
}
