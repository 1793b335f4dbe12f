//! Sphere-restricted Hessians at maximizers and the normalized matrix
//! `A = g''_{d-1}(v)/(αĝ) - I`.
//!
//! `g''_{d-1}(v)` is the Hessian of `g` restricted to the affine hyperplane
//! `v + L` tangent to the sphere: `H_ij = (∇²g(v) u_i, u_j)` in an
//! orthonormal frame `{u_i}` of `L`. The Hessian of `g` *along the sphere*
//! is `H - αĝ I`, so eigenvalues of `A` encode the maximum geometry:
//! negative definite `A` is a nondegenerate maximum, and a rank deficiency
//! of `m` is the signature of an `m`-dimensional maximizer manifold.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::func::{fd, EvalError, HomogeneousFn};
use crate::geometry::{tangent_frame, GeometryError, TangentFrame};

#[derive(Debug, Error)]
pub enum HessianError {
    #[error("g is not C² at the evaluation point (nonsmooth flag)")]
    NotC2AtPoint,
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("geometry error: {0}")]
    Geometry(#[from] GeometryError),
    #[error("rank of A is {found}, inconsistent with declared manifold dimension {declared}")]
    RankMismatch { declared: usize, found: usize },
    #[error("chart Jacobian is singular at the evaluation point")]
    SingularChartJacobian,
}

/// Relative eigenvalue threshold used for rank decisions, as a fraction of
/// the spectral radius of `A`.
pub const DEFAULT_RANK_TOL_REL: f64 = 1e-6;

/// Tangent Hessian data at a point of the unit sphere.
#[derive(Debug, Clone)]
pub struct TangentHessian {
    pub base: DVector<f64>,
    pub frame: TangentFrame,
    /// `g''_{d-1}(v)`, size `(d-1) × (d-1)`.
    pub h: DMatrix<f64>,
    /// `h / (αĝ) - I`.
    pub a: DMatrix<f64>,
    /// Eigenvalues of `a`, ascending.
    pub eigenvalues: Vec<f64>,
    /// The normalization `αĝ` that produced `a`.
    pub alpha_ghat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nondegeneracy {
    /// All eigenvalues of `A` below `-tol`: nondegenerate maximum.
    NondegenerateMax,
    /// Some eigenvalue within `±tol` of zero, the rest negative.
    Degenerate,
    /// Some eigenvalue above `+tol`.
    NotMax,
}

impl TangentHessian {
    /// Assemble from an explicit restricted Hessian (mainly for tests and
    /// synthetic inputs); computes `A` and its spectrum.
    pub fn from_parts(
        base: DVector<f64>,
        frame: TangentFrame,
        h: DMatrix<f64>,
        alpha_ghat: f64,
    ) -> Self {
        let k = h.nrows();
        let a = &h / alpha_ghat - DMatrix::<f64>::identity(k, k);
        let eigenvalues = sorted_eigenvalues(&a);
        TangentHessian {
            base,
            frame,
            h,
            a,
            eigenvalues,
        alpha_ghat,
        }
    }

    /// Spectral radius of `A`.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues
            .iter()
            .fold(0.0f64, |acc, l| acc.max(l.abs()))
    }

    /// Absolute rank threshold derived from a relative one.
    pub fn rank_tol(&self, rel: f64) -> f64 {
        (rel * self.spectral_radius()).max(1e-300)
    }

    /// `det A` (product of all eigenvalues). Its sign is `(-1)^{d-1}` at a
    /// nondegenerate maximum; reports log the raw sign rather than testing
    /// it.
    pub fn det_a(&self) -> f64 {
        self.eigenvalues.iter().product()
    }
}

fn sorted_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = nalgebra::SymmetricEigen::new(a.clone());
    let mut eig: Vec<f64> = sym.eigenvalues.iter().copied().collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Tangent Hessian of `g` at unit vector `v` in the deterministic
/// Householder frame. `alpha_ghat = α·ĝ`.
pub fn tangent_hessian(
    g: &dyn HomogeneousFn,
    v: &DVector<f64>,
    alpha: f64,
    g_hat: f64,
) -> Result<TangentHessian, HessianError> {
    let frame = tangent_frame(v)?;
    tangent_hessian_in_frame(g, frame, alpha * g_hat)
}

/// Same computation in a caller-supplied frame; frame invariance of the
/// eigenvalues of `A` is a tested property.
pub fn tangent_hessian_in_frame(
    g: &dyn HomogeneousFn,
    frame: TangentFrame,
    alpha_ghat: f64,
) -> Result<TangentHessian, HessianError> {
    let jet = g.jet(frame.base.as_slice())?;
    if jet.nonsmooth {
        return Err(HessianError::NotC2AtPoint);
    }
    let h = frame.basis.transpose() * &jet.hess * &frame.basis;
    Ok(TangentHessian::from_parts(
        frame.base.clone(),
        frame,
        h,
        alpha_ghat,
    ))
}

/// Tri-state classification of the maximum at the point of `t`.
pub fn nondegeneracy_check(t: &TangentHessian, rank_tol_rel: f64) -> Nondegeneracy {
    let tol = t.rank_tol(rank_tol_rel);
    let any_positive = t.eigenvalues.iter().any(|&l| l > tol);
    if any_positive {
        return Nondegeneracy::NotMax;
    }
    let any_zero = t.eigenvalues.iter().any(|&l| l.abs() <= tol);
    if any_zero {
        Nondegeneracy::Degenerate
    } else {
        Nondegeneracy::NondegenerateMax
    }
}

/// Product of the `d-1-m` eigenvalues of `A` with `|λ| > tol` — the value of
/// any nonzero `(d-1-m)`-minor after orthogonal alignment. Errors if the
/// count of such eigenvalues disagrees with the declared `m`.
pub fn pseudo_det_minor(
    t: &TangentHessian,
    m: usize,
    rank_tol_rel: f64,
) -> Result<f64, HessianError> {
    let tol = t.rank_tol(rank_tol_rel);
    let nonzero: Vec<f64> = t
        .eigenvalues
        .iter()
        .copied()
        .filter(|l| l.abs() > tol)
        .collect();
    let expected = t.eigenvalues.len() - m;
    if nonzero.len() != expected {
        return Err(HessianError::RankMismatch {
            declared: m,
            found: t.eigenvalues.len() - nonzero.len(),
        });
    }
    Ok(nonzero.iter().product())
}

/// An ambient chart `z ∈ ℝᵈ → ℝᵈ` whose restriction `z_d = const` covers a
/// piece of the sphere (hyperspherical coordinates with the radius last are
/// the model case).
pub struct AmbientChart {
    pub dim: usize,
    pub map: Box<dyn Fn(&[f64]) -> DVector<f64> + Sync + Send>,
}

impl AmbientChart {
    /// Hyperspherical coordinates `(φ₁..φ_{d-1}, r) → ℝᵈ`.
    pub fn hyperspherical(d: usize) -> Self {
        AmbientChart {
            dim: d,
            map: Box::new(move |z: &[f64]| {
                let p = crate::geometry::HypersphericalPoint::new(z[d - 1], z[..d - 1].to_vec());
                crate::geometry::to_cartesian(&p)
            }),
        }
    }

    fn jacobian_fd(&self, z: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let h = f64::EPSILON.powf(1.0 / 3.0)
            * (1.0 + z.iter().map(|v| v * v).sum::<f64>().sqrt());
        let mut jac = DMatrix::zeros(d, d);
        let mut buf = z.to_vec();
        for j in 0..d {
            buf[j] = z[j] + h;
            let fp = (self.map)(&buf);
            buf[j] = z[j] - h;
            let fm = (self.map)(&buf);
            buf[j] = z[j];
            for i in 0..d {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }
}

/// Checks the local-coordinates identity relating the tangent Hessian to a
/// chart Hessian,
///
/// ```text
/// det(g''_{d-1}(v) - αĝ I) = det (g∘chart)''_{d-1}(z) / (det J(z))²,
/// ```
///
/// by finite differences on `g ∘ chart`; returns the relative error
/// `|lhs - rhs| / |lhs|`.
pub fn local_chart_hessian_check(
    g: &dyn HomogeneousFn,
    chart: &AmbientChart,
    z: &[f64],
    v: &DVector<f64>,
    alpha: f64,
    g_hat: f64,
) -> Result<f64, HessianError> {
    let d = chart.dim;
    assert_eq!(z.len(), d);
    let t = tangent_hessian(g, v, alpha, g_hat)?;
    let k = d - 1;
    let lhs = (&t.h - DMatrix::<f64>::identity(k, k) * (alpha * g_hat))
        .lu()
        .determinant();

    // Hessian of g∘chart over the first d-1 coordinates at z.
    let composed = |w: &[f64]| {
        let mut full = z.to_vec();
        full[..k].copy_from_slice(w);
        let x = (chart.map)(&full);
        g.value(x.as_slice()).unwrap_or(f64::NAN)
    };
    let hess = fd::hessian(&composed, &z[..k]);
    let hess_m = DMatrix::from_fn(k, k, |i, j| hess[i][j]);
    let det_h = hess_m.lu().determinant();

    let jac = chart.jacobian_fd(z);
    let det_j = jac.lu().determinant();
    if det_j.abs() < 1e-12 {
        return Err(HessianError::SingularChartJacobian);
    }
    let rhs = det_h / (det_j * det_j);
    Ok((lhs - rhs).abs() / lhs.abs())
}
