//! Locating the maximizer set `M` of `g` on the unit sphere.
//!
//! Multi-start projected gradient ascent with Armijo backtracking, followed
//! by a safeguarded Newton polish in the tangent space. Converged iterates
//! are clustered at a fixed chordal radius; when essentially every start
//! lands on its own cluster and the normalized tangent Hessian is rank
//! deficient, the level set is treated as a positive-dimensional manifold
//! and the cluster representatives are returned as a sample cloud. The
//! cloud fixes `ĝ` and `m` only — integrating `h₀` over a manifold needs a
//! user-supplied chart.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::func::HomogeneousFn;
use crate::geometry::{sample_sphere, tangent_frame};
use crate::hessian::{tangent_hessian, HessianError, DEFAULT_RANK_TOL_REL};

#[derive(Debug, Error)]
pub enum MaximizeError {
    #[error("g is not positive anywhere on the sphere (max over all starts <= 0)")]
    NoPositiveMax,
    #[error("no start converged to the requested tolerance")]
    NoConvergedStart,
    #[error("hessian evaluation failed during manifold detection: {0}")]
    Hessian(#[from] HessianError),
}

#[derive(Debug, Error)]
pub enum ManifoldDimError {
    #[error("not a maximum / inconsistent point: eigenvalue {max_eig} of A is positive beyond tolerance")]
    NotMax { max_eig: f64 },
    #[error("saddle-like degeneracy: eigenvalues of A have mixed signs beyond tolerance")]
    SaddleLike,
    #[error("hessian evaluation failed: {0}")]
    Hessian(#[from] HessianError),
}

/// Search options; `FindOptions::for_dim` applies the defaults
/// `starts = max(200, 50 d)`, `tol = 1e-9`, clustering radius `1e-4`.
#[derive(Debug, Clone)]
pub struct FindOptions {
    pub starts: usize,
    pub seed: u64,
    pub tol: f64,
    pub cluster_radius: f64,
    pub max_ascent_iters: usize,
}

impl FindOptions {
    pub fn for_dim(d: usize) -> Self {
        FindOptions {
            starts: 200.max(50 * d),
            seed: 0,
            tol: 1e-9,
            cluster_radius: 1e-4,
            max_ascent_iters: 400,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_starts(mut self, starts: usize) -> Self {
        self.starts = starts;
        self
    }
}

#[derive(Debug, Clone)]
pub enum MaximizerKind {
    /// Isolated maximizers, pairwise separated by more than the clustering
    /// radius.
    Finite(Vec<DVector<f64>>),
    /// A sampled cloud on a connected positive-dimensional level set of
    /// detected dimension `dim`. Only `ĝ` and `dim` are certified.
    Manifold { dim: usize, cloud: Vec<DVector<f64>> },
}

#[derive(Debug, Clone)]
pub struct MaximizerSet {
    pub g_hat: f64,
    pub kind: MaximizerKind,
    pub notes: String,
}

impl MaximizerSet {
    /// Representatives regardless of kind.
    pub fn points(&self) -> &[DVector<f64>] {
        match &self.kind {
            MaximizerKind::Finite(p) => p,
            MaximizerKind::Manifold { cloud, .. } => cloud,
        }
    }

    pub fn manifold_dim(&self) -> usize {
        match &self.kind {
            MaximizerKind::Finite(_) => 0,
            MaximizerKind::Manifold { dim, .. } => *dim,
        }
    }
}

fn normalize(v: &DVector<f64>) -> DVector<f64> {
    v / v.norm()
}

/// One start: projected gradient ascent with Armijo backtracking, then
/// Newton polish in the tangent frame with eigenvalue safeguarding.
/// Returns the final point and value when the projected gradient drops
/// below `tol * (1 + |g|)`.
fn ascend(
    g: &dyn HomogeneousFn,
    start: &DVector<f64>,
    opts: &FindOptions,
) -> Option<(DVector<f64>, f64)> {
    let mut v = normalize(start);
    let mut fval = g.value(v.as_slice()).ok()?;

    for _ in 0..opts.max_ascent_iters {
        let jet = g.jet(v.as_slice()).ok()?;
        let radial = jet.grad.dot(&v);
        let proj = &jet.grad - &v * radial;
        let pnorm = proj.norm();
        if pnorm <= 1e-6 * (1.0 + fval.abs()) {
            break;
        }
        let mut step = 1.0 / (1.0 + pnorm);
        let mut accepted = false;
        while step > 1e-18 {
            let cand = normalize(&(&v + &proj * step));
            if let Ok(fc) = g.value(cand.as_slice()) {
                if fc >= fval + 1e-4 * step * pnorm * pnorm {
                    v = cand;
                    fval = fc;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    // Newton polish: solve with the tangent Hessian of the sphere-restricted
    // function, eigenvalues clamped below -τ so the step is an ascent
    // direction even across degenerate directions.
    for _ in 0..80 {
        let jet = g.jet(v.as_slice()).ok()?;
        fval = jet.value;
        let frame = tangent_frame(&v).ok()?;
        let gr = frame.basis.transpose() * &jet.grad;
        if gr.norm() <= opts.tol * (1.0 + fval.abs()) {
            return Some((v, fval));
        }
        let radial = jet.grad.dot(&v);
        let k = v.len() - 1;
        let hr = frame.basis.transpose() * &jet.hess * &frame.basis
            - DMatrix::<f64>::identity(k, k) * radial;
        let eig = nalgebra::SymmetricEigen::new(hr);
        let scale = eig.eigenvalues.amax().max(1e-8);
        let tau = 1e-8 * scale;
        // s = -H̃⁻¹ gr with λ̃ = min(λ, -τ).
        let coeffs = eig.eigenvectors.transpose() * &gr;
        let mut s = DVector::zeros(k);
        for i in 0..k {
            let lam = eig.eigenvalues[i].min(-tau);
            s += eig.eigenvectors.column(i) * (-coeffs[i] / lam);
        }
        let snorm = s.norm();
        if snorm > 0.5 {
            s *= 0.5 / snorm;
        }
        let mut shrink = 1.0;
        let mut moved = false;
        while shrink > 1e-12 {
            let cand = normalize(&(&v + &frame.basis * (&s * shrink)));
            if let Ok(fc) = g.value(cand.as_slice()) {
                if fc >= fval - 1e-13 * (1.0 + fval.abs()) {
                    v = cand;
                    moved = true;
                    break;
                }
            }
            shrink *= 0.5;
        }
        if !moved {
            break;
        }
    }

    // Accept only if the projected gradient criterion holds.
    let jet = g.jet(v.as_slice()).ok()?;
    let proj = &jet.grad - &v * jet.grad.dot(&v);
    if proj.norm() <= opts.tol * (1.0 + jet.value.abs()) {
        Some((v, jet.value))
    } else {
        None
    }
}

fn lex_less(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y).unwrap() {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Multi-start search for the maximizer set. See the module docs for the
/// promotion rule from isolated clusters to a manifold cloud.
pub fn find_maximizers(
    g: &dyn HomogeneousFn,
    opts: &FindOptions,
) -> Result<MaximizerSet, MaximizeError> {
    let d = g.dim();
    assert!(
        opts.starts >= 50.max(10 * d),
        "starts must be at least max(50, 10d)"
    );
    let seeds = sample_sphere(d, opts.starts, opts.seed);
    let mut runs: Vec<(DVector<f64>, f64)> = seeds
        .par_iter()
        .map(|s| ascend(g, s, opts))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    if runs.is_empty() {
        // Distinguish "nothing converged" from "g has no positive max".
        let best_raw = seeds
            .iter()
            .filter_map(|s| g.value(s.as_slice()).ok())
            .fold(f64::NEG_INFINITY, f64::max);
        if best_raw <= 0.0 {
            return Err(MaximizeError::NoPositiveMax);
        }
        return Err(MaximizeError::NoConvergedStart);
    }

    let g_hat = runs.iter().map(|(_, f)| *f).fold(f64::NEG_INFINITY, f64::max);
    if g_hat <= 0.0 {
        return Err(MaximizeError::NoPositiveMax);
    }

    // Keep global maximizers only.
    runs.retain(|(_, f)| (g_hat - f) <= 1e-8 * (1.0 + g_hat));
    runs.sort_by(|a, b| lex_less(&a.0, &b.0));

    // Greedy clustering at the chordal radius; lexicographically smallest
    // converged point represents its cluster.
    let mut reps: Vec<DVector<f64>> = Vec::new();
    for (v, _) in &runs {
        if reps
            .iter()
            .all(|r| (r - v).norm() > opts.cluster_radius)
        {
            reps.push(v.clone());
        }
    }

    // Manifold promotion: nearly every start became its own cluster, and the
    // tangent Hessian at the best point is rank deficient.
    let numerous = reps.len() >= 12.max(runs.len() / 4) && reps.len() > 2 * (d + 1);
    if numerous {
        let alpha = g.order();
        let best = runs
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if let Ok(m) = detect_manifold_dim(g, &best.0, alpha, g_hat, None) {
            if m >= 1 {
                let notes = format!(
                    "{} clusters from {} converged starts on a connected level set; \
					 detected manifold dimension {m}; cloud fixes ĝ and m only",
                    reps.len(),
                    runs.len()
                );
                return Ok(MaximizerSet {
                    g_hat,
                    kind: MaximizerKind::Manifold { dim: m, cloud: reps },
                    notes,
                });
            }
        }
    }

    let notes = format!(
        "{} isolated maximizer(s) from {} converged starts",
        reps.len(),
        runs.len()
    );
    Ok(MaximizerSet {
        g_hat,
        kind: MaximizerKind::Finite(reps),
        notes,
    })
}

/// Manifold dimension from the rank deficiency of `A = g''_{d-1}/(αĝ) - I`
/// at a verified maximizer: `m` counts eigenvalues within `±tol`, all the
/// rest must be below `-tol`.
pub fn detect_manifold_dim(
    g: &dyn HomogeneousFn,
    v: &DVector<f64>,
    alpha: f64,
    g_hat: f64,
    rank_tol_rel: Option<f64>,
) -> Result<usize, ManifoldDimError> {
    let rel = rank_tol_rel.unwrap_or(DEFAULT_RANK_TOL_REL);
    let t = tangent_hessian(g, v, alpha, g_hat)?;
    let tol = t.rank_tol(rel);
    let pos = t.eigenvalues.iter().filter(|&&l| l > tol).count();
    let neg = t.eigenvalues.iter().filter(|&&l| l < -tol).count();
    let zero = t.eigenvalues.len() - pos - neg;
    if pos > 0 && neg > 0 {
        return Err(ManifoldDimError::SaddleLike);
    }
    if pos > 0 {
        return Err(ManifoldDimError::NotMax {
            max_eig: *t.eigenvalues.last().unwrap(),
        });
    }
    Ok(zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse;
    use crate::func::ExprFn;
    use approx::assert_relative_eq;

    fn expr_fn(src: &str, dim: usize, alpha: f64) -> ExprFn {
        ExprFn::new(parse(src, dim).unwrap(), alpha)
    }

    /// Hausdorff distance between point sets.
    fn hausdorff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
        let one_way = |xs: &[DVector<f64>], ys: &[DVector<f64>]| {
            xs.iter()
                .map(|x| {
                    ys.iter()
                        .map(|y| (x - y).norm())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0f64, f64::max)
        };
        one_way(a, b).max(one_way(b, a))
    }

    #[test]
    fn product2_two_maximizers() {
        let g = expr_fn("u1*u2", 2, 2.0);
        let set = find_maximizers(&g, &FindOptions::for_dim(2)).unwrap();
        assert_relative_eq!(set.g_hat, 0.5, epsilon = 1e-10);
        let s = (0.5f64).sqrt();
        let expected = vec![
            DVector::from_vec(vec![s, s]),
            DVector::from_vec(vec![-s, -s]),
        ];
        match &set.kind {
            MaximizerKind::Finite(pts) => {
                assert_eq!(pts.len(), 2);
                assert!(hausdorff(pts, &expected) < 1e-6);
            }
            other => panic!("expected finite kind, got {other:?}"),
        }
    }

    #[test]
    fn product3_four_maximizers_with_even_sign_pattern() {
        let g = expr_fn("u1*u2*u3", 3, 3.0);
        let set = find_maximizers(&g, &FindOptions::for_dim(3)).unwrap();
        assert_relative_eq!(set.g_hat, 3.0f64.powf(-1.5), epsilon = 1e-9);
        let c = (1.0f64 / 3.0).sqrt();
        let expected: Vec<DVector<f64>> = [
            [c, c, c],
            [c, -c, -c],
            [-c, c, -c],
            [-c, -c, c],
        ]
        .iter()
        .map(|p| DVector::from_row_slice(p))
        .collect();
        let pts = set.points();
        assert_eq!(pts.len(), 4);
        assert!(hausdorff(pts, &expected) < 1e-6);
    }

    #[test]
    fn lp_sum_cubic_axis_maximizers() {
        let g = expr_fn("abs(u1)^3 + abs(u2)^3", 2, 3.0);
        let set = find_maximizers(&g, &FindOptions::for_dim(2)).unwrap();
        assert_relative_eq!(set.g_hat, 1.0, epsilon = 1e-10);
        let expected: Vec<DVector<f64>> = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
            .iter()
            .map(|p| DVector::from_row_slice(p))
            .collect();
        let pts = set.points();
        assert_eq!(pts.len(), 4);
        assert!(hausdorff(pts, &expected) < 1e-6);
    }

    #[test]
    fn projected_gradient_and_euler_at_maximizers() {
        let g = expr_fn("u1*u2*u3", 3, 3.0);
        let opts = FindOptions::for_dim(3);
        let set = find_maximizers(&g, &opts).unwrap();
        for v in set.points() {
            let jet = g.jet(v.as_slice()).unwrap();
            let proj = &jet.grad - v * jet.grad.dot(v);
            assert!(proj.norm() <= opts.tol * (1.0 + set.g_hat));
            // Euler identity (∇g, v) = α ĝ.
            assert!((jet.grad.dot(v) - 3.0 * set.g_hat).abs() <= 1e-8 * (1.0 + set.g_hat));
            assert!((v.norm() - 1.0).abs() < 1e-10);
            assert!((jet.value - set.g_hat).abs() <= 1e-8 * (1.0 + set.g_hat));
        }
    }

    #[test]
    fn pairwise_separation_of_finite_points() {
        let g = expr_fn("abs(u1)^1.5 + abs(u2)^1.5 + abs(u3)^1.5", 3, 1.5);
        let opts = FindOptions::for_dim(3);
        let set = find_maximizers(&g, &opts).unwrap();
        // 2^3 sign patterns of (±1,±1,±1)/√3.
        assert_eq!(set.points().len(), 8);
        let pts = set.points();
        for i in 0..pts.len() {
            for j in 0..i {
                assert!((&pts[i] - &pts[j]).norm() > opts.cluster_radius);
            }
        }
    }

    #[test]
    fn negative_function_errors() {
        let g = expr_fn("0 - u1^2 - u2^2", 2, 2.0);
        assert!(matches!(
            find_maximizers(&g, &FindOptions::for_dim(2)),
            Err(MaximizeError::NoPositiveMax)
        ));
    }

    #[test]
    fn determinism() {
        let g = expr_fn("u1*u2*u3", 3, 3.0);
        let opts = FindOptions::for_dim(3).with_seed(9);
        let a = find_maximizers(&g, &opts).unwrap();
        let b = find_maximizers(&g, &opts).unwrap();
        assert_eq!(a.g_hat, b.g_hat);
        assert_eq!(a.points().len(), b.points().len());
        for (x, y) in a.points().iter().zip(b.points()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn quadratic_form_isolated_pair_detects_m0() {
        // a = (1, 1, 2): maximum at ±e₃, eigenvalues of A are {-1/2, -1/2}.
        let g = expr_fn("u1^2 + u2^2 + 2*u3^2", 3, 2.0);
        let set = find_maximizers(&g, &FindOptions::for_dim(3)).unwrap();
        assert_relative_eq!(set.g_hat, 2.0, epsilon = 1e-10);
        assert_eq!(set.points().len(), 2);
        assert_eq!(set.manifold_dim(), 0);
        let m =
            detect_manifold_dim(&g, &set.points()[0], 2.0, set.g_hat, None).unwrap();
        assert_eq!(m, 0);
    }

    #[test]
    fn quadratic_form_circle_detects_m1() {
        // a = (1, 2, 2): M is the unit circle in the u2u3-plane.
        let g = expr_fn("u1^2 + 2*u2^2 + 2*u3^2", 3, 2.0);
        let set = find_maximizers(&g, &FindOptions::for_dim(3)).unwrap();
        assert_relative_eq!(set.g_hat, 2.0, epsilon = 1e-10);
        match &set.kind {
            MaximizerKind::Manifold { dim, cloud } => {
                assert_eq!(*dim, 1);
                for v in cloud {
                    assert!(v[0].abs() < 1e-6, "cloud must lie on the u2u3 circle");
                }
            }
            other => panic!("expected manifold kind, got {other:?}"),
        }
        let v = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(detect_manifold_dim(&g, &v, 2.0, 2.0, None).unwrap(), 1);
    }

    #[test]
    fn saddle_and_not_max_detection() {
        let g = expr_fn("u1^2 + 2*u2^2 + 3*u3^2", 3, 2.0);
        // At e₂ the restricted Hessian has mixed curvature relative to αĝ
        // evaluated with ĝ = g(e₂) = 2: eigenvalues {1/2 - 1, 3/2 - 1}.
        let v = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert!(matches!(
            detect_manifold_dim(&g, &v, 2.0, 2.0, None),
            Err(ManifoldDimError::SaddleLike)
        ));
        // At e₁ (a minimum of the form on the sphere) all eigenvalues of A
        // are positive.
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            detect_manifold_dim(&g, &v, 2.0, 1.0, None),
            Err(ManifoldDimError::NotMax { .. })
        ));
    }
}
