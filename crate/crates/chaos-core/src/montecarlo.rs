//! Exact conditional Monte Carlo for chaos tails and densities, plain MC
//! baselines, and distribution-identity sampling for the squared Gaussian
//! determinant.
//!
//! The conditional estimators Rao–Blackwellize the radial factor away: with
//! `ζ` uniform on the sphere,
//!
//! ```text
//! P{g(η) > x}            = E_ζ  Q(d/2, (x/g(ζ))^{2/α}/2) 1{g(ζ) > 0}
//! E{‖η‖²; g(η) > x}      = E_ζ  d·Q(d/2+1, (x/g(ζ))^{2/α}/2) 1{g(ζ) > 0}
//! p_{g(η)}(x)            = (E-term − d·tail)/(αx)
//! ```
//!
//! and the density weight collapses per sample through the identity
//! `Q(s+1,t) - Q(s,t) = t^s e^{-t}/Γ(s+1)`, which removes the subtraction
//! cancellation entirely. All weights accumulate in log space through a
//! streaming log-sum-exp, so tails of order `e^{-10^4}` are estimated with
//! full relative precision.
//!
//! Sampling is chunked (fixed chunk size 16384, one counter stream per
//! chunk) and reduced in chunk order, so estimates are bit-identical for
//! any thread count; the thread count is recorded as metadata only.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::func::HomogeneousFn;
use crate::rng::CounterRng;
use crate::specfun::{ln_gamma, ChiAlpha};

/// Fixed chunk size of the deterministic parallel schedule.
pub const CHUNK_SIZE: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    ConditionalTail,
    ConditionalDensity,
    Plain,
    ProductChi,
}

/// One Monte Carlo estimate. `log_mean` is `log₁₀(mean)` computed in log
/// space, meaningful even when `mean` underflows to zero.
#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub estimator: EstimatorKind,
    pub x: f64,
    pub mean: f64,
    pub log_mean: f64,
    pub std_error: f64,
    pub n: u64,
    pub seed: u64,
    pub threads: usize,
}

impl McEstimate {
    /// Natural log of the mean.
    pub fn ln_mean(&self) -> f64 {
        self.log_mean * std::f64::consts::LN_10
    }

    /// `|mean - reference| <= k · std_error`?
    pub fn within_std_errors(&self, reference: f64, k: f64) -> bool {
        (self.mean - reference).abs() <= k * self.std_error
    }
}

/// Streaming log-sum-exp accumulator for `ln Σ e^{x_i}`.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn push(&mut self, lx: f64) {
        if lx == f64::NEG_INFINITY {
            return;
        }
        if lx <= self.max {
            self.sum += (lx - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - lx).exp() + 1.0;
            self.max = lx;
        }
    }

    fn merge(mut self, other: LogSum) -> LogSum {
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        if other.max <= self.max {
            self.sum += other.sum * (other.max - self.max).exp();
            self
        } else {
            LogSum {
                max: other.max,
                sum: other.sum + self.sum * (self.max - other.max).exp(),
            }
        }
    }

    fn ln_value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY || self.sum <= 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Run `n` samples of a per-sample log-weight in fixed chunks; returns the
/// log-sum-exp of the weights and of their squares.
fn run_log_weights(
    n: u64,
    seed: u64,
    ln_weight: &(dyn Fn(&mut CounterRng) -> f64 + Sync),
) -> (LogSum, LogSum) {
    let chunks = n.div_ceil(CHUNK_SIZE);
    let partials: Vec<(LogSum, LogSum)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = CounterRng::new(seed, c);
            let count = CHUNK_SIZE.min(n - c * CHUNK_SIZE);
            let mut s1 = LogSum::new();
            let mut s2 = LogSum::new();
            for _ in 0..count {
                let lw = ln_weight(&mut rng);
                s1.push(lw);
                s2.push(2.0 * lw);
            }
            (s1, s2)
        })
        .collect();
    partials
        .into_iter()
        .fold((LogSum::new(), LogSum::new()), |(a1, a2), (b1, b2)| {
            (a1.merge(b1), a2.merge(b2))
        })
}

fn finalize(
    estimator: EstimatorKind,
    x: f64,
    n: u64,
    seed: u64,
    s1: LogSum,
    s2: LogSum,
) -> McEstimate {
    let ln_n = (n as f64).ln();
    let l1 = s1.ln_value() - ln_n; // ln mean
    let l2 = s2.ln_value() - ln_n; // ln mean of squares
    let (mean, log_mean) = if l1 == f64::NEG_INFINITY {
        (0.0, f64::NEG_INFINITY)
    } else {
        (l1.exp(), l1 / std::f64::consts::LN_10)
    };
    // Sample variance in log space: l2 + ln(1 - e^{2 l1 - l2}), guarded
    // against the zero-variance case where the two cancel exactly.
    let std_error = if l1 == f64::NEG_INFINITY {
        0.0
    } else {
        let gap = 2.0 * l1 - l2;
        if gap >= 0.0 {
            0.0
        } else {
            let ln_var = l2 + (-gap.exp()).ln_1p() + (n as f64 / (n as f64 - 1.0)).ln();
            (0.5 * ln_var - 0.5 * ln_n).exp()
        }
    };
    McEstimate {
        estimator,
        x,
        mean,
        log_mean,
        std_error,
        n,
        seed,
        threads: rayon::current_num_threads(),
    }
}

/// Draw a uniform sphere point into `buf`, returning `g(buf)`.
fn sample_g(g: &dyn HomogeneousFn, rng: &mut CounterRng, buf: &mut [f64]) -> Option<f64> {
    loop {
        rng.fill_gaussian(buf);
        let norm = buf.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for v in buf.iter_mut() {
                *v /= norm;
            }
            break;
        }
    }
    g.value(buf).ok()
}

/// Conditional (polar) tail estimator: mean over sphere samples of the
/// exact chi tail at `x/g(ζ)`. Unbiased for `P{g(η) > x}` at identity
/// covariance.
pub fn conditional_tail(g: &dyn HomogeneousFn, x: f64, n: u64, seed: u64) -> McEstimate {
    assert!(x > 0.0 && n >= 1);
    let d = g.dim();
    let chi = ChiAlpha::new(d, g.order());
    let ln_weight = move |rng: &mut CounterRng| -> f64 {
        let mut buf = vec![0.0; d];
        match sample_g(g, rng, &mut buf) {
            Some(gv) if gv > 0.0 => chi.ln_tail(x / gv),
            _ => f64::NEG_INFINITY,
        }
    };
    let (s1, s2) = run_log_weights(n, seed, &ln_weight);
    finalize(EstimatorKind::ConditionalTail, x, n, seed, s1, s2)
}

/// Conditional density estimator via the truncated-second-moment identity;
/// shares the ζ stream layout with [`conditional_tail`] (same seed ⇒ same
/// sphere points), which makes ratio comparisons common-random-number.
pub fn conditional_density(g: &dyn HomogeneousFn, x: f64, n: u64, seed: u64) -> McEstimate {
    assert!(x > 0.0 && n >= 1);
    let d = g.dim();
    let alpha = g.order();
    let s = d as f64 / 2.0;
    // ln of d / (Γ(d/2+1) α x): constant part of the collapsed weight
    // d (t^s e^{-t}/Γ(s+1)) / (αx), t = (x/g(ζ))^{2/α}/2.
    let ln_const = (d as f64).ln() - ln_gamma(s + 1.0) - (alpha * x).ln();
    let ln_weight = move |rng: &mut CounterRng| -> f64 {
        let mut buf = vec![0.0; d];
        match sample_g(g, rng, &mut buf) {
            Some(gv) if gv > 0.0 => {
                let t = 0.5 * (x / gv).powf(2.0 / alpha);
                ln_const + s * t.ln() - t
            }
            _ => f64::NEG_INFINITY,
        }
    };
    let (s1, s2) = run_log_weights(n, seed, &ln_weight);
    finalize(EstimatorKind::ConditionalDensity, x, n, seed, s1, s2)
}

fn fraction_estimate(
    x: f64,
    n: u64,
    seed: u64,
    hit: &(dyn Fn(&mut CounterRng) -> bool + Sync),
) -> McEstimate {
    let chunks = n.div_ceil(CHUNK_SIZE);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = CounterRng::new(seed, c);
            let count = CHUNK_SIZE.min(n - c * CHUNK_SIZE);
            let mut k = 0u64;
            for _ in 0..count {
                if hit(&mut rng) {
                    k += 1;
                }
            }
            k
        })
        .sum();
    let p = hits as f64 / n as f64;
    McEstimate {
        estimator: EstimatorKind::Plain,
        x,
        mean: p,
        log_mean: p.log10(),
        std_error: (p * (1.0 - p) / n as f64).sqrt(),
        n,
        seed,
        threads: rayon::current_num_threads(),
    }
}

/// Plain Monte Carlo baseline: draw `ξ = √B η` and count `h(ξ) > x`.
/// Binomial mean with normal standard error; useful where the tail is at
/// least ~1e-5.
pub fn plain_tail(
    h: &dyn HomogeneousFn,
    sqrt_b: Option<&DMatrix<f64>>,
    x: f64,
    n: u64,
    seed: u64,
) -> McEstimate {
    assert!(n >= 1);
    let d = h.dim();
    if let Some(w) = sqrt_b {
        assert_eq!(w.nrows(), d);
    }
    let hit = move |rng: &mut CounterRng| -> bool {
        let mut buf = vec![0.0; d];
        rng.fill_gaussian(&mut buf);
        let val = match sqrt_b {
            Some(w) => {
                let xi = w * nalgebra::DVector::from_column_slice(&buf);
                h.value(xi.as_slice())
            }
            None => h.value(&buf),
        };
        matches!(val, Ok(v) if v > x)
    };
    fraction_estimate(x, n, seed, &hit)
}

/// Fraction of uniform sphere samples with `g(ζ) > ĝ - t`; the constant
/// `g₀` governs its small-`t` behavior `g₀ t^{(d-1-m)/2}`.
pub fn near_max_probability(
    g: &dyn HomogeneousFn,
    g_hat: f64,
    t: f64,
    n: u64,
    seed: u64,
) -> McEstimate {
    assert!(t > 0.0 && n >= 1);
    let d = g.dim();
    let threshold = g_hat - t;
    let hit = move |rng: &mut CounterRng| -> bool {
        let mut buf = vec![0.0; d];
        matches!(sample_g(g, rng, &mut buf), Some(v) if v > threshold)
    };
    fraction_estimate(t, n, seed, &hit)
}

/// Signed determinant samples from the product-of-chi-squares identity:
/// `det A² ≙ Π_{i=1}^{n_matrix} χ²_i` with `χ²_i` chi-square on `i` degrees
/// of freedom; the sign is a fair coin (the Gaussian determinant is
/// symmetric).
pub fn det_product_chi_sample(n_matrix: usize, n: usize, seed: u64) -> Vec<f64> {
    assert!(n_matrix >= 2);
    let mut rng = CounterRng::new(seed, 0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut prod = 1.0;
        for df in 1..=n_matrix {
            let mut chi2 = 0.0;
            for _ in 0..df {
                let z = rng.next_gaussian();
                chi2 += z * z;
            }
            prod *= chi2;
        }
        out.push(rng.next_sign() * prod.sqrt());
    }
    out
}

/// Direct determinant samples of an `n_matrix × n_matrix` standard Gaussian
/// matrix; the independent reference side of the identity above.
pub fn gaussian_determinant_samples(n_matrix: usize, n: usize, seed: u64) -> Vec<f64> {
    assert!(n_matrix >= 1);
    let mut rng = CounterRng::new(seed, 0);
    let mut out = Vec::with_capacity(n);
    let mut m = DMatrix::zeros(n_matrix, n_matrix);
    for _ in 0..n {
        for i in 0..n_matrix {
            for j in 0..n_matrix {
                m[(i, j)] = rng.next_gaussian();
            }
        }
        out.push(m.clone().lu().determinant());
    }
    out
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
#[derive(Debug, Clone, Copy)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d_stat = 0.0f64;
    while i < na && j < nb {
        let (fa, fb) = (i as f64 / na as f64, j as f64 / nb as f64);
        d_stat = d_stat.max((fa - fb).abs());
        if xs[i] <= ys[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    d_stat = d_stat.max((1.0 - i as f64 / na as f64).abs().max((1.0 - j as f64 / nb as f64).abs()));
    let ne = (na as f64 * nb as f64) / (na as f64 + nb as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d_stat;
    let mut p = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += 2.0 * sign * term;
        sign = -sign;
        if term < 1e-10 {
            break;
        }
    }
    KsTest {
        statistic: d_stat,
        p_value: p.clamp(0.0, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse;
    use crate::func::ExprFn;
    use crate::quad::adaptive_simpson;
    use crate::specfun::upper_reg_gamma;
    use approx::assert_relative_eq;

    fn expr_fn(src: &str, dim: usize, alpha: f64) -> ExprFn {
        ExprFn::new(parse(src, dim).unwrap(), alpha)
    }

    /// Exact tail of the two-Gaussian product by 1-d quadrature of the
    /// Bessel-type representation: P{η₁η₂ > x} = (1/π)∫₀^∞ e^{-x cosh t}/cosh t dt.
    fn product2_tail_oracle(x: f64) -> f64 {
        let f = |t: f64| (-x * t.cosh()).exp() / t.cosh();
        let t_max = (800.0f64 / x).acosh();
        adaptive_simpson(&f, 0.0, t_max, 1e-14 * (-x).exp().max(1e-280)) / std::f64::consts::PI
    }

    /// Exact density: p(x) = K₀(x)/π = (1/π)∫₀^∞ e^{-x cosh t} dt.
    fn product2_density_oracle(x: f64) -> f64 {
        let f = |t: f64| (-x * t.cosh()).exp();
        let t_max = (800.0f64 / x).acosh();
        adaptive_simpson(&f, 0.0, t_max, 1e-14 * (-x).exp().max(1e-280)) / std::f64::consts::PI
    }

    #[test]
    fn norm_chaos_has_zero_variance() {
        // g = ‖u‖^α: every weight equals the chi tail exactly.
        let g = expr_fn("u1^2 + u2^2 + u3^2", 3, 2.0);
        let est = conditional_tail(&g, 9.0, 20_000, 7);
        let exact = upper_reg_gamma(1.5, 4.5);
        assert_relative_eq!(est.mean, exact, max_relative = 1e-12);
        assert!(est.std_error <= 1e-12 * est.mean, "std {}", est.std_error);
    }

    #[test]
    fn conditional_tail_product2_vs_quadrature() {
        let g = expr_fn("u1*u2", 2, 2.0);
        let est = conditional_tail(&g, 15.0, 10_000_000, 11);
        let exact = product2_tail_oracle(15.0);
        let ratio = est.mean / exact;
        assert!(
            (0.98..=1.02).contains(&ratio),
            "ratio {ratio}, est {} vs {exact}",
            est.mean
        );
        // And within 4 standard errors.
        assert!(est.within_std_errors(exact, 4.0));
    }

    #[test]
    fn conditional_tail_product3_vs_leading_form() {
        // d = 3 product at x = 30: within 3 std errors of the leading
        // asymptotic allowing its own O(x^{-2/3}) slack of 10%.
        let g = expr_fn("u1*u2*u3", 3, 3.0);
        let est = conditional_tail(&g, 30.0, 2_000_000, 13);
        let leading = 7.610_356_502_312_136e-8;
        let slack = 0.1 * leading + 3.0 * est.std_error;
        assert!(
            (est.mean - leading).abs() <= slack,
            "est {} vs leading {leading}",
            est.mean
        );
    }

    #[test]
    fn conditional_density_chi_square_identity_zero_variance() {
        // g = ‖u‖², α = 2: per-sample weight is exactly the χ²_d density.
        let d = 4;
        let g = expr_fn("u1^2 + u2^2 + u3^2 + u4^2", d, 2.0);
        let x = 7.0;
        let est = conditional_density(&g, x, 20_000, 3);
        let exact = (x / 2.0f64).powf(d as f64 / 2.0 - 1.0) * (-x / 2.0).exp()
            / (2.0 * crate::specfun::ln_gamma(d as f64 / 2.0).exp());
        assert_relative_eq!(est.mean, exact, max_relative = 1e-12);
        assert!(est.std_error <= 1e-12 * est.mean);
    }

    #[test]
    fn conditional_density_product2_vs_bessel() {
        let g = expr_fn("u1*u2", 2, 2.0);
        let est = conditional_density(&g, 10.0, 10_000_000, 5);
        let exact = product2_density_oracle(10.0);
        assert!(
            est.within_std_errors(exact, 4.0),
            "est {} ± {} vs {exact}",
            est.mean,
            est.std_error
        );
        assert!(est.mean > 0.0);
    }

    #[test]
    fn plain_tail_agrees_with_conditional() {
        // x with tail ≈ 1e-3 so plain MC is feasible.
        let g = expr_fn("u1*u2", 2, 2.0);
        let x = 5.0;
        let plain = plain_tail(&g, None, x, 1_000_000, 21);
        let cond = conditional_tail(&g, x, 1_000_000, 22);
        let gap = (plain.mean - cond.mean).abs();
        let joint = (plain.std_error.powi(2) + cond.std_error.powi(2)).sqrt();
        assert!(gap <= 3.0 * joint, "gap {gap} vs joint σ {joint}");
        // Rao–Blackwellization: the conditional estimator dominates.
        assert!(cond.std_error <= plain.std_error);
    }

    #[test]
    fn plain_tail_at_zero_is_level_set_measure() {
        // P{u1 u2 > 0} = 1/2 by symmetry.
        let g = expr_fn("u1*u2", 2, 2.0);
        let est = plain_tail(&g, None, 0.0, 1_000_000, 9);
        assert!((est.mean - 0.5).abs() <= 4.0 * est.std_error);
    }

    #[test]
    fn plain_tail_with_covariance() {
        // h = u1 u2 under B = [[1, ρ],[ρ, 1]]: P{ξ₁ξ₂ > 0} > 1/2 for ρ > 0.
        let g = expr_fn("u1*u2", 2, 2.0);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let w = crate::asymptotics::symmetric_sqrt(&b).unwrap();
        let est = plain_tail(&g, Some(&w), 0.0, 400_000, 17);
        // P{ξ₁ξ₂>0} = 1/2 + asin(ρ)/π.
        let expected = 0.5 + (0.5f64).asin() / std::f64::consts::PI;
        assert!((est.mean - expected).abs() <= 4.0 * est.std_error);
    }

    #[test]
    fn estimates_are_seed_deterministic() {
        let g = expr_fn("u1*u2", 2, 2.0);
        let a = conditional_tail(&g, 8.0, 200_000, 42);
        let b = conditional_tail(&g, 8.0, 200_000, 42);
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.std_error, b.std_error);
        let c = conditional_tail(&g, 8.0, 200_000, 43);
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn near_max_product2() {
        // P{g(ζ) > ĝ - t} for u1u2: exact (2/π) asin √t.
        let g = expr_fn("u1*u2", 2, 2.0);
        let t = 1e-3;
        let est = near_max_probability(&g, 0.5, t, 1_000_000, 31);
        let exact = 2.0 / std::f64::consts::PI * (t.sqrt()).asin();
        assert!(est.within_std_errors(exact, 4.0));
        // t = ĝ recovers P{g(ζ) > 0} = 1/2.
        let full = near_max_probability(&g, 0.5, 0.5, 1_000_000, 32);
        assert!(full.within_std_errors(0.5, 4.0));
    }

    #[test]
    fn product_chi_identity_ks() {
        // det A² for 2×2 matches χ²₁ χ²₂ in distribution.
        let n = 100_000;
        let direct: Vec<f64> = gaussian_determinant_samples(2, n, 1)
            .into_iter()
            .map(|d| d * d)
            .collect();
        let product: Vec<f64> = det_product_chi_sample(2, n, 2)
            .into_iter()
            .map(|d| d * d)
            .collect();
        let ks = ks_two_sample(&direct, &product);
        assert!(ks.p_value > 0.01, "KS p = {} (D = {})", ks.p_value, ks.statistic);
    }

    #[test]
    fn product_chi_identity_ks_3x3() {
        let n = 100_000;
        let direct: Vec<f64> = gaussian_determinant_samples(3, n, 3)
            .into_iter()
            .map(|d| d * d)
            .collect();
        let product: Vec<f64> = det_product_chi_sample(3, n, 4)
            .into_iter()
            .map(|d| d * d)
            .collect();
        let ks = ks_two_sample(&direct, &product);
        assert!(ks.p_value > 0.01, "KS p = {} (D = {})", ks.p_value, ks.statistic);
    }

    #[test]
    fn product_chi_second_moment() {
        // E[det A²] = Π E[χ²_i] = 1·2 = 2 for n_matrix = 2.
        let n = 100_000;
        let samples = det_product_chi_sample(2, n, 5);
        let mean_sq: f64 = samples.iter().map(|d| d * d).sum::<f64>() / n as f64;
        let var: f64 = samples
            .iter()
            .map(|d| (d * d - mean_sq).powi(2))
            .sum::<f64>()
            / (n as f64 - 1.0);
        let stderr = (var / n as f64).sqrt();
        assert!(
            (mean_sq - 2.0).abs() <= 3.0 * stderr,
            "mean {mean_sq} ± {stderr}"
        );
    }

    #[test]
    fn ks_detects_different_distributions() {
        // Sanity: sign-flipped chi samples against plain gaussians.
        let a = gaussian_determinant_samples(1, 20_000, 6);
        let b: Vec<f64> = gaussian_determinant_samples(1, 20_000, 7)
            .into_iter()
            .map(|v| 2.0 * v)
            .collect();
        let ks = ks_two_sample(&a, &b);
        assert!(ks.p_value < 1e-6);
    }

    #[test]
    fn deep_tail_log_space_weights() {
        // x huge: every weight underflows a double, yet the estimate keeps
        // full relative precision in log space. For the norm chaos the
        // estimate is exact, so compare logs directly.
        let g = expr_fn("u1^2 + u2^2", 2, 2.0);
        let x = 5000.0;
        let est = conditional_tail(&g, x, 50_000, 12);
        assert_eq!(est.mean, 0.0);
        let exact_ln = crate::specfun::ChiAlpha::new(2, 2.0).ln_tail(x);
        assert_relative_eq!(est.ln_mean(), exact_ln, max_relative = 1e-10);
    }
}
