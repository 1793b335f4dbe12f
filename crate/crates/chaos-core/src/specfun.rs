//! Special functions and chi-family distributions.
//!
//! Everything here is tuned for tail work: the regularized incomplete gamma
//! pair targets 1e-14 absolute error (series for `t < s + 1`, Lentz continued
//! fraction otherwise), and every tail quantity is also exposed in log space
//! so that weights of order `e^{-10^4}` survive where the linear value
//! underflows to zero.

/// Natural log of the gamma function (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    if x < 0.5 {
        // Reflection: Γ(x) Γ(1-x) = π / sin(πx).
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 500;

/// Series for the regularized lower gamma P(s, t); valid for `t < s + 1`.
/// Returns the sum without the `e^{-t} t^s / Γ(s)` prefactor.
fn lower_series(s: f64, t: f64) -> f64 {
    let mut term = 1.0 / s;
    let mut sum = term;
    let mut a = s;
    for _ in 0..GAMMA_MAX_ITER {
        a += 1.0;
        term *= t / a;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum
}

/// Lentz continued fraction for the regularized upper gamma Q(s, t); valid
/// for `t >= s + 1`. Returns the fraction without the prefactor.
fn upper_cf(s: f64, t: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = t + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete gamma pair `(P(s,t), Q(s,t))` with `P + Q = 1`.
pub fn reg_gamma_pair(s: f64, t: f64) -> (f64, f64) {
    assert!(s > 0.0 && t >= 0.0, "reg_gamma_pair requires s > 0, t >= 0");
    if t == 0.0 {
        return (0.0, 1.0);
    }
    let ln_pre = -t + s * t.ln() - ln_gamma(s);
    if t < s + 1.0 {
        let p = lower_series(s, t) * ln_pre.exp();
        (p, 1.0 - p)
    } else {
        let q = upper_cf(s, t) * ln_pre.exp();
        (1.0 - q, q)
    }
}

/// Regularized upper incomplete gamma `Q(s, t) = Γ(s, t)/Γ(s)`.
pub fn upper_reg_gamma(s: f64, t: f64) -> f64 {
    reg_gamma_pair(s, t).1
}

/// `ln Q(s, t)`, stable far beyond the underflow point of `Q` itself.
pub fn ln_upper_reg_gamma(s: f64, t: f64) -> f64 {
    assert!(s > 0.0 && t >= 0.0);
    if t == 0.0 {
        return 0.0;
    }
    if t < s + 1.0 {
        // Q is O(1) here; go through the series.
        let p = lower_series(s, t) * (-t + s * t.ln() - ln_gamma(s)).exp();
        (-p).ln_1p()
    } else {
        -t + s * t.ln() - ln_gamma(s) + upper_cf(s, t).ln()
    }
}

/// `ln(Q(s+1, t) - Q(s, t)) = s ln t - t - ln Γ(s+1)`, the exact mass of the
/// gamma density between the two regularizations. Used by the conditional
/// density estimator where the direct difference would cancel.
pub fn ln_reg_gamma_increment(s: f64, t: f64) -> f64 {
    assert!(s > 0.0 && t > 0.0);
    s * t.ln() - t - ln_gamma(s + 1.0)
}

/// The distribution of `χ^α` where `χ² ~ χ²_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiAlpha {
    /// Degrees of freedom of the underlying chi-square.
    pub d: usize,
    /// Chaos order; `χ^α` rescales the chi tail by the power `2/α`.
    pub alpha: f64,
}

impl ChiAlpha {
    pub fn new(d: usize, alpha: f64) -> Self {
        assert!(d >= 1 && alpha > 0.0);
        ChiAlpha { d, alpha }
    }

    /// Exact tail `P{χ^α > x} = Q(d/2, x^{2/α}/2)`; equals 1 for `x <= 0`.
    pub fn tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        upper_reg_gamma(self.d as f64 / 2.0, 0.5 * x.powf(2.0 / self.alpha))
    }

    /// `ln P{χ^α > x}`.
    pub fn ln_tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        ln_upper_reg_gamma(self.d as f64 / 2.0, 0.5 * x.powf(2.0 / self.alpha))
    }

    /// Density `p(x) = x^{d/α - 1} e^{-x^{2/α}/2} / (α 2^{d/2-1} Γ(d/2))`.
    pub fn density(&self, x: f64) -> f64 {
        assert!(x > 0.0);
        self.ln_density(x).exp()
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        assert!(x > 0.0);
        let d = self.d as f64;
        let a = self.alpha;
        (d / a - 1.0) * x.ln() - 0.5 * x.powf(2.0 / a)
            - (a.ln() + (d / 2.0 - 1.0) * std::f64::consts::LN_2 + ln_gamma(d / 2.0))
    }
}

/// `E[χ²_d ; χ²_d > t] = d · Q(d/2 + 1, t/2)`.
pub fn chisq_truncated_second_moment(d: usize, t: f64) -> f64 {
    assert!(d >= 1 && t >= 0.0);
    d as f64 * upper_reg_gamma(d as f64 / 2.0 + 1.0, 0.5 * t)
}

/// Leading term of `I(x) = ∫_{x/y₀}^∞ y^γ e^{-c y^β} (y₀ - x/y)^δ dy`:
///
/// ```text
/// (x/y₀)^{1+γ-(1+δ)β} e^{-c (x/y₀)^β} · Γ(1+δ) y₀^δ / (cβ)^{1+δ}
/// ```
///
/// The first neglected correction is `O(x^{-β})`. `δ = 0` is allowed and
/// with `γ = β - 1` the leading term equals `I(x)` exactly.
pub fn watson_leading(y0: f64, beta: f64, c: f64, delta: f64, gamma_exp: f64, x: f64) -> f64 {
    ln_watson_leading(y0, beta, c, delta, gamma_exp, x).exp()
}

/// `ln` of [`watson_leading`].
pub fn ln_watson_leading(y0: f64, beta: f64, c: f64, delta: f64, gamma_exp: f64, x: f64) -> f64 {
    assert!(y0 > 0.0 && beta > 0.0 && c > 0.0 && delta >= 0.0 && x > 0.0);
    let z = x / y0;
    (1.0 + gamma_exp - (1.0 + delta) * beta) * z.ln() - c * z.powf(beta) + ln_gamma(1.0 + delta)
        + delta * y0.ln()
        - (1.0 + delta) * (c * beta).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;
    use approx::assert_relative_eq;

    #[test]
    fn upper_gamma_reference_points() {
        // Q(1, 1) = e^{-1}.
        assert_relative_eq!(upper_reg_gamma(1.0, 1.0), (-1.0f64).exp(), epsilon = 1e-14);
        // Q(5, 0) = 1.
        assert_eq!(upper_reg_gamma(5.0, 0.0), 1.0);
        // Q(2, 1) = 2/e.
        assert_relative_eq!(upper_reg_gamma(2.0, 1.0), 2.0 * (-1.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn upper_gamma_half_is_erfc() {
        // Q(1/2, t) = erfc(√t); reference by quadrature of the normal density.
        let erfc_quad = |x: f64| {
            2.0 / std::f64::consts::PI.sqrt()
                * adaptive_simpson(&|t: f64| (-t * t).exp(), x, x + 40.0, 1e-16)
        };
        assert_relative_eq!(upper_reg_gamma(0.5, 1.0), erfc_quad(1.0), epsilon = 1e-12);
        assert_relative_eq!(upper_reg_gamma(0.5, 1.0), 0.157_299_207_050_285_13, epsilon = 1e-12);
    }

    #[test]
    fn pair_sums_to_one() {
        for &s in &[0.3, 0.5, 1.0, 2.5, 7.0, 30.0] {
            for &t in &[0.0, 0.1, 1.0, 3.0, 10.0, 80.0] {
                let (p, q) = reg_gamma_pair(s, t);
                assert!((p + q - 1.0).abs() < 1e-14, "s={s} t={t}");
                assert!((0.0..=1.0).contains(&q));
            }
        }
    }

    #[test]
    fn q_monotone_in_t() {
        let s = 1.7;
        let mut prev = upper_reg_gamma(s, 0.0);
        for i in 1..200 {
            let t = 0.1 * i as f64;
            let q = upper_reg_gamma(s, t);
            assert!(q < prev, "Q must strictly decrease, t={t}");
            prev = q;
        }
    }

    #[test]
    fn ln_q_matches_linear_and_survives_underflow() {
        for &(s, t) in &[(1.0, 0.5), (2.5, 20.0), (0.5, 3.0), (4.0, 100.0)] {
            assert_relative_eq!(
                ln_upper_reg_gamma(s, t),
                upper_reg_gamma(s, t).ln(),
                epsilon = 1e-12
            );
        }
        // Far past double underflow: e^{-x^{2}/2} with x^2/2 = 4e4.
        let lq = ln_upper_reg_gamma(1.5, 4.0e4);
        assert!(lq.is_finite() && lq < -39_000.0);
    }

    #[test]
    fn chi_alpha_tail_reference_points() {
        // d=2, alpha=2: chi-square with 2 df, tail e^{-x/2}.
        let m = ChiAlpha::new(2, 2.0);
        assert_relative_eq!(m.tail(2.0), (-1.0f64).exp(), epsilon = 1e-14);
        // d=1, alpha=1: |N(0,1)|, tail 2(1 - Φ(1)) at x=1.
        let m = ChiAlpha::new(1, 1.0);
        assert_relative_eq!(m.tail(1.0), 0.317_310_507_862_914_1, epsilon = 1e-12);
    }

    #[test]
    fn chi_alpha_tail_approaches_asymptotic_form() {
        // Exact tail over the one-term asymptotic
        // x^{(d-2)/α} e^{-x^{2/α}/2} / (2^{d/2-1} Γ(d/2)) tends to 1.
        let d = 3;
        let alpha = 2.0;
        let x: f64 = 400.0; // x^{2/α} = 400
        let m = ChiAlpha::new(d, alpha);
        let ln_asym = (d as f64 - 2.0) / alpha * x.ln() - 0.5 * x.powf(2.0 / alpha)
            - ((d as f64 / 2.0 - 1.0) * std::f64::consts::LN_2 + ln_gamma(d as f64 / 2.0));
        let ratio = (m.ln_tail(x) - ln_asym).exp();
        assert!((ratio - 1.0).abs() < 0.02, "ratio = {ratio}");
    }

    #[test]
    fn chi_alpha_density_reference_points() {
        // d=2, alpha=2: Exp(1/2) density.
        let m = ChiAlpha::new(2, 2.0);
        for &x in &[0.5, 1.0, 3.0] {
            assert_relative_eq!(m.density(x), 0.5 * (-0.5 * x).exp(), epsilon = 1e-13);
        }
        // d=3, alpha=1: chi_3 density at 1.
        let m = ChiAlpha::new(3, 1.0);
        assert_relative_eq!(m.density(1.0), 0.483_941_449_038_286_7, epsilon = 1e-12);
    }

    #[test]
    fn density_is_minus_tail_derivative() {
        let m = ChiAlpha::new(4, 3.0);
        let h = 1e-5;
        for i in 0..20 {
            let x = 0.4 + 0.37 * i as f64;
            let fd = -(m.tail(x + h) - m.tail(x - h)) / (2.0 * h);
            assert!((fd - m.density(x)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn density_integrates_to_one() {
        for &(d, alpha) in &[(1usize, 1.0), (3, 2.0), (10, 0.7), (5, 4.0)] {
            let m = ChiAlpha::new(d, alpha);
            // Far endpoint: x^{2/α}/2 = 600.
            let hi = (1200.0f64).powf(alpha / 2.0);
            let total = adaptive_simpson(&|x| if x <= 0.0 { 0.0 } else { m.density(x) }, 1e-12, hi, 1e-10);
            assert!((total - 1.0).abs() < 1e-8, "d={d} alpha={alpha}: {total}");
        }
    }

    #[test]
    fn power_transform_rescales_argument() {
        let d = 4;
        let alpha = 2.7;
        let m = ChiAlpha::new(d, alpha);
        let base = ChiAlpha::new(d, 1.0);
        for &x in &[0.3, 1.0, 5.0, 40.0] {
            assert_relative_eq!(m.tail(x), base.tail(x.powf(1.0 / alpha)), max_relative = 1e-12);
        }
    }

    #[test]
    fn truncated_second_moment() {
        // t = 0 recovers the full second moment d.
        assert_relative_eq!(chisq_truncated_second_moment(7, 0.0), 7.0, epsilon = 1e-14);
        // d=2, t=2: 2 Q(2, 1) = 4/e.
        assert_relative_eq!(
            chisq_truncated_second_moment(2, 2.0),
            4.0 * (-1.0f64).exp(),
            epsilon = 1e-13
        );
        // Quadrature of ∫_t^∞ y f_{χ²_5}(y) dy.
        let d = 5.0;
        let pdf = |y: f64| {
            (0.5 * d - 1.0) * y.ln() - 0.5 * y - 0.5 * d * std::f64::consts::LN_2 - ln_gamma(0.5 * d)
        };
        let oracle = adaptive_simpson(&|y| y * pdf(y).exp(), 3.0, 300.0, 1e-12);
        assert!((chisq_truncated_second_moment(5, 3.0) - oracle).abs() < 1e-8);
    }

    #[test]
    fn gamma_increment_identity() {
        // Q(s+1, t) - Q(s, t) = t^s e^{-t} / Γ(s+1).
        for &(s, t) in &[(1.0, 2.0), (2.5, 4.0), (0.5, 1.0)] {
            let direct = upper_reg_gamma(s + 1.0, t) - upper_reg_gamma(s, t);
            assert_relative_eq!(ln_reg_gamma_increment(s, t).exp(), direct, max_relative = 1e-11);
        }
    }

    /// Quadrature oracle for the Watson-type integral, written against the
    /// substituted form so that the exponential scale is factored out:
    /// I(x) = (x/y₀)^{1+γ} y₀^δ e^{-λ} ∫₀^∞ (1+s)^γ e^{-λ((1+s)^β-1)} (s/(1+s))^δ ds.
    fn watson_ratio_by_quadrature(y0: f64, beta: f64, c: f64, delta: f64, gamma_exp: f64, x: f64) -> f64 {
        let lambda = c * (x / y0).powf(beta);
        let integrand = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            ((1.0 + s).ln() * gamma_exp - lambda * ((1.0 + s).powf(beta) - 1.0)
                + delta * (s / (1.0 + s)).ln())
            .exp()
        };
        let s_max = (1.0 + 45.0 / lambda).powf(1.0 / beta) - 1.0;
        let scale = (ln_gamma(1.0 + delta) - (1.0 + delta) * (lambda * beta).ln()).exp();
        let j = adaptive_simpson(&integrand, 0.0, s_max, 1e-12 * scale);
        // I / leading = J (λβ)^{1+δ} / Γ(1+δ).
        j * ((1.0 + delta) * (lambda * beta).ln() - ln_gamma(1.0 + delta)).exp()
    }

    #[test]
    fn watson_perfect_derivative_case_is_exact() {
        // δ = 0, γ = β - 1: I(x) = e^{-c (x/y₀)^β} / (cβ) exactly.
        for &(y0, beta, c, x) in &[(1.0, 1.0, 1.0, 30.0), (2.0, 1.5, 0.5, 20.0)] {
            let exact = (-c * (x / y0 as f64).powf(beta)).exp() / (c * beta);
            let lead = watson_leading(y0, beta, c, 0.0, beta - 1.0, x);
            assert_relative_eq!(lead, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn watson_leading_vs_quadrature_at_x30() {
        // (y₀, β, c, δ, γ) = (1, 1, 1, 1, 0): leading term e^{-30}/30,
        // quadrature agrees within 7% (first correction is O(1/x)).
        let ratio = watson_ratio_by_quadrature(1.0, 1.0, 1.0, 1.0, 0.0, 30.0);
        assert!((ratio - 1.0).abs() < 0.07, "ratio = {ratio}");
        let lead = watson_leading(1.0, 1.0, 1.0, 1.0, 0.0, 30.0);
        assert_relative_eq!(lead, (-30.0f64).exp() / 30.0, max_relative = 1e-12);
    }

    #[test]
    fn watson_error_shrinks_like_x_to_minus_beta() {
        let errs: Vec<f64> = [20.0, 40.0, 80.0]
            .iter()
            .map(|&x| (watson_ratio_by_quadrature(1.0, 1.0, 1.0, 1.0, 0.0, x) - 1.0).abs())
            .collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "errs = {errs:?}");
        // Least-squares slope of ln err against ln x, expected near -β = -1.
        let slope = (errs[2] / errs[0]).ln() / (4.0f64).ln();
        assert!((slope + 1.0).abs() < 0.2, "slope = {slope}");
    }
}
