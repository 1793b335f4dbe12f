//! The [`HomogeneousFn`] trait shared by parsed expressions and built-in
//! chaos functions, plus composition with linear maps (whitening, rotation).

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;
use thiserror::Error;

use crate::exprlang::{DualTower, Expr};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("zero raised to a negative power")]
    ZeroToNegativePower,
    #[error("fractional power of a negative base")]
    NegativeBaseFractionalPower,
}

/// A positively homogeneous function of order `α`: `g(x·u) = x^α g(u)` for
/// `x > 0`. Implementations are immutable and evaluable from many threads.
pub trait HomogeneousFn: Send + Sync {
    fn dim(&self) -> usize;

    /// Homogeneity order α.
    fn order(&self) -> f64;

    /// Plain value at `u`.
    fn value(&self, u: &[f64]) -> Result<f64, EvalError>;

    /// Value, gradient and Hessian at `u`.
    fn jet(&self, u: &[f64]) -> Result<DualTower, EvalError>;

    /// Short human-readable description for reports.
    fn describe(&self) -> String {
        format!("<homogeneous fn, d={}, alpha={}>", self.dim(), self.order())
    }
}

/// A parsed expression together with its declared order.
pub struct ExprFn {
    pub expr: Expr,
    pub alpha: f64,
}

impl ExprFn {
    pub fn new(expr: Expr, alpha: f64) -> Self {
        assert!(alpha > 0.0);
        ExprFn { expr, alpha }
    }
}

impl HomogeneousFn for ExprFn {
    fn dim(&self) -> usize {
        self.expr.dim
    }

    fn order(&self) -> f64 {
        self.alpha
    }

    fn value(&self, u: &[f64]) -> Result<f64, EvalError> {
        self.expr.eval(u)
    }

    fn jet(&self, u: &[f64]) -> Result<DualTower, EvalError> {
        self.expr.eval_jet(u)
    }

    fn describe(&self) -> String {
        self.expr.to_string()
    }
}

/// `g(u) = inner(W u)` for a (not necessarily square) matrix `W`; the
/// composition of a homogeneous function with a linear map is homogeneous of
/// the same order. Covers whitening (`W = √B`), degenerate-covariance
/// reduction (`W` maps a lower-dimensional space into the range of `B`) and
/// orthogonal rotation.
pub struct LinearMapFn {
    pub inner: Arc<dyn HomogeneousFn>,
    /// `inner.dim() × dim` matrix applied to the argument.
    pub w: DMatrix<f64>,
    label: String,
}

impl LinearMapFn {
    pub fn new(inner: Arc<dyn HomogeneousFn>, w: DMatrix<f64>, label: impl Into<String>) -> Self {
        assert_eq!(w.nrows(), inner.dim());
        LinearMapFn {
            inner,
            w,
            label: label.into(),
        }
    }
}

impl HomogeneousFn for LinearMapFn {
    fn dim(&self) -> usize {
        self.w.ncols()
    }

    fn order(&self) -> f64 {
        self.inner.order()
    }

    fn value(&self, u: &[f64]) -> Result<f64, EvalError> {
        let x = &self.w * DVector::from_column_slice(u);
        self.inner.value(x.as_slice())
    }

    fn jet(&self, u: &[f64]) -> Result<DualTower, EvalError> {
        let x = &self.w * DVector::from_column_slice(u);
        let inner = self.inner.jet(x.as_slice())?;
        Ok(DualTower {
            value: inner.value,
            grad: self.w.transpose() * &inner.grad,
            hess: self.w.transpose() * &inner.hess * &self.w,
            nonsmooth: inner.nonsmooth,
        })
    }

    fn describe(&self) -> String {
        format!("{} ∘ {}", self.inner.describe(), self.label)
    }
}

/// Numerical gradient/Hessian helpers. Central differences; the first-order
/// step uses `eps^{1/3}` and the second-order step `eps^{1/4}`, each scaled
/// by `1 + ‖x‖`.
pub mod fd {
    pub fn gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let h = f64::EPSILON.powf(1.0 / 3.0)
            * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
        let d = x.len();
        let mut g = vec![0.0; d];
        let mut buf = x.to_vec();
        for i in 0..d {
            buf[i] = x[i] + h;
            let fp = f(&buf);
            buf[i] = x[i] - h;
            let fm = f(&buf);
            buf[i] = x[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    }

    fn hessian_step(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<Vec<f64>> {
        let d = x.len();
        let mut out = vec![vec![0.0; d]; d];
        let f0 = f(x);
        let mut buf = x.to_vec();
        for i in 0..d {
            buf[i] = x[i] + h;
            let fp = f(&buf);
            buf[i] = x[i] - h;
            let fm = f(&buf);
            buf[i] = x[i];
            out[i][i] = (fp - 2.0 * f0 + fm) / (h * h);
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let mut eval = |si: f64, sj: f64| {
                    buf[i] = x[i] + si * h;
                    buf[j] = x[j] + sj * h;
                    let v = f(&buf);
                    buf[i] = x[i];
                    buf[j] = x[j];
                    v
                };
                let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                    / (4.0 * h * h);
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        out
    }

    /// Central second differences with one Richardson extrapolation step
    /// (O(h⁴) truncation); base step `eps^{1/6} (1 + ‖x‖)`.
    pub fn hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<Vec<f64>> {
        let h = f64::EPSILON.powf(1.0 / 6.0)
            * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
        let coarse = hessian_step(f, x, h);
        let fine = hessian_step(f, x, 0.5 * h);
        let d = x.len();
        let mut out = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                out[i][j] = (4.0 * fine[i][j] - coarse[i][j]) / 3.0;
            }
        }
        out
    }
}
