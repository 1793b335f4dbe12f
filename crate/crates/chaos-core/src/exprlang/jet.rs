//! Truncated second-order jets (value, gradient, Hessian) for forward-mode
//! differentiation.
//!
//! Every combinator keeps the Hessian exactly symmetric: symmetric rank-two
//! updates are assembled entrywise from the same pair of products, so
//! `H[i][j] == H[j][i]` holds bit-for-bit, not just within rounding.

use nalgebra::{DMatrix, DVector};

use crate::func::EvalError;

/// Value, gradient and Hessian of a scalar expression at a point, plus a
/// flag recording whether a nonsmooth point (`abs` at 0, or a fractional
/// power with exponent below 2 at 0) was touched. Derivatives at such points
/// are defined as 0; consumers that need `C²` data must reject flagged jets.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTower {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub nonsmooth: bool,
}

impl DualTower {
    pub fn constant(dim: usize, c: f64) -> Self {
        DualTower {
            value: c,
            grad: DVector::zeros(dim),
            hess: DMatrix::zeros(dim, dim),
            nonsmooth: false,
        }
    }

    /// Jet of the coordinate function `u_i` (0-based) at `x_i = x`.
    pub fn variable(dim: usize, i: usize, x: f64) -> Self {
        let mut grad = DVector::zeros(dim);
        grad[i] = 1.0;
        DualTower {
            value: x,
            grad,
            hess: DMatrix::zeros(dim, dim),
            nonsmooth: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn add(mut self, o: &DualTower) -> Self {
        self.value += o.value;
        self.grad += &o.grad;
        self.hess += &o.hess;
        self.nonsmooth |= o.nonsmooth;
        self
    }

    pub fn sub(mut self, o: &DualTower) -> Self {
        self.value -= o.value;
        self.grad -= &o.grad;
        self.hess -= &o.hess;
        self.nonsmooth |= o.nonsmooth;
        self
    }

    pub fn neg(mut self) -> Self {
        self.value = -self.value;
        self.grad.neg_mut();
        self.hess.neg_mut();
        self
    }

    pub fn scale(mut self, c: f64) -> Self {
        self.value *= c;
        self.grad *= c;
        self.hess *= c;
        self
    }

    pub fn mul(&self, o: &DualTower) -> Self {
        let n = self.dim();
        let mut hess = DMatrix::zeros(n, n);
        // Upper triangle mirrored so association order cannot break symmetry.
        for i in 0..n {
            for j in i..n {
                let v = self.hess[(i, j)] * o.value
                    + o.hess[(i, j)] * self.value
                    + self.grad[i] * o.grad[j]
                    + o.grad[i] * self.grad[j];
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        DualTower {
            value: self.value * o.value,
            grad: &self.grad * o.value + &o.grad * self.value,
            hess,
            nonsmooth: self.nonsmooth || o.nonsmooth,
        }
    }

    pub fn div(&self, o: &DualTower) -> Result<Self, EvalError> {
        if o.value == 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        let n = self.dim();
        let q = self.value / o.value;
        let grad = (&self.grad - &o.grad * q) / o.value;
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = (self.hess[(i, j)]
                    - grad[i] * o.grad[j]
                    - o.grad[i] * grad[j]
                    - q * o.hess[(i, j)])
                    / o.value;
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        Ok(DualTower {
            value: q,
            grad,
            hess,
            nonsmooth: self.nonsmooth || o.nonsmooth,
        })
    }

    pub fn abs(mut self) -> Self {
        if self.value == 0.0 {
            let n = self.dim();
            return DualTower {
                value: 0.0,
                grad: DVector::zeros(n),
                hess: DMatrix::zeros(n, n),
                nonsmooth: true,
            };
        }
        let s = self.value.signum();
        self.value = self.value.abs();
        self.grad *= s;
        self.hess *= s;
        self
    }

    /// `f^k` for real `k`. Integer exponents work for any sign of `f`;
    /// fractional exponents require `f >= 0` (enforced by the parser for
    /// expressions, checked here for safety).
    pub fn powf(&self, k: f64) -> Result<Self, EvalError> {
        if k == 0.0 {
            return Ok(DualTower::constant(self.dim(), 1.0));
        }
        if k == 1.0 {
            return Ok(self.clone());
        }
        let is_int = k.fract() == 0.0 && k.abs() < 1.0e9;
        if self.value == 0.0 {
            if k < 0.0 {
                return Err(EvalError::ZeroToNegativePower);
            }
            // Value and gradient vanish for k > 1; the Hessian survives only
            // at k = 2 and the jet stops being C² for k < 2.
            let n = self.dim();
            let mut out = DualTower::constant(n, 0.0);
            if k == 2.0 {
                out.hess = sym_outer(&self.grad, &self.grad);
            } else if k < 2.0 {
                out.nonsmooth = true;
            }
            out.nonsmooth |= self.nonsmooth;
            return Ok(out);
        }
        if !is_int && self.value < 0.0 {
            return Err(EvalError::NegativeBaseFractionalPower);
        }
        let f = self.value;
        let (v, d1, d2) = if is_int {
            let ki = k as i32;
            (
                f.powi(ki),
                k * f.powi(ki - 1),
                k * (k - 1.0) * f.powi(ki - 2),
            )
        } else {
            (
                f.powf(k),
                k * f.powf(k - 1.0),
                k * (k - 1.0) * f.powf(k - 2.0),
            )
        };
        Ok(self.chain(v, d1, d2))
    }

    /// `|f|^k` as a single smooth primitive for `k > 0`. For `k >= 2` this
    /// is C² everywhere including `f = 0`, which the plain `abs`/`powf`
    /// composition cannot express.
    pub fn abs_pow(&self, k: f64) -> Result<Self, EvalError> {
        assert!(k > 0.0);
        if self.value == 0.0 {
            let n = self.dim();
            let mut out = DualTower::constant(n, 0.0);
            if k == 2.0 {
                out.hess = sym_outer(&self.grad, &self.grad);
            } else if k < 2.0 {
                out.nonsmooth = true;
            }
            out.nonsmooth |= self.nonsmooth;
            return Ok(out);
        }
        let s = self.value.signum();
        let a = self.value.abs();
        let v = a.powf(k);
        let d1 = k * a.powf(k - 1.0) * s;
        let d2 = k * (k - 1.0) * a.powf(k - 2.0);
        Ok(self.chain(v, d1, d2))
    }

    /// Composition with a scalar map `φ`: given `φ(f)`, `φ'(f)`, `φ''(f)`,
    /// returns the jet of `φ ∘ f`.
    fn chain(&self, v: f64, d1: f64, d2: f64) -> Self {
        let n = self.dim();
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let e = d1 * self.hess[(i, j)] + d2 * self.grad[i] * self.grad[j];
                hess[(i, j)] = e;
                hess[(j, i)] = e;
            }
        }
        DualTower {
            value: v,
            grad: &self.grad * d1,
            hess,
            nonsmooth: self.nonsmooth,
        }
    }
}

fn sym_outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let n = a.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = a[i] * b[j] + b[i] * a[j];
        }
    }
    m
}
