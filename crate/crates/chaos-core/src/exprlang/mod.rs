//! Arithmetic expressions over variables `u1..ud` with exact forward-mode
//! first and second derivatives, plus a sampling-based homogeneity check.
//!
//! Grammar (see `docs/grammar.md`): constants, variables `u<i>`, `+ - * /`,
//! unary minus, `abs(e)`, and `e^k` with a real literal exponent. There are
//! no transcendental nodes; homogeneous functions do not need them.

mod jet;
mod parser;

pub use jet::DualTower;
pub use parser::ParseError;

use crate::func::EvalError;
use crate::rng::CounterRng;

/// Expression tree node. Constants produced by the parser are nonnegative
/// (leading minus parses as negation), which keeps printing loss-free.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// 0-based variable index.
    Var(usize),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    /// Power with a real literal exponent.
    Pow(Box<Node>, f64),
    Abs(Box<Node>),
}

impl Node {
    /// Conservative syntactic nonnegativity: enough to license fractional
    /// exponents. `abs(...)`, nonnegative constants, even integer powers,
    /// and sums/products/quotients of such.
    pub fn provably_nonneg(&self) -> bool {
        match self {
            Node::Const(c) => *c >= 0.0,
            Node::Abs(_) => true,
            Node::Pow(b, k) => {
                (k.fract() == 0.0 && (*k as i64) % 2 == 0) || b.provably_nonneg()
            }
            Node::Add(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.provably_nonneg() && b.provably_nonneg()
            }
            _ => false,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(..) => 3,
            Node::Pow(..) => 4,
            Node::Const(_) | Node::Var(_) | Node::Abs(_) => 5,
        }
    }

    fn fmt_prec(&self, f: &mut std::fmt::Formatter<'_>, min_prec: u8) -> std::fmt::Result {
        let prec = self.precedence();
        if prec < min_prec {
            write!(f, "(")?;
        }
        match self {
            Node::Const(c) => write!(f, "{c:?}")?,
            Node::Var(i) => write!(f, "u{}", i + 1)?,
            Node::Add(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                b.fmt_prec(f, 2)?;
            }
            Node::Sub(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                b.fmt_prec(f, 2)?;
            }
            Node::Mul(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "*")?;
                b.fmt_prec(f, 3)?;
            }
            Node::Div(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "/")?;
                b.fmt_prec(f, 3)?;
            }
            Node::Neg(a) => {
                write!(f, "-")?;
                a.fmt_prec(f, 3)?;
            }
            Node::Pow(a, k) => {
                a.fmt_prec(f, 5)?;
                if *k < 0.0 {
                    write!(f, "^-{:?}", -k)?;
                } else {
                    write!(f, "^{k:?}")?;
                }
            }
            Node::Abs(a) => {
                write!(f, "abs(")?;
                a.fmt_prec(f, 0)?;
                write!(f, ")")?;
            }
        }
        if prec < min_prec {
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// A parsed expression over `u1..ud`. Immutable; evaluation is re-entrant.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub root: Node,
    pub dim: usize,
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.root.fmt_prec(f, 0)
    }
}

/// Parse `source` as an expression in dimension `dim`.
pub fn parse(source: &str, dim: usize) -> Result<Expr, ParseError> {
    assert!(dim >= 1, "dimension must be at least 1");
    parser::Parser::parse(source, dim)
}

impl Expr {
    /// Plain value at `point`.
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        assert_eq!(point.len(), self.dim);
        eval_node(&self.root, point)
    }

    /// Value, gradient and Hessian at `point`, exact up to rounding.
    pub fn eval_jet(&self, point: &[f64]) -> Result<DualTower, EvalError> {
        assert_eq!(point.len(), self.dim);
        jet_node(&self.root, point, self.dim)
    }
}

fn eval_node(node: &Node, u: &[f64]) -> Result<f64, EvalError> {
    Ok(match node {
        Node::Const(c) => *c,
        Node::Var(i) => u[*i],
        Node::Add(a, b) => eval_node(a, u)? + eval_node(b, u)?,
        Node::Sub(a, b) => eval_node(a, u)? - eval_node(b, u)?,
        Node::Mul(a, b) => eval_node(a, u)? * eval_node(b, u)?,
        Node::Div(a, b) => {
            let den = eval_node(b, u)?;
            if den == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            eval_node(a, u)? / den
        }
        Node::Neg(a) => -eval_node(a, u)?,
        Node::Pow(a, k) => {
            let base = eval_node(a, u)?;
            pow_value(base, *k)?
        }
        Node::Abs(a) => eval_node(a, u)?.abs(),
    })
}

fn pow_value(base: f64, k: f64) -> Result<f64, EvalError> {
    if base == 0.0 && k < 0.0 {
        return Err(EvalError::ZeroToNegativePower);
    }
    if k.fract() == 0.0 && k.abs() < 1.0e9 {
        Ok(base.powi(k as i32))
    } else if base < 0.0 {
        Err(EvalError::NegativeBaseFractionalPower)
    } else {
        Ok(base.powf(k))
    }
}

fn jet_node(node: &Node, u: &[f64], dim: usize) -> Result<DualTower, EvalError> {
    Ok(match node {
        Node::Const(c) => DualTower::constant(dim, *c),
        Node::Var(i) => DualTower::variable(dim, *i, u[*i]),
        Node::Add(a, b) => jet_node(a, u, dim)?.add(&jet_node(b, u, dim)?),
        Node::Sub(a, b) => jet_node(a, u, dim)?.sub(&jet_node(b, u, dim)?),
        Node::Mul(a, b) => jet_node(a, u, dim)?.mul(&jet_node(b, u, dim)?),
        Node::Div(a, b) => jet_node(a, u, dim)?.div(&jet_node(b, u, dim)?)?,
        Node::Neg(a) => jet_node(a, u, dim)?.neg(),
        // |e|^k fused into one C² primitive, so catalog functions like
        // abs(u1)^3 have correct (zero) curvature on the axes.
        Node::Pow(a, k) if *k > 0.0 => {
            if let Node::Abs(inner) = a.as_ref() {
                jet_node(inner, u, dim)?.abs_pow(*k)?
            } else {
                jet_node(a, u, dim)?.powf(*k)?
            }
        }
        Node::Pow(a, k) => jet_node(a, u, dim)?.powf(*k)?,
        Node::Abs(a) => jet_node(a, u, dim)?.abs(),
    })
}

/// Result of a randomized homogeneity test: samples pairs `(x, t)` with
/// `x ∈ (0.1, 10)` and `t` uniform on the sphere and checks
/// `|g(x·t) - x^α g(t)| ≤ 1e-9 (1 + |x^α g(t)|)`.
#[derive(Debug, Clone)]
pub struct HomogeneityReport {
    pub pass: bool,
    pub trials: usize,
    pub failures: usize,
    pub max_rel_err: f64,
}

pub fn check_homogeneity(e: &Expr, alpha: f64, trials: usize, seed: u64) -> HomogeneityReport {
    assert!(alpha > 0.0 && trials >= 1);
    let mut rng = CounterRng::new(seed, 0);
    let mut failures = 0;
    let mut max_rel = 0.0f64;
    let mut t = vec![0.0; e.dim];
    for _ in 0..trials {
        loop {
            rng.fill_gaussian(&mut t);
            let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for v in t.iter_mut() {
                    *v /= norm;
                }
                break;
            }
        }
        let x = rng.next_range(0.1, 10.0);
        let scaled: Vec<f64> = t.iter().map(|v| v * x).collect();
        let (gt, gxt) = match (e.eval(&t), e.eval(&scaled)) {
            (Ok(a), Ok(b)) => (a, b),
            // Domain errors (division by zero on a measure-zero set) do not
            // decide homogeneity either way; skip the draw.
            _ => continue,
        };
        let expected = x.powf(alpha) * gt;
        let err = (gxt - expected).abs() / (1.0 + expected.abs());
        max_rel = max_rel.max(err);
        if err > 1e-9 {
            failures += 1;
        }
    }
    HomogeneityReport {
        pass: failures == 0,
        trials,
        failures,
        max_rel_err: max_rel,
    }
}
