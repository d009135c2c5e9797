//! Scalar expression trees over the state variables x1..xn.

use std::fmt;

use thiserror::Error;

use crate::numkernel::SymMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based state index.
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Atan(Box<Expr>),
    Sqrt(Box<Expr>),
    QuadForm(SymMatrix),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("domain error in `{expr}`: {reason}")]
    Domain { expr: String, reason: &'static str },
    #[error("state has dimension {got}, expression needs at least {need}")]
    Dimension { need: usize, got: usize },
}

use Expr::*;

impl Expr {
    pub fn var(i: usize) -> Expr {
        Var(i)
    }

    /// Largest state dimension referenced (0 when closed over no variables).
    pub fn arity(&self) -> usize {
        match self {
            Const(_) => 0,
            Var(i) => i + 1,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.arity().max(b.arity()),
            Neg(a) | Pow(a, _) | Sin(a) | Cos(a) | Atan(a) | Sqrt(a) => a.arity(),
            QuadForm(p) => p.dim(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        let need = self.arity();
        if x.len() < need {
            return Err(EvalError::Dimension { need, got: x.len() });
        }
        self.eval_unchecked(x)
    }

    fn eval_unchecked(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Const(c) => *c,
            Var(i) => x[*i],
            Add(a, b) => a.eval_unchecked(x)? + b.eval_unchecked(x)?,
            Sub(a, b) => a.eval_unchecked(x)? - b.eval_unchecked(x)?,
            Mul(a, b) => a.eval_unchecked(x)? * b.eval_unchecked(x)?,
            Div(a, b) => {
                let d = b.eval_unchecked(x)?;
                if d == 0.0 {
                    return Err(self.domain("division by zero"));
                }
                a.eval_unchecked(x)? / d
            }
            Neg(a) => -a.eval_unchecked(x)?,
            Pow(a, k) => {
                let v = a.eval_unchecked(x)?;
                if v == 0.0 && *k < 0 {
                    return Err(self.domain("negative power of zero"));
                }
                v.powi(*k)
            }
            Sin(a) => a.eval_unchecked(x)?.sin(),
            Cos(a) => a.eval_unchecked(x)?.cos(),
            Atan(a) => a.eval_unchecked(x)?.atan(),
            Sqrt(a) => {
                let v = a.eval_unchecked(x)?;
                if v < 0.0 {
                    return Err(self.domain("square root of a negative number"));
                }
                v.sqrt()
            }
            QuadForm(p) => p.quad(&x[..p.dim()]),
        })
    }

    fn domain(&self, reason: &'static str) -> EvalError {
        EvalError::Domain {
            expr: self.to_string(),
            reason,
        }
    }

    /// Exact partial derivative with respect to state index `var`.
    pub fn differentiate(&self, var: usize) -> Expr {
        match self {
            Const(_) => Const(0.0),
            Var(i) => Const(if *i == var { 1.0 } else { 0.0 }),
            Add(a, b) => add(a.differentiate(var), b.differentiate(var)),
            Sub(a, b) => sub(a.differentiate(var), b.differentiate(var)),
            Mul(a, b) => add(
                mul(a.differentiate(var), (**b).clone()),
                mul((**a).clone(), b.differentiate(var)),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.differentiate(var), (**b).clone()),
                    mul((**a).clone(), b.differentiate(var)),
                ),
                pow((**b).clone(), 2),
            ),
            Neg(a) => neg(a.differentiate(var)),
            Pow(a, k) => {
                if *k == 0 {
                    Const(0.0)
                } else {
                    mul(
                        mul(Const(*k as f64), pow((**a).clone(), k - 1)),
                        a.differentiate(var),
                    )
                }
            }
            Sin(a) => mul(Cos(a.clone()), a.differentiate(var)),
            Cos(a) => neg(mul(Sin(a.clone()), a.differentiate(var))),
            Atan(a) => div(a.differentiate(var), add(Const(1.0), pow((**a).clone(), 2))),
            Sqrt(a) => div(a.differentiate(var), mul(Const(2.0), Sqrt(a.clone()))),
            QuadForm(p) => {
                // d/dx_k x^T P x = 2 (P x)_k
                let mut acc = Const(0.0);
                if var < p.dim() {
                    for j in 0..p.dim() {
                        let c = 2.0 * p.get(var, j);
                        if c != 0.0 {
                            acc = add(acc, mul(Const(c), Var(j)));
                        }
                    }
                }
                acc
            }
        }
    }

    /// Gradient as a list of partial-derivative expressions.
    pub fn gradient(&self, dim: usize) -> Vec<Expr> {
        (0..dim).map(|k| self.differentiate(k)).collect()
    }

    /// Structural size, used to bound random trees in tests.
    pub fn size(&self) -> usize {
        match self {
            Const(_) | Var(_) | QuadForm(_) => 1,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => 1 + a.size() + b.size(),
            Neg(a) | Pow(a, _) | Sin(a) | Cos(a) | Atan(a) | Sqrt(a) => 1 + a.size(),
        }
    }
}

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Const(c) if *c == v)
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_const(&a, 0.0) => b,
        _ if is_const(&b, 0.0) => a,
        (Const(x), Const(y)) => Const(x + y),
        _ => Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_const(&b, 0.0) => a,
        _ if is_const(&a, 0.0) => neg(b),
        (Const(x), Const(y)) => Const(x - y),
        _ => Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_const(&a, 0.0) || is_const(&b, 0.0) => Const(0.0),
        _ if is_const(&a, 1.0) => b,
        _ if is_const(&b, 1.0) => a,
        (Const(x), Const(y)) => Const(x * y),
        _ => Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_const(&a, 0.0) => Const(0.0),
        _ if is_const(&b, 1.0) => a,
        _ => Div(Box::new(a), Box::new(b)),
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Const(c) => Const(-c),
        Neg(inner) => *inner,
        other => Neg(Box::new(other)),
    }
}

pub fn pow(a: Expr, k: i32) -> Expr {
    match k {
        0 => Const(1.0),
        1 => a,
        _ => match a {
            Const(c) => Const(c.powi(k)),
            other => Pow(Box::new(other), k),
        },
    }
}

/// Shortest round-trip rendering of a float, in a form the lexer accepts.
pub fn fmt_num(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains('e') || s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn fmt_matrix_rows(rows: usize, cols: usize, get: impl Fn(usize, usize) -> f64) -> String {
    let mut s = String::from("[");
    for i in 0..rows {
        if i > 0 {
            s.push_str(", ");
        }
        s.push('[');
        for j in 0..cols {
            if j > 0 {
                s.push_str(", ");
            }
            s.push_str(&fmt_num(get(i, j)));
        }
        s.push(']');
    }
    s.push(']');
    s
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(c) => write!(f, "{}", fmt_num(*c)),
            Var(i) => write!(f, "x{}", i + 1),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Neg(a) => write!(f, "-({a})"),
            Pow(a, k) => write!(f, "pow({a}, {k})"),
            Sin(a) => write!(f, "sin({a})"),
            Cos(a) => write!(f, "cos({a})"),
            Atan(a) => write!(f, "atan({a})"),
            Sqrt(a) => write!(f, "sqrt({a})"),
            QuadForm(p) => {
                let n = p.dim();
                write!(f, "quadform({})", fmt_matrix_rows(n, n, |i, j| p.get(i, j)))
            }
        }
    }
}
