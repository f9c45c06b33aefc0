//! Expressions over the program store.
//!
//! Values are extended reals (IEEE doubles, NaN excluded). Booleans are the
//! reals 0 and 1. Variable references are resolved to dense store indices at
//! parse time, so evaluation never looks at names.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("numeric domain error: {0}")]
    NumericDomain(&'static str),
    #[error("predicate evaluated to {0}, expected 0 or 1")]
    PredicateNotBoolean(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Abs,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Min => "min",
            BinOp::Max => "max",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_boolean(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::And | BinOp::Or
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(f64),
    Var(usize),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[inline]
fn truth(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn as_bool(x: f64) -> Result<bool, EvalError> {
    if x == 1.0 {
        Ok(true)
    } else if x == 0.0 {
        Ok(false)
    } else {
        Err(EvalError::PredicateNotBoolean(x))
    }
}

#[inline]
fn checked(x: f64, what: &'static str) -> Result<f64, EvalError> {
    if x.is_nan() {
        Err(EvalError::NumericDomain(what))
    } else {
        Ok(x)
    }
}

/// Applies a unary operator to one value. Shared by the scalar and batch
/// evaluators so both produce identical bits.
#[inline]
pub fn apply_unary(op: UnOp, a: f64) -> Result<f64, EvalError> {
    match op {
        UnOp::Neg => Ok(-a),
        UnOp::Abs => Ok(a.abs()),
        UnOp::Not => Ok(truth(!as_bool(a)?)),
    }
}

/// Applies a binary operator to one pair of values.
#[inline]
pub fn apply_binary(op: BinOp, a: f64, b: f64) -> Result<f64, EvalError> {
    match op {
        BinOp::Add => checked(a + b, "infinity minus infinity in addition"),
        BinOp::Sub => checked(a - b, "infinity minus infinity in subtraction"),
        BinOp::Mul => checked(a * b, "zero times infinity"),
        BinOp::Div => {
            if b == 0.0 {
                if a == 0.0 {
                    Err(EvalError::NumericDomain("zero divided by zero"))
                } else {
                    // x/0 = sign(x)·∞ regardless of the sign of zero
                    Ok(if a > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY })
                }
            } else {
                checked(a / b, "infinity divided by infinity")
            }
        }
        BinOp::Min => Ok(a.min(b)),
        BinOp::Max => Ok(a.max(b)),
        BinOp::Eq => Ok(truth(a == b)),
        BinOp::Ne => Ok(truth(a != b)),
        BinOp::Lt => Ok(truth(a < b)),
        BinOp::Le => Ok(truth(a <= b)),
        BinOp::Gt => Ok(truth(a > b)),
        BinOp::Ge => Ok(truth(a >= b)),
        BinOp::And => Ok(truth(as_bool(a)? & as_bool(b)?)),
        BinOp::Or => Ok(truth(as_bool(a)? | as_bool(b)?)),
    }
}

impl Expr {
    pub fn lit(v: f64) -> Self {
        Expr::Lit(v)
    }

    pub fn var(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn unary(op: UnOp, e: Expr) -> Self {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Evaluates on a store. Both operands of every operator are always
    /// evaluated (no short-circuit), so errors do not depend on evaluation
    /// strategy.
    pub fn eval(&self, store: &[f64]) -> Result<f64, EvalError> {
        match self {
            Expr::Lit(v) => Ok(*v),
            Expr::Var(i) => checked(store[*i], "NaN in store"),
            Expr::Unary(op, a) => apply_unary(*op, a.eval(store)?),
            Expr::Binary(op, a, b) => {
                let x = a.eval(store)?;
                let y = b.eval(store)?;
                apply_binary(*op, x, y)
            }
        }
    }

    /// Evaluates and requires the result to be exactly 0 or 1.
    pub fn eval_predicate(&self, store: &[f64]) -> Result<bool, EvalError> {
        as_bool(self.eval(store)?)
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Lit(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Unary(_, a) => a.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    /// Renders with the given variable names. Binary and unary operators are
    /// fully parenthesized so the output re-parses to the same tree.
    pub fn display<'a>(&'a self, vars: &'a [String]) -> DisplayExpr<'a> {
        DisplayExpr { expr: self, vars }
    }

    /// Evaluates over a batch of rows of a column-major store.
    ///
    /// `cols[v][r]` is variable `v` of row `r`; only the rows listed in `rows`
    /// are evaluated and the output is aligned with `rows`. Each operator is
    /// applied to the whole batch before moving up the tree. On error the row
    /// position of the first failure is reported alongside it.
    pub fn eval_batch(
        &self,
        cols: &[Vec<f64>],
        rows: &[u32],
    ) -> Result<Vec<f64>, (usize, EvalError)> {
        match self {
            Expr::Lit(v) => Ok(vec![*v; rows.len()]),
            Expr::Var(i) => {
                let col = &cols[*i];
                let out: Vec<f64> = rows.iter().map(|&r| col[r as usize]).collect();
                if let Some(pos) = out.iter().position(|x| x.is_nan()) {
                    return Err((pos, EvalError::NumericDomain("NaN in store")));
                }
                Ok(out)
            }
            Expr::Unary(op, a) => {
                let mut xs = a.eval_batch(cols, rows)?;
                for (pos, x) in xs.iter_mut().enumerate() {
                    *x = apply_unary(*op, *x).map_err(|e| (pos, e))?;
                }
                Ok(xs)
            }
            Expr::Binary(op, a, b) => {
                let mut xs = a.eval_batch(cols, rows)?;
                let ys = b.eval_batch(cols, rows)?;
                for (pos, (x, y)) in xs.iter_mut().zip(ys).enumerate() {
                    *x = apply_binary(*op, *x, y).map_err(|e| (pos, e))?;
                }
                Ok(xs)
            }
        }
    }
}

pub struct DisplayExpr<'a> {
    expr: &'a Expr,
    vars: &'a [String],
}

pub(crate) fn fmt_number(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if v == f64::INFINITY {
        write!(f, "inf")
    } else if v == f64::NEG_INFINITY {
        write!(f, "(-inf)")
    } else if v.is_sign_negative() {
        write!(f, "(-{:?})", -v)
    } else {
        write!(f, "{v:?}")
    }
}

impl<'a> fmt::Display for DisplayExpr<'a> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |e: &'a Expr| DisplayExpr { expr: e, vars: self.vars };
        match self.expr {
            Expr::Lit(v) => fmt_number(*v, f),
            Expr::Var(i) => match self.vars.get(*i) {
                Some(name) => write!(f, "{name}"),
                None => write!(f, "${i}"),
            },
            Expr::Unary(UnOp::Neg, a) => write!(f, "(-{})", sub(a)),
            Expr::Unary(UnOp::Not, a) => write!(f, "(!{})", sub(a)),
            Expr::Unary(UnOp::Abs, a) => write!(f, "abs({})", sub(a)),
            Expr::Binary(op @ (BinOp::Min | BinOp::Max), a, b) => {
                write!(f, "{}({}, {})", op.symbol(), sub(a), sub(b))
            }
            Expr::Binary(op, a, b) => write!(f, "({} {} {})", sub(a), op.symbol(), sub(b)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::var(0)
    }
    fn y() -> Expr {
        Expr::var(1)
    }

    #[test]
    fn abs_difference() {
        let e = Expr::unary(UnOp::Abs, Expr::binary(BinOp::Sub, x(), y()));
        assert_eq!(e.eval(&[-1.0, 1.0]).unwrap(), 2.0);
    }

    #[test]
    fn comparison_yields_zero_or_one() {
        let e = Expr::binary(BinOp::Eq, y(), Expr::lit(1.0));
        assert_eq!(e.eval(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(e.eval(&[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn infinity_minus_infinity_is_an_error() {
        let e = Expr::binary(BinOp::Sub, x(), x());
        assert!(matches!(e.eval(&[f64::INFINITY]), Err(EvalError::NumericDomain(_))));
    }

    #[test]
    fn division_by_zero() {
        let div = |a: f64, b: f64| apply_binary(BinOp::Div, a, b);
        assert_eq!(div(3.0, 0.0).unwrap(), f64::INFINITY);
        assert_eq!(div(3.0, -0.0).unwrap(), f64::INFINITY);
        assert_eq!(div(-3.0, 0.0).unwrap(), f64::NEG_INFINITY);
        assert!(div(0.0, 0.0).is_err());
        assert!(div(f64::INFINITY, f64::INFINITY).is_err());
        assert_eq!(div(1.0, f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn infinities_propagate() {
        let e = Expr::binary(BinOp::Add, x(), Expr::lit(5.0));
        assert_eq!(e.eval(&[f64::NEG_INFINITY]).unwrap(), f64::NEG_INFINITY);
        assert!(apply_binary(BinOp::Mul, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn predicates() {
        let guard = Expr::binary(BinOp::Eq, x(), Expr::lit(0.0));
        assert!(guard.eval_predicate(&[0.0, 0.0]).unwrap());
        assert!(!guard.eval_predicate(&[1.0, 0.0]).unwrap());
        assert_eq!(
            Expr::lit(0.5).eval_predicate(&[0.0]),
            Err(EvalError::PredicateNotBoolean(0.5))
        );
    }

    #[test]
    fn logical_operators_reject_non_booleans() {
        assert_eq!(apply_binary(BinOp::And, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(apply_binary(BinOp::Or, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(apply_unary(UnOp::Not, 0.0).unwrap(), 1.0);
        assert!(apply_binary(BinOp::And, 2.0, 1.0).is_err());
        assert!(apply_unary(UnOp::Not, 0.3).is_err());
    }

    #[test]
    fn batch_matches_scalar() {
        let e = Expr::binary(
            BinOp::Max,
            Expr::binary(BinOp::Mul, x(), Expr::lit(0.5)),
            Expr::unary(UnOp::Neg, y()),
        );
        let cols = vec![vec![1.0, 2.0, -3.0], vec![4.0, -5.0, 6.0]];
        let rows = [2u32, 0];
        let out = e.eval_batch(&cols, &rows).unwrap();
        for (k, &r) in rows.iter().enumerate() {
            let store = [cols[0][r as usize], cols[1][r as usize]];
            assert_eq!(out[k].to_bits(), e.eval(&store).unwrap().to_bits());
        }
    }

    #[test]
    fn batch_reports_failing_row() {
        let e = Expr::binary(BinOp::Sub, x(), x());
        let cols = vec![vec![1.0, f64::INFINITY]];
        assert_eq!(e.eval_batch(&cols, &[0, 1]).unwrap_err().0, 1);
    }
}
