//! Lifted queries: a nonnegative state function `h` supported on terminated
//! states, read at the first terminated state of a path.

use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::ppg::{Path, Ppg, State};
use crate::syntax::{parse_expr, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("query: {0}")]
    Parse(#[from] ParseError),
    #[error("query bound must be a nonnegative number, got {0}")]
    InvalidBound(f64),
    #[error("query evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("query evaluated to {0}, expected a nonnegative value")]
    Negative(f64),
    #[error("query evaluated to {value}, above the declared bound {bound}")]
    AboveBound { value: f64, bound: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedQuery {
    pub expr: Expr,
    /// Upper bound `M ≥ sup h`, possibly `+inf`.
    pub bound: Option<f64>,
}

impl LiftedQuery {
    pub fn new(expr: Expr, bound: Option<f64>) -> Result<Self, QueryError> {
        if let Some(m) = bound {
            if m.is_nan() || m < 0.0 {
                return Err(QueryError::InvalidBound(m));
            }
        }
        Ok(Self { expr, bound })
    }

    pub fn parse(text: &str, vars: &[String], bound: Option<f64>) -> Result<Self, QueryError> {
        Self::new(parse_expr(text, vars)?, bound)
    }

    /// `h` on a terminated store; range-checked.
    pub fn value_on_store(&self, store: &[f64]) -> Result<f64, QueryError> {
        let v = self.expr.eval(store)?;
        self.check(v)
    }

    pub(crate) fn check(&self, v: f64) -> Result<f64, QueryError> {
        if v < 0.0 {
            return Err(QueryError::Negative(v));
        }
        match self.bound {
            Some(bound) if v > bound => Err(QueryError::AboveBound { value: v, bound }),
            _ => Ok(v),
        }
    }

    /// `h(ω)`: zero off nil.
    pub fn value(&self, g: &Ppg, state: &State) -> Result<f64, QueryError> {
        if g.is_terminated(state) {
            self.value_on_store(&state.store)
        } else {
            Ok(0.0)
        }
    }

    /// The lifting of `h` truncated to the path: `h` at the first nil state,
    /// zero if the path never terminates.
    pub fn lifted(&self, g: &Ppg, path: &Path) -> Result<f64, QueryError> {
        match path.states.iter().find(|s| g.is_terminated(s)) {
            Some(s) => self.value_on_store(&s.store),
            None => Ok(0.0),
        }
    }
}
