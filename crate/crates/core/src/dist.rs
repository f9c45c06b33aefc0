//! Parametric measures: sampling statements, deterministic assignments and
//! exact enumeration of finite supports.
//!
//! Every sampling statement consumes exactly one uniform from its stream,
//! whatever the distribution and whatever its parameters. Gaussian draws use
//! the inverse CDF for that reason.
//!
//! `normal(μ, σ)` with `σ ≤ 0` or a non-finite parameter does not sample: it
//! returns `μ` when `μ` is finite and `0` otherwise (the uniform is still
//! consumed).

use std::collections::HashMap;
use std::fmt;

use statrs::function::erf::erfc_inv;
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::rng::{open_unit, RngStream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("statement {statement}: {source}")]
    Eval {
        statement: usize,
        #[source]
        source: EvalError,
    },
    #[error("statement {statement}: invalid parameter for {dist}: {reason}")]
    InvalidParameter {
        statement: usize,
        dist: &'static str,
        reason: String,
    },
    #[error("statement {statement}: {dist} is continuous and has no finite support")]
    ContinuousDistribution { statement: usize, dist: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistSpec {
    Bernoulli(Expr),
    Normal { mean: Expr, sd: Expr },
    Uniform { lo: Expr, hi: Expr },
    Choice(Vec<Expr>),
}

impl DistSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DistSpec::Bernoulli(_) => "bernoulli",
            DistSpec::Normal { .. } => "normal",
            DistSpec::Uniform { .. } => "uniform",
            DistSpec::Choice(_) => "choice",
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, DistSpec::Bernoulli(_) | DistSpec::Choice(_))
    }

    pub fn params(&self) -> Vec<&Expr> {
        match self {
            DistSpec::Bernoulli(p) => vec![p],
            DistSpec::Normal { mean, sd } => vec![mean, sd],
            DistSpec::Uniform { lo, hi } => vec![lo, hi],
            DistSpec::Choice(vs) => vs.iter().collect(),
        }
    }
}

/// Why a parameter vector is rejected; `None` when it is acceptable.
pub(crate) fn check_params(dist: &DistSpec, params: &[f64]) -> Option<String> {
    match dist {
        DistSpec::Bernoulli(_) => {
            let p = params[0];
            (!(0.0..=1.0).contains(&p)).then(|| format!("p = {p} is outside [0, 1]"))
        }
        DistSpec::Uniform { .. } => {
            let (a, b) = (params[0], params[1]);
            if !a.is_finite() || !b.is_finite() {
                Some(format!("bounds ({a}, {b}) must be finite"))
            } else if a >= b {
                Some(format!("lower bound {a} is not below upper bound {b}"))
            } else {
                None
            }
        }
        DistSpec::Normal { .. } => None,
        DistSpec::Choice(vs) => vs.is_empty().then(|| "choice needs at least one value".to_string()),
    }
}

/// Standard Gaussian quantile at the open-interval image of `u ∈ [0,1)`.
#[inline]
pub(crate) fn std_normal(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * open_unit(u))
}

/// Maps one uniform `u ∈ [0,1)` and evaluated parameters to a draw.
/// Parameters must already have passed [`check_params`].
#[inline]
pub(crate) fn draw_from_uniform(dist: &DistSpec, params: &[f64], u: f64) -> f64 {
    match dist {
        DistSpec::Bernoulli(_) => {
            if u < params[0] {
                1.0
            } else {
                0.0
            }
        }
        DistSpec::Normal { .. } => {
            let (mu, sigma) = (params[0], params[1]);
            if mu.is_finite() && sigma.is_finite() && sigma > 0.0 {
                mu + sigma * std_normal(u)
            } else if mu.is_finite() {
                mu
            } else {
                0.0
            }
        }
        DistSpec::Uniform { .. } => {
            let (a, b) = (params[0], params[1]);
            a * (1.0 - u) + b * u
        }
        DistSpec::Choice(_) => {
            let k = params.len();
            let i = ((u * k as f64) as usize).min(k - 1);
            params[i]
        }
    }
}

/// Draws once from `dist` with parameters evaluated on `store`.
pub fn sample_dist(dist: &DistSpec, store: &[f64], stream: &mut RngStream) -> Result<f64, DistError> {
    sample_at(dist, store, stream, 0)
}

fn sample_at(
    dist: &DistSpec,
    store: &[f64],
    stream: &mut RngStream,
    statement: usize,
) -> Result<f64, DistError> {
    let params = dist
        .params()
        .into_iter()
        .map(|e| e.eval(store))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| DistError::Eval { statement, source })?;
    if let Some(reason) = check_params(dist, &params) {
        return Err(DistError::InvalidParameter { statement, dist: dist.name(), reason });
    }
    let u = stream.next_uniform();
    Ok(draw_from_uniform(dist, &params, u))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Sample { var: usize, dist: DistSpec },
    Assign { var: usize, expr: Expr },
}

impl Statement {
    pub fn target(&self) -> usize {
        match self {
            Statement::Sample { var, .. } | Statement::Assign { var, .. } => *var,
        }
    }

    pub fn display<'a>(&'a self, vars: &'a [String]) -> DisplayStatement<'a> {
        DisplayStatement { stmt: self, vars }
    }
}

pub struct DisplayStatement<'a> {
    stmt: &'a Statement,
    vars: &'a [String],
}

impl fmt::Display for DisplayStatement<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vars = self.vars;
        match self.stmt {
            Statement::Assign { var, expr } => write!(f, "{} := {};", vars[*var], expr.display(vars)),
            Statement::Sample { var, dist } => {
                write!(f, "{} ~ {}(", vars[*var], dist.name())?;
                for (i, p) in dist.params().into_iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", p.display(vars))?;
                }
                write!(f, ");")
            }
        }
    }
}

/// An ordered list of statements, executed left to right. The empty list is
/// the identity kernel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParametricMeasure {
    pub statements: Vec<Statement>,
}

fn normalized_bits(x: f64) -> u64 {
    // merge +0 and -0
    (x + 0.0).to_bits()
}

impl ParametricMeasure {
    pub fn new(statements: Vec<Statement>) -> Self {
        Self { statements }
    }

    pub fn is_identity(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn is_discrete(&self) -> bool {
        self.statements.iter().all(|s| match s {
            Statement::Sample { dist, .. } => dist.is_discrete(),
            Statement::Assign { .. } => true,
        })
    }

    /// Number of uniforms one execution consumes.
    pub fn draws(&self) -> usize {
        self.statements.iter().filter(|s| matches!(s, Statement::Sample { .. })).count()
    }

    /// Runs every statement on `store` in place.
    pub fn execute_in_place(&self, store: &mut [f64], stream: &mut RngStream) -> Result<(), DistError> {
        for (i, stmt) in self.statements.iter().enumerate() {
            match stmt {
                Statement::Sample { var, dist } => {
                    store[*var] = sample_at(dist, store, stream, i)?;
                }
                Statement::Assign { var, expr } => {
                    store[*var] = expr
                        .eval(store)
                        .map_err(|source| DistError::Eval { statement: i, source })?;
                }
            }
        }
        Ok(())
    }

    pub fn execute(&self, store: &[f64], stream: &mut RngStream) -> Result<Vec<f64>, DistError> {
        let mut out = store.to_vec();
        self.execute_in_place(&mut out, stream)?;
        Ok(out)
    }

    /// All outcome stores with their exact probabilities. Outcomes with
    /// identical stores are merged; zero-probability outcomes are dropped.
    /// Order is deterministic: first-reached outcome first.
    pub fn enumerate_support(&self, store: &[f64]) -> Result<Vec<(Vec<f64>, f64)>, DistError> {
        let mut outcomes = vec![(store.to_vec(), 1.0)];
        for (i, stmt) in self.statements.iter().enumerate() {
            let mut next: Vec<(Vec<f64>, f64)> = Vec::with_capacity(outcomes.len() * 2);
            let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
            let mut push = |s: Vec<f64>, p: f64| {
                if p <= 0.0 {
                    return;
                }
                let key: Vec<u64> = s.iter().copied().map(normalized_bits).collect();
                match index.get(&key) {
                    Some(&at) => next[at].1 += p,
                    None => {
                        index.insert(key, next.len());
                        next.push((s, p));
                    }
                }
            };
            for (s, p) in outcomes {
                match stmt {
                    Statement::Assign { var, expr } => {
                        let mut s = s;
                        s[*var] = expr
                            .eval(&s)
                            .map_err(|source| DistError::Eval { statement: i, source })?;
                        push(s, p);
                    }
                    Statement::Sample { var, dist } => {
                        if !dist.is_discrete() {
                            return Err(DistError::ContinuousDistribution {
                                statement: i,
                                dist: dist.name(),
                            });
                        }
                        let params = dist
                            .params()
                            .into_iter()
                            .map(|e| e.eval(&s))
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|source| DistError::Eval { statement: i, source })?;
                        if let Some(reason) = check_params(dist, &params) {
                            return Err(DistError::InvalidParameter {
                                statement: i,
                                dist: dist.name(),
                                reason,
                            });
                        }
                        match dist {
                            DistSpec::Bernoulli(_) => {
                                let q = params[0];
                                let mut zero = s.clone();
                                zero[*var] = 0.0;
                                push(zero, p * (1.0 - q));
                                let mut one = s;
                                one[*var] = 1.0;
                                push(one, p * q);
                            }
                            DistSpec::Choice(_) => {
                                let share = p / params.len() as f64;
                                for v in params {
                                    let mut o = s.clone();
                                    o[*var] = v;
                                    push(o, share);
                                }
                            }
                            DistSpec::Normal { .. } | DistSpec::Uniform { .. } => unreachable!(),
                        }
                    }
                }
            }
            outcomes = next;
        }
        Ok(outcomes)
    }
}
