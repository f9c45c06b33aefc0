//! Probabilistic program graphs with exact truncated semantics and
//! Feynman-Kac particle filtering.
//!
//! A program is parsed with [`syntax::parse_model`], checked with
//! [`Ppg::validate`], and then either enumerated exactly
//! ([`oracle`], discrete programs only) or filtered with the scalar or
//! vectorized particle filter ([`pf`]). All randomness comes from a
//! counter-based generator addressed by `(seed, step, slot, draw)`.

pub mod dist;
mod exec;
pub mod expr;
pub mod models;
pub mod oracle;
pub mod pf;
pub mod ppg;
pub mod query;
pub mod rng;
pub mod syntax;

pub use dist::{DistError, DistSpec, ParametricMeasure, Statement};
pub use expr::{BinOp, EvalError, Expr, UnOp};
pub use oracle::{
    enumerate_paths, filtering_distribution, semantics_bounds, BoundsReport, OracleError, PathTable,
};
pub use pf::{
    estimate, run_and_estimate, run_scalar_pf, run_vpf, Engine, Estimate, EstimateReport, Execution,
    ParticleEnsemble, PfConfig, PfError, Resampler,
};
pub use ppg::{Ppg, PpgError, State};
pub use query::{LiftedQuery, QueryError};
pub use syntax::{parse_expr, parse_model, ModelAst, ParseError};
