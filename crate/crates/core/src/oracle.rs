//! Exact truncated-trace semantics for finite-support programs.
//!
//! [`enumerate_paths`] expands every length-`t` path from `(0, S)` with its
//! exact probability and weight. Expectations under the path measure, the
//! filtering distribution at time `t` and the lower/upper bounds on the
//! program's semantics are all computed from that table.

use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use crate::dist::DistError;
use crate::ppg::{Path, Ppg, PpgError, State};
use crate::query::{LiftedQuery, QueryError};

/// `|α − 1|` below which the bounds are taken to coincide.
pub const ALPHA_ONE_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("checkpoint {checkpoint}, transition {transition}: {dist} is continuous; exact enumeration needs bernoulli/choice only")]
    ContinuousDistribution {
        checkpoint: u32,
        transition: usize,
        dist: &'static str,
    },
    #[error("more than {cap} live paths at depth {depth} ({live} reached)")]
    PathExplosion { depth: usize, live: usize, cap: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("total weighted mass is zero")]
    ZeroTotalWeight,
    #[error("no weighted mass has terminated by the horizon")]
    NotTerminatedYet,
    #[error(transparent)]
    Program(PpgError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

impl From<PpgError> for OracleError {
    fn from(e: PpgError) -> Self {
        match e {
            PpgError::Dist {
                checkpoint,
                transition,
                source: DistError::ContinuousDistribution { dist, .. },
            } => OracleError::ContinuousDistribution { checkpoint, transition, dist },
            other => OracleError::Program(other),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnumerateOptions {
    /// Maximum number of live prefixes at any depth.
    pub cap: usize,
    /// Drop prefixes of weight zero (their probability is tracked).
    pub prune_zero_weight: bool,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self { cap: DEFAULT_CAP, prune_zero_weight: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathTable {
    pub horizon: usize,
    pub paths: Vec<Path>,
    pub pruned_zero: bool,
    /// Probability mass removed with zero-weight prefixes.
    pub pruned_probability: f64,
    /// Prefixes generated across all depths.
    pub explored: usize,
}

pub fn enumerate_paths(g: &Ppg, t: usize, cap: usize) -> Result<PathTable, OracleError> {
    enumerate_paths_with(g, t, EnumerateOptions { cap, ..EnumerateOptions::default() })
}

/// Breadth-first expansion of all length-`t` paths of nonzero probability
/// (and, with pruning, nonzero weight).
pub fn enumerate_paths_with(g: &Ppg, t: usize, opts: EnumerateOptions) -> Result<PathTable, OracleError> {
    if t == 0 {
        return Err(OracleError::ZeroHorizon);
    }
    let start = g.initial_state();
    let w1 = g.combined_score(&start)?;
    let mut pruned_probability = 0.0;
    let mut live = Vec::new();
    if opts.prune_zero_weight && w1 == 0.0 {
        pruned_probability = 1.0;
    } else {
        live.push(Path { states: vec![start], probability: 1.0, weight: w1 });
    }
    let mut explored = 1;
    for depth in 2..=t {
        let mut next = Vec::with_capacity(live.len());
        for path in &live {
            for (state, p) in g.step_support(path.last())? {
                let probability = path.probability * p;
                if probability == 0.0 {
                    continue;
                }
                let weight = path.weight * g.combined_score(&state)?;
                if opts.prune_zero_weight && weight == 0.0 {
                    pruned_probability += probability;
                    continue;
                }
                let mut states = Vec::with_capacity(depth);
                states.extend_from_slice(&path.states);
                states.push(state);
                next.push(Path { states, probability, weight });
                if next.len() > opts.cap {
                    return Err(OracleError::PathExplosion { depth, live: next.len(), cap: opts.cap });
                }
            }
        }
        explored += next.len();
        live = next;
    }
    Ok(PathTable { horizon: t, paths: live, pruned_zero: opts.prune_zero_weight, pruned_probability, explored })
}

/// Built-in path functionals for [`PathTable::expectation`].
#[derive(Debug, Clone, Copy)]
pub enum Functional<'q> {
    /// `w_t`
    Weight,
    /// `1_{T≤t} · w_t`
    TerminatedWeight,
    /// `f_t · w_t` for the lifting `f` of the query (zero if not terminated by `t`).
    Lifted(&'q LiftedQuery),
}

impl PathTable {
    pub fn total_probability(&self) -> f64 {
        self.paths.iter().map(|p| p.probability).sum()
    }

    /// `Σ_paths probability × f(path)`.
    pub fn expectation_with<E>(&self, mut f: impl FnMut(&Path) -> Result<f64, E>) -> Result<f64, E> {
        let mut acc = 0.0;
        for p in &self.paths {
            acc += p.probability * f(p)?;
        }
        Ok(acc)
    }

    pub fn expectation(&self, g: &Ppg, functional: Functional<'_>) -> Result<f64, QueryError> {
        match functional {
            Functional::Weight => self.expectation_with(|p| Ok(p.weight)),
            Functional::TerminatedWeight => {
                self.expectation_with(|p| Ok(if g.is_terminated(p.last()) { p.weight } else { 0.0 }))
            }
            Functional::Lifted(q) => self.expectation_with(|p| Ok(q.lifted(g, p)? * p.weight)),
        }
    }
}

/// One atom of a filtering distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub state: State,
    pub mass: f64,
}

fn state_key_cmp(a: &State, b: &State) -> Ordering {
    a.checkpoint.cmp(&b.checkpoint).then_with(|| {
        a.store
            .iter()
            .zip(&b.store)
            .map(|(x, y)| (x + 0.0).total_cmp(&(y + 0.0)))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// The time-`t` marginal of the Feynman-Kac path measure: each path's
/// `probability × weight` is credited to its final state and normalized.
/// Atoms are sorted by checkpoint, then store.
pub fn filtering_distribution(table: &PathTable) -> Result<Vec<Atom>, OracleError> {
    let total: f64 = table.paths.iter().map(|p| p.probability * p.weight).sum();
    if total <= 0.0 {
        return Err(OracleError::ZeroTotalWeight);
    }
    let mut atoms: Vec<Atom> = table
        .paths
        .iter()
        .filter(|p| p.probability * p.weight > 0.0)
        .map(|p| Atom { state: p.last().clone(), mass: p.probability * p.weight })
        .collect();
    atoms.sort_by(|a, b| state_key_cmp(&a.state, &b.state));
    let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match merged.last_mut() {
            Some(last) if state_key_cmp(&last.state, &a.state).is_eq() => last.mass += a.mass,
            _ => merged.push(a),
        }
    }
    for a in &mut merged {
        a.mass /= total;
    }
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub beta_lower: f64,
    /// `None` when `α > 1` and no bound `M` is known.
    pub beta_upper: Option<f64>,
    pub alpha: f64,
    pub point: f64,
    /// `[[S]]^t f_t · 1_{T≤t} · w_t`
    pub query_mass: f64,
    /// `[[S]]^t 1_{T≤t} · w_t`
    pub mass_terminated: f64,
    /// `[[S]]^t w_t`
    pub mass_total: f64,
    pub exact: bool,
}

/// Upper bound `β_L·α + M·(α − 1)`, with `β_U = β_L` whenever `α` is 1
/// within [`ALPHA_ONE_TOLERANCE`] (so `M = ∞` never meets `0`).
pub fn upper_bound(beta_lower: f64, alpha: f64, bound: Option<f64>) -> Option<f64> {
    if (alpha - 1.0).abs() <= ALPHA_ONE_TOLERANCE {
        Some(beta_lower)
    } else {
        bound.map(|m| beta_lower * alpha + m * (alpha - 1.0))
    }
}

/// Lower and upper bounds on the semantics of the lifting of `q`, from the
/// filtering distribution at the table's horizon.
pub fn semantics_bounds(g: &Ppg, table: &PathTable, q: &LiftedQuery) -> Result<BoundsReport, OracleError> {
    let mut mass_total = 0.0;
    let mut mass_terminated = 0.0;
    for p in &table.paths {
        let m = p.probability * p.weight;
        mass_total += m;
        if g.is_terminated(p.last()) {
            mass_terminated += m;
        }
    }
    if mass_total <= 0.0 {
        return Err(OracleError::ZeroTotalWeight);
    }
    if mass_terminated <= 0.0 {
        return Err(OracleError::NotTerminatedYet);
    }
    let filtering = filtering_distribution(table)?;
    let mut beta_lower = 0.0;
    for atom in &filtering {
        beta_lower += atom.mass * q.value(g, &atom.state)?;
    }
    let query_mass = table.expectation(g, Functional::Lifted(q))?;
    let alpha = mass_total / mass_terminated;
    Ok(BoundsReport {
        beta_lower,
        beta_upper: upper_bound(beta_lower, alpha, q.bound),
        alpha,
        point: beta_lower,
        query_mass,
        mass_terminated,
        mass_total,
        exact: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_model;

    fn load(src: &str) -> Ppg {
        Ppg::validate(&parse_model(src).unwrap()).unwrap()
    }

    fn rw1() -> Ppg {
        load(include_str!("../../../models/rw1.ppg"))
    }

    fn rw1_free() -> Ppg {
        load(include_str!("../../../models/rw1_unconditioned.ppg"))
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn rw1_two_paths_at_four() {
        let g = rw1();
        let table = enumerate_paths(&g, 4, DEFAULT_CAP).unwrap();
        let mut probs: Vec<f64> = table.paths.iter().map(|p| p.probability).collect();
        probs.sort_by(f64::total_cmp);
        assert_eq!(probs, vec![0.25, 0.5]);
        assert!(table.paths.iter().all(|p| p.weight == 1.0 && p.len() == 4));
        assert_eq!(table.pruned_probability, 0.25);
    }

    #[test]
    fn horizon_one_is_the_initial_state() {
        let g = rw1();
        let table = enumerate_paths(&g, 1, DEFAULT_CAP).unwrap();
        assert_eq!(table.paths.len(), 1);
        assert_eq!(table.paths[0].states, vec![g.initial_state()]);
        assert_eq!((table.paths[0].probability, table.paths[0].weight), (1.0, 1.0));
    }

    #[test]
    fn unconditioned_three_paths() {
        let g = rw1_free();
        let table = enumerate_paths(&g, 4, DEFAULT_CAP).unwrap();
        let mut probs: Vec<f64> = table.paths.iter().map(|p| p.probability).collect();
        probs.sort_by(f64::total_cmp);
        assert_eq!(probs, vec![0.25, 0.25, 0.5]);
        assert!(table.paths.iter().all(|p| p.weight == 1.0));
        assert_eq!(table.total_probability(), 1.0);
    }

    #[test]
    fn rw1_expectations() {
        let g = rw1();
        let table = enumerate_paths(&g, 4, DEFAULT_CAP).unwrap();
        let q = LiftedQuery::parse("c", g.vars(), Some(1.0)).unwrap();
        assert!(close(table.expectation(&g, Functional::Lifted(&q)).unwrap(), 0.25));
        assert!(close(table.expectation(&g, Functional::Weight).unwrap(), 0.75));
        assert!(close(table.expectation(&g, Functional::TerminatedWeight).unwrap(), 0.75));
    }

    #[test]
    fn rw1_filtering() {
        let g = rw1();
        let table = enumerate_paths(&g, 4, DEFAULT_CAP).unwrap();
        let phi = filtering_distribution(&table).unwrap();
        assert_eq!(phi.len(), 2);
        assert_eq!(phi[0].state, State { store: vec![0.0, 0.0], checkpoint: 2 });
        assert!(close(phi[0].mass, 2.0 / 3.0));
        assert_eq!(phi[1].state, State { store: vec![1.0, 1.0], checkpoint: 2 });
        assert!(close(phi[1].mass, 1.0 / 3.0));
    }

    #[test]
    fn filtering_point_mass() {
        let g = load("vars x\nnode 0\nnil 1\ntrans 0 -> 1 when 1 == 1 do { x ~ choice(4, 4); }\ninit 0");
        let table = enumerate_paths(&g, 3, DEFAULT_CAP).unwrap();
        let phi = filtering_distribution(&table).unwrap();
        assert_eq!(phi, vec![Atom { state: State { store: vec![4.0], checkpoint: 1 }, mass: 1.0 }]);
    }

    #[test]
    fn rw1_bounds() {
        let g = rw1();
        let table = enumerate_paths(&g, 4, DEFAULT_CAP).unwrap();
        let q = LiftedQuery::parse("c", g.vars(), Some(1.0)).unwrap();
        let r = semantics_bounds(&g, &table, &q).unwrap();
        assert!(close(r.beta_lower, 1.0 / 3.0));
        assert_eq!(r.beta_upper, Some(r.beta_lower));
        assert_eq!(r.alpha, 1.0);
        assert!(close(r.query_mass, 0.25));
    }

    #[test]
    fn unconditioned_bounds() {
        let g = rw1_free();
        let table = enumerate_paths(&g, 4, DEFAULT_CAP).unwrap();
        let q = LiftedQuery::parse("c", g.vars(), Some(1.0)).unwrap();
        let r = semantics_bounds(&g, &table, &q).unwrap();
        assert!(close(r.beta_lower, 0.5));
    }

    #[test]
    fn not_terminated_and_partial_termination() {
        let g = rw1();
        let q = LiftedQuery::parse("c", g.vars(), Some(1.0)).unwrap();
        let t2 = enumerate_paths(&g, 2, DEFAULT_CAP).unwrap();
        assert_eq!(semantics_bounds(&g, &t2, &q), Err(OracleError::NotTerminatedYet));
        // t = 3: the c = 0 branch has terminated (mass 1/2), c = 1 sits at node 3
        let t3 = enumerate_paths(&g, 3, DEFAULT_CAP).unwrap();
        let r = semantics_bounds(&g, &t3, &q).unwrap();
        assert!(close(r.mass_total, 0.75));
        assert!(close(r.mass_terminated, 0.5));
        assert!(close(r.alpha, 1.5));
        assert_eq!(r.beta_lower, 0.0);
        assert!(close(r.beta_upper.unwrap(), 0.5));
        let open = LiftedQuery::parse("c", g.vars(), None).unwrap();
        assert_eq!(semantics_bounds(&g, &t3, &open).unwrap().beta_upper, None);
        let inf = LiftedQuery::parse("c", g.vars(), Some(f64::INFINITY)).unwrap();
        assert_eq!(semantics_bounds(&g, &t3, &inf).unwrap().beta_upper, Some(f64::INFINITY));
    }

    #[test]
    fn zero_query_bounds() {
        let g = rw1();
        let q = LiftedQuery::parse("0", g.vars(), Some(2.0)).unwrap();
        let t3 = enumerate_paths(&g, 3, DEFAULT_CAP).unwrap();
        let r = semantics_bounds(&g, &t3, &q).unwrap();
        assert_eq!(r.beta_lower, 0.0);
        assert!(close(r.beta_upper.unwrap(), 2.0 * (r.alpha - 1.0)));
    }

    #[test]
    fn continuous_is_rejected() {
        let g = load(include_str!("../../../models/dmm.ppg"));
        assert!(matches!(
            enumerate_paths(&g, 3, DEFAULT_CAP),
            Err(OracleError::ContinuousDistribution { dist: "uniform", .. })
        ));
        // horizon 1 never leaves the initial state
        assert!(enumerate_paths(&g, 1, DEFAULT_CAP).is_ok());
    }

    #[test]
    fn explosion_reports_depth() {
        let g = load("vars x\nnode 0\nnil 1\ntrans 0 -> 0 when 1 == 1 do { x ~ choice(x, x + 1); }\ninit 0");
        let err = enumerate_paths(&g, 10, 100).unwrap_err();
        assert!(matches!(err, OracleError::PathExplosion { depth: 8, cap: 100, .. }), "{err}");
    }

    #[test]
    fn conservation_without_pruning() {
        let g = rw1();
        for t in 1..8 {
            let table =
                enumerate_paths_with(&g, t, EnumerateOptions { prune_zero_weight: false, ..Default::default() })
                    .unwrap();
            assert!(close(table.total_probability(), 1.0));
        }
    }

    #[test]
    fn initial_score_zero_gives_empty_table() {
        let g = load("vars x\nnode 0 score 0\nnil 1\ntrans 0 -> 1 when 1 == 1 do { }\ninit 0");
        let table = enumerate_paths(&g, 3, DEFAULT_CAP).unwrap();
        assert!(table.paths.is_empty());
        assert_eq!(filtering_distribution(&table), Err(OracleError::ZeroTotalWeight));
    }
}
