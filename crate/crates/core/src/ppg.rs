//! Validated probabilistic program graphs and their one-step semantics.
//!
//! Checkpoints are renumbered densely `0..P` in increasing order of their
//! declared ids; [`State::checkpoint`] always holds a dense index, and
//! [`Ppg::declared_id`] maps back for reporting.

use std::fmt;

use thiserror::Error;

use crate::dist::{std_normal, DistError, ParametricMeasure};
use crate::expr::{EvalError, Expr};
use crate::rng::{uniform_at, RngStream};
use crate::syntax::ModelAst;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PpgError {
    #[error("checkpoint {checkpoint}: {enabled} guards enabled (expected exactly 1) at store {witness}")]
    PartitionViolation {
        checkpoint: u32,
        enabled: usize,
        witness: Witness,
    },
    #[error("checkpoint {checkpoint}: guard of transition {transition} evaluated to {value} at store {witness}")]
    GuardNotBoolean {
        checkpoint: u32,
        transition: usize,
        value: f64,
        witness: Witness,
    },
    #[error("nil checkpoint {nil}: {reason}")]
    NilSelfLoopConflict { nil: u32, reason: String },
    #[error("nil checkpoint {nil} carries a score other than the constant 1")]
    ScoreOnNil { nil: u32 },
    #[error("checkpoint {checkpoint}: score {value} outside [0, 1] at store {witness}")]
    ScoreOutOfRange {
        checkpoint: u32,
        value: f64,
        witness: Witness,
    },
    #[error("checkpoint {checkpoint} has no outgoing transition")]
    NoOutgoingTransition { checkpoint: u32 },
    #[error("checkpoint {checkpoint}: {context}: {source}")]
    Eval {
        checkpoint: u32,
        context: &'static str,
        #[source]
        source: EvalError,
    },
    #[error("transition {transition} from checkpoint {checkpoint}: {source}")]
    Dist {
        checkpoint: u32,
        transition: usize,
        #[source]
        source: DistError,
    },
}

/// A store together with its variable names, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub names: Vec<String>,
    pub store: Vec<f64>,
}

impl Witness {
    fn new(names: &[String], store: &[f64]) -> Self {
        Self { names: names.to_vec(), store: store.to_vec() }
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, (n, v)) in self.names.iter().zip(&self.store).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{n}={v}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub source: u32,
    pub guard: Expr,
    pub measure: ParametricMeasure,
    pub target: u32,
}

/// A program state: store plus dense checkpoint index.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub store: Vec<f64>,
    pub checkpoint: u32,
}

/// A finite path `ω_1..ω_t` with its probability and weight `w_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub states: Vec<State>,
    pub probability: f64,
    pub weight: f64,
}

impl Path {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("paths have at least one state")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    /// Random stores tried per checkpoint for the guard-partition check.
    pub samples: usize,
    pub seed: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { samples: 10_000, seed: 0x5eed_0f_9a27 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ppg {
    vars: Vec<String>,
    declared: Vec<u32>,
    nil: u32,
    init: u32,
    scores: Vec<Option<Expr>>,
    transitions: Vec<Transition>,
    outgoing: Vec<Vec<usize>>,
}

/// Draws component `comp` of random store `sample` for the partition check.
///
/// Each component independently takes one of: 0, 1, -1, +inf, -inf, a
/// standard Gaussian, a Gaussian with sd 100, an integer in 0..=5, an
/// integer in -3..=3 or a uniform in [0, 1), with equal probability.
fn wide_value(seed: u64, sample: usize, comp: usize) -> f64 {
    let slot = sample as u32;
    let kind = (uniform_at(seed, 0, slot, 2 * comp as u32) * 10.0) as u32;
    let u = uniform_at(seed, 0, slot, 2 * comp as u32 + 1);
    match kind {
        0 => 0.0,
        1 => 1.0,
        2 => -1.0,
        3 => f64::INFINITY,
        4 => f64::NEG_INFINITY,
        5 => std_normal(u),
        6 => 100.0 * std_normal(u),
        7 => (u * 6.0).floor(),
        8 => (u * 7.0).floor() - 3.0,
        _ => u,
    }
}

fn constant_value(e: &Expr) -> Option<f64> {
    if e.is_constant() {
        e.eval(&[]).ok()
    } else {
        None
    }
}

impl Ppg {
    pub fn validate(ast: &ModelAst) -> Result<Ppg, PpgError> {
        Self::validate_with(ast, ValidateOptions::default())
    }

    /// Structural checks, nil self-loop completion and the statistical
    /// guard-partition check over `opts.samples` random stores.
    ///
    /// The partition check is a sampling test: it can miss overlaps or gaps
    /// confined to sets the random stores never hit. Every executed state is
    /// checked exactly again by [`Ppg::kernel_step`].
    pub fn validate_with(ast: &ModelAst, opts: ValidateOptions) -> Result<Ppg, PpgError> {
        let mut declared: Vec<u32> = ast.checkpoints.iter().map(|c| c.id).collect();
        declared.sort_unstable();
        declared.dedup();
        let dense = |id: u32| declared.binary_search(&id).expect("parser checks references") as u32;
        let nil = dense(ast.nil);
        let init = dense(ast.init);

        let mut scores: Vec<Option<Expr>> = vec![None; declared.len()];
        for cp in &ast.checkpoints {
            scores[dense(cp.id) as usize] = cp.score.clone();
        }
        if let Some(score) = &scores[nil as usize] {
            if constant_value(score) != Some(1.0) {
                return Err(PpgError::ScoreOnNil { nil: ast.nil });
            }
            scores[nil as usize] = None;
        }
        for (s, score) in scores.iter().enumerate() {
            if let Some(v) = score.as_ref().and_then(constant_value) {
                if !(0.0..=1.0).contains(&v) {
                    return Err(PpgError::ScoreOutOfRange {
                        checkpoint: declared[s],
                        value: v,
                        witness: Witness::new(&ast.vars, &vec![0.0; ast.vars.len()]),
                    });
                }
            }
        }

        let mut transitions: Vec<Transition> = Vec::new();
        let mut nil_loop = false;
        for tr in &ast.transitions {
            let t = Transition {
                source: dense(tr.source),
                guard: tr.guard.clone(),
                measure: ParametricMeasure::new(tr.body.clone()),
                target: dense(tr.target),
            };
            if t.source == nil {
                let conflict = |reason: &str| PpgError::NilSelfLoopConflict {
                    nil: ast.nil,
                    reason: reason.to_string(),
                };
                if nil_loop {
                    return Err(conflict("more than one outgoing transition"));
                }
                if t.target != nil {
                    return Err(conflict("outgoing transition leaves nil"));
                }
                if constant_value(&t.guard) != Some(1.0) {
                    return Err(conflict("self-loop guard is not the constant 1"));
                }
                if !t.measure.is_identity() {
                    return Err(conflict("self-loop body is not empty"));
                }
                nil_loop = true;
            }
            transitions.push(t);
        }
        if !nil_loop {
            transitions.push(Transition {
                source: nil,
                guard: Expr::lit(1.0),
                measure: ParametricMeasure::default(),
                target: nil,
            });
        }

        let mut outgoing = vec![Vec::new(); declared.len()];
        for (i, t) in transitions.iter().enumerate() {
            outgoing[t.source as usize].push(i);
        }
        if let Some(s) = outgoing.iter().position(Vec::is_empty) {
            return Err(PpgError::NoOutgoingTransition { checkpoint: declared[s] });
        }

        let g = Ppg { vars: ast.vars.clone(), declared, nil, init, scores, transitions, outgoing };
        g.check_partition(opts)?;
        Ok(g)
    }

    fn check_partition(&self, opts: ValidateOptions) -> Result<(), PpgError> {
        let m = self.m();
        let mut store = vec![0.0; m];
        for sample in 0..opts.samples {
            for (comp, v) in store.iter_mut().enumerate() {
                *v = wide_value(opts.seed, sample, comp);
            }
            'checkpoints: for (s, outs) in self.outgoing.iter().enumerate() {
                let mut enabled = 0;
                for &ti in outs {
                    match self.transitions[ti].guard.eval_predicate(&store) {
                        Ok(true) => enabled += 1,
                        Ok(false) => {}
                        Err(EvalError::PredicateNotBoolean(value)) => {
                            return Err(PpgError::GuardNotBoolean {
                                checkpoint: self.declared[s],
                                transition: ti,
                                value,
                                witness: Witness::new(&self.vars, &store),
                            })
                        }
                        // store outside the guard's numeric domain: no verdict
                        Err(EvalError::NumericDomain(_)) => continue 'checkpoints,
                    }
                }
                if enabled != 1 {
                    return Err(PpgError::PartitionViolation {
                        checkpoint: self.declared[s],
                        enabled,
                        witness: Witness::new(&self.vars, &store),
                    });
                }
            }
        }
        Ok(())
    }

    /// Number of store variables `m`.
    pub fn m(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn checkpoint_count(&self) -> usize {
        self.declared.len()
    }

    pub fn nil(&self) -> u32 {
        self.nil
    }

    pub fn init(&self) -> u32 {
        self.init
    }

    pub fn declared_id(&self, dense: u32) -> u32 {
        self.declared[dense as usize]
    }

    pub fn dense_id(&self, declared: u32) -> Option<u32> {
        self.declared.binary_search(&declared).ok().map(|i| i as u32)
    }

    pub fn score(&self, dense: u32) -> Option<&Expr> {
        self.scores[dense as usize].as_ref()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn outgoing(&self, dense: u32) -> &[usize] {
        &self.outgoing[dense as usize]
    }

    pub fn is_discrete(&self) -> bool {
        self.transitions.iter().all(|t| t.measure.is_discrete())
    }

    /// The initial state `(0, S)`.
    pub fn initial_state(&self) -> State {
        State { store: vec![0.0; self.m()], checkpoint: self.init }
    }

    pub fn is_terminated(&self, s: &State) -> bool {
        s.checkpoint == self.nil
    }

    /// Index of the unique enabled outgoing transition at `(store, checkpoint)`.
    pub fn select_transition(&self, checkpoint: u32, store: &[f64]) -> Result<usize, PpgError> {
        let mut chosen = None;
        let mut enabled = 0;
        for &ti in &self.outgoing[checkpoint as usize] {
            let on = self.transitions[ti]
                .guard
                .eval_predicate(store)
                .map_err(|e| self.guard_error(checkpoint, ti, e, store))?;
            if on {
                enabled += 1;
                chosen = Some(ti);
            }
        }
        match (enabled, chosen) {
            (1, Some(ti)) => Ok(ti),
            _ => Err(self.partition_violation(checkpoint, enabled, store)),
        }
    }

    pub(crate) fn guard_error(&self, checkpoint: u32, transition: usize, err: EvalError, store: &[f64]) -> PpgError {
        match err {
            EvalError::PredicateNotBoolean(value) => PpgError::GuardNotBoolean {
                checkpoint: self.declared[checkpoint as usize],
                transition,
                value,
                witness: Witness::new(&self.vars, store),
            },
            source => PpgError::Eval {
                checkpoint: self.declared[checkpoint as usize],
                context: "guard",
                source,
            },
        }
    }

    pub(crate) fn partition_violation(&self, checkpoint: u32, enabled: usize, store: &[f64]) -> PpgError {
        PpgError::PartitionViolation {
            checkpoint: self.declared[checkpoint as usize],
            enabled,
            witness: Witness::new(&self.vars, store),
        }
    }

    pub(crate) fn dist_error(&self, transition: usize, source: DistError) -> PpgError {
        PpgError::Dist {
            checkpoint: self.declared[self.transitions[transition].source as usize],
            transition,
            source,
        }
    }

    /// One draw from the kernel κ, in place.
    pub fn kernel_step_in_place(&self, state: &mut State, stream: &mut RngStream) -> Result<(), PpgError> {
        let ti = self.select_transition(state.checkpoint, &state.store)?;
        let tr = &self.transitions[ti];
        tr.measure
            .execute_in_place(&mut state.store, stream)
            .map_err(|e| self.dist_error(ti, e))?;
        state.checkpoint = tr.target;
        Ok(())
    }

    /// One draw from the kernel κ.
    pub fn kernel_step(&self, state: &State, stream: &mut RngStream) -> Result<State, PpgError> {
        let mut next = state.clone();
        self.kernel_step_in_place(&mut next, stream)?;
        Ok(next)
    }

    /// Exact one-step outcome distribution from `state` (discrete measures only).
    pub fn step_support(&self, state: &State) -> Result<Vec<(State, f64)>, PpgError> {
        let ti = self.select_transition(state.checkpoint, &state.store)?;
        let tr = &self.transitions[ti];
        let outcomes = tr
            .measure
            .enumerate_support(&state.store)
            .map_err(|e| self.dist_error(ti, e))?;
        Ok(outcomes
            .into_iter()
            .map(|(store, p)| (State { store, checkpoint: tr.target }, p))
            .collect())
    }

    /// Checks a raw score value against `[0, 1]`.
    pub(crate) fn check_score(&self, checkpoint: u32, value: f64, store: &[f64]) -> Result<f64, PpgError> {
        if (0.0..=1.0).contains(&value) {
            Ok(value)
        } else {
            Err(PpgError::ScoreOutOfRange {
                checkpoint: self.declared[checkpoint as usize],
                value,
                witness: Witness::new(&self.vars, store),
            })
        }
    }

    pub(crate) fn score_eval_error(&self, checkpoint: u32, source: EvalError) -> PpgError {
        PpgError::Eval { checkpoint: self.declared[checkpoint as usize], context: "score", source }
    }

    /// `sc(ω)`: the checkpoint's score on the store, 1 when it has none.
    pub fn combined_score(&self, state: &State) -> Result<f64, PpgError> {
        self.score_at(state.checkpoint, &state.store)
    }

    pub(crate) fn score_at(&self, checkpoint: u32, store: &[f64]) -> Result<f64, PpgError> {
        match &self.scores[checkpoint as usize] {
            None => Ok(1.0),
            Some(e) => {
                let v = e.eval(store).map_err(|err| self.score_eval_error(checkpoint, err))?;
                self.check_score(checkpoint, v, store)
            }
        }
    }

    /// `w_t`: product of combined scores over every state of the path.
    pub fn path_weight(&self, path: &Path) -> Result<f64, PpgError> {
        path.states.iter().try_fold(1.0, |w, s| Ok(w * self.combined_score(s)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_model;

    const RW1: &str = include_str!("../../../models/rw1.ppg");

    fn rw1() -> Ppg {
        Ppg::validate(&parse_model(RW1).unwrap()).unwrap()
    }

    fn st(c: f64, d: f64, cp: u32) -> State {
        State { store: vec![c, d], checkpoint: cp }
    }

    #[test]
    fn rw1_validates_with_inserted_self_loop() {
        let g = rw1();
        assert_eq!(g.checkpoint_count(), 4);
        assert_eq!(g.transitions().len(), 5);
        let last = g.transitions().last().unwrap();
        assert_eq!((last.source, last.target), (g.nil(), g.nil()));
        assert!(last.measure.is_identity());
        assert_eq!(g.outgoing(g.nil()), &[4]);
    }

    #[test]
    fn explicit_self_loop_is_kept() {
        let src = RW1.replace("init 0", "trans 2 -> 2 when 1 == 1 do { }\ninit 0");
        let g = Ppg::validate(&parse_model(&src).unwrap()).unwrap();
        assert_eq!(g.transitions().len(), 5);
    }

    #[test]
    fn nil_self_loop_conflicts() {
        for extra in [
            "trans 2 -> 0 when 1 == 1 do { }",
            "trans 2 -> 2 when c == 0 do { }",
            "trans 2 -> 2 when 1 == 1 do { c := 1; }",
        ] {
            let src = RW1.replace("init 0", &format!("{extra}\ninit 0"));
            let err = Ppg::validate(&parse_model(&src).unwrap()).unwrap_err();
            assert!(matches!(err, PpgError::NilSelfLoopConflict { nil: 2, .. }), "{extra}: {err}");
        }
    }

    #[test]
    fn overlapping_guards_give_witness() {
        let src = RW1.replace("when c != 0", "when 1 == 1");
        let err = Ppg::validate(&parse_model(&src).unwrap()).unwrap_err();
        match err {
            PpgError::PartitionViolation { checkpoint, enabled, witness } => {
                assert_eq!(checkpoint, 1);
                assert_eq!(enabled, 2);
                assert_eq!(witness.store[0], 0.0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn gap_in_guards_is_caught() {
        let src = RW1.replace("when c != 0", "when c == 1");
        let err = Ppg::validate(&parse_model(&src).unwrap()).unwrap_err();
        assert!(matches!(err, PpgError::PartitionViolation { checkpoint: 1, enabled: 0, .. }));
    }

    #[test]
    fn constant_score_out_of_range() {
        let src = RW1.replace("node 3 score d == 1", "node 3 score 1.5");
        let err = Ppg::validate(&parse_model(&src).unwrap()).unwrap_err();
        assert!(matches!(err, PpgError::ScoreOutOfRange { checkpoint: 3, value, .. } if value == 1.5));
    }

    #[test]
    fn no_outgoing_transition() {
        let src = RW1.replace("trans 3 -> 2 when 1 == 1 do { }\n", "");
        let err = Ppg::validate(&parse_model(&src).unwrap()).unwrap_err();
        assert_eq!(err, PpgError::NoOutgoingTransition { checkpoint: 3 });
    }

    #[test]
    fn guard_not_boolean() {
        let src = RW1.replace("trans 3 -> 2 when 1 == 1", "trans 3 -> 2 when 0.5");
        let err = Ppg::validate(&parse_model(&src).unwrap()).unwrap_err();
        assert!(matches!(err, PpgError::GuardNotBoolean { value, .. } if value == 0.5));
    }

    #[test]
    fn sparse_ids_are_renumbered() {
        let src = "vars x\nnode 10\nnil 7\ntrans 10 -> 7 when 1 == 1 do { x := 3; }\ninit 10";
        let g = Ppg::validate(&parse_model(src).unwrap()).unwrap();
        assert_eq!(g.nil(), 0);
        assert_eq!(g.init(), 1);
        assert_eq!(g.declared_id(g.init()), 10);
        assert_eq!(g.dense_id(7), Some(0));
        let next = g.kernel_step(&g.initial_state(), &mut RngStream::new(0, 2, 0)).unwrap();
        assert_eq!(next, State { store: vec![3.0], checkpoint: 0 });
    }

    #[test]
    fn kernel_routes_c_zero_to_nil() {
        let g = rw1();
        let mut s = RngStream::new(1, 2, 0);
        assert_eq!(g.kernel_step(&st(0.0, 0.0, 1), &mut s).unwrap(), st(0.0, 0.0, 2));
    }

    #[test]
    fn kernel_at_nil_is_identity() {
        let g = rw1();
        let s = st(1.0, 1.0, 2);
        let mut stream = RngStream::new(1, 2, 0);
        assert_eq!(g.kernel_step(&s, &mut stream).unwrap(), s);
        assert_eq!(stream.position(), 0);
    }

    #[test]
    fn kernel_from_node_zero_flips_a_fair_coin() {
        let g = rw1();
        let n = 1_000_000u32;
        let start = g.initial_state();
        let mut heads = 0u32;
        for slot in 0..n {
            let next = g.kernel_step(&start, &mut RngStream::new(42, 2, slot)).unwrap();
            assert_eq!(next.checkpoint, 1);
            heads += next.store[0] as u32;
        }
        assert!((f64::from(heads) / f64::from(n) - 0.5).abs() <= 0.002);
    }

    #[test]
    fn runtime_partition_violation() {
        // validation is statistical; a guard gap only at x = 0.123 slips through
        let src = "vars x\nnode 0\nnil 1\n\
                   trans 0 -> 1 when x != 0.123 do { }\n\
                   trans 0 -> 0 when x == 0.124 do { }\ninit 0";
        let g = Ppg::validate_with(&parse_model(src).unwrap(), ValidateOptions { samples: 0, seed: 0 })
            .unwrap();
        let err = g.kernel_step(&State { store: vec![0.123], checkpoint: 0 }, &mut RngStream::new(0, 0, 0));
        assert!(matches!(err, Err(PpgError::PartitionViolation { enabled: 0, .. })));
    }

    #[test]
    fn scores() {
        let g = rw1();
        assert_eq!(g.combined_score(&st(1.0, 1.0, 3)).unwrap(), 1.0);
        assert_eq!(g.combined_score(&st(1.0, 0.0, 3)).unwrap(), 0.0);
        assert_eq!(g.combined_score(&st(5.0, -3.0, 2)).unwrap(), 1.0);
        assert_eq!(g.combined_score(&st(5.0, -3.0, 0)).unwrap(), 1.0);
    }

    #[test]
    fn runtime_score_out_of_range() {
        let src = "vars x\nnode 0 score x\nnil 1\ntrans 0 -> 1 when 1 == 1 do { }\ninit 0";
        let g = Ppg::validate(&parse_model(src).unwrap()).unwrap();
        assert!(g.combined_score(&State { store: vec![0.5], checkpoint: 1 }).is_ok());
        let err = g.combined_score(&State { store: vec![2.0], checkpoint: g.dense_id(0).unwrap() });
        assert!(matches!(err, Err(PpgError::ScoreOutOfRange { value, .. }) if value == 2.0));
    }

    #[test]
    fn path_weights() {
        let g = rw1();
        let path = |states: Vec<State>| Path { states, probability: 0.0, weight: 0.0 };
        let a = path(vec![st(0.0, 0.0, 0), st(0.0, 0.0, 1), st(0.0, 0.0, 2), st(0.0, 0.0, 2)]);
        assert_eq!(g.path_weight(&a).unwrap(), 1.0);
        let b = path(vec![st(0.0, 0.0, 0), st(1.0, 0.0, 1), st(1.0, 0.0, 3), st(1.0, 0.0, 2)]);
        assert_eq!(g.path_weight(&b).unwrap(), 0.0);
        let c = path(vec![st(0.0, 0.0, 0), st(1.0, 0.0, 1)]);
        assert_eq!(g.path_weight(&c).unwrap(), 1.0);
    }

    #[test]
    fn termination_ignores_the_store() {
        let g = rw1();
        assert!(g.is_terminated(&st(0.0, 0.0, 2)));
        assert!(!g.is_terminated(&st(0.0, 0.0, 0)));
        for v in [f64::NEG_INFINITY, -1.0, 0.0, 7.5, f64::INFINITY] {
            assert!(g.is_terminated(&st(v, -v, 2)));
            assert!(!g.is_terminated(&st(v, -v, 3)));
        }
    }

    #[test]
    fn one_step_supports_sum_to_one() {
        let g = rw1();
        for s in [st(0.0, 0.0, 0), st(0.0, 0.0, 1), st(1.0, 0.0, 1), st(1.0, 1.0, 3), st(0.0, 0.0, 2)] {
            let total: f64 = g.step_support(&s).unwrap().iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() <= 1e-12);
        }
    }
}
