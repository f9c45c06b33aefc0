//! Bootstrap particle filter on one `State` per particle. Sequential and
//! straightforward; the reference the vectorized engine is checked against.

use super::{check_collapse, resample_step, sorted_snapshots, Execution, ParticleEnsemble, PfConfig, PfError};
use crate::ppg::{Ppg, State};
use crate::rng::RngStream;

pub fn run_scalar_pf(g: &Ppg, cfg: &PfConfig) -> Result<ParticleEnsemble, PfError> {
    Ok(run_scalar_pf_snapshots(g, cfg, &[cfg.t])?.pop().expect("one snapshot"))
}

/// Runs to `cfg.t` and returns the ensemble after each step listed in `at`,
/// in increasing step order.
pub fn run_scalar_pf_snapshots(g: &Ppg, cfg: &PfConfig, at: &[usize]) -> Result<Vec<ParticleEnsemble>, PfError> {
    cfg.check()?;
    let steps = sorted_snapshots(at, cfg.t)?;
    let program = |step: usize, particle: usize| move |source| PfError::Program { step, particle, source };

    let init = g.initial_state();
    let w0 = g.combined_score(&init).map_err(program(1, 0))?;
    let mut particles = vec![init; cfg.n];
    let mut weights = vec![w0; cfg.n];
    check_collapse(&weights, 1)?;

    let mut out = Vec::with_capacity(steps.len());
    if steps.first() == Some(&1) {
        out.push(ParticleEnsemble::from_states(&particles, weights.clone(), g.m(), 1));
    }
    for k in 2..=cfg.t {
        let ancestors = resample_step(cfg, &weights, k, Execution::Sequential)?;
        let mut next: Vec<State> = Vec::with_capacity(cfg.n);
        for (j, &a) in ancestors.iter().enumerate() {
            let mut s = particles[a as usize].clone();
            let mut stream = RngStream::new(cfg.seed, k as u32, j as u32);
            g.kernel_step_in_place(&mut s, &mut stream).map_err(program(k, j))?;
            next.push(s);
        }
        for (j, s) in next.iter().enumerate() {
            weights[j] = g.combined_score(s).map_err(program(k, j))?;
        }
        particles = next;
        check_collapse(&weights, k)?;
        if steps.binary_search(&k).is_ok() {
            out.push(ParticleEnsemble::from_states(&particles, weights.clone(), g.m(), k));
        }
    }
    Ok(out)
}
