//! Estimates and bounds from a weighted ensemble.

use std::time::{Duration, Instant};

use serde::Serialize;

use super::{run_scalar_pf, run_vpf, ess, Engine, Execution, ParticleEnsemble, PfConfig, PfError, Resampler};
use crate::oracle::upper_bound;
use crate::ppg::Ppg;
use crate::query::LiftedQuery;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    /// `Σ Ŵ_j h(ω_j)`, the lower bound `β_L`.
    pub point: f64,
    pub beta_lower: f64,
    /// `None` when no particle terminated or the query has no bound.
    pub beta_upper: Option<f64>,
    /// `1 / p̂_term`, `None` when `p̂_term = 0`.
    pub alpha: Option<f64>,
    pub p_term: f64,
    pub ess: f64,
    /// Weighted standard deviation of `h` under `Ŵ`.
    pub sigma: f64,
}

/// Point estimate, bounds and diagnostics of `h` under the normalized
/// weights. Sums run in particle order, so the result does not depend on the
/// thread count.
pub fn estimate(g: &Ppg, ens: &ParticleEnsemble, q: &LiftedQuery) -> Result<Estimate, PfError> {
    let total = ens.total_weight();
    if !(total > 0.0) {
        return Err(PfError::ZeroWeightEnsemble { step: ens.step });
    }
    let nil = g.nil();
    let mut hs = Vec::with_capacity(ens.n);
    let mut store = vec![0.0; ens.m];
    for j in 0..ens.n {
        let h = if ens.checkpoints[j] == nil {
            for (s, col) in store.iter_mut().zip(&ens.values) {
                *s = col[j];
            }
            q.value_on_store(&store).map_err(|source| PfError::Query { particle: j, source })?
        } else {
            0.0
        };
        hs.push(h);
    }
    let mut weighted = 0.0;
    let mut terminated = 0.0;
    for (j, (&w, &h)) in ens.weights.iter().zip(&hs).enumerate() {
        weighted += w * h;
        if ens.checkpoints[j] == nil {
            terminated += w;
        }
    }
    let point = weighted / total;
    let p_term = terminated / total;
    let var: f64 = ens.weights.iter().zip(&hs).map(|(w, h)| w * (h - point) * (h - point)).sum::<f64>() / total;
    let alpha = (p_term > 0.0).then(|| 1.0 / p_term);
    let beta_upper = alpha.and_then(|a| upper_bound(point, a, q.bound));
    Ok(Estimate {
        point,
        beta_lower: point,
        beta_upper,
        alpha,
        p_term,
        ess: ess(&ens.weights)?,
        sigma: var.max(0.0).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimate: Estimate,
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub engine: Engine,
    pub resampler: Resampler,
    #[serde(skip)]
    pub wall_time: Duration,
    pub collapsed_at_step: Option<usize>,
}

/// Runs one engine and estimates `q` on the final ensemble. The wall time
/// covers both.
pub fn run_and_estimate(
    g: &Ppg,
    cfg: &PfConfig,
    engine: Engine,
    exec: Execution,
    q: &LiftedQuery,
) -> Result<EstimateReport, PfError> {
    let start = Instant::now();
    let ens = match engine {
        Engine::Scalar => run_scalar_pf(g, cfg)?,
        Engine::Vpf => run_vpf(g, cfg, exec)?,
    };
    let estimate = estimate(g, &ens, q)?;
    Ok(EstimateReport {
        estimate,
        n: cfg.n,
        t: cfg.t,
        seed: cfg.seed,
        engine,
        resampler: cfg.resampler,
        wall_time: start.elapsed(),
        collapsed_at_step: None,
    })
}
