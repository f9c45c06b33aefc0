//! Particle filters over a validated PPG: the bootstrap filter on
//! array-of-structs particles and the vectorized filter on
//! struct-of-arrays columns. Both read the same counter-based streams, so
//! given `(seed, N, t)` they produce bit-identical ensembles.
//!
//! Stream layout: the mutation of particle `j` at step `k` draws from
//! `(seed, k, j)`; resampling at step `k` draws from
//! `(seed, k, RESAMPLE_SLOT)`. Step numbers are 1-based; step 1 is the
//! initial state and is never resampled.

mod estimate;
mod resample;
mod scalar;
mod vpf;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::ppg::{PpgError, State};
use crate::query::QueryError;

pub use estimate::{estimate, run_and_estimate, Estimate, EstimateReport};
pub use resample::{ess, resample_multinomial, resample_systematic, systematic_indices};
pub use scalar::{run_scalar_pf, run_scalar_pf_snapshots};
pub use vpf::{run_vpf, run_vpf_snapshots, transition_masks};

pub use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PfError {
    #[error("all particle weights are zero at step {step}")]
    ZeroWeightEnsemble { step: usize },
    #[error("invalid particle weight {0}")]
    InvalidWeight(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("step {step}, particle {particle}: {source}")]
    Program {
        step: usize,
        particle: usize,
        #[source]
        source: PpgError,
    },
    #[error("particle {particle}: {source}")]
    Query {
        particle: usize,
        #[source]
        source: QueryError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampler {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Scalar,
    #[default]
    Vpf,
}

macro_rules! name_enum {
    ($ty:ty, $($variant:path => $name:literal),+) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(format!("unknown value `{s}`")),
                }
            }
        }
    };
}

name_enum!(Resampler, Resampler::Multinomial => "multinomial", Resampler::Systematic => "systematic");
name_enum!(Engine, Engine::Scalar => "scalar", Engine::Vpf => "vpf");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfConfig {
    /// Number of states per particle path (`t ≥ 1`).
    pub t: usize,
    /// Number of particles.
    pub n: usize,
    pub seed: u64,
    pub resampler: Resampler,
}

impl PfConfig {
    pub fn new(t: usize, n: usize, seed: u64) -> Self {
        Self { t, n, seed, resampler: Resampler::Multinomial }
    }

    pub fn with_resampler(mut self, resampler: Resampler) -> Self {
        self.resampler = resampler;
        self
    }

    pub(crate) fn check(&self) -> Result<(), PfError> {
        if self.t == 0 {
            return Err(PfError::InvalidConfig("horizon t must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(PfError::InvalidConfig("N must be at least 1".into()));
        }
        if self.n > u32::MAX as usize || self.t > u32::MAX as usize {
            return Err(PfError::InvalidConfig("N and t must fit in 32 bits".into()));
        }
        Ok(())
    }
}

/// `N` weighted particles after step `step`, stored column-major:
/// `values[v][j]` is variable `v` of particle `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub n: usize,
    pub m: usize,
    pub values: Vec<Vec<f64>>,
    pub checkpoints: Vec<u32>,
    /// Unnormalized weights of the last step (not cumulative).
    pub weights: Vec<f64>,
    pub step: usize,
}

impl ParticleEnsemble {
    pub(crate) fn from_states(states: &[State], weights: Vec<f64>, m: usize, step: usize) -> Self {
        let values = (0..m).map(|v| states.iter().map(|s| s.store[v]).collect()).collect();
        Self {
            n: states.len(),
            m,
            values,
            checkpoints: states.iter().map(|s| s.checkpoint).collect(),
            weights,
            step,
        }
    }

    pub fn store(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|col| col[j]).collect()
    }

    pub fn state(&self, j: usize) -> State {
        State { store: self.store(j), checkpoint: self.checkpoints[j] }
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Equality on bit patterns, so `NaN`s and signed zeros compare exactly.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        let bits = |xs: &[f64]| xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.n == other.n
            && self.m == other.m
            && self.step == other.step
            && self.checkpoints == other.checkpoints
            && bits(&self.weights) == bits(&other.weights)
            && self.values.iter().zip(&other.values).all(|(a, b)| bits(a) == bits(b))
    }
}

pub(crate) fn check_collapse(weights: &[f64], step: usize) -> Result<(), PfError> {
    if weights.iter().sum::<f64>() > 0.0 {
        Ok(())
    } else {
        Err(PfError::ZeroWeightEnsemble { step })
    }
}

/// Ancestor indices for step `step` from the previous weights.
pub(crate) fn resample_step(
    cfg: &PfConfig,
    weights: &[f64],
    step: usize,
    exec: Execution,
) -> Result<Vec<u32>, PfError> {
    let stream = crate::rng::RngStream::new(cfg.seed, step as u32, crate::rng::RESAMPLE_SLOT);
    match cfg.resampler {
        Resampler::Multinomial => resample_multinomial(weights, cfg.n, stream, exec),
        Resampler::Systematic => resample_systematic(weights, cfg.n, stream),
    }
}

pub(crate) fn sorted_snapshots(at: &[usize], t: usize) -> Result<Vec<usize>, PfError> {
    if let Some(&bad) = at.iter().find(|&&k| k == 0 || k > t) {
        return Err(PfError::InvalidConfig(format!("snapshot step {bad} outside 1..={t}")));
    }
    let mut steps = at.to_vec();
    steps.sort_unstable();
    steps.dedup();
    Ok(steps)
}
