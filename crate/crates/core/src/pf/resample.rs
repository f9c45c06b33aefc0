//! Resampling schemes and the effective sample size.
//!
//! Both schemes satisfy `E[#{j : r_j = i} | W] = N·Ŵ_i`. Indices are
//! 0-based.

use super::PfError;
use crate::exec::{map_ranges, Execution};
use crate::rng::{uniform_at, RngStream, RESAMPLE_SLOT};

const DRAW_CHUNK: usize = 1 << 14;

fn cumulative(weights: &[f64]) -> Result<Vec<f64>, PfError> {
    if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || w.is_infinite()) {
        return Err(PfError::InvalidWeight(w));
    }
    let mut acc = 0.0;
    let cum: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if acc <= 0.0 {
        return Err(PfError::ZeroWeightEnsemble { step: 0 });
    }
    Ok(cum)
}

fn last_positive(weights: &[f64]) -> u32 {
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0) as u32
}

/// Bucketed starting points for `partition_point(cum, c <= x)`: bucket `b`
/// holds the answer for `x = b·total/B`. A lookup searches between the
/// neighbouring buckets and falls back to the full array when the bracket
/// does not hold, so results are exactly those of a plain binary search.
struct Guide {
    starts: Vec<usize>,
}

impl Guide {
    fn new(cum: &[f64], total: f64) -> Self {
        let buckets = cum.len();
        let mut starts = Vec::with_capacity(buckets + 1);
        let mut i = 0;
        for b in 0..=buckets {
            let x = b as f64 / buckets as f64 * total;
            while i < cum.len() && cum[i] <= x {
                i += 1;
            }
            starts.push(i);
        }
        Self { starts }
    }

    #[inline]
    fn search(&self, cum: &[f64], u: f64, x: f64) -> usize {
        let buckets = self.starts.len() - 1;
        let b = ((u * buckets as f64) as usize).min(buckets - 1);
        let lo = self.starts[b.saturating_sub(1)];
        let hi = self.starts[(b + 2).min(buckets)];
        let below = lo == 0 || cum[lo - 1] <= x;
        let above = hi == cum.len() || cum[hi] > x;
        if below && above {
            lo + cum[lo..hi].partition_point(|c| *c <= x)
        } else {
            cum.partition_point(|c| *c <= x)
        }
    }
}

/// `n` independent categorical draws with masses `Ŵ`. Draw `j` uses the
/// uniform at position `j` of `stream`'s `(seed, step)` on the resampling
/// slot.
pub fn resample_multinomial(
    weights: &[f64],
    n: usize,
    stream: RngStream,
    exec: Execution,
) -> Result<Vec<u32>, PfError> {
    let cum = cumulative(weights)?;
    let total = *cum.last().unwrap();
    let fallback = last_positive(weights);
    let guide = Guide::new(&cum, total);
    let (seed, step) = (stream.seed(), stream.step());
    let parts = map_ranges(n, DRAW_CHUNK, exec, |range| {
        range
            .map(|j| {
                let u = uniform_at(seed, step, RESAMPLE_SLOT, j as u32);
                let i = guide.search(&cum, u, u * total);
                if i < cum.len() {
                    i as u32
                } else {
                    fallback
                }
            })
            .collect::<Vec<u32>>()
    });
    Ok(parts.concat())
}

/// Systematic selection for a given offset `u ∈ [0, 1)`: point `j` sits at
/// `(u + j)/n` of the total mass and picks the first index whose cumulative
/// mass exceeds it.
///
/// The comparison is done in units of `total/n` as `c_i − j > u`, so grids
/// that coincide with cumulative masses select exactly (e.g. masses
/// `(3/4, 1/4)` with `n = 4` give counts `(3, 1)` for every `u`).
pub fn systematic_indices(weights: &[f64], n: usize, u: f64) -> Result<Vec<u32>, PfError> {
    let cum = cumulative(weights)?;
    let total = *cum.last().unwrap();
    let scale = n as f64 / total;
    let fallback = last_positive(weights);
    let mut out = Vec::with_capacity(n);
    let mut i = 0usize;
    for j in 0..n {
        let jf = j as f64;
        while i < cum.len() && cum[i] * scale - jf <= u {
            i += 1;
        }
        out.push(if i < cum.len() { i as u32 } else { fallback });
    }
    Ok(out)
}

/// Systematic resampling with one uniform from `stream`'s resampling slot.
pub fn resample_systematic(weights: &[f64], n: usize, stream: RngStream) -> Result<Vec<u32>, PfError> {
    let u = uniform_at(stream.seed(), stream.step(), RESAMPLE_SLOT, 0);
    systematic_indices(weights, n, u)
}

/// Effective sample size `1 / Σ Ŵ_i²`, computed as `(Σ W)² / Σ W²` and
/// clamped to `[1, len]` against rounding.
pub fn ess(weights: &[f64]) -> Result<f64, PfError> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(PfError::ZeroWeightEnsemble { step: 0 });
    }
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    Ok((total * total / sq).clamp(1.0, weights.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(seed: u64, step: u32) -> RngStream {
        RngStream::new(seed, step, RESAMPLE_SLOT)
    }

    #[test]
    fn one_hot_selects_the_only_positive_slot() {
        let w = [0.0, 1.0, 0.0];
        for seed in 0..50 {
            assert_eq!(resample_multinomial(&w, 3, stream(seed, 2), Execution::Sequential).unwrap(), vec![1; 3]);
            assert_eq!(resample_systematic(&w, 3, stream(seed, 2)).unwrap(), vec![1; 3]);
        }
    }

    #[test]
    fn zero_weights_are_rejected() {
        let w = [0.0, 0.0];
        assert!(matches!(
            resample_multinomial(&w, 2, stream(0, 2), Execution::Sequential),
            Err(PfError::ZeroWeightEnsemble { .. })
        ));
        assert!(matches!(resample_systematic(&w, 2, stream(0, 2)), Err(PfError::ZeroWeightEnsemble { .. })));
        assert!(ess(&w).is_err());
        assert!(matches!(resample_systematic(&[1.0, -1.0], 2, stream(0, 2)), Err(PfError::InvalidWeight(_))));
    }

    #[test]
    fn systematic_uniform_hits_each_index_once() {
        let w = vec![1.0; 17];
        for u in [0.0, 0.25, 0.5, 0.999, 1.0 - f64::EPSILON / 2.0] {
            let idx = systematic_indices(&w, 17, u).unwrap();
            assert_eq!(idx, (0..17).collect::<Vec<u32>>());
        }
    }

    #[test]
    fn systematic_three_quarters_one_quarter() {
        let w = [0.75, 0.25];
        let mut us: Vec<f64> = (0..1000).map(|i| f64::from(i) / 1000.0).collect();
        us.extend([1.0 - f64::EPSILON / 2.0, 0.25 - 1e-17, 0.75, 0.5]);
        for u in us {
            let idx = systematic_indices(&w, 4, u).unwrap();
            assert_eq!(idx, vec![0, 0, 0, 1], "u = {u}");
        }
    }

    #[test]
    fn multinomial_is_parallel_invariant() {
        let w: Vec<f64> = (0..50_000).map(|i| f64::from(i % 7) * 0.1).collect();
        let a = resample_multinomial(&w, w.len(), stream(5, 9), Execution::Sequential).unwrap();
        let b = resample_multinomial(&w, w.len(), stream(5, 9), Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&i| w[i as usize] > 0.0));
    }

    #[test]
    fn multinomial_uniform_counts() {
        // 10^3 trials with N = 10^4 uniform weights: mean count per index is 1
        // with binomial variance (1 - 1/N) per trial.
        let n = 10_000;
        let trials = 1000u32;
        let w = vec![1.0; n];
        let mut counts = vec![0u64; n];
        for trial in 0..trials {
            for i in resample_multinomial(&w, n, stream(u64::from(trial), 2), Execution::Sequential).unwrap() {
                counts[i as usize] += 1;
            }
        }
        let p = 1.0 / n as f64;
        let band = 4.0 * (n as f64 * p * (1.0 - p) / f64::from(trials)).sqrt();
        let worst = counts
            .iter()
            .map(|&c| (c as f64 / f64::from(trials) - 1.0).abs())
            .fold(0.0, f64::max);
        // 10^4 indices at 4 sigma: a handful may exceed; check the bulk
        let exceed = counts.iter().filter(|&&c| (c as f64 / f64::from(trials) - 1.0).abs() > band).count();
        assert!(exceed <= 5, "{exceed} indices outside band, worst {worst}");
    }

    #[test]
    fn guided_search_matches_binary_search() {
        let w: Vec<f64> = (0..5000).map(|i| if i % 13 == 0 { 0.0 } else { f64::from(i % 97).powi(3) }).collect();
        let cum = cumulative(&w).unwrap();
        let total = *cum.last().unwrap();
        let guide = Guide::new(&cum, total);
        for j in 0..200_000 {
            let u = uniform_at(3, 4, RESAMPLE_SLOT, j);
            let x = u * total;
            assert_eq!(guide.search(&cum, u, x), cum.partition_point(|c| *c <= x));
        }
        for u in [0.0, 1.0 - f64::EPSILON / 2.0] {
            assert_eq!(guide.search(&cum, u, u * total), cum.partition_point(|c| *c <= u * total));
        }
    }

    #[test]
    fn ess_values() {
        assert_eq!(ess(&[1.0; 10]).unwrap(), 10.0);
        assert_eq!(ess(&[0.0, 0.0, 3.0]).unwrap(), 1.0);
        assert!((ess(&[1.0, 1.0, 2.0]).unwrap() - 8.0 / 3.0).abs() < 1e-15);
    }
}
