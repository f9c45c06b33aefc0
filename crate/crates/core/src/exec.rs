//! Chunked data-parallel helpers. With the `parallel` feature the chunks are
//! processed on the rayon pool; otherwise, or with
//! [`Execution::Sequential`], they run in order on the calling thread.
//! Results are always returned in chunk order.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether chunks will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Splits `0..n` into ranges of `chunk` and maps each one.
pub(crate) fn map_ranges<R, F>(n: usize, chunk: usize, exec: Execution, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    let range = |i: usize| i * chunk..((i + 1) * chunk).min(n);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..count).into_par_iter().map(|i| f(range(i))).collect();
    }
    let _ = exec;
    (0..count).map(|i| f(range(i))).collect()
}
