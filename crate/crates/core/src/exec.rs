//! Execution strategy for the data-parallel loops.
//!
//! Work is always cut into the same fixed-size chunks and every chunk owns a
//! seed derived from its chunk id, so the parallel and sequential strategies
//! produce bitwise-identical results. Without the `parallel` feature,
//! [`Execution::Parallel`] silently runs sequentially.

/// How chunked work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon work-stealing pool (requires the `parallel` feature).
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run work in parallel.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    /// Maps `f` over `0..n` and returns results in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }
}

/// Splits `total` items into chunks of at most `chunk` items, returning
/// `(start, len)` pairs.
pub fn chunks(total: usize, chunk: usize) -> Vec<(usize, usize)> {
    let chunk = chunk.max(1);
    (0..total.div_ceil(chunk))
        .map(|c| {
            let start = c * chunk;
            (start, chunk.min(total - start))
        })
        .collect()
}
