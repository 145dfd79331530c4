//! Sequential or data-parallel execution of independent jobs.
//!
//! Batch workloads in this crate (Monte-Carlo replications, counterfactual
//! scenario batches, sensitivity sweeps) are embarrassingly parallel. With the
//! `parallel` feature they fan out over rayon's pool; without it every
//! [`Exec`] mode runs sequentially. Results are always returned in input order,
//! so outputs do not depend on the mode.

/// How a batch of independent jobs is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Splits `0..n` into `chunks` contiguous ranges, folds each with `fold`
    /// starting from `init()`, and returns the per-chunk accumulators in order.
    pub fn fold_chunks<A, I, F>(self, n: usize, chunks: usize, init: I, fold: F) -> Vec<A>
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(A, std::ops::Range<usize>) -> A + Sync + Send,
    {
        let chunks = chunks.max(1).min(n.max(1));
        let size = n.div_ceil(chunks);
        self.map_range(chunks, |c| {
            let lo = (c * size).min(n);
            let hi = ((c + 1) * size).min(n);
            fold(init(), lo..hi)
        })
    }
}

/// Limits the global rayon pool to `threads` workers. Has no effect without the
/// `parallel` feature or if the pool is already initialized.
pub fn set_thread_limit(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
