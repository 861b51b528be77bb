//! Batch mapping with an optional rayon backend.
//!
//! With the `parallel` feature disabled every [`Parallelism`] setting runs
//! sequentially on the calling thread. Output order always matches input
//! order, so results are identical either way.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Parallelism {
    Sequential,
    /// rayon's global pool.
    #[default]
    Auto,
    /// A dedicated pool with this many threads (`0` or `1` means sequential).
    Threads(usize),
}

impl Parallelism {
    pub fn from_jobs(jobs: usize) -> Self {
        if jobs <= 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Threads(jobs)
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel")
            && !matches!(self, Parallelism::Sequential | Parallelism::Threads(0) | Parallelism::Threads(1))
    }
}

/// Applies `f` to every item, preserving order.
pub fn map<T, R, F>(items: &[T], par: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if !par.is_parallel() {
        return items.iter().map(f).collect();
    }
    map_parallel(items, par, f)
}

#[cfg(feature = "parallel")]
fn map_parallel<T, R, F>(items: &[T], par: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    match par {
        Parallelism::Threads(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(e) => {
                tracing::warn!(error = %e, "thread pool unavailable; running sequentially");
                items.iter().map(f).collect()
            }
        },
        _ => items.par_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_parallel<T, R, F>(items: &[T], _par: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}
