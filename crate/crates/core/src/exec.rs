//! Data-parallel mapping with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] dispatches
//! through rayon. Without it, both variants run sequentially. Results are
//! always collected in index order, and every reduction in this crate is done
//! sequentially over the collected vector, so outputs are bit-identical
//! regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Map `f` over `0..n`, preserving order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Map `f` over a slice, preserving order.
    pub fn map_slice<A, T, F>(self, items: &[A], f: F) -> Vec<T>
    where
        A: Sync,
        T: Send,
        F: Fn(&A) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}
