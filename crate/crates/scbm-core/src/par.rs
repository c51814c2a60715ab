//! Order-preserving maps over independent work items. With the `parallel` feature
//! they run on the rayon pool, otherwise sequentially; results come back in input
//! order either way, so every reduction downstream is deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `f` applied to every item, in input order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// `f` applied to `0..n`, in order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Whether this build runs the maps in parallel.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
