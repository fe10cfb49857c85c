//! Index-parallel execution helpers.
//!
//! `map_indexed` fans the closure out over rayon when the `parallel` feature
//! is enabled and degrades to a plain sequential map otherwise. Results are
//! collected in index order either way, so callers stay deterministic.
//! `map_indexed_seq` is the always-sequential twin used by the `*_seq`
//! benchmark entry points.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_seq(n, f)
}

pub(crate) fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
