//! Order-preserving fan-out. Results come back indexed, so any reduction the
//! caller performs afterwards runs in index order and is bit-reproducible.

#[cfg(feature = "parallel")]
pub(crate) fn map_range<R, F>(count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<R, F>(count: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..count).map(f).collect()
}

/// Fallible variant; the first error by index wins.
pub(crate) fn try_map_range<R, E, F>(count: usize, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync + Send,
{
    map_range(count, f).into_iter().collect()
}
