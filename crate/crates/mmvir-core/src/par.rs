//! Data-parallel loop helpers with a sequential fallback.
//!
//! Every call site is order-preserving, so results are identical with the
//! `parallel` feature on or off.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map over a slice, collecting results in input order.
#[cfg(feature = "parallel")]
pub fn map_slice<T: Sync, U: Send, F: Fn(&T) -> U + Sync + Send>(items: &[T], f: F) -> Vec<U> {
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, U, F: Fn(&T) -> U>(items: &[T], f: F) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Map over an index range, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_range<U: Send, F: Fn(usize) -> U + Sync + Send>(n: usize, f: F) -> Vec<U> {
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<U, F: Fn(usize) -> U>(n: usize, f: F) -> Vec<U> {
    (0..n).map(f).collect()
}

/// Fill the rows of a flat row-major `n x width` buffer.
#[cfg(feature = "parallel")]
pub fn fill_rows<F: Fn(usize, &mut [f64]) + Sync + Send>(buf: &mut [f64], width: usize, f: F) {
    buf.par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

#[cfg(not(feature = "parallel"))]
pub fn fill_rows<F: Fn(usize, &mut [f64])>(buf: &mut [f64], width: usize, f: F) {
    for (i, row) in buf.chunks_mut(width).enumerate() {
        f(i, row);
    }
}

/// Fallible map over an index range; the first error wins.
#[cfg(feature = "parallel")]
pub fn try_map_range<U, E, F>(n: usize, f: F) -> Result<Vec<U>, E>
where
    U: Send,
    E: Send,
    F: Fn(usize) -> Result<U, E> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn try_map_range<U, E, F>(n: usize, f: F) -> Result<Vec<U>, E>
where
    F: Fn(usize) -> Result<U, E>,
{
    (0..n).map(f).collect()
}
