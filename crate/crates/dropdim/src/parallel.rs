//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the exported functions fan work
//! out over rayon; without it they run the `_seq` bodies. Both variants
//! are bit-deterministic: each work item owns a disjoint output region
//! (or an integer reduction), so thread scheduling cannot change results.
//! The `_seq` forms stay exported under the feature too, so benchmarks
//! can compare the two paths directly.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `each(chunk_index, chunk)` to consecutive chunks of `data`.
pub fn chunks_mut<T, F>(data: &mut [T], size: usize, each: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(size).enumerate().for_each(|(i, c)| each(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        chunks_mut_seq(data, size, each);
    }
}

/// Sequential form of [`chunks_mut`].
pub fn chunks_mut_seq<T, F>(data: &mut [T], size: usize, each: F)
where
    F: Fn(usize, &mut [T]),
{
    for (i, c) in data.chunks_mut(size).enumerate() {
        each(i, c);
    }
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<O, F>(n: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential form of [`map_indexed`].
pub fn map_indexed_seq<O, F>(n: usize, f: F) -> Vec<O>
where
    F: Fn(usize) -> O,
{
    (0..n).map(f).collect()
}
