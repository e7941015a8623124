//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) the indexed maps run on rayon;
//! without it they degrade to plain iteration. Results are collected in
//! index order either way, so reductions downstream are deterministic and
//! independent of thread count. `map_indexed_seq` is always the sequential
//! path and exists so benchmarks can compare the two.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map_indexed<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F: Fn(usize) -> T>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Sequential reference path, available regardless of features.
pub fn map_indexed_seq<T, F: Fn(usize) -> T>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Run `f` on a rayon pool with the given thread count (0 = default).
/// Without the `parallel` feature the degree is ignored.
#[cfg(feature = "parallel")]
pub fn with_degree<T: Send>(degree: usize, f: impl FnOnce() -> T + Send) -> T {
    if degree == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(degree)
        .build()
        .expect("rayon pool");
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_degree<T>(_degree: usize, f: impl FnOnce() -> T) -> T {
    f()
}
