//! Parallel execution driver with a sequential fallback.
//!
//! All data-parallel loops in the crate go through the two helpers here, so
//! a single switch selects between rayon and plain sequential iteration.
//! Work is always split into *fixed-size* chunks that do not depend on the
//! worker count, and per-chunk results are combined in index order, so the
//! parallel and sequential paths produce bit-identical floating-point
//! results. That property is load-bearing: the determinism tests compare
//! the two modes directly.
//!
//! The `parallel` cargo feature compiles the rayon path in (it is part of
//! the default feature set). At runtime [`set_parallel`] can switch modes
//! without rebuilding, which is how the benchmark suite compares both on
//! one binary.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static PARALLEL: AtomicBool = AtomicBool::new(cfg!(feature = "parallel"));

/// Enable or disable parallel execution at runtime.
///
/// Returns the mode now in effect. When the crate was built without the
/// `parallel` feature this is a no-op and always returns `false`.
pub fn set_parallel(enabled: bool) -> bool {
    let effective = enabled && cfg!(feature = "parallel");
    PARALLEL.store(effective, Ordering::Relaxed);
    effective
}

/// True when work is currently dispatched through rayon.
pub fn parallel_enabled() -> bool {
    PARALLEL.load(Ordering::Relaxed)
}

/// Map `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Apply `f` to consecutive chunks of `data` of length `chunk` (the last
/// chunk may be shorter). `f` receives the chunk index and the chunk.
///
/// The chunk size is chosen by the caller and never depends on the number
/// of worker threads.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0, "chunk size must be positive");
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}
