//! Data-parallel helpers.
//!
//! With the `parallel` feature (on by default) these fan out over the rayon
//! global pool; without it they run on the calling thread. Results are always
//! returned in input order, and callers reduce them sequentially, so outputs
//! are bit-identical whichever path is compiled in.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Name of the execution mode compiled in, used to label benchmarks.
#[cfg(feature = "parallel")]
pub const MODE: &str = "rayon";
#[cfg(not(feature = "parallel"))]
pub const MODE: &str = "sequential";

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

/// Maps `f` over a slice, collecting results in slice order.
pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return items.par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return items.iter().map(f).collect();
}

/// Runs `f` with parallelism limited to the calling thread.
///
/// Without the `parallel` feature this simply calls `f`.
pub fn single_threaded<R: Send, F: FnOnce() -> R + Send>(f: F) -> R {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        f()
    }
}
