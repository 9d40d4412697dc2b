//! Worker fan-out for embarrassingly parallel episode work.
//!
//! Results are always collected in input order, so callers can fold them
//! sequentially and obtain bit-identical numbers regardless of worker count
//! or whether the `parallel` feature is compiled in at all.

/// Apply `f` to every index in `0..n`, using up to `workers` threads.
///
/// `workers <= 1` (or a build without the `parallel` feature) runs on the
/// calling thread.
pub fn map_indexed<R, F>(n: usize, workers: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if workers > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("failed to build worker pool");
            // IndexedParallelIterator::collect preserves order.
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
    }
    let _ = workers;
    (0..n).map(f).collect()
}
