use rayon::prelude::*;
use rayon::ThreadPool;
use rbm_core::simulate::{estimate, Estimate};

use crate::error::{LabError, Result};

/// Environment variable that overrides the thread count.
pub const THREADS_ENV: &str = "RBM_THREADS";

/// Thread count from an explicit request, then `RBM_THREADS`, then the
/// machine's parallelism. Zero means "choose".
pub fn resolve_threads(requested: Option<usize>) -> usize {
    if let Some(n) = requested.filter(|&n| n > 0) {
        return n;
    }
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0) {
        return n;
    }
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs independent paths on a fixed pool. Path `i` must derive all of its
/// randomness from `i`, so results depend only on the seeds.
pub struct Ensemble {
    pool: ThreadPool,
    threads: usize,
}

impl Ensemble {
    pub fn new(threads: usize) -> Result<Self> {
        let threads = threads.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| LabError::Internal(format!("thread pool: {e}")))?;
        Ok(Self { pool, threads })
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Values of `f(0), …, f(m−1)` in index order.
    pub fn map<T, F>(&self, m: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync,
    {
        self.pool.install(|| (0..m).into_par_iter().map(&f).collect())
    }

    /// Mean and standard error of a scalar functional over `m` paths.
    pub fn estimate<F>(&self, m: u64, f: F) -> Result<Estimate>
    where
        F: Fn(u64) -> Result<f64> + Sync,
    {
        let values = self.map(m, f)?;
        reduce(&values)
    }
}

/// Serial reduction; aborts on the first non-finite value.
pub fn reduce(values: &[f64]) -> Result<Estimate> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(LabError::NonFinite { path: i as u64, value: *v });
    }
    Ok(estimate(values)?)
}

/// Column `k` of per-path value rows.
pub fn column(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_functional() {
        let e = Ensemble::new(2).unwrap().estimate(100, |_| Ok(1.0)).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let f = |i: u64| Ok(((i * 2654435761) % 1000) as f64 / 7.0);
        let a = Ensemble::new(1).unwrap().estimate(10_000, f).unwrap();
        let b = Ensemble::new(8).unwrap().estimate(10_000, f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_values_abort() {
        let r = Ensemble::new(2).unwrap().estimate(10, |i| Ok(if i == 7 { f64::NAN } else { 0.0 }));
        assert!(matches!(r, Err(LabError::NonFinite { path: 7, .. })));
    }
}
