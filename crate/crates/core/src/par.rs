//! Map-reduce over independent work items.
//!
//! Every parallel computation in the crate is expressed as a map over chunk
//! indices followed by an associative merge, so the sequential and parallel
//! paths produce identical results whenever the merge is exact (integer
//! counts, histograms).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a map-reduce is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon thread pool. Without the `parallel` feature this is
    /// the same as [`Execution::Sequential`].
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `0..n` through `map` and folds the results with `merge`.
///
/// `merge` must be associative; the parallel path may group items
/// differently from the left fold used sequentially.
pub fn map_reduce<T, M, I, R>(exec: Execution, n: usize, map: M, identity: I, merge: R) -> T
where
    T: Send,
    M: Fn(usize) -> T + Sync + Send,
    I: Fn() -> T + Sync + Send,
    R: Fn(T, T) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(map).reduce(identity, merge);
    }
    let _ = exec;
    (0..n).map(map).fold(identity(), merge)
}

/// Maps `0..n` through `map` and collects results in index order.
pub fn map_collect<T, M>(exec: Execution, n: usize, map: M) -> Vec<T>
where
    T: Send,
    M: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(map).collect();
    }
    let _ = exec;
    (0..n).map(map).collect()
}

/// Splits `total` work units into `chunks` near-equal parts; returns the
/// size of part `index`.
pub fn chunk_len(total: u64, chunks: usize, index: usize) -> u64 {
    let chunks = chunks as u64;
    let base = total / chunks;
    let extra = total % chunks;
    base + u64::from((index as u64) < extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree() {
        let f = |i: usize| (i as u64) * (i as u64);
        let a = map_reduce(Execution::Sequential, 1000, f, || 0u64, |a, b| a + b);
        let b = map_reduce(Execution::Parallel, 1000, f, || 0u64, |a, b| a + b);
        assert_eq!(a, b);
        assert_eq!(a, (0..1000u64).map(|i| i * i).sum());
    }

    #[test]
    fn chunk_lengths_cover_total() {
        for total in [0u64, 1, 7, 1000, 1001] {
            let sum: u64 = (0..7).map(|i| chunk_len(total, 7, i)).sum();
            assert_eq!(sum, total);
        }
    }

    #[test]
    fn collect_preserves_order() {
        let v = map_collect(Execution::Parallel, 50, |i| i * 2);
        assert_eq!(v, (0..50).map(|i| i * 2).collect::<Vec<_>>());
    }
}
