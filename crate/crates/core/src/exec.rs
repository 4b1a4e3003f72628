//! Execution policy for the data-parallel loops.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How independent work items are scheduled.
///
/// `Parallel` uses the current rayon pool (install a custom pool to cap the
/// worker count). Without the `parallel` feature it degrades to
/// `Sequential`. Work items are always reduced in index order, so the choice
/// never changes a result.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Maps `f` over `0..n`, returning results in index order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }
}

/// Pairwise (cascade) summation. The tree shape depends only on the length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
