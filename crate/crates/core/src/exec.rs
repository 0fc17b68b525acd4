//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (on by default) [`Exec::Parallel`] runs on the
//! rayon global pool. Without it every mode runs sequentially. Results never
//! depend on the mode: every reduction here is order-independent.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this mode actually fans out in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    pub fn all<T, F>(self, items: &[T], f: F) -> bool
    where
        T: Sync,
        F: Fn(&T) -> bool + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().all(f);
        }
        items.iter().all(f)
    }

    pub fn count<T, F>(self, items: &[T], f: F) -> usize
    where
        T: Sync,
        F: Fn(&T) -> bool + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().filter(|x| f(x)).count();
        }
        items.iter().filter(|x| f(x)).count()
    }

    pub fn max<T, F>(self, items: &[T], f: F) -> Option<i64>
    where
        T: Sync,
        F: Fn(&T) -> i64 + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).max();
        }
        items.iter().map(f).max()
    }

    /// Lowest index whose predicate holds, scanning an integer range.
    pub fn find_first_in(self, lo: i64, hi: i64, f: impl Fn(i64) -> bool + Sync + Send) -> Option<i64> {
        if lo > hi {
            return None;
        }
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (lo..=hi).into_par_iter().find_first(|&x| f(x));
        }
        (lo..=hi).find(|&x| f(x))
    }
}

/// Caps the worker count of the global pool. Only the first call takes
/// effect; returns false when the pool was already initialised.
pub fn set_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        true
    }
}
