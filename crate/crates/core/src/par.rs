//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) `ExecMode::Parallel` runs on rayon.
//! Without it, every mode runs sequentially. Both paths produce identical
//! results, so choosing a mode never changes chain bytes.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// Whether this build can actually run `Parallel` on multiple threads.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Smallest `n` in `range` with `pred(n)`, or `None`.
pub fn find_first<F>(mode: ExecMode, range: std::ops::Range<u64>, pred: F) -> Option<u64>
where
    F: Fn(u64) -> bool + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            range.into_par_iter().find_first(|n| pred(*n))
        }
        _ => range.into_iter().find(|n| pred(*n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        assert_eq!(map(ExecMode::Sequential, &xs, |x| x * 3), map(ExecMode::Parallel, &xs, |x| x * 3));
        for mode in [ExecMode::Sequential, ExecMode::Parallel] {
            assert_eq!(find_first(mode, 0..10_000, |n| n % 977 == 976), Some(976));
            assert_eq!(find_first(mode, 0..10, |n| n > 100), None);
        }
    }
}
