//! Where independent jobs (episodes, evaluation runs, objective probes) run.

use alloc::vec::Vec;

/// Maps `f` over `0..n` and returns the results in index order, so that any
/// reduction over them is independent of how the work was scheduled.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;

    /// Like `map`, stopping at the first error in index order.
    fn try_map<T, E, F>(&self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_keeps_order() {
        assert_eq!(Sequential.map(4, |i| i * i), alloc::vec![0, 1, 4, 9]);
        let r: Result<Vec<usize>, usize> = Sequential.try_map(5, |i| if i == 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }
}
