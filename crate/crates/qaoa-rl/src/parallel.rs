use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use qaoa_rl_core::exec::Executor;

use crate::error::{CliError, CliResult};

/// Runs jobs on a private rayon pool. Results come back in index order, so
/// outputs do not depend on the thread count.
pub struct RayonExecutor {
    pool: ThreadPool,
}

impl RayonExecutor {
    /// `None` or `Some(0)` uses every available core.
    pub fn new(threads: Option<usize>) -> CliResult<Self> {
        let pool = ThreadPoolBuilder::new()
            .num_threads(threads.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for RayonExecutor {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qaoa_rl_core::exec::Sequential;

    #[test]
    fn matches_sequential() {
        let ex = RayonExecutor::new(Some(3)).unwrap();
        assert_eq!(ex.threads(), 3);
        let f = |i: usize| (i as f64).sqrt().sin();
        assert_eq!(ex.map(1000, f), Sequential.map(1000, f));
        let r: Result<Vec<usize>, usize> = ex.try_map(50, |i| if i % 7 == 6 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(6));
    }
}
