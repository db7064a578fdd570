use boussinesq_core::stability::Executor;
use rayon::prelude::*;

use crate::error::LabError;

/// Runs sweep points on a dedicated rayon pool; results keep input order.
pub struct Rayon {
    pool: rayon::ThreadPool,
}

impl Rayon {
    pub fn new(threads: usize) -> Result<Self, LabError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| LabError::Usage(format!("cannot start {threads} worker threads: {e}")))?;
        Ok(Rayon { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Rayon {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        self.pool.install(|| items.into_par_iter().map(f).collect())
    }
}
