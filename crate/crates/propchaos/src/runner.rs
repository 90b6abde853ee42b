//! Deterministic replica scheduling on a rayon pool.
//!
//! Replica `i` of experiment `name` is driven by
//! `replica_seed(master, name, i)`; results come back in replica order, so
//! every reduction over them is independent of the worker count.

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use propchaos_core::rng::replica_seed;

pub struct Runner {
    master: u64,
    pool: ThreadPool,
}

impl std::fmt::Debug for Runner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runner")
            .field("master", &self.master)
            .field("workers", &self.workers())
            .finish()
    }
}

impl Runner {
    /// # Panics
    /// If the thread pool cannot be created.
    #[must_use]
    pub fn new(master: u64, workers: usize) -> Self {
        let pool = ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool");
        Self { master, pool }
    }

    #[must_use]
    pub fn master(&self) -> u64 {
        self.master
    }

    #[must_use]
    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    #[must_use]
    pub fn seed(&self, experiment: &str, replica: u64) -> u64 {
        replica_seed(self.master, experiment, replica)
    }

    /// `f(seed)` for replicas `0..count`, in replica order.
    pub fn map<T, F>(&self, experiment: &str, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync,
    {
        let master = self.master;
        self.pool.install(|| {
            (0..count)
                .into_par_iter()
                .map(|i| f(replica_seed(master, experiment, i)))
                .collect()
        })
    }

    /// Fallible [`Runner::map`]; the first error in replica order wins.
    pub fn try_map<T, E, F>(&self, experiment: &str, count: u64, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(u64) -> Result<T, E> + Sync,
    {
        self.map(experiment, count, f).into_iter().collect()
    }
}
