//! Data-parallel maps with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it every map runs on the calling thread. Output order always
//! follows input order, so results are identical for any worker count.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parallelism {
    Sequential,
    /// Worker pool of the given size; `0` means one worker per logical core.
    Threads(usize),
    #[default]
    AllCores,
}

impl Parallelism {
    pub fn from_threads(threads: usize) -> Self {
        match threads {
            0 => Parallelism::AllCores,
            1 => Parallelism::Sequential,
            n => Parallelism::Threads(n),
        }
    }

    /// Number of workers this setting resolves to on the current machine.
    pub fn workers(self) -> usize {
        match self {
            Parallelism::Sequential => 1,
            Parallelism::Threads(0) | Parallelism::AllCores => available_cores(),
            Parallelism::Threads(n) => n,
        }
    }

    pub fn map_range<T, F>(self, range: Range<u64>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        match self.pool() {
            #[cfg(feature = "parallel")]
            Some(pool) => {
                use rayon::prelude::*;
                pool.install(|| range.into_par_iter().map(&f).collect())
            }
            _ => range.map(f).collect(),
        }
    }

    pub fn map<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        match self.pool() {
            #[cfg(feature = "parallel")]
            Some(pool) => {
                use rayon::prelude::*;
                pool.install(|| items.par_iter().map(&f).collect())
            }
            _ => items.iter().map(f).collect(),
        }
    }

    #[cfg(feature = "parallel")]
    fn pool(self) -> Option<rayon::ThreadPool> {
        let workers = self.workers();
        if workers <= 1 {
            return None;
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .ok()
    }

    #[cfg(not(feature = "parallel"))]
    fn pool(self) -> Option<()> {
        None
    }
}

pub fn available_cores() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
