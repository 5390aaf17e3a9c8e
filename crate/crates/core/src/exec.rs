//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) work runs on a rayon pool; without
//! it every mode degrades to a plain sequential loop. Results always come
//! back in input order, so downstream folds are schedule-independent.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    /// `threads == 0` lets rayon pick.
    Parallel { threads: usize },
}

impl Execution {
    /// `1` means sequential; anything else parallel with that many workers.
    pub fn with_parallelism(n: usize) -> Self {
        if n == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { threads: n }
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && matches!(self, Execution::Parallel { .. })
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match *self {
            #[cfg(feature = "parallel")]
            Execution::Parallel { threads } => {
                use rayon::prelude::*;
                match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                    Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                    Err(e) => {
                        log::warn!("thread pool unavailable ({e}); running sequentially");
                        items.iter().map(f).collect()
                    }
                }
            }
            _ => items.iter().map(f).collect(),
        }
    }
}
