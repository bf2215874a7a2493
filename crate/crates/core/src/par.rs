//! Execution policy for independent jobs.
//!
//! With the `parallel` feature, [`Exec::Parallel`] maps jobs over a rayon
//! pool; without it, every policy runs sequentially. Results are always
//! returned in job order, so reductions over them do not depend on
//! scheduling.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Exec {
    Sequential,
    /// Rayon pool with the given thread count, or the global pool.
    #[default]
    Parallel,
    Threads(usize),
}

impl Exec {
    /// Policy for a thread cap: `1` is sequential.
    pub fn from_threads(threads: Option<usize>) -> Self {
        match threads {
            Some(1) => Exec::Sequential,
            Some(0) | None => Exec::Parallel,
            Some(t) => Exec::Threads(t),
        }
    }

    pub fn map<T, F>(self, jobs: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..jobs).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..jobs).into_par_iter().map(f).collect()
            }
            #[cfg(feature = "parallel")]
            Exec::Threads(t) => {
                use rayon::prelude::*;
                match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
                    Ok(pool) => pool.install(|| (0..jobs).into_par_iter().map(&f).collect()),
                    Err(_) => (0..jobs).map(f).collect(),
                }
            }
            #[cfg(not(feature = "parallel"))]
            _ => (0..jobs).map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        for exec in [Exec::Sequential, Exec::Parallel, Exec::Threads(3)] {
            let v = exec.map(100, |i| i * i);
            assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn thread_caps() {
        assert_eq!(Exec::from_threads(Some(1)), Exec::Sequential);
        assert_eq!(Exec::from_threads(None), Exec::Parallel);
        assert_eq!(Exec::from_threads(Some(4)), Exec::Threads(4));
    }
}
