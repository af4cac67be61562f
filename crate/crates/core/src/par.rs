//! Trial-level data parallelism. With the `parallel` feature off every
//! execution mode runs sequentially.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `threads = 0` lets the pool pick its default.
    Parallel { threads: usize },
}

impl Execution {
    pub fn from_threads(threads: usize) -> Self {
        if threads == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { threads }
        }
    }

    pub fn threads(&self) -> usize {
        match self {
            Execution::Sequential => 1,
            Execution::Parallel { threads } => *threads,
        }
    }
}

/// Map `f` over `items`, preserving input order in the output.
pub fn map<I, T, F>(exec: Execution, items: &[I], f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => Ok(items.iter().map(f).collect()),
        Execution::Parallel { threads } => parallel_map(threads, items, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<I, T, F>(threads: usize, items: &[I], f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| crate::error::Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<I, T, F>(_threads: usize, items: &[I], f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    Ok(items.iter().map(f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..257).collect();
        let seq = map(Execution::Sequential, &items, |x| x * x).unwrap();
        for t in [0, 2, 4] {
            assert_eq!(map(Execution::Parallel { threads: t }, &items, |x| x * x).unwrap(), seq);
        }
    }

    #[test]
    fn thread_count_mapping() {
        assert_eq!(Execution::from_threads(1), Execution::Sequential);
        assert_eq!(Execution::from_threads(8).threads(), 8);
    }
}
