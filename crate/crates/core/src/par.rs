//! Data-parallel helpers. With the `parallel` feature the work runs on rayon;
//! without it every entry point falls back to a sequential loop. Results are
//! always returned in index order, so output never depends on scheduling.

/// How independent work items are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Parallel on the global rayon pool.
    #[default]
    Parallel,
    /// Parallel on a dedicated pool with this many workers.
    Threads(usize),
}

impl Execution {
    /// Maps a `--jobs` style count: `1` means sequential, `0` means all cores.
    pub fn from_jobs(jobs: usize) -> Self {
        match jobs {
            1 => Execution::Sequential,
            0 => Execution::Parallel,
            n => Execution::Threads(n),
        }
    }
}

pub fn is_parallel_available() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(exec: Execution, count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    match exec {
        Execution::Sequential => (0..count).map(f).collect(),
        Execution::Parallel => (0..count).into_par_iter().map(f).collect(),
        Execution::Threads(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| (0..count).into_par_iter().map(f).collect()),
            Err(_) => (0..count).map(f).collect(),
        },
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(_exec: Execution, count: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..count).map(f).collect()
}

pub fn map_slice<T, U, F>(exec: Execution, data: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_indexed(exec, data.len(), |i| f(&data[i]))
}
