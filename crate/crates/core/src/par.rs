//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the [`Exec::Parallel`] mode runs on
//! the rayon global pool. Without it every mode runs sequentially, and results
//! are identical either way: work is split into fixed-size chunks whose
//! boundaries never depend on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution strategy for the batch-style entry points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this mode will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Fills `out` chunk by chunk; `f(offset, chunk)` receives the absolute index of
/// the chunk's first element.
pub fn fill_chunks<T, F>(exec: Exec, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i * chunk, c));
        return;
    }
    let _ = exec;
    out.chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i * chunk, c));
}

/// Order-preserving map over a slice.
pub fn map<T, U, F>(exec: Exec, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Order-preserving map over an index range.
pub fn map_range<U, F>(exec: Exec, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let mut a = vec![0usize; 1003];
        let mut b = vec![0usize; 1003];
        fill_chunks(Exec::Sequential, &mut a, 64, |off, c| {
            for (i, v) in c.iter_mut().enumerate() {
                *v = (off + i) * 3;
            }
        });
        fill_chunks(Exec::Parallel, &mut b, 64, |off, c| {
            for (i, v) in c.iter_mut().enumerate() {
                *v = (off + i) * 3;
            }
        });
        assert_eq!(a, b);
        assert_eq!(a[1002], 3006);
        let xs: Vec<i32> = (0..50).collect();
        assert_eq!(
            map(Exec::Sequential, &xs, |x| x * x),
            map(Exec::Parallel, &xs, |x| x * x)
        );
        assert_eq!(map_range(Exec::Parallel, 5, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }
}
