//! Execution strategy for data-parallel loops.
//!
//! `Exec::Parallel` uses rayon when the `parallel` feature is enabled and
//! degrades to the sequential path otherwise. Callers only hand out work
//! items that write disjoint outputs, so both strategies produce identical
//! bits.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Runs `f(chunk_index, chunk)` over consecutive `chunk_len`-sized chunks.
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        let chunk_len = chunk_len.max(1);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(c, chunk)| f(c, chunk));
            return;
        }
        data.chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(c, chunk)| f(c, chunk));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let seq = Exec::Sequential.map(100, |i| (i * i) as f64);
        let par = Exec::Parallel.map(100, |i| (i * i) as f64);
        assert_eq!(seq, par);

        let mut a = vec![0usize; 37];
        let mut b = vec![0usize; 37];
        Exec::Sequential.for_each_chunk_mut(&mut a, 5, |c, xs| {
            for (o, x) in xs.iter_mut().enumerate() {
                *x = c * 5 + o;
            }
        });
        Exec::Parallel.for_each_chunk_mut(&mut b, 5, |c, xs| {
            for (o, x) in xs.iter_mut().enumerate() {
                *x = c * 5 + o;
            }
        });
        assert_eq!(a, b);
        assert_eq!(a, (0..37).collect::<Vec<_>>());
    }
}
