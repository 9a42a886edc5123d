//! Sequential / data-parallel execution switch.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] fans work out
//! over rayon; without it every call runs sequentially. Results always come
//! back in index order.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Evaluate `f(0..len)` and collect results in index order.
    pub fn map_indexed<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = Execution::Sequential.map_indexed(100, |i| i * i);
        let par = Execution::Parallel.map_indexed(100, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[9], 81);
    }
}
