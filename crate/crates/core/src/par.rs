//! Data-parallel fan-out for the per-(coordinate, template) solves.
//!
//! The relaxation sweeps are embarrassingly parallel: every SDP reads the
//! same immutable snapshot and writes one slot. With the `parallel` feature
//! (default) they fan out on the rayon pool; without it the same code runs
//! sequentially. Results are collected by index either way, so the outcome
//! is identical.

/// How a sweep distributes its independent solves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for SweepMode {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        SweepMode::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        SweepMode::Sequential
    }
}

/// Apply `f` to `0..n` honoring the requested mode; output order is by index.
pub fn map_indices_with<T, F>(mode: SweepMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        SweepMode::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        SweepMode::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
    }
}

/// [`map_indices_with`] in the default mode.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indices_with(SweepMode::default(), n, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let seq = map_indices_with(SweepMode::Sequential, 100, |i| i * i);
        assert_eq!(seq[7], 49);
        #[cfg(feature = "parallel")]
        {
            let par = map_indices_with(SweepMode::Parallel, 100, |i| i * i);
            assert_eq!(seq, par);
        }
    }
}
