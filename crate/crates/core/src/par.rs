//! Row-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature, row kernels go through rayon unless
//! [`set_sequential`] forced the sequential path at runtime (used by the
//! benches). Reductions always finish with a fixed-order pairwise sum, so
//! results do not depend on the thread count.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

pub fn set_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::SeqCst);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

/// Applies `f(row_index, row)` to every `width`-sized chunk of `data`.
pub fn for_each_row<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    data.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
}

/// Maps `0..n` through `f`, preserving order.
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Pairwise (cascade) summation in a fixed order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if v.len() <= BLOCK {
        let mut s = 0.0;
        for x in v {
            s += x;
        }
        return s;
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Sum of `f(i)` over `0..n`, computed row-parallel and reduced pairwise.
pub fn sum_rows<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    pairwise_sum(&map_collect(n, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v: Vec<f64> = (0..5).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 10.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn pairwise_is_accurate() {
        let v = vec![0.1; 1 << 16];
        let s = pairwise_sum(&v);
        assert!((s - 6553.6).abs() < 1e-9);
    }

    #[test]
    fn rows_are_visited_in_place() {
        let mut d = vec![0.0; 12];
        for_each_row(&mut d, 4, |i, row| row.iter_mut().for_each(|x| *x = i as f64));
        assert_eq!(d[5], 1.0);
        assert_eq!(d[11], 2.0);
    }
}
