//! Index-ordered parallel map and deterministic reductions.
//!
//! Every data-parallel loop in the crate goes through `map_indexed`, which
//! preserves element order regardless of how work is scheduled; reductions
//! then run as a fixed-shape pairwise tree over that ordered buffer. The
//! combination makes energies bit-reproducible across thread counts, and
//! identical between the parallel and sequential builds.

use crate::quad;

/// Order-preserving map over 0..n. With the `parallel` feature the work is
/// distributed by rayon; the collected vector is index-ordered either way.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Order-preserving map over 0..n, sequential build.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Always-sequential variant, for benchmark baselines and small loops.
pub fn map_indexed_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Deterministic sum of f(k) for k in 0..n: ordered fill, pairwise tree.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let buf = map_indexed(n, f);
    quad::tree_sum(&buf)
}

/// Sequential twin of `sum_indexed`; bitwise-identical result by design.
pub fn sum_indexed_sequential<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let buf = map_indexed_sequential(n, f);
    quad::tree_sum(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_sums_are_bit_identical() {
        let f = |k: usize| ((k as f64) * 0.73).sin() / ((k + 1) as f64);
        for n in [0, 1, 7, 1024, 10_000] {
            let a = sum_indexed(n, f);
            let b = sum_indexed_sequential(n, f);
            assert_eq!(a.to_bits(), b.to_bits(), "n = {n}: {a} vs {b}");
        }
    }

    #[test]
    fn map_preserves_index_order() {
        let v = map_indexed(100, |k| k * 3);
        for (k, x) in v.iter().enumerate() {
            assert_eq!(*x, k * 3);
        }
    }
}
