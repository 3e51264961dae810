//! Seeding and deterministic fan-out for trajectory ensembles.
//!
//! Each trajectory owns a generator seeded from `(master_seed, index)`, and
//! results are gathered in index order, so ensemble outputs do not depend on
//! the number of worker threads.

use alloc::vec::Vec;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trajectory seed derived from the master seed.
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ splitmix64(index.wrapping_mul(GOLDEN).wrapping_add(1)))
}

/// Map `f` over `0..n`, in parallel when the `std` feature is enabled.
/// Output order always follows the index.
#[cfg(feature = "std")]
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "std"))]
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Fallible variant of [`par_map`]; the error of the lowest failing index wins.
pub fn try_par_map<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    par_map(n, f).into_iter().collect()
}

/// Map over `0..n` and combine with `reduce`. Only exact, order-independent
/// reductions (integer counts) give worker-count independent results.
#[cfg(feature = "std")]
pub fn par_reduce<T, M, R>(n: usize, map: M, reduce: R) -> Option<T>
where
    T: Send,
    M: Fn(usize) -> T + Sync + Send,
    R: Fn(T, T) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(map).reduce_with(reduce)
}

#[cfg(not(feature = "std"))]
pub fn par_reduce<T, M, R>(n: usize, map: M, reduce: R) -> Option<T>
where
    T: Send,
    M: Fn(usize) -> T + Sync + Send,
    R: Fn(T, T) -> T + Sync + Send,
{
    (0..n).map(map).reduce(reduce)
}

/// Sum in a fixed pairwise-tree order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}
