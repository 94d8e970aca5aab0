//! Small numeric helpers shared across modules.

use std::ops::Add;

pub type Vec3 = [f64; 3];

/// Leaf size below which [`pairwise_sum`] adds sequentially.
const PAIRWISE_LEAF: usize = 64;
/// Slices longer than this are split across rayon workers.
const PARALLEL_SPLIT: usize = 1 << 15;

/// Pairwise (cascade) summation with a split tree that depends only on the
/// slice length, so the result is identical for any number of worker threads.
pub fn pairwise_sum<T>(xs: &[T]) -> T
where
    T: Copy + Default + Add<Output = T> + Send + Sync,
{
    if xs.len() <= PAIRWISE_LEAF {
        return xs.iter().fold(T::default(), |acc, &x| acc + x);
    }
    let (lo, hi) = xs.split_at(xs.len() / 2);
    if xs.len() > PARALLEL_SPLIT {
        let (a, b) = rayon::join(|| pairwise_sum(lo), || pairwise_sum(hi));
        a + b
    } else {
        pairwise_sum(lo) + pairwise_sum(hi)
    }
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Standard normal upper-tail probability Q(x) = P(Z > x).
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}
