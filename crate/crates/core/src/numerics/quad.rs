//! Composite Simpson quadrature on uniform samples.
//!
//! Every reduction goes through [`pairwise_sum_by`], a fixed-shape tree
//! summation, so a sum over the same samples always rounds the same way no
//! matter which thread evaluated the terms.

use std::ops::{Add, Mul};

use crate::error::{Error, Result};

const LEAF: usize = 16;

/// Tree summation of `term(i)` for `i` in `0..n`.
pub fn pairwise_sum_by<T, F>(n: usize, term: F) -> T
where
    T: Copy + Default + Add<Output = T>,
    F: Fn(usize) -> T,
{
    fn rec<T, F>(lo: usize, hi: usize, term: &F) -> T
    where
        T: Copy + Default + Add<Output = T>,
        F: Fn(usize) -> T,
    {
        if hi - lo <= LEAF {
            let mut acc = T::default();
            for i in lo..hi {
                acc = acc + term(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, term) + rec(mid, hi, term)
        }
    }
    rec(0, n, &term)
}

pub fn pairwise_sum<T>(values: &[T]) -> T
where
    T: Copy + Default + Add<Output = T>,
{
    pairwise_sum_by(values.len(), |i| values[i])
}

/// Simpson weight (without the `h/3` factor) of sample `i` out of `n`.
#[inline]
pub fn simpson_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i + 1 == n {
        1.0
    } else if i % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// Full Simpson weights including the `h/3` factor.
pub fn simpson_weights(n: usize, h: f64) -> Result<Vec<f64>> {
    check_odd(n)?;
    Ok((0..n).map(|i| simpson_weight(i, n) * h / 3.0).collect())
}

fn check_odd(n: usize) -> Result<()> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::EvenSampleCount(n));
    }
    Ok(())
}

/// Composite Simpson integral of uniformly spaced samples with step `h`.
pub fn integrate_1d<T>(samples: &[T], h: f64) -> Result<T>
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
{
    let n = samples.len();
    check_odd(n)?;
    let s = pairwise_sum_by(n, |i| samples[i] * simpson_weight(i, n));
    Ok(s * (h / 3.0))
}

/// Simpson integral of `term(i)` over `n` uniform samples, without
/// materializing the samples.
pub fn integrate_by<T, F>(n: usize, h: f64, term: F) -> Result<T>
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
    F: Fn(usize) -> T,
{
    check_odd(n)?;
    let s = pairwise_sum_by(n, |i| term(i) * simpson_weight(i, n));
    Ok(s * (h / 3.0))
}

/// Tensor-product Simpson integral of a row-major `rows x cols` array.
pub fn integrate_2d(values: &[f64], rows: usize, cols: usize, h_row: f64, h_col: f64) -> Result<f64> {
    integrate_2d_by(rows, cols, h_row, h_col, |i, j| values[i * cols + j])
}

pub fn integrate_2d_by<F>(rows: usize, cols: usize, h_row: f64, h_col: f64, term: F) -> Result<f64>
where
    F: Fn(usize, usize) -> f64,
{
    check_odd(rows)?;
    check_odd(cols)?;
    let s = pairwise_sum_by(rows, |i| {
        let inner = pairwise_sum_by(cols, |j| term(i, j) * simpson_weight(j, cols));
        inner * simpson_weight(i, rows)
    });
    Ok(s * (h_row / 3.0) * (h_col / 3.0))
}
