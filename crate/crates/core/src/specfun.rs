//! Orthogonal polynomials, oscillator eigenfunctions and the teleportation
//! kernel `D_{k,m}`.
//!
//! Quadrature convention: the vacuum wavefunction is proportional to
//! `exp(-x^2)`, so `<x^2>_vac = 1/4`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values of a polynomial family at one argument, indexed by order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyTable {
    pub order_max: usize,
    pub values: Vec<f64>,
}

impl PolyTable {
    pub fn get(&self, k: usize) -> Option<f64> {
        self.values.get(k).copied()
    }
}

/// Physicists' Hermite polynomials `H_0(x) ..= H_{k_max}(x)` from
/// `H_{k+1} = 2x H_k - 2k H_{k-1}`.
pub fn hermite_all(k_max: usize, x: f64) -> Result<PolyTable> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("hermite argument {x} is not finite")));
    }
    let mut values = Vec::with_capacity(k_max + 1);
    values.push(1.0);
    if k_max >= 1 {
        values.push(2.0 * x);
    }
    for k in 1..k_max {
        let next = 2.0 * x * values[k] - 2.0 * k as f64 * values[k - 1];
        if !next.is_finite() {
            return Err(Error::Range(format!("H_{}({x}) overflows f64", k + 1)));
        }
        values.push(next);
    }
    Ok(PolyTable { order_max: k_max, values })
}

/// Generalized Laguerre polynomial `L_k^m(x)` by the ascending recurrence
/// `(n+1) L_{n+1} = (2n+1+m-x) L_n - (n+m) L_{n-1}`.
pub fn laguerre(k: usize, m: usize, x: f64) -> f64 {
    let m = m as f64;
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 + m - x;
    for n in 1..k {
        let n = n as f64;
        let next = ((2.0 * n + 1.0 + m - x) * cur - (n + m) * prev) / (n + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

const LN_FACT_TABLE: usize = 4096;

/// `ln(n!)`.
pub fn ln_factorial(n: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        t.push(0.0);
        for i in 1..LN_FACT_TABLE {
            t.push(t[i - 1] + (i as f64).ln());
        }
        t
    });
    if n < LN_FACT_TABLE {
        table[n]
    } else {
        // Stirling series, far past where it matters at f64 precision.
        let x = n as f64 + 1.0;
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
    }
}

fn vacuum_amplitude(x: f64) -> f64 {
    (2.0 / PI).powf(0.25) * (-x * x).exp()
}

/// Unit-norm oscillator eigenfunction `phi_k(x)`, proportional to
/// `exp(-x^2) H_k(sqrt(2) x)`.
///
/// Evaluated with the normalized recurrence
/// `phi_{k+1} = (2x phi_k - sqrt(k) phi_{k-1}) / sqrt(k+1)`, which carries the
/// Gaussian factor through the iteration and cannot overflow.
pub fn fock_wavefunction(k: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = vacuum_amplitude(x);
    for j in 0..k {
        let next = (2.0 * x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// `phi_0 ..= phi_{k_max}` sampled at `xs`, stored order-major:
/// `values[k * xs.len() + i] = phi_k(xs[i])`.
#[derive(Debug, Clone)]
pub struct FockTable {
    pub k_max: usize,
    pub n_points: usize,
    pub values: Vec<f64>,
}

impl FockTable {
    pub fn new(k_max: usize, xs: impl ExactSizeIterator<Item = f64>) -> Self {
        let n = xs.len();
        let mut values = vec![0.0; (k_max + 1) * n];
        for (i, x) in xs.enumerate() {
            let mut prev = 0.0;
            let mut cur = vacuum_amplitude(x);
            values[i] = cur;
            for j in 0..k_max {
                let next = (2.0 * x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
                prev = cur;
                cur = next;
                values[(j + 1) * n + i] = cur;
            }
        }
        FockTable { k_max, n_points: n, values }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_points..(k + 1) * self.n_points]
    }
}

/// Runs the scaled Laguerre recurrence along one diagonal `d = |m - k|` and
/// calls `emit(j, M_j)` for `j = 0..=j_max`, where
///
/// `M_j = sqrt(j!/(j+d)!) rho^d exp(-rho^2/2) L_j^d(rho^2)`.
///
/// `M_j` is the modulus of a displacement-operator matrix element, so it
/// never exceeds one; a running log scale keeps the start value from
/// underflowing when `rho` is large.
fn scaled_laguerre_diagonal(d: usize, j_max: usize, rho: f64, mut emit: impl FnMut(usize, f64)) {
    const RESCALE: f64 = 1e200;
    let z = rho * rho;
    let df = d as f64;
    let log_start = if d == 0 {
        -0.5 * z
    } else if rho == 0.0 {
        f64::NEG_INFINITY
    } else {
        df * rho.ln() - 0.5 * z - 0.5 * ln_factorial(d)
    };
    if log_start == f64::NEG_INFINITY {
        for j in 0..=j_max {
            emit(j, 0.0);
        }
        return;
    }
    let mut log_scale = log_start;
    let mut prev = 0.0;
    let mut cur = 1.0;
    let value = |m: f64, s: f64| {
        if m == 0.0 {
            0.0
        } else if s > -700.0 {
            m * s.exp()
        } else {
            m.signum() * (m.abs().ln() + s).exp()
        }
    };
    emit(0, value(cur, log_scale));
    for j in 0..j_max {
        let jf = j as f64;
        let next =
            ((2.0 * jf + 1.0 + df - z) * cur - (jf * (jf + df)).sqrt() * prev) / ((jf + 1.0) * (jf + 1.0 + df)).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            log_scale += RESCALE.ln();
        }
        emit(j + 1, value(cur, log_scale));
    }
}

fn kernel_geometry(y: f64, x: f64) -> (f64, Complex64) {
    // rho e^{i phi} = sqrt(2) (X - iY)
    let beta = Complex64::new(x, -y) * std::f64::consts::SQRT_2;
    let rho = beta.norm();
    let unit = if rho > 0.0 { beta / rho } else { Complex64::new(1.0, 0.0) };
    (rho, unit)
}

/// Teleportation kernel `D_{k,m}(Y, X)`.
///
/// For `m >= k`:
/// `2 sqrt(2^{m-k} k!/m!) e^{-Y^2-X^2} (X - iY)^{m-k} L_k^{m-k}(2Y^2 + 2X^2)`;
/// for `m < k`: `(-1)^{k-m} conj(D_{m,k})`.
pub fn d_kernel(k: usize, m: usize, y: f64, x: f64) -> Complex64 {
    let (lo, hi) = if m >= k { (k, m) } else { (m, k) };
    let d = hi - lo;
    let (rho, unit) = kernel_geometry(y, x);
    let mut modulus = 0.0;
    scaled_laguerre_diagonal(d, lo, rho, |j, v| {
        if j == lo {
            modulus = v;
        }
    });
    let upper = unit.powu(d as u32) * (2.0 * modulus);
    if m >= k {
        upper
    } else if d % 2 == 0 {
        upper.conj()
    } else {
        -upper.conj()
    }
}

/// Dense `D_{k,m}(Y, X)` for `k <= k_max`, `m <= m_max`, row-major in `k`.
#[derive(Debug, Clone)]
pub struct DMatrix {
    pub k_max: usize,
    pub m_max: usize,
    pub values: Vec<Complex64>,
}

impl DMatrix {
    pub fn new(k_max: usize, m_max: usize, y: f64, x: f64) -> Self {
        let cols = m_max + 1;
        let mut values = vec![Complex64::new(0.0, 0.0); (k_max + 1) * cols];
        let (rho, unit) = kernel_geometry(y, x);
        let mut phase = Complex64::new(1.0, 0.0);
        for d in 0..=k_max.max(m_max) {
            if d > 0 {
                phase *= unit;
            }
            let upper = phase * 2.0;
            let lower = if d % 2 == 0 { upper.conj() } else { -upper.conj() };
            // m = k + d, running over k.
            if d <= m_max {
                let j_max = k_max.min(m_max - d);
                scaled_laguerre_diagonal(d, j_max, rho, |j, v| values[j * cols + j + d] = upper * v);
            }
            // k = m + d, running over m.
            if d > 0 && d <= k_max {
                let j_max = m_max.min(k_max - d);
                scaled_laguerre_diagonal(d, j_max, rho, |j, v| values[(j + d) * cols + j] = lower * v);
            }
        }
        DMatrix { k_max, m_max, values }
    }

    pub fn get(&self, k: usize, m: usize) -> Complex64 {
        self.values[k * (self.m_max + 1) + m]
    }

    pub fn row(&self, k: usize) -> &[Complex64] {
        let cols = self.m_max + 1;
        &self.values[k * cols..(k + 1) * cols]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hermite_examples() {
        assert_eq!(hermite_all(1, 1.5).unwrap().values, vec![1.0, 3.0]);
        assert_eq!(hermite_all(2, 1.0).unwrap().values[2], 2.0);
        assert_eq!(hermite_all(5, 0.0).unwrap().values, vec![1.0, 0.0, -2.0, 0.0, 12.0, 0.0]);
    }

    #[test]
    fn hermite_overflow_is_range_error() {
        assert!(matches!(hermite_all(400, 1e4), Err(Error::Range(_))));
    }

    #[test]
    fn hermite_matches_explicit_polynomials() {
        let explicit: [fn(f64) -> f64; 9] = [
            |_| 1.0,
            |x| 2.0 * x,
            |x| 4.0 * x * x - 2.0,
            |x| 8.0 * x.powi(3) - 12.0 * x,
            |x| 16.0 * x.powi(4) - 48.0 * x * x + 12.0,
            |x| 32.0 * x.powi(5) - 160.0 * x.powi(3) + 120.0 * x,
            |x| 64.0 * x.powi(6) - 480.0 * x.powi(4) + 720.0 * x * x - 120.0,
            |x| 128.0 * x.powi(7) - 1344.0 * x.powi(5) + 3360.0 * x.powi(3) - 1680.0 * x,
            |x| 256.0 * x.powi(8) - 3584.0 * x.powi(6) + 13440.0 * x.powi(4) - 13440.0 * x * x + 1680.0,
        ];
        for &x in &[-2.3, -0.7, 0.31, 1.9, 3.3] {
            let t = hermite_all(8, x).unwrap();
            for (k, f) in explicit.iter().enumerate() {
                let e = f(x);
                assert!((t.values[k] - e).abs() <= 1e-12 * e.abs().max(1.0), "k={k} x={x}");
            }
        }
    }

    #[test]
    fn laguerre_examples() {
        assert_eq!(laguerre(0, 3, 7.2), 1.0);
        assert_eq!(laguerre(1, 0, 2.0), -1.0);
        assert!((laguerre(2, 1, 0.0) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn laguerre_matches_explicit_sum() {
        // L_n^a(x) = sum_i (-1)^i binom(n+a, n-i) x^i / i!
        let binom = |n: usize, k: usize| (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp();
        for n in 0..=8 {
            for a in 0..=5 {
                for &x in &[0.0f64, 0.4, 1.7, 5.5] {
                    let mut s = 0.0;
                    for i in 0..=n {
                        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                        s += sign * binom(n + a, n - i) * x.powi(i as i32) / ln_factorial(i).exp();
                    }
                    let v = laguerre(n, a, x);
                    assert!((v - s).abs() <= 1e-11 * s.abs().max(1.0), "n={n} a={a} x={x}: {v} vs {s}");
                }
            }
        }
    }

    #[test]
    fn fock_wavefunction_examples() {
        assert!((fock_wavefunction(0, 0.0) - (2.0 / PI).powf(0.25)).abs() < 1e-15);
        assert!((fock_wavefunction(0, 0.0) - 0.893244).abs() < 1e-6);
        assert_eq!(fock_wavefunction(1, 0.0), 0.0);
    }

    #[test]
    fn fock_wavefunction_matches_hermite_form() {
        for k in 0..=12 {
            for &x in &[-1.3, 0.2, 0.9, 2.1] {
                let h = hermite_all(k, 2f64.sqrt() * x).unwrap().values[k];
                let norm = (2.0 / PI).powf(0.25) / (2f64.powi(k as i32) * ln_factorial(k).exp()).sqrt();
                let direct = norm * (-x * x).exp() * h;
                assert!((fock_wavefunction(k, x) - direct).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn fock_gram_matrix_is_identity() {
        let n = 4001;
        let h = 20.0 / (n - 1) as f64;
        let table = FockTable::new(20, (0..n).map(|i| -10.0 + i as f64 * h));
        for j in 0..=20 {
            for k in 0..=20 {
                let g = crate::numerics::quad::integrate_by(n, h, |i| table.row(j)[i] * table.row(k)[i]).unwrap();
                let e = if j == k { 1.0 } else { 0.0 };
                assert!((g - e).abs() < 1e-10, "({j},{k}) = {g}");
            }
        }
    }

    #[test]
    fn d_kernel_examples() {
        let v = d_kernel(0, 0, 0.0, 0.0);
        assert!((v - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        let v = d_kernel(0, 1, 0.0, 1.0);
        let e = 2.0 * 2f64.sqrt() * (-1.0f64).exp();
        assert!((v.re - e).abs() < 1e-14 && v.im.abs() < 1e-15);
        assert!((v.re - 1.040520).abs() < 1e-6);
    }

    /// Direct evaluation of the closed form, valid for moderate arguments.
    fn d_closed_form(k: usize, m: usize, y: f64, x: f64) -> Complex64 {
        assert!(m >= k);
        let d = m - k;
        let pref = 2.0 * (2f64.powi(d as i32) * (ln_factorial(k) - ln_factorial(m)).exp()).sqrt();
        Complex64::new(x, -y).powu(d as u32) * pref * (-y * y - x * x).exp() * laguerre(k, d, 2.0 * y * y + 2.0 * x * x)
    }

    #[test]
    fn scaled_kernel_matches_closed_form() {
        for k in 0..12 {
            for m in k..14 {
                for &(y, x) in &[(0.3, -0.8), (1.1, 0.4), (-1.7, 1.2)] {
                    let a = d_kernel(k, m, y, x);
                    let b = d_closed_form(k, m, y, x);
                    assert!((a - b).norm() < 1e-12, "k={k} m={m}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn d_matrix_matches_pointwise_kernel() {
        let mat = DMatrix::new(9, 6, -0.4, 0.9);
        for k in 0..=9 {
            for m in 0..=6 {
                assert!((mat.get(k, m) - d_kernel(k, m, -0.4, 0.9)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn d_kernel_is_bounded_unitary_column() {
        // D_{k,m} / 2 are matrix elements of a displacement, so each column has unit norm.
        let (y, x) = (2.5, -3.0);
        let mat = DMatrix::new(400, 40, y, x);
        for m in [0, 7, 40] {
            let s: f64 = (0..=400).map(|k| (mat.get(k, m) / 2.0).norm_sqr()).sum();
            assert!((s - 1.0).abs() < 1e-10, "column {m}: {s}");
        }
        assert!(mat.values.iter().all(|v| v.norm() <= 2.0 + 1e-12));
    }

    /// `D_{k,m}(Y, X) = sqrt(2) * int dx e^{-2iYx} phi_m((x+X)/sqrt2) phi_k((x-X)/sqrt2)`.
    #[test]
    fn d_kernel_matches_quadrature_oracle() {
        let n = 4001;
        let h = 24.0 / (n - 1) as f64;
        let s2 = 2f64.sqrt();
        for &(k, m, y, x) in &[
            (0, 0, 0.0, 0.0),
            (0, 1, 0.3, 0.7),
            (2, 1, -0.4, 0.5),
            (1, 3, 0.2, -0.9),
            (3, 1, 0.2, -0.9),
            (5, 2, 1.1, 0.3),
        ] {
            let v: Complex64 = crate::numerics::quad::integrate_by(n, h, |i| {
                let t = -12.0 + i as f64 * h;
                Complex64::from_polar(1.0, -2.0 * y * t)
                    * fock_wavefunction(m, (t + x) / s2)
                    * fock_wavefunction(k, (t - x) / s2)
            })
            .unwrap();
            let d = d_kernel(k, m, y, x);
            assert!((v * s2 - d).norm() < 1e-12, "({k},{m}): {} vs {}", v * s2, d);
        }
    }

    #[test]
    fn d_kernel_decays_far_out() {
        let (y, x) = (6.0, 8.0); // radius 10
        assert!(d_kernel(0, 0, y, x).norm() < 1e-20);
    }

    #[test]
    fn d_kernel_symmetry_to_machine_precision() {
        let (y, x) = (0.37, -1.21);
        let mat = DMatrix::new(40, 40, y, x);
        for k in 0..=40 {
            for m in 0..=40 {
                let sign = if (m + k) % 2 == 0 { 1.0 } else { -1.0 };
                let lhs = mat.get(m, k);
                let rhs = mat.get(k, m).conj() * sign;
                assert!((lhs - rhs).norm() <= 1e-15 * lhs.norm().max(1e-300), "k={k} m={m}");
            }
        }
    }

    proptest! {
        #[test]
        fn kernel_symmetry_random(y in -3.0f64..3.0, x in -3.0f64..3.0) {
            // k - m = 2, so the sign factor is +1.
            let a = d_kernel(3, 1, y, x);
            let b = d_kernel(1, 3, y, x).conj();
            prop_assert!((a - b).norm() < 1e-15);
            let c = d_kernel(4, 1, y, x);
            let e = -d_kernel(1, 4, y, x).conj();
            prop_assert!((c - e).norm() < 1e-15);
        }
    }
}
