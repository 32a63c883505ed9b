//! Single-mode states on a uniform coordinate grid and in the Fock basis.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quad::{integrate_1d, integrate_by};
use crate::specfun::FockTable;

/// Amplitude a normalized state may keep at the grid edges.
pub const SUPPORT_LIMIT: f64 = 1e-12;
/// Default tail-mass tolerance of [`fock_decompose`].
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-8;
/// Tolerance on the norm of a wavefunction tagged as normalized.
pub const NORM_TOLERANCE: f64 = 1e-8;

/// Uniform sampling of `[x_min, x_max]` with an odd number of points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::InvalidArgument(format!("grid bounds [{x_min}, {x_max}]")));
        }
        if n_points < 16 || n_points.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("grid needs an odd number of points >= 17, got {n_points}")));
        }
        Ok(Grid { x_min, x_max, n_points })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn step(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.step()
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        let h = self.step();
        (0..self.n_points).map(move |i| self.x_min + i as f64 * h)
    }

    /// Same interval, twice the density; every old node stays a node.
    pub fn refined(&self) -> Grid {
        Grid { n_points: 2 * self.n_points - 1, ..*self }
    }

    pub fn with_points(&self, n_points: usize) -> Result<Grid> {
        Grid::new(self.x_min, self.x_max, n_points)
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid { x_min: -12.0, x_max: 12.0, n_points: 2401 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormTag {
    Normalized,
    Unnormalized,
}

/// Complex amplitudes sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWavefunction {
    grid: Grid,
    amplitudes: Vec<Complex64>,
    norm_tag: NormTag,
}

impl GridWavefunction {
    pub fn new(grid: Grid, amplitudes: Vec<Complex64>, norm_tag: NormTag) -> Result<Self> {
        if amplitudes.len() != grid.n_points {
            return Err(Error::InvalidArgument(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.n_points
            )));
        }
        if amplitudes.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(Error::InvalidArgument("non-finite amplitude".into()));
        }
        let psi = GridWavefunction { grid, amplitudes, norm_tag };
        if norm_tag == NormTag::Normalized {
            let n = psi.norm_sqr();
            if (n - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::NotNormalized { mass: n });
            }
        }
        Ok(psi)
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let amps = grid.points().map(f).collect();
        GridWavefunction::new(grid, amps, NormTag::Unnormalized)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_tag(&self) -> NormTag {
        self.norm_tag
    }

    pub fn is_normalized(&self) -> bool {
        self.norm_tag == NormTag::Normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        integrate_by(self.amplitudes.len(), self.grid.step(), |i| self.amplitudes[i].norm_sqr())
            .expect("grid has an odd number of points")
    }

    /// Rescales to unit norm. Fails on a zero state.
    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sqr();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidArgument(format!("cannot normalize a state of norm {n}")));
        }
        let s = 1.0 / n.sqrt();
        self.amplitudes.iter_mut().for_each(|a| *a *= s);
        self.norm_tag = NormTag::Normalized;
        Ok(self)
    }

    /// Multiplies every amplitude by `factor`; the norm tag is kept when `|factor| = 1`.
    pub fn scaled(mut self, factor: Complex64) -> Self {
        self.amplitudes.iter_mut().for_each(|a| *a *= factor);
        if (factor.norm() - 1.0).abs() > 1e-15 {
            self.norm_tag = NormTag::Unnormalized;
        }
        self
    }

    /// Largest boundary amplitude relative to the largest amplitude.
    pub fn boundary_amplitude(&self) -> f64 {
        let first = self.amplitudes.first().map_or(0.0, |a| a.norm());
        let last = self.amplitudes.last().map_or(0.0, |a| a.norm());
        first.max(last)
    }

    pub fn check_support(&self, limit: f64) -> Result<()> {
        let amplitude = self.boundary_amplitude();
        if amplitude >= limit {
            return Err(Error::GridSupport { amplitude, limit });
        }
        Ok(())
    }

    /// `(<x>, <x^2>)` of the normalized density.
    pub fn x_moments(&self) -> (f64, f64) {
        let h = self.grid.step();
        let n = self.amplitudes.len();
        let norm = self.norm_sqr();
        let m1 = integrate_by(n, h, |i| self.grid.x(i) * self.amplitudes[i].norm_sqr()).unwrap();
        let m2 = integrate_by(n, h, |i| self.grid.x(i).powi(2) * self.amplitudes[i].norm_sqr()).unwrap();
        (m1 / norm, m2 / norm)
    }

    /// Momentum-space amplitude `(1/sqrt(pi)) int dx e^{-2iyx} psi(x)`.
    pub fn momentum_amplitude(&self, y: f64) -> Complex64 {
        let h = self.grid.step();
        let step = Complex64::from_polar(1.0, -2.0 * y * h);
        let start = Complex64::from_polar(1.0, -2.0 * y * self.grid.x_min);
        let mut phases = Vec::with_capacity(self.amplitudes.len());
        let mut p = start;
        for i in 0..self.amplitudes.len() {
            if i % 256 == 0 {
                p = Complex64::from_polar(1.0, -2.0 * y * self.grid.x(i));
            }
            phases.push(p);
            p *= step;
        }
        integrate_by(self.amplitudes.len(), h, |i| phases[i] * self.amplitudes[i]).unwrap() / PI.sqrt()
    }

    /// Writes `x,re,im` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,re,im")?;
        let mut line = String::new();
        for (i, a) in self.amplitudes.iter().enumerate() {
            line.clear();
            write!(line, "{:.16e},{:.16e},{:.16e}", self.grid.x(i), a.re, a.im).unwrap();
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv). The grid is
    /// recovered from the first and last abscissae.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut xs = Vec::new();
        let mut amps = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                if line.trim() != "x,re,im" {
                    return Err(Error::Parse(format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 fields", lineno + 1)));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)));
            xs.push(num(fields[0])?);
            amps.push(Complex64::new(num(fields[1])?, num(fields[2])?));
        }
        if xs.len() < 2 {
            return Err(Error::Parse("wavefunction CSV has fewer than two rows".into()));
        }
        let grid = Grid::new(xs[0], xs[xs.len() - 1], xs.len())?;
        for (i, &x) in xs.iter().enumerate() {
            if (x - grid.x(i)).abs() > 1e-9 * grid.step() {
                return Err(Error::Parse(format!("abscissa {i} is not on a uniform grid")));
            }
        }
        let psi = GridWavefunction::new(grid, amps, NormTag::Unnormalized)?;
        if (psi.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE {
            Ok(GridWavefunction { norm_tag: NormTag::Normalized, ..psi })
        } else {
            Ok(psi)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let psi: GridWavefunction = serde_json::from_str(s)?;
        GridWavefunction::new(psi.grid, psi.amplitudes, psi.norm_tag)
    }
}

/// Truncated Fock-basis expansion `sum_m c_m |m>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockVector {
    pub coeffs: Vec<Complex64>,
    /// `1 - sum |c_m|^2` for a decomposition of a normalized state.
    pub tail_mass: f64,
}

/// First and second moments of the two quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMoments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
}

impl FockVector {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        FockVector { coeffs, tail_mass: (1.0 - norm).max(0.0) }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        FockVector::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// Highest retained photon number.
    pub fn truncation(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn truncated(&self, k: usize) -> FockVector {
        let coeffs: Vec<_> = self.coeffs.iter().take(k + 1).copied().collect();
        let kept: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        let tail_mass = self.tail_mass + (self.norm_sqr() - kept).max(0.0);
        FockVector { coeffs, tail_mass }
    }

    /// Quadrature moments with `x = (a + a^dag)/2`, `y = (a - a^dag)/(2i)`.
    pub fn quadrature_moments(&self) -> QuadratureMoments {
        quadrature_moments(&self.coeffs)
    }
}

pub(crate) fn quadrature_moments(c: &[Complex64]) -> QuadratureMoments {
    let mut norm = 0.0;
    let mut n_mean = 0.0;
    let mut a = Complex64::new(0.0, 0.0);
    let mut a2 = Complex64::new(0.0, 0.0);
    for k in 0..c.len() {
        let kf = k as f64;
        norm += c[k].norm_sqr();
        n_mean += kf * c[k].norm_sqr();
        if k + 1 < c.len() {
            a += c[k].conj() * c[k + 1] * (kf + 1.0).sqrt();
        }
        if k + 2 < c.len() {
            a2 += c[k].conj() * c[k + 2] * ((kf + 1.0) * (kf + 2.0)).sqrt();
        }
    }
    let (a, a2, n_mean) = (a / norm, a2 / norm, n_mean / norm);
    let x2 = (2.0 * a2.re + 2.0 * n_mean + 1.0) / 4.0;
    let y2 = (-2.0 * a2.re + 2.0 * n_mean + 1.0) / 4.0;
    QuadratureMoments { mean_x: a.re, mean_y: a.im, var_x: x2 - a.re * a.re, var_y: y2 - a.im * a.im }
}

/// Squeezing parameter from decibels, `dB = 10 log10(e^{-2r})`.
pub fn db_to_r(db: f64) -> f64 {
    -db * std::f64::consts::LN_10 / 20.0
}

pub fn r_to_db(r: f64) -> f64 {
    -20.0 * r / std::f64::consts::LN_10
}

/// `psi_s(x; r) = (2 e^{2r} / pi)^{1/4} exp(-e^{2r} x^2)`, sampled analytically.
pub fn squeezed_amplitude(x: f64, r: f64) -> f64 {
    let s = (2.0 * r).exp();
    (2.0 * s / PI).powf(0.25) * (-s * x * x).exp()
}

/// Squeezed vacuum; `r_in > 0` narrows the x-quadrature.
pub fn squeezed_state(r_in: f64, grid: Grid) -> Result<GridWavefunction> {
    if !r_in.is_finite() {
        return Err(Error::InvalidArgument(format!("squeezing {r_in}")));
    }
    let psi = GridWavefunction::from_fn(grid, |x| Complex64::new(squeezed_amplitude(x, r_in), 0.0))?;
    psi.check_support(SUPPORT_LIMIT)?;
    psi.normalized()
}

/// Closed form of `N_cat^2` for the odd cat `(e^{2ibx} - e^{-2ibx}) e^{-x^2}`.
pub fn cat_norm_sqr_closed_form(b: f64) -> f64 {
    2.0 * (PI / 2.0).sqrt() * (1.0 - (-2.0 * b * b).exp())
}

/// Odd Schrödinger cat `(e^{2ibx} - e^{-2ibx}) e^{-x^2} / N_cat`, with `N_cat`
/// found by quadrature.
pub fn cat_state(b: f64, grid: Grid) -> Result<GridWavefunction> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("cat amplitude b = {b} must be positive")));
    }
    let psi = GridWavefunction::from_fn(grid, |x| {
        (Complex64::from_polar(1.0, 2.0 * b * x) - Complex64::from_polar(1.0, -2.0 * b * x)) * (-x * x).exp()
    })?;
    let n2 = psi.norm_sqr();
    let relative = psi.boundary_amplitude() / n2.sqrt();
    if relative >= SUPPORT_LIMIT {
        return Err(Error::GridSupport { amplitude: relative, limit: SUPPORT_LIMIT });
    }
    psi.normalized()
}

/// Unit-norm vacuum displaced to `<x> = dx`, `<y> = dy`.
pub fn displaced_vacuum(dx: f64, dy: f64, grid: Grid) -> Result<GridWavefunction> {
    let psi =
        GridWavefunction::from_fn(grid, |x| Complex64::from_polar(squeezed_amplitude(x - dx, 0.0), 2.0 * dy * x))?;
    psi.check_support(SUPPORT_LIMIT)?;
    psi.normalized()
}

/// Fock coefficients `c_m = int phi_m(x) psi(x) dx`, `m <= k`.
pub fn fock_decompose(psi: &GridWavefunction, k: usize) -> Result<FockVector> {
    fock_decompose_with_tolerance(psi, k, DEFAULT_TAIL_TOLERANCE)
}

pub fn fock_decompose_with_tolerance(psi: &GridWavefunction, k: usize, tolerance: f64) -> Result<FockVector> {
    if !psi.is_normalized() {
        return Err(Error::InvalidArgument("fock_decompose needs a normalized wavefunction".into()));
    }
    let grid = psi.grid();
    let table = FockTable::new(k, grid.points());
    let h = grid.step();
    let amps = psi.amplitudes();
    let coeffs: Vec<Complex64> = (0..=k)
        .map(|m| {
            let row = table.row(m);
            integrate_by(amps.len(), h, |i| amps[i] * row[i]).unwrap()
        })
        .collect();
    let mass: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    let tail = (1.0 - mass).max(0.0);
    if tail > tolerance {
        return Err(Error::Truncation { tail, tolerance });
    }
    Ok(FockVector { coeffs, tail_mass: tail })
}

/// `sum_m c_m phi_m(x)` on `grid`.
pub fn fock_synthesize(c: &FockVector, grid: Grid) -> GridWavefunction {
    let k = c.truncation();
    let table = FockTable::new(k, grid.points());
    let amps: Vec<Complex64> =
        (0..grid.n_points()).map(|i| c.coeffs.iter().enumerate().map(|(m, cm)| cm * table.row(m)[i]).sum()).collect();
    let psi = GridWavefunction { grid, amplitudes: amps, norm_tag: NormTag::Unnormalized };
    if (psi.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE {
        GridWavefunction { norm_tag: NormTag::Normalized, ..psi }
    } else {
        psi
    }
}

/// `int conj(a) b dx` by composite Simpson.
pub fn overlap(a: &GridWavefunction, b: &GridWavefunction) -> Result<Complex64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let prod: Vec<Complex64> = a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x.conj() * y).collect();
    integrate_1d(&prod, a.grid.step())
}

/// `sqrt(int |a - b|^2 dx)`.
pub fn l2_distance(a: &GridWavefunction, b: &GridWavefunction) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let d = integrate_by(a.amplitudes.len(), a.grid.step(), |i| (a.amplitudes[i] - b.amplitudes[i]).norm_sqr())?;
    Ok(d.max(0.0).sqrt())
}

/// L2 distance after removing the relative global phase.
pub fn l2_distance_up_to_phase(a: &GridWavefunction, b: &GridWavefunction) -> Result<f64> {
    let ov = overlap(a, b)?;
    let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { Complex64::new(1.0, 0.0) };
    let rotated = a.clone().scaled(phase);
    l2_distance(&rotated, b)
}

/// Input state selector.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSpec {
    /// Squeezed vacuum at the given dB (negative squeezes `x`).
    Squeezed { db: f64 },
    /// Odd cat of amplitude `b`.
    Cat { b: f64 },
    /// Real Fock amplitudes, renormalized.
    Fock { coeffs: Vec<f64> },
    /// A sampled wavefunction; usable only on its own grid.
    Wavefunction(GridWavefunction),
}

impl InputSpec {
    pub fn wavefunction(&self, grid: Grid) -> Result<GridWavefunction> {
        match self {
            InputSpec::Squeezed { db } => squeezed_state(db_to_r(*db), grid),
            InputSpec::Cat { b } => cat_state(*b, grid),
            InputSpec::Fock { coeffs } => {
                let norm: f64 = coeffs.iter().map(|c| c * c).sum();
                if !(norm > 0.0) || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidArgument("Fock input needs finite, not all zero amplitudes".into()));
                }
                let scaled: Vec<f64> = coeffs.iter().map(|c| c / norm.sqrt()).collect();
                let psi = fock_synthesize(&FockVector::from_real(&scaled), grid);
                psi.check_support(SUPPORT_LIMIT)?;
                psi.normalized()
            }
            InputSpec::Wavefunction(psi) => {
                if *psi.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                psi.clone().normalized()
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            InputSpec::Squeezed { db } => format!("squeezed:{db}"),
            InputSpec::Cat { b } => format!("cat:{b}"),
            InputSpec::Fock { coeffs } => {
                let parts: Vec<String> = coeffs.iter().map(|c| c.to_string()).collect();
                format!("fock:{}", parts.join(","))
            }
            InputSpec::Wavefunction(_) => "wavefunction".to_string(),
        }
    }
}

impl std::str::FromStr for InputSpec {
    type Err = Error;

    /// `squeezed:<dB>`, `cat:<b>` or `fock:<c0>,<c1>,...`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').ok_or_else(|| Error::Parse(format!("input {s:?} has no ':'")))?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("input {s:?}: {e}")));
        match kind {
            "squeezed" => Ok(InputSpec::Squeezed { db: num(arg)? }),
            "cat" => Ok(InputSpec::Cat { b: num(arg)? }),
            "fock" => Ok(InputSpec::Fock { coeffs: arg.split(',').map(num).collect::<Result<_>>()? }),
            _ => Err(Error::Parse(format!("unknown input kind {kind:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::fock_wavefunction;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::default()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(-1.0, 1.0, 16).is_err());
        assert!(Grid::new(-1.0, 1.0, 18).is_err());
        assert!(Grid::new(1.0, -1.0, 17).is_err());
        let g = Grid::new(-1.0, 1.0, 17).unwrap();
        assert!((g.x(8)).abs() < 1e-16);
        assert_eq!(g.refined().n_points(), 33);
    }

    #[test]
    fn db_conversion() {
        assert!((db_to_r(-10.0) - 10f64.ln() / 2.0).abs() < 1e-15);
        assert!((db_to_r(-10.0) - 1.151293).abs() < 1e-6);
        assert_eq!(db_to_r(0.0), 0.0);
        assert!((db_to_r(-15.0) - 1.726938).abs() < 1e-6);
        assert!((r_to_db(db_to_r(-5.0)) + 5.0).abs() < 1e-13);
    }

    #[test]
    fn squeezed_zero_is_vacuum() {
        let psi = squeezed_state(0.0, grid()).unwrap();
        for (i, a) in psi.amplitudes().iter().enumerate() {
            assert!((a.re - fock_wavefunction(0, grid().x(i))).abs() < 1e-12);
        }
    }

    #[test]
    fn squeezed_second_moment() {
        let r = 0.25 * 10f64.ln();
        let psi = squeezed_state(r, grid()).unwrap();
        let (m1, m2) = psi.x_moments();
        assert!(m1.abs() < 1e-15);
        assert!((m2 - (-2.0 * r).exp() / 4.0).abs() < 1e-12);
        assert!((m2 - 0.079057).abs() < 1e-6);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn squeezed_support_error() {
        let narrow = Grid::new(-1.0, 1.0, 101).unwrap();
        assert!(matches!(squeezed_state(-1.0, narrow), Err(Error::GridSupport { .. })));
    }

    #[test]
    fn cat_normalization_against_closed_form() {
        let b = 1.5;
        let raw = GridWavefunction::from_fn(grid(), |x| {
            (Complex64::from_polar(1.0, 2.0 * b * x) - Complex64::from_polar(1.0, -2.0 * b * x)) * (-x * x).exp()
        })
        .unwrap();
        let n2 = raw.norm_sqr();
        assert!((n2 - cat_norm_sqr_closed_form(b)).abs() < 1e-12);
        assert!((n2 - 2.478782).abs() < 1e-6);
        let cat = cat_state(b, grid()).unwrap();
        assert!(cat.amplitudes()[grid().n_points() / 2].norm() < 1e-15);
        assert!((cat.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cat_rejects_bad_amplitude() {
        assert!(cat_state(0.0, grid()).is_err());
        assert!(cat_state(-1.0, grid()).is_err());
    }

    #[test]
    fn vacuum_decomposition() {
        let psi = squeezed_state(0.0, grid()).unwrap();
        let c = fock_decompose(&psi, 10).unwrap();
        assert!((c.coeffs[0].re - 1.0).abs() < 1e-10);
        assert!(c.coeffs[1..].iter().all(|c| c.norm() < 1e-10));
    }

    #[test]
    fn squeezed_two_photon_amplitude() {
        let r = 0.25 * 10f64.ln();
        let psi = squeezed_state(r, grid()).unwrap();
        let c = fock_decompose(&psi, 60).unwrap();
        let ratio = (c.coeffs[2] / c.coeffs[0]).norm();
        assert!((ratio - r.tanh() / 2f64.sqrt()).abs() < 1e-10, "{ratio}");
        assert!(c.coeffs.iter().skip(1).step_by(2).all(|c| c.norm() < 1e-12));
        assert!((c.tail_mass + c.norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cat_decomposition_parity_and_tail() {
        let cat = cat_state(1.5, grid()).unwrap();
        let c = fock_decompose(&cat, 40).unwrap();
        assert!(c.coeffs.iter().step_by(2).all(|c| c.norm() < 1e-12));
        assert!(c.tail_mass < 1e-10, "{}", c.tail_mass);
    }

    #[test]
    fn truncation_flagged() {
        let cat = cat_state(1.5, grid()).unwrap();
        assert!(matches!(fock_decompose(&cat, 3), Err(Error::Truncation { .. })));
    }

    #[test]
    fn synthesize_examples() {
        let vac = fock_synthesize(&FockVector::from_real(&[1.0]), grid());
        assert!(vac.is_normalized());
        let one = fock_synthesize(&FockVector::from_real(&[0.0, 1.0]), grid());
        for (i, a) in one.amplitudes().iter().enumerate() {
            assert!((a.re - fock_wavefunction(1, grid().x(i))).abs() < 1e-15);
        }
    }

    #[test]
    fn cat_round_trip() {
        let cat = cat_state(1.5, grid()).unwrap();
        let c = fock_decompose(&cat, 40).unwrap();
        let back = fock_synthesize(&c, grid());
        assert!(l2_distance(&back, &cat).unwrap() < 1e-8);
    }

    #[test]
    fn overlap_examples() {
        let g = grid();
        let vac = displaced_vacuum(0.0, 0.0, g).unwrap();
        assert!((overlap(&vac, &vac).unwrap() - 1.0).norm() < 1e-12);
        let one = fock_synthesize(&FockVector::from_real(&[0.0, 1.0]), g);
        assert!(overlap(&vac, &one).unwrap().norm() < 1e-10);
        for &(dx, dy) in &[(0.5, 0.0), (0.0, -0.8), (1.2, 0.7)] {
            let d = displaced_vacuum(dx, dy, g).unwrap();
            let f = overlap(&vac, &d).unwrap().norm_sqr();
            assert!((f - (-(dx * dx + dy * dy)).exp()).abs() < 1e-12);
        }
        let other = Grid::new(-12.0, 12.0, 2001).unwrap();
        let v2 = displaced_vacuum(0.0, 0.0, other).unwrap();
        assert!(matches!(overlap(&vac, &v2), Err(Error::GridMismatch)));
    }

    #[test]
    fn fock_moments_of_squeezed_vacuum() {
        let r = 0.4;
        let psi = squeezed_state(r, grid()).unwrap();
        let m = fock_decompose(&psi, 60).unwrap().quadrature_moments();
        assert!((m.var_x - (-2.0 * r).exp() / 4.0).abs() < 1e-10);
        assert!((m.var_y - (2.0 * r).exp() / 4.0).abs() < 1e-10);
        let d = displaced_vacuum(0.7, -0.3, grid()).unwrap();
        let m = fock_decompose(&d, 60).unwrap().quadrature_moments();
        assert!((m.mean_x - 0.7).abs() < 1e-10 && (m.mean_y + 0.3).abs() < 1e-10);
        assert!((m.var_x - 0.25).abs() < 1e-10 && (m.var_y - 0.25).abs() < 1e-10);
    }

    #[test]
    fn momentum_amplitude_of_displaced_vacuum() {
        let d = displaced_vacuum(0.0, 1.1, grid()).unwrap();
        for &y in &[0.0, 1.1, 2.0] {
            let p = d.momentum_amplitude(y).norm();
            assert!((p - squeezed_amplitude(y - 1.1, 0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_and_json_round_trip_bit_exact() {
        let cat = cat_state(1.5, Grid::new(-8.0, 8.0, 401).unwrap()).unwrap();
        let mut buf = Vec::new();
        cat.write_csv(&mut buf).unwrap();
        let back = GridWavefunction::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.amplitudes(), cat.amplitudes());
        assert!(back.is_normalized());
        let json = cat.to_json().unwrap();
        assert_eq!(GridWavefunction::from_json(&json).unwrap(), cat);
    }

    #[test]
    fn input_spec_parsing() {
        assert_eq!("squeezed:-5".parse::<InputSpec>().unwrap(), InputSpec::Squeezed { db: -5.0 });
        assert_eq!("cat:1.5".parse::<InputSpec>().unwrap(), InputSpec::Cat { b: 1.5 });
        assert_eq!("fock:0,1".parse::<InputSpec>().unwrap(), InputSpec::Fock { coeffs: vec![0.0, 1.0] });
        assert!("cat".parse::<InputSpec>().is_err());
        assert!("coherent:1".parse::<InputSpec>().is_err());
        let psi = InputSpec::Fock { coeffs: vec![1.0, 1.0] }.wavefunction(grid()).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn parity_selection(r in -0.8f64..0.8, b in 0.3f64..2.0) {
            let g = Grid::new(-12.0, 12.0, 2401).unwrap();
            let even = squeezed_state(r, g).unwrap();
            let c = fock_decompose_with_tolerance(&even, 30, 1.0).unwrap();
            prop_assert!(c.coeffs.iter().skip(1).step_by(2).all(|c| c.norm() < 1e-12));
            let odd = cat_state(b, g).unwrap();
            let c = fock_decompose_with_tolerance(&odd, 30, 1.0).unwrap();
            prop_assert!(c.coeffs.iter().step_by(2).all(|c| c.norm() < 1e-12));
            prop_assert!((c.tail_mass + c.norm_sqr() - 1.0).abs() < 1e-9);
        }
    }
}
