//! Fidelity, outcome surfaces and their reductions.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quad::{integrate_2d_by, pairwise_sum_by, simpson_weight};
use crate::protocols::E1Kind;
use crate::states::{overlap, GridWavefunction, QuadratureMoments};

/// `|<psi_out|psi_in>|^2` for normalized states on the same grid.
pub fn fidelity(psi_out: &GridWavefunction, psi_in: &GridWavefunction) -> Result<f64> {
    Ok(overlap(psi_out, psi_in)?.norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    Fidelity,
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxesMode {
    Raw,
    /// Centered and divided by the standard deviation.
    Std,
    /// Centered and divided by the variance.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMode {
    #[default]
    Std,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AverageMode {
    /// `int int P F` over the outcome plane.
    #[default]
    Weighted,
    /// `int int F` over the normalized box, without the density weight.
    Literal,
}

impl std::str::FromStr for NormalizeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std" => Ok(NormalizeMode::Std),
            "variance" => Ok(NormalizeMode::Variance),
            _ => Err(Error::Parse(format!("unknown axes mode {s:?} (std|variance)"))),
        }
    }
}

impl std::str::FromStr for AverageMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(AverageMode::Weighted),
            "literal" => Ok(AverageMode::Literal),
            _ => Err(Error::Parse(format!("unknown average mode {s:?} (weighted|literal)"))),
        }
    }
}

/// Values over a rectangular outcome lattice, row-major in `y_in`:
/// `values[i * e1_axis.len() + j]` belongs to `(y_in_axis[i], e1_axis[j])`.
/// Absent values mark cells where the quantity is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub y_in_axis: Vec<f64>,
    pub e1_axis: Vec<f64>,
    pub values: Vec<Option<f64>>,
    pub kind: SurfaceKind,
    pub axes_mode: AxesMode,
    pub e1_kind: E1Kind,
}

/// Outcome-axis statistics of a probability surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMoments {
    pub mean_y_in: f64,
    pub mean_e1: f64,
    pub var_y_in: f64,
    pub var_e1: f64,
}

fn uniform_step(axis: &[f64]) -> Result<f64> {
    if axis.len() < 3 || axis.len().is_multiple_of(2) {
        return Err(Error::EvenSampleCount(axis.len()));
    }
    Ok((axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64)
}

/// `n` uniform points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + i as f64 * h).collect()
}

impl Surface {
    pub fn new(
        y_in_axis: Vec<f64>,
        e1_axis: Vec<f64>,
        values: Vec<Option<f64>>,
        kind: SurfaceKind,
        axes_mode: AxesMode,
        e1_kind: E1Kind,
    ) -> Result<Self> {
        if values.len() != y_in_axis.len() * e1_axis.len() {
            return Err(Error::AxisMismatch);
        }
        uniform_step(&y_in_axis)?;
        uniform_step(&e1_axis)?;
        Ok(Surface { y_in_axis, e1_axis, values, kind, axes_mode, e1_kind })
    }

    pub fn rows(&self) -> usize {
        self.y_in_axis.len()
    }

    pub fn cols(&self) -> usize {
        self.e1_axis.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.cols() + j]
    }

    fn value_or_zero(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).unwrap_or(0.0)
    }

    pub fn steps(&self) -> (f64, f64) {
        (uniform_step(&self.y_in_axis).unwrap(), uniform_step(&self.e1_axis).unwrap())
    }

    /// Simpson integral of `f(i, j)` over the lattice.
    pub fn integrate_by(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        let (hy, he) = self.steps();
        integrate_2d_by(self.rows(), self.cols(), hy, he, f).expect("axes validated at construction")
    }

    /// `int int value`, absent cells counted as zero.
    pub fn mass(&self) -> f64 {
        self.integrate_by(|i, j| self.value_or_zero(i, j))
    }

    pub fn same_axes(&self, other: &Surface) -> bool {
        self.y_in_axis == other.y_in_axis && self.e1_axis == other.e1_axis && self.axes_mode == other.axes_mode
    }

    /// Marginal density along `y_in` (integrated over `e1`).
    pub fn marginal_y_in(&self) -> Vec<f64> {
        let (_, he) = self.steps();
        let n = self.cols();
        (0..self.rows())
            .map(|i| pairwise_sum_by(n, |j| self.value_or_zero(i, j) * simpson_weight(j, n)) * he / 3.0)
            .collect()
    }

    /// Marginal density along `e1` (integrated over `y_in`).
    pub fn marginal_e1(&self) -> Vec<f64> {
        let (hy, _) = self.steps();
        let n = self.rows();
        (0..self.cols())
            .map(|j| pairwise_sum_by(n, |i| self.value_or_zero(i, j) * simpson_weight(i, n)) * hy / 3.0)
            .collect()
    }

    /// Bilinear interpolation; `None` outside the lattice or next to an
    /// absent cell.
    pub fn interpolate(&self, y_in: f64, e1: f64) -> Option<f64> {
        let (hy, he) = self.steps();
        let fy = (y_in - self.y_in_axis[0]) / hy;
        let fe = (e1 - self.e1_axis[0]) / he;
        if !(fy >= 0.0 && fe >= 0.0 && fy <= (self.rows() - 1) as f64 && fe <= (self.cols() - 1) as f64) {
            return None;
        }
        let i = (fy.floor() as usize).min(self.rows() - 2);
        let j = (fe.floor() as usize).min(self.cols() - 2);
        let (ty, te) = (fy - i as f64, fe - j as f64);
        let v00 = self.get(i, j)?;
        let v01 = self.get(i, j + 1)?;
        let v10 = self.get(i + 1, j)?;
        let v11 = self.get(i + 1, j + 1)?;
        Some((1.0 - ty) * ((1.0 - te) * v00 + te * v01) + ty * ((1.0 - te) * v10 + te * v11))
    }

    /// This surface sampled on another lattice; points outside become zero
    /// for probabilities and absent for fidelities.
    pub fn resample(&self, y_in_axis: &[f64], e1_axis: &[f64]) -> Result<Surface> {
        let values = y_in_axis
            .iter()
            .flat_map(|&y| e1_axis.iter().map(move |&e| (y, e)))
            .map(|(y, e)| match self.interpolate(y, e) {
                Some(v) => Some(v),
                None if self.kind == SurfaceKind::Probability => Some(0.0),
                None => None,
            })
            .collect();
        Surface::new(y_in_axis.to_vec(), e1_axis.to_vec(), values, self.kind, self.axes_mode, self.e1_kind)
    }

    /// Writes `y_in,e1,value` rows; absent values are written as `NaN`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "y_in,{},value", self.e1_kind.label())?;
        for (i, y) in self.y_in_axis.iter().enumerate() {
            for (j, e) in self.e1_axis.iter().enumerate() {
                match self.get(i, j) {
                    Some(v) => writeln!(w, "{y:.16e},{e:.16e},{v:.16e}")?,
                    None => writeln!(w, "{y:.16e},{e:.16e},NaN")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the long CSV format; the kind and axes mode are supplied by
    /// the caller because the CSV does not carry them.
    pub fn read_csv<R: BufRead>(r: R, kind: SurfaceKind, axes_mode: AxesMode) -> Result<Surface> {
        let mut rows: Vec<(f64, f64, Option<f64>)> = Vec::new();
        let mut e1_kind = E1Kind::X1;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 {
                e1_kind = match line.trim() {
                    "y_in,x1,value" => E1Kind::X1,
                    "y_in,y1,value" => E1Kind::Y1,
                    other => return Err(Error::Parse(format!("unexpected surface header {other:?}"))),
                };
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 fields", n + 1)));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)));
            let v = num(f[2])?;
            rows.push((num(f[0])?, num(f[1])?, if v.is_nan() { None } else { Some(v) }));
        }
        let cols = rows.iter().take_while(|r| r.0 == rows[0].0).count();
        if cols == 0 || !rows.len().is_multiple_of(cols) {
            return Err(Error::Parse("surface CSV is not a rectangular lattice".into()));
        }
        let y_in_axis: Vec<f64> = rows.iter().step_by(cols).map(|r| r.0).collect();
        let e1_axis: Vec<f64> = rows[..cols].iter().map(|r| r.1).collect();
        let values = rows.iter().map(|r| r.2).collect();
        Surface::new(y_in_axis, e1_axis, values, kind, axes_mode, e1_kind)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Surface> {
        let v: Surface = serde_json::from_str(s)?;
        Surface::new(v.y_in_axis, v.e1_axis, v.values, v.kind, v.axes_mode, v.e1_kind)
    }
}

/// Tolerance on the unit mass required by [`outcome_moments`].
pub const MASS_TOLERANCE: f64 = 1e-3;

/// Means and central second moments of a unit-mass probability surface.
pub fn outcome_moments(p: &Surface) -> Result<OutcomeMoments> {
    if p.kind != SurfaceKind::Probability {
        return Err(Error::InvalidArgument("outcome moments need a probability surface".into()));
    }
    let mass = p.mass();
    if !((mass - 1.0).abs() <= MASS_TOLERANCE) {
        return Err(Error::NotNormalized { mass });
    }
    let v = |i: usize, j: usize| p.value_or_zero(i, j);
    let my = p.integrate_by(|i, j| p.y_in_axis[i] * v(i, j)) / mass;
    let me = p.integrate_by(|i, j| p.e1_axis[j] * v(i, j)) / mass;
    let vy = p.integrate_by(|i, j| (p.y_in_axis[i] - my).powi(2) * v(i, j)) / mass;
    let ve = p.integrate_by(|i, j| (p.e1_axis[j] - me).powi(2) * v(i, j)) / mass;
    Ok(OutcomeMoments { mean_y_in: my, mean_e1: me, var_y_in: vy, var_e1: ve })
}

/// Third standardized moment of the `e1` marginal.
pub fn e1_skewness(p: &Surface) -> f64 {
    let marginal = p.marginal_e1();
    let (_, he) = p.steps();
    let n = marginal.len();
    let int = |f: &dyn Fn(usize) -> f64| pairwise_sum_by(n, |j| f(j) * simpson_weight(j, n)) * he / 3.0;
    let m0 = int(&|j| marginal[j]);
    let mean = int(&|j| p.e1_axis[j] * marginal[j]) / m0;
    let var = int(&|j| (p.e1_axis[j] - mean).powi(2) * marginal[j]) / m0;
    let third = int(&|j| (p.e1_axis[j] - mean).powi(3) * marginal[j]) / m0;
    third / var.powf(1.5)
}

/// Recenters and rescales both axes, `E -> (E - mean)/d` with `d` the
/// standard deviation or the variance. Probability values pick up the
/// Jacobian so the mass is unchanged.
pub fn normalize_axes(s: &Surface, m: &OutcomeMoments, mode: NormalizeMode) -> Result<Surface> {
    if s.axes_mode != AxesMode::Raw {
        return Err(Error::InvalidArgument("surface axes are already normalized".into()));
    }
    if !(m.var_y_in > 0.0 && m.var_e1 > 0.0) {
        return Err(Error::InvalidArgument("outcome variances must be positive".into()));
    }
    let (dy, de, axes_mode) = match mode {
        NormalizeMode::Std => (m.var_y_in.sqrt(), m.var_e1.sqrt(), AxesMode::Std),
        NormalizeMode::Variance => (m.var_y_in, m.var_e1, AxesMode::Variance),
    };
    let y_in_axis = s.y_in_axis.iter().map(|y| (y - m.mean_y_in) / dy).collect();
    let e1_axis = s.e1_axis.iter().map(|e| (e - m.mean_e1) / de).collect();
    let jac = dy * de;
    let values = match s.kind {
        SurfaceKind::Probability => s.values.iter().map(|v| v.map(|v| v * jac)).collect(),
        SurfaceKind::Fidelity => s.values.clone(),
    };
    Surface::new(y_in_axis, e1_axis, values, s.kind, axes_mode, s.e1_kind)
}

fn check_pair(f: &Surface, p: &Surface) -> Result<()> {
    if f.kind != SurfaceKind::Fidelity || p.kind != SurfaceKind::Probability {
        return Err(Error::InvalidArgument("expected a fidelity and a probability surface".into()));
    }
    if !f.same_axes(p) {
        return Err(Error::AxisMismatch);
    }
    Ok(())
}

/// Averaged fidelity.
///
/// `Weighted`: `int int P F / int int P`, with absent fidelities counted as
/// zero. The division removes the dependence on mass lost outside the box.
///
/// `Literal`: `int int F` over a normalized box, absent values counted as
/// zero.
pub fn averaged_fidelity(f: &Surface, p: &Surface, mode: AverageMode) -> Result<f64> {
    check_pair(f, p)?;
    match mode {
        AverageMode::Weighted => {
            let num = f.integrate_by(|i, j| p.value_or_zero(i, j) * f.value_or_zero(i, j));
            let den = p.mass();
            if !(den > 0.0) {
                return Err(Error::NotNormalized { mass: den });
            }
            Ok(num / den)
        }
        AverageMode::Literal => {
            if f.axes_mode == AxesMode::Raw {
                return Err(Error::InvalidArgument("literal averaging needs normalized axes".into()));
            }
            Ok(f.mass())
        }
    }
}

/// Unconditional output moments from per-outcome conditional moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMoments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
}

/// P-weighted mixture of conditional output states: `Var = E[var] + Var[mean]`.
pub fn ensemble_moments(p: &Surface, cells: &[Option<QuadratureMoments>]) -> Result<EnsembleMoments> {
    if cells.len() != p.values.len() {
        return Err(Error::AxisMismatch);
    }
    let cols = p.cols();
    let w = |i: usize, j: usize| if cells[i * cols + j].is_some() { p.value_or_zero(i, j) } else { 0.0 };
    let cell = |i: usize, j: usize| {
        cells[i * cols + j].unwrap_or(QuadratureMoments { mean_x: 0.0, mean_y: 0.0, var_x: 0.0, var_y: 0.0 })
    };
    let mass = p.integrate_by(w);
    let ex = p.integrate_by(|i, j| w(i, j) * cell(i, j).mean_x) / mass;
    let ey = p.integrate_by(|i, j| w(i, j) * cell(i, j).mean_y) / mass;
    let vx = p.integrate_by(|i, j| {
        let c = cell(i, j);
        w(i, j) * (c.var_x + (c.mean_x - ex).powi(2))
    }) / mass;
    let vy = p.integrate_by(|i, j| {
        let c = cell(i, j);
        w(i, j) * (c.var_y + (c.mean_y - ey).powi(2))
    }) / mass;
    Ok(EnsembleMoments { mean_x: ex, mean_y: ey, var_x: vx, var_y: vy })
}

/// Noise added per quadrature by the two-mode-squeezed channel,
/// `e^{-2r}/2`.
pub fn expected_added_noise(r: f64) -> f64 {
    (-2.0 * r).exp() / 2.0
}

/// Largest absolute difference between two surfaces on identical axes;
/// cells absent in either are skipped.
pub fn linf_distance(a: &Surface, b: &Surface) -> Result<f64> {
    if !a.same_axes(b) {
        return Err(Error::AxisMismatch);
    }
    Ok(a.values.iter().zip(&b.values).filter_map(|(x, y)| Some((x.as_ref()? - y.as_ref()?).abs())).fold(0.0, f64::max))
}

/// Density at the center of a normalized surface and its average on the
/// unit circle around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterRing {
    pub center: f64,
    pub ring: f64,
}

pub fn center_ring(p: &Surface, radius: f64) -> Result<CenterRing> {
    if p.axes_mode == AxesMode::Raw {
        return Err(Error::InvalidArgument("center/ring comparison needs normalized axes".into()));
    }
    let center = p.interpolate(0.0, 0.0).ok_or_else(|| Error::InvalidArgument("origin outside the surface".into()))?;
    const N: usize = 64;
    let mut ring = Vec::with_capacity(N);
    for t in 0..N {
        let a = 2.0 * std::f64::consts::PI * t as f64 / N as f64;
        let v = p
            .interpolate(radius * a.cos(), radius * a.sin())
            .ok_or_else(|| Error::InvalidArgument("ring leaves the surface".into()))?;
        ring.push(v);
    }
    Ok(CenterRing { center, ring: crate::numerics::quad::pairwise_sum(&ring) / N as f64 })
}
