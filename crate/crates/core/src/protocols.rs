//! Conditional output states and outcome densities of the three protocols.
//!
//! Outcome densities carry their exact prefactors, so they integrate to one
//! over the whole outcome plane (to the heralding probability for the raw
//! photon-subtracted density) without any box renormalization.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quad::{pairwise_sum_by, simpson_weight};
use crate::resources::{epr_wavefunction, CpgAncilla, ResourceCoeffs, ResourceFamily, ResourceSpec};
use crate::specfun::{DMatrix, FockTable};
use crate::states::{quadrature_moments, FockVector, Grid, GridWavefunction, NormTag, QuadratureMoments};

/// Densities below this are treated as unreachable outcomes.
pub const ZERO_PROBABILITY: f64 = 1e-300;
/// Largest resource truncation the adaptive extension will try.
pub const MAX_RESOURCE_K: usize = 2000;
/// Number of trailing terms inspected by the resource tail test.
const TAIL_TERMS: usize = 8;
const TAIL_TOLERANCE: f64 = 1e-18;
const FIDELITY_TAIL_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum E1Kind {
    X1,
    Y1,
}

impl E1Kind {
    pub fn label(self) -> &'static str {
        match self {
            E1Kind::X1 => "x1",
            E1Kind::Y1 => "y1",
        }
    }
}

/// One pair of homodyne results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub y_in: f64,
    pub e1: f64,
    pub e1_kind: E1Kind,
}

impl Outcome {
    pub fn x1(y_in: f64, x1: f64) -> Self {
        Outcome { y_in, e1: x1, e1_kind: E1Kind::X1 }
    }

    pub fn y1(y_in: f64, y1: f64) -> Self {
        Outcome { y_in, e1: y1, e1_kind: E1Kind::Y1 }
    }

    fn require(&self, kind: E1Kind) -> Result<()> {
        if self.e1_kind != kind {
            return Err(Error::InvalidArgument(format!(
                "outcome measures {:?} but this protocol measures {kind:?}",
                self.e1_kind
            )));
        }
        if !(self.y_in.is_finite() && self.e1.is_finite()) {
            return Err(Error::InvalidArgument("outcome values must be finite".into()));
        }
        Ok(())
    }
}

/// Post-measurement, post-correction state and the outcome density.
#[derive(Debug, Clone)]
pub struct ConditionalOutput {
    pub psi_out: GridWavefunction,
    /// Outcome density; for photon subtraction it is conditioned on the
    /// heralding event.
    pub p_density: f64,
    /// Joint density of heralding and outcome. Equals `p_density` for the
    /// deterministic protocols.
    pub p_joint: f64,
    pub warnings: Vec<String>,
}

/// Fock-basis evaluation of the two-mode-squeezed and photon-subtracted
/// protocols for one input.
#[derive(Debug, Clone)]
pub struct FockChannel {
    input: Vec<Complex64>,
    res: ResourceCoeffs,
    herald_weight: f64,
}

/// Amplitudes of one outcome: the output before correction is
/// `sum_k a_k c_k |k>` with `c_k = sum_m D_{k,m} a^in_m`.
#[derive(Debug, Clone)]
pub struct FockAmplitudes {
    pub y_in: f64,
    pub x1: f64,
    pub a: Vec<f64>,
    pub c: Vec<Complex64>,
    pub herald_weight: f64,
    pub warnings: Vec<String>,
}

impl FockAmplitudes {
    pub fn chi(&self) -> Vec<Complex64> {
        self.a.iter().zip(&self.c).map(|(a, c)| c * *a).collect()
    }

    fn chi_norm_sqr(&self) -> f64 {
        pairwise_sum_by(self.c.len(), |k| self.a[k] * self.a[k] * self.c[k].norm_sqr())
    }

    /// Joint density of heralding (if any) and the outcome.
    pub fn joint_density(&self) -> f64 {
        self.chi_norm_sqr() / (2.0 * PI)
    }

    pub fn density(&self) -> f64 {
        self.joint_density() / self.herald_weight
    }

    /// Fidelity with the input, from
    /// `<psi_in|psi_out> ∝ sum_k a_k |c_k|^2 / 2`.
    pub fn fidelity(&self) -> Option<f64> {
        let den = self.chi_norm_sqr();
        if !(den > ZERO_PROBABILITY) {
            return None;
        }
        let num = pairwise_sum_by(self.c.len(), |k| self.a[k] * self.c[k].norm_sqr());
        Some((num * num / (4.0 * den)).min(1.0))
    }

    /// Quadrature moments of the corrected output.
    pub fn output_moments(&self) -> QuadratureMoments {
        let mut m = quadrature_moments(&self.chi());
        m.mean_x += SQRT_2 * self.x1;
        m.mean_y += SQRT_2 * self.y_in;
        m
    }

    /// Corrected output on `grid`, unnormalized:
    /// `e^{2 sqrt2 i Y x} sum_k chi_k phi_k(x - sqrt2 X)`.
    pub fn output_wavefunction(&self, grid: Grid) -> Result<GridWavefunction> {
        let shift = SQRT_2 * self.x1;
        let k_max = self.c.len() - 1;
        let table = FockTable::new(k_max, grid.points().map(|x| x - shift));
        let chi = self.chi();
        let amps = (0..grid.n_points())
            .map(|i| {
                let s = pairwise_sum_by(chi.len(), |k| chi[k] * table.row(k)[i]);
                s * Complex64::from_polar(1.0, 2.0 * SQRT_2 * self.y_in * grid.x(i))
            })
            .collect();
        GridWavefunction::new(grid, amps, NormTag::Unnormalized)
    }
}

impl FockChannel {
    pub fn new(input: &FockVector, res: &ResourceCoeffs) -> Result<Self> {
        if input.coeffs.is_empty() {
            return Err(Error::InvalidArgument("empty input Fock vector".into()));
        }
        let herald_weight = res.series_weight().unwrap_or(res.total_weight);
        if !(herald_weight > 0.0) {
            return Err(Error::InvalidArgument("resource has zero weight".into()));
        }
        Ok(FockChannel { input: input.coeffs.clone(), res: res.clone(), herald_weight })
    }

    pub fn heralding_weight(&self) -> f64 {
        self.herald_weight
    }

    pub fn resource(&self) -> &ResourceCoeffs {
        &self.res
    }

    /// Amplitudes at outcome `(Y_in, X_1)`. The resource truncation is
    /// extended until the trailing terms are negligible.
    pub fn amplitudes(&self, y_in: f64, x1: f64) -> Result<FockAmplitudes> {
        let m_max = self.input.len() - 1;
        let mut res = self.res.clone();
        let mut warnings = res.warnings.clone();
        loop {
            let k_max = res.truncation();
            let d = DMatrix::new(k_max, m_max, y_in, x1);
            let c: Vec<Complex64> = (0..=k_max)
                .map(|k| {
                    let row = d.row(k);
                    pairwise_sum_by(m_max + 1, |m| row[m] * self.input[m])
                })
                .collect();
            let a = &res.coeffs;
            let chi2 = |k: usize| a[k] * a[k] * c[k].norm_sqr();
            let lin = |k: usize| a[k] * c[k].norm_sqr();
            let start = (k_max + 1).saturating_sub(TAIL_TERMS);
            let total = pairwise_sum_by(k_max + 1, chi2);
            let tail = pairwise_sum_by(k_max + 1 - start, |j| chi2(start + j));
            let total_lin = pairwise_sum_by(k_max + 1, lin);
            let tail_lin = pairwise_sum_by(k_max + 1 - start, |j| lin(start + j));
            let resolved = tail <= TAIL_TOLERANCE * total && tail_lin <= FIDELITY_TAIL_TOLERANCE * total_lin;
            if resolved || total == 0.0 {
                if !(total / (2.0 * PI) > ZERO_PROBABILITY) {
                    return Err(Error::ZeroProbability { y_in, e1: x1 });
                }
                return Ok(FockAmplitudes { y_in, x1, a: res.coeffs, c, herald_weight: self.herald_weight, warnings });
            }
            let next = (k_max + (k_max / 2).max(30)).min(MAX_RESOURCE_K);
            match res.extended(next) {
                Some(ext) if k_max < MAX_RESOURCE_K => {
                    res = ext;
                    warnings = res.warnings.clone();
                }
                _ => {
                    warnings.push(format!(
                        "resource truncation K = {k_max} leaves relative output weight {:e} at ({y_in}, {x1})",
                        tail / total
                    ));
                    return Ok(FockAmplitudes {
                        y_in,
                        x1,
                        a: res.coeffs,
                        c,
                        herald_weight: self.herald_weight,
                        warnings,
                    });
                }
            }
        }
    }

    pub fn conditional_output(&self, out: Outcome, grid: Grid) -> Result<ConditionalOutput> {
        out.require(E1Kind::X1)?;
        let amps = self.amplitudes(out.y_in, out.e1)?;
        let mut warnings = amps.warnings.clone();
        let raw = amps.output_wavefunction(grid)?;
        if raw.boundary_amplitude() / raw.norm_sqr().sqrt() > crate::states::SUPPORT_LIMIT {
            warnings.push(format!("output at ({}, {}) is not contained in the grid", out.y_in, out.e1));
        }
        Ok(ConditionalOutput {
            psi_out: raw.normalized()?,
            p_density: amps.density(),
            p_joint: amps.joint_density(),
            warnings,
        })
    }
}

fn family_label(res: &ResourceCoeffs) -> &'static str {
    match res.family {
        ResourceFamily::Epr { .. } => "two-mode squeezed",
        ResourceFamily::Ps { .. } => "photon-subtracted",
        ResourceFamily::Custom => "custom",
    }
}

/// Two-mode-squeezed protocol from the Fock-basis kernel.
pub fn teleport_original_fock(
    input: &FockVector,
    res: &ResourceCoeffs,
    out: Outcome,
    grid: Grid,
) -> Result<ConditionalOutput> {
    if matches!(res.family, ResourceFamily::Ps { .. }) {
        return Err(Error::InvalidArgument(format!(
            "expected a two-mode squeezed resource, got {}",
            family_label(res)
        )));
    }
    FockChannel::new(input, res)?.conditional_output(out, grid)
}

/// Photon-subtracted protocol. `p_density` is conditioned on heralding,
/// `p_joint` is the raw joint density.
pub fn teleport_ps(input: &FockVector, res_ps: &ResourceCoeffs, out: Outcome, grid: Grid) -> Result<ConditionalOutput> {
    if matches!(res_ps.family, ResourceFamily::Epr { .. }) {
        return Err(Error::InvalidArgument(format!(
            "expected a photon-subtracted resource, got {}",
            family_label(res_ps)
        )));
    }
    FockChannel::new(input, res_ps)?.conditional_output(out, grid)
}

/// Two-mode-squeezed protocol by direct integration against the closed-form
/// resource wavefunction. `psi_in` is integrated on its own grid; the output
/// is sampled on `grid`.
pub fn teleport_original_direct(
    psi_in: &GridWavefunction,
    q: f64,
    out: Outcome,
    grid: Grid,
) -> Result<ConditionalOutput> {
    out.require(E1Kind::X1)?;
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("q = {q} must lie in [0, 1)")));
    }
    let (y, x1) = (out.y_in, out.e1);
    let gin = psi_in.grid();
    let n_in = gin.n_points();
    let h = gin.step();
    let amps_in = psi_in.amplitudes();
    // Substituting x_in = sqrt2 u - X puts psi_in on its own nodes:
    // psi(x) = sqrt2 int du e^{2iY(sqrt2 x - sqrt2 u + X)} psi_in(u) E(u - sqrt2 X, x - sqrt2 X).
    let weighted: Vec<Complex64> = (0..n_in)
        .map(|j| {
            let u = gin.x(j);
            amps_in[j] * Complex64::from_polar(simpson_weight(j, n_in) * h / 3.0, -2.0 * SQRT_2 * y * u)
        })
        .collect();
    let active: Vec<usize> = (0..n_in).filter(|&j| weighted[j].norm() > 0.0).collect();
    let shift = SQRT_2 * x1;
    let amps: Vec<Complex64> = (0..grid.n_points())
        .map(|i| {
            let x = grid.x(i);
            let s = pairwise_sum_by(active.len(), |a| {
                let j = active[a];
                weighted[j] * epr_wavefunction(q, gin.x(j) - shift, x - shift)
            });
            s * SQRT_2 * Complex64::from_polar(1.0, 2.0 * y * (SQRT_2 * x + x1))
        })
        .collect();
    let raw = GridWavefunction::new(grid, amps, NormTag::Unnormalized)?;
    let mass = raw.norm_sqr();
    let p = mass / PI;
    if !(p > ZERO_PROBABILITY) {
        return Err(Error::ZeroProbability { y_in: y, e1: x1 });
    }
    let mut warnings = Vec::new();
    if raw.boundary_amplitude() / mass.sqrt() > crate::states::SUPPORT_LIMIT {
        warnings.push(format!("output at ({y}, {x1}) is not contained in the grid"));
    }
    Ok(ConditionalOutput { psi_out: raw.normalized()?, p_density: p, p_joint: p, warnings })
}

/// Cubic-phase protocol for one input on a fixed grid, with the
/// outcome-independent parts factored out:
///
/// `psi_out(x) ∝ B(x; Y_in) psi_2(x + Y_1/g) e^{2i(Y_in - sqrt(Y_1/(3 gamma g)))(x + Y_1/g)}`,
/// `B(x; Y_in) = int dx' e^{-2i x' Y_in} psi_s(g(x - x'); r) psi_in(x')`,
/// `P = (1/pi) int |B|^2 |psi_2(x + Y_1/g)|^2 dx`.
#[derive(Debug, Clone)]
pub struct CpgChannel {
    grid: Grid,
    psi_in: Vec<Complex64>,
    gamma: f64,
    g: f64,
    /// `psi_s(g (i h); r)` for `i = -w..=w`.
    kernel: Vec<f64>,
    /// Output nodes where `B` can be non-negligible.
    mask: std::ops::Range<usize>,
    ancilla: CpgAncilla,
}

/// Values of one outcome of the cubic-phase protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpgPoint {
    pub p_density: f64,
    pub fidelity: Option<f64>,
    pub outside: bool,
}

const ENVELOPE_CUTOFF: f64 = 1e-13;

impl CpgChannel {
    /// `e1_reach` bounds `|Y_1|` over the outcomes that will be evaluated.
    pub fn new(psi_in: &GridWavefunction, spec: &ResourceSpec, e1_reach: f64) -> Result<Self> {
        spec.validate()?;
        let ResourceSpec::Cpg { r, gamma, alpha, g } = *spec else {
            return Err(Error::InvalidArgument("expected a cubic phase resource".into()));
        };
        let grid = *psi_in.grid();
        let h = grid.step();
        let width = (745.0f64).sqrt() / (r.exp() * g.abs());
        let w = ((width / h).ceil() as usize).min(grid.n_points() - 1);
        let kernel: Vec<f64> =
            (0..=2 * w).map(|i| crate::states::squeezed_amplitude(g * (i as f64 - w as f64) * h, r)).collect();
        let amps = psi_in.amplitudes();
        let n = grid.n_points();
        let envelope: Vec<f64> = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(w);
                let hi = (i + w).min(n - 1);
                (lo..=hi).map(|j| amps[j].norm() * kernel[j + w - i]).sum::<f64>()
            })
            .collect();
        let peak = envelope.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0) {
            return Err(Error::InvalidArgument("input state vanishes on the grid".into()));
        }
        let first = envelope.iter().position(|&e| e > ENVELOPE_CUTOFF * peak).unwrap();
        let last = envelope.iter().rposition(|&e| e > ENVELOPE_CUTOFF * peak).unwrap();
        let x_reach = grid.x(first).abs().max(grid.x(last).abs()) + e1_reach.abs() / g.abs();
        Ok(CpgChannel {
            grid,
            psi_in: amps.to_vec(),
            gamma,
            g,
            kernel,
            mask: first..last + 1,
            ancilla: CpgAncilla::new(alpha, gamma, r, x_reach)?,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mask(&self) -> std::ops::Range<usize> {
        self.mask.clone()
    }

    pub fn ancilla(&self) -> &CpgAncilla {
        &self.ancilla
    }

    /// Replaces the ancilla quadrature by one of twice the density.
    pub fn with_refined_ancilla(mut self) -> Self {
        self.ancilla = self.ancilla.refined();
        self
    }

    /// `B(x; Y_in)` on the mask nodes.
    pub fn b_row(&self, y_in: f64) -> Vec<Complex64> {
        let n = self.grid.n_points();
        let h = self.grid.step();
        let w = (self.kernel.len() - 1) / 2;
        let lo = self.mask.start.saturating_sub(w);
        let hi = (self.mask.end - 1 + w).min(n - 1);
        let weighted: Vec<Complex64> = (lo..=hi)
            .map(|j| {
                self.psi_in[j] * Complex64::from_polar(simpson_weight(j, n) * h / 3.0, -2.0 * y_in * self.grid.x(j))
            })
            .collect();
        self.mask
            .clone()
            .map(|i| {
                let a = i.saturating_sub(w).max(lo);
                let b = (i + w).min(hi);
                pairwise_sum_by(b + 1 - a, |t| {
                    let j = a + t;
                    weighted[j - lo] * self.kernel[j + w - i]
                })
            })
            .collect()
    }

    /// `psi_2(x + Y_1/g)` on the mask nodes.
    pub fn psi2_row(&self, y1: f64) -> Vec<Complex64> {
        let shift = y1 / self.g;
        self.mask.clone().map(|i| self.ancilla.eval(self.grid.x(i) + shift)).collect()
    }

    /// `None` when the corrective momentum shift is undefined.
    fn momentum_correction(&self, y_in: f64, y1: f64) -> Option<f64> {
        let s = y1 / (3.0 * self.gamma * self.g);
        if s < 0.0 {
            None
        } else {
            Some(y_in - s.sqrt())
        }
    }

    fn product(&self, b: &[Complex64], p2: &[Complex64]) -> Vec<Complex64> {
        b.iter().zip(p2).map(|(b, p)| b * p).collect()
    }

    fn mask_integral<T>(&self, f: impl Fn(usize) -> T) -> T
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let n = self.grid.n_points();
        let h = self.grid.step();
        let start = self.mask.start;
        pairwise_sum_by(self.mask.len(), |t| f(t) * (simpson_weight(start + t, n) * h / 3.0))
    }

    pub fn point(&self, y_in: f64, y1: f64, b: &[Complex64], p2: &[Complex64]) -> CpgPoint {
        let prod = self.product(b, p2);
        let mass = self.mask_integral(|t| prod[t].norm_sqr());
        let p_density = mass / PI;
        let Some(k) = self.momentum_correction(y_in, y1) else {
            return CpgPoint { p_density, fidelity: None, outside: true };
        };
        if !(p_density > ZERO_PROBABILITY) {
            return CpgPoint { p_density, fidelity: None, outside: false };
        }
        let shift = y1 / self.g;
        let start = self.mask.start;
        let ov = self.mask_integral(|t| {
            let x = self.grid.x(start + t);
            (prod[t] * Complex64::from_polar(1.0, 2.0 * k * (x + shift))).conj() * self.psi_in[start + t]
        });
        CpgPoint { p_density, fidelity: Some((ov.norm_sqr() / mass).min(1.0)), outside: false }
    }

    /// Normalized corrected output on the full grid.
    pub fn output(&self, y_in: f64, y1: f64, b: &[Complex64], p2: &[Complex64]) -> Result<ConditionalOutput> {
        let pt = self.point(y_in, y1, b, p2);
        let Some(k) = self.momentum_correction(y_in, y1) else {
            return Err(Error::OutsideWorkingArea { y_in, y1, p_density: pt.p_density });
        };
        if !(pt.p_density > ZERO_PROBABILITY) {
            return Err(Error::ZeroProbability { y_in, e1: y1 });
        }
        let shift = y1 / self.g;
        let mut amps = vec![Complex64::new(0.0, 0.0); self.grid.n_points()];
        for (t, i) in self.mask.clone().enumerate() {
            amps[i] = b[t] * p2[t] * Complex64::from_polar(1.0, 2.0 * k * (self.grid.x(i) + shift));
        }
        let psi = GridWavefunction::new(self.grid, amps, NormTag::Unnormalized)?.normalized()?;
        Ok(ConditionalOutput { psi_out: psi, p_density: pt.p_density, p_joint: pt.p_density, warnings: Vec::new() })
    }
}

/// Cubic-phase protocol at one outcome. `grid` must be the grid of `psi_in`.
pub fn teleport_cpg(
    psi_in: &GridWavefunction,
    res: &ResourceSpec,
    out: Outcome,
    grid: Grid,
) -> Result<ConditionalOutput> {
    out.require(E1Kind::Y1)?;
    if *psi_in.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let ch = CpgChannel::new(psi_in, res, out.e1)?;
    let b = ch.b_row(out.y_in);
    let p2 = ch.psi2_row(out.e1);
    ch.output(out.y_in, out.e1, &b, &p2)
}

/// Mean and variance of the two outcome variables, in closed form from
/// the input moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedOutcome {
    pub mean_y_in: f64,
    pub mean_e1: f64,
    pub var_y_in: f64,
    pub var_e1: f64,
}

/// Closed-form first and second outcome moments. For the Fock-basis
/// protocols `mean_photons` is the mean photon number of each resource mode.
pub fn expected_outcome(spec: &ResourceSpec, input: &QuadratureMoments, mean_photons: f64) -> ExpectedOutcome {
    match *spec {
        ResourceSpec::Original { .. } | ResourceSpec::Ps { .. } => ExpectedOutcome {
            mean_y_in: input.mean_y / SQRT_2,
            mean_e1: input.mean_x / SQRT_2,
            var_y_in: (input.var_y + mean_photons / 2.0 + 0.25) / 2.0,
            var_e1: (input.var_x + mean_photons / 2.0 + 0.25) / 2.0,
        },
        ResourceSpec::Cpg { r, gamma, alpha, g } => {
            let sy2 = (2.0 * r).exp() / 4.0;
            let sx2 = (-2.0 * r).exp() / 4.0;
            ExpectedOutcome {
                mean_y_in: input.mean_y,
                mean_e1: g * (3.0 * gamma * (alpha * alpha + sy2) - input.mean_x),
                var_y_in: input.var_y + g * g * sy2,
                var_e1: g
                    * g
                    * (9.0 * gamma * gamma * (4.0 * alpha * alpha * sy2 + 2.0 * sy2 * sy2) + sx2 + input.var_x)
                    + sx2,
            }
        }
    }
}

/// Mean photon number per mode of a Schmidt-decomposed resource.
pub fn resource_mean_photons(res: &ResourceCoeffs) -> f64 {
    let w = res.total_weight;
    pairwise_sum_by(res.coeffs.len(), |k| k as f64 * res.coeffs[k] * res.coeffs[k]) / w
}
