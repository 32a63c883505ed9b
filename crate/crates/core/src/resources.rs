//! Entangled and ancilla resources: two-mode squeezed vacuum, its
//! photon-subtracted version, and the cubic-phase ancilla.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quad::{integrate_by, pairwise_sum_by, simpson_weight};
use crate::specfun::ln_factorial;
use crate::states::{squeezed_amplitude, Grid, GridWavefunction, NormTag};

/// Resource tail `q^{2(K+1)}` above which a truncation warning is attached.
pub const TRUNCATION_WARNING: f64 = 1e-8;

pub const DEFAULT_RESOURCE_DB: f64 = -10.0;
pub const DEFAULT_R_BS: f64 = 0.05;
pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_ALPHA: f64 = 7.0;
pub const DEFAULT_G: f64 = 3.0;
pub const DEFAULT_K: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Original,
    Ps,
    Cpg,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::Original, ProtocolKind::Ps, ProtocolKind::Cpg];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Original => "original",
            ProtocolKind::Ps => "ps",
            ProtocolKind::Cpg => "cpg",
        }
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "original" | "orig" => Ok(ProtocolKind::Original),
            "ps" => Ok(ProtocolKind::Ps),
            "cpg" => Ok(ProtocolKind::Cpg),
            other => Err(Error::Parse(format!("unknown protocol {other:?}"))),
        }
    }
}

/// Protocol family and its physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "lowercase", deny_unknown_fields)]
pub enum ResourceSpec {
    Original { r: f64 },
    Ps { r: f64, r_bs: f64 },
    Cpg { r: f64, gamma: f64, alpha: f64, g: f64 },
}

impl ResourceSpec {
    /// Default parameters: -10 dB resource squeezing, `r_bs = 0.05`,
    /// `gamma = 0.1`, `alpha = 7`, `g = 3`.
    pub fn reference(kind: ProtocolKind) -> Self {
        let r = crate::states::db_to_r(DEFAULT_RESOURCE_DB);
        match kind {
            ProtocolKind::Original => ResourceSpec::Original { r },
            ProtocolKind::Ps => ResourceSpec::Ps { r, r_bs: DEFAULT_R_BS },
            ProtocolKind::Cpg => ResourceSpec::Cpg { r, gamma: DEFAULT_GAMMA, alpha: DEFAULT_ALPHA, g: DEFAULT_G },
        }
    }

    pub fn kind(&self) -> ProtocolKind {
        match self {
            ResourceSpec::Original { .. } => ProtocolKind::Original,
            ResourceSpec::Ps { .. } => ProtocolKind::Ps,
            ResourceSpec::Cpg { .. } => ProtocolKind::Cpg,
        }
    }

    pub fn r(&self) -> f64 {
        match *self {
            ResourceSpec::Original { r } | ResourceSpec::Ps { r, .. } | ResourceSpec::Cpg { r, .. } => r,
        }
    }

    pub fn q(&self) -> f64 {
        self.r().tanh()
    }

    pub fn with_r(self, r: f64) -> Self {
        match self {
            ResourceSpec::Original { .. } => ResourceSpec::Original { r },
            ResourceSpec::Ps { r_bs, .. } => ResourceSpec::Ps { r, r_bs },
            ResourceSpec::Cpg { gamma, alpha, g, .. } => ResourceSpec::Cpg { r, gamma, alpha, g },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        match *self {
            ResourceSpec::Original { r } => {
                if !(r >= 0.0 && r.is_finite()) {
                    return bad("resource squeezing r must be finite and >= 0");
                }
            }
            ResourceSpec::Ps { r, r_bs } => {
                if !(r > 0.0 && r.is_finite()) {
                    return bad("photon subtraction needs a squeezed resource, r > 0");
                }
                if !(r_bs > 0.0 && r_bs < 1.0) {
                    return bad("beam-splitter reflection r_bs must lie in (0, 1)");
                }
            }
            ResourceSpec::Cpg { r, gamma, alpha, g } => {
                if !(r.is_finite() && r > 0.0) {
                    return bad("resource squeezing r must be finite and > 0");
                }
                if !(gamma.is_finite() && gamma != 0.0) {
                    return bad("cubic nonlinearity gamma must be finite and nonzero");
                }
                if !(g.is_finite() && g != 0.0) {
                    return bad("CZ weight g must be finite and nonzero");
                }
                if !alpha.is_finite() {
                    return bad("displacement alpha must be finite");
                }
            }
        }
        Ok(())
    }

    /// Fock coefficients of the two-mode resource (not defined for the cubic
    /// phase scheme, which does not use a Schmidt decomposition).
    pub fn coeffs(&self, k: usize) -> Result<ResourceCoeffs> {
        self.validate()?;
        match *self {
            ResourceSpec::Original { r } => epr_coeffs(r.tanh(), k),
            ResourceSpec::Ps { r, r_bs } => ps_coeffs(r.tanh(), r_bs, k),
            ResourceSpec::Cpg { .. } => {
                Err(Error::InvalidArgument("the cubic phase resource has no Schmidt coefficients".into()))
            }
        }
    }
}

/// Closed form that generated a coefficient vector, so it can be regenerated
/// at a larger truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ResourceFamily {
    Epr { q: f64 },
    Ps { q: f64, r_bs: f64 },
    Custom,
}

/// Schmidt coefficients `a_0 ..= a_K` of a two-mode resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceCoeffs {
    pub coeffs: Vec<f64>,
    /// `sum a_k^2`.
    pub total_weight: f64,
    pub family: ResourceFamily,
    pub warnings: Vec<String>,
}

impl ResourceCoeffs {
    /// Arbitrary nonnegative coefficients; these cannot be extended.
    pub fn custom(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidArgument("resource coefficients must be finite and >= 0".into()));
        }
        let total_weight = pairwise_sum_by(coeffs.len(), |k| coeffs[k] * coeffs[k]);
        if total_weight > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!("resource weight {total_weight} exceeds one")));
        }
        Ok(ResourceCoeffs { coeffs, total_weight, family: ResourceFamily::Custom, warnings: Vec::new() })
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Weight of the untruncated series, when known in closed form.
    pub fn series_weight(&self) -> Option<f64> {
        match self.family {
            ResourceFamily::Epr { .. } => Some(1.0),
            ResourceFamily::Ps { q, r_bs } => Some(ps_success_probability_series(q, r_bs)),
            ResourceFamily::Custom => None,
        }
    }

    /// The same resource truncated at `k`; `None` for custom coefficients.
    pub fn extended(&self, k: usize) -> Option<ResourceCoeffs> {
        match self.family {
            ResourceFamily::Epr { q } => epr_coeffs(q, k).ok(),
            ResourceFamily::Ps { q, r_bs } => ps_coeffs(q, r_bs, k).ok(),
            ResourceFamily::Custom => None,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,a_k")?;
        for (k, a) in self.coeffs.iter().enumerate() {
            writeln!(w, "{k},{a:.16e}")?;
        }
        Ok(())
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("q = {q} must lie in [0, 1)")));
    }
    Ok(())
}

/// Two-mode squeezed vacuum, `a_k = sqrt(1 - q^2) q^k`.
pub fn epr_coeffs(q: f64, k: usize) -> Result<ResourceCoeffs> {
    check_q(q)?;
    let a0 = (1.0 - q * q).sqrt();
    let mut coeffs = Vec::with_capacity(k + 1);
    let mut a = a0;
    for _ in 0..=k {
        coeffs.push(a);
        a *= q;
    }
    let tail = q.powi(2 * (k as i32 + 1));
    let mut warnings = Vec::new();
    if tail > TRUNCATION_WARNING {
        warnings.push(format!("two-mode squeezed resource truncated at K = {k} leaves weight {tail:e}"));
    }
    Ok(ResourceCoeffs { coeffs, total_weight: 1.0 - tail, family: ResourceFamily::Epr { q }, warnings })
}

/// Closed-form two-mode squeezed vacuum wavefunction.
pub fn epr_wavefunction(q: f64, x1: f64, x2: f64) -> f64 {
    let r = q.atanh();
    let (s, p) = (x1 + x2, x1 - x2);
    (2.0 / PI).sqrt() * (-(-2.0 * r).exp() * s * s / 2.0 - (2.0 * r).exp() * p * p / 2.0).exp()
}

/// Photon-subtracted resource,
/// `a_k = sqrt(1 - q^2) (k+1) r_bs^2 (1 - r_bs^2)^k q^{k+1}`. The weight is
/// the heralding probability and is left unnormalized.
pub fn ps_coeffs(q: f64, r_bs: f64, k: usize) -> Result<ResourceCoeffs> {
    check_q(q)?;
    if !(r_bs > 0.0 && r_bs < 1.0) {
        return Err(Error::InvalidArgument(format!("r_bs = {r_bs} must lie in (0, 1)")));
    }
    let t2 = 1.0 - r_bs * r_bs;
    let base = (1.0 - q * q).sqrt() * r_bs * r_bs * q;
    let mut coeffs = Vec::with_capacity(k + 1);
    let mut geometric = 1.0;
    for j in 0..=k {
        coeffs.push(base * (j + 1) as f64 * geometric);
        geometric *= t2 * q;
    }
    let total_weight = pairwise_sum_by(coeffs.len(), |j| coeffs[j] * coeffs[j]);
    let mut warnings = Vec::new();
    let series = ps_success_probability_series(q, r_bs);
    if series > 0.0 {
        let tail = (series - total_weight).max(0.0) / series;
        if tail > TRUNCATION_WARNING {
            warnings.push(format!("photon-subtracted resource truncated at K = {k} leaves relative weight {tail:e}"));
        }
    }
    Ok(ResourceCoeffs { coeffs, total_weight, family: ResourceFamily::Ps { q, r_bs }, warnings })
}

/// Heralding probability from `sum (k+1)^2 u^k = (1+u)/(1-u)^3`,
/// `u = (1 - r_bs^2)^2 q^2`.
pub fn ps_success_probability_series(q: f64, r_bs: f64) -> f64 {
    let u = (1.0 - r_bs * r_bs).powi(2) * q * q;
    (1.0 - q * q) * r_bs.powi(4) * q * q * (1.0 + u) / (1.0 - u).powi(3)
}

/// Heralding probability by direct summation of `a_k^2`, carried until the
/// terms no longer change the sum.
pub fn ps_success_probability_direct(q: f64, r_bs: f64) -> f64 {
    let u = (1.0 - r_bs * r_bs).powi(2) * q * q;
    let mut k = 0usize;
    while k < 100_000 && ((k + 1) as f64).powi(2) * u.powi(k as i32) > 1e-20 {
        k += 1;
    }
    let scale = (1.0 - q * q) * r_bs.powi(4) * q * q;
    scale * pairwise_sum_by(k + 1, |j| ((j + 1) as f64).powi(2) * u.powi(j as i32))
}

/// Amplitude of `|k + n> -> |k>` when `n` photons are reflected off a beam
/// splitter with amplitude reflectance `r_bs`; `k` is the photon number left
/// in the transmitted beam.
pub fn ps_fock_transform(k: usize, n: usize, r_bs: f64) -> f64 {
    let t = (1.0 - r_bs * r_bs).sqrt();
    let ln_binom = 0.5 * (ln_factorial(k + n) - ln_factorial(k) - ln_factorial(n));
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * ln_binom.exp() * r_bs.powi(n as i32) * t.powi(k as i32)
}

/// Second-oscillator wavefunction of the cubic-phase scheme,
/// `(1/sqrt(pi)) int dy e^{2iy(x - gamma y^2)} psi_s(y - alpha; -r)`, with a
/// reusable y-quadrature.
#[derive(Debug, Clone)]
pub struct CpgAncilla {
    pub alpha: f64,
    pub gamma: f64,
    pub r: f64,
    y0: f64,
    hy: f64,
    /// Simpson weight times the non-oscillating part of the integrand.
    base: Vec<Complex64>,
}

const REANCHOR: usize = 256;

impl CpgAncilla {
    /// Builds the y-grid for evaluation points with `|x| <= x_reach`.
    pub fn new(alpha: f64, gamma: f64, r: f64, x_reach: f64) -> Result<Self> {
        if !(alpha.is_finite() && gamma.is_finite() && r.is_finite() && x_reach.is_finite()) {
            return Err(Error::InvalidArgument("cubic phase ancilla parameters must be finite".into()));
        }
        let half = Self::half_width(r);
        let y_max = alpha.abs() + half;
        let dy = PI / (2.0 * (x_reach.abs() + 3.0 * gamma.abs() * y_max * y_max)) / 4.0;
        let mut n = (2.0 * half / dy).ceil() as usize + 1;
        if n.is_multiple_of(2) {
            n += 1;
        }
        Ok(Self::with_points(alpha, gamma, r, n.max(17)))
    }

    /// Half-width of the y-range: the envelope `psi_s(y - alpha; -r)` has
    /// fallen to `e^{-36}` of its peak there.
    fn half_width(r: f64) -> f64 {
        6.0 * r.exp()
    }

    fn with_points(alpha: f64, gamma: f64, r: f64, n: usize) -> Self {
        let half = Self::half_width(r);
        let y0 = alpha - half;
        let hy = 2.0 * half / (n - 1) as f64;
        let norm = hy / 3.0 / PI.sqrt();
        let base = (0..n)
            .map(|j| {
                let y = y0 + j as f64 * hy;
                let envelope = squeezed_amplitude(y - alpha, -r) * simpson_weight(j, n) * norm;
                Complex64::from_polar(envelope, -2.0 * gamma * y * y * y)
            })
            .collect();
        CpgAncilla { alpha, gamma, r, y0, hy, base }
    }

    /// Same integral on a y-grid of twice the density.
    pub fn refined(&self) -> Self {
        Self::with_points(self.alpha, self.gamma, self.r, 2 * self.base.len() - 1)
    }

    pub fn y_points(&self) -> usize {
        self.base.len()
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let step = Complex64::from_polar(1.0, 2.0 * x * self.hy);
        let mut blocks = Vec::with_capacity(self.base.len() / REANCHOR + 1);
        for start in (0..self.base.len()).step_by(REANCHOR) {
            let end = (start + REANCHOR).min(self.base.len());
            let mut phase = Complex64::from_polar(1.0, 2.0 * x * (self.y0 + start as f64 * self.hy));
            let mut acc = Complex64::new(0.0, 0.0);
            for b in &self.base[start..end] {
                acc += b * phase;
                phase *= step;
            }
            blocks.push(acc);
        }
        pairwise_sum_by(blocks.len(), |i| blocks[i])
    }
}

/// Tolerance on the L2 change under y-grid doubling in [`cpg_psi2`].
pub const CPG_PSI2_TOLERANCE: f64 = 1e-7;

/// Second-oscillator wavefunction on `grid`, checked by doubling the
/// y-quadrature and normalized.
pub fn cpg_psi2(alpha: f64, gamma: f64, r: f64, grid: Grid) -> Result<GridWavefunction> {
    let reach = grid.x_min().abs().max(grid.x_max().abs());
    let anc = CpgAncilla::new(alpha, gamma, r, reach)?;
    let fine = anc.refined();
    let coarse: Vec<Complex64> = grid.points().map(|x| anc.eval(x)).collect();
    let finer: Vec<Complex64> = grid.points().map(|x| fine.eval(x)).collect();
    let delta = integrate_by(coarse.len(), grid.step(), |i| (coarse[i] - finer[i]).norm_sqr())?.sqrt();
    if !(delta < CPG_PSI2_TOLERANCE) {
        return Err(Error::NotConverged { delta, tolerance: CPG_PSI2_TOLERANCE });
    }
    let psi = GridWavefunction::new(grid, finer, NormTag::Unnormalized)?;
    let norm = psi.norm_sqr();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::GridSupport { amplitude: psi.boundary_amplitude(), limit: crate::states::SUPPORT_LIMIT });
    }
    psi.normalized()
}
