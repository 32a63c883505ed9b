//! Outcome-lattice sweeps and refinement studies.
//!
//! Cells are evaluated independently and collected in lattice order, and all
//! reductions run after collection with fixed-shape pairwise sums, so the
//! result does not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{averaged_fidelity, linspace, AverageMode, AxesMode, Surface, SurfaceKind};
use crate::protocols::{expected_outcome, resource_mean_photons, CpgChannel, E1Kind, FockChannel};
use crate::resources::{ps_success_probability_direct, ResourceFamily, ResourceSpec, DEFAULT_K};
use crate::states::{fock_decompose_with_tolerance, Grid, InputSpec, QuadratureMoments, DEFAULT_TAIL_TOLERANCE};

/// Density below which a cell's fidelity is reported as absent.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
/// Largest number of levels in a refinement study.
pub const LEVEL_CAP: usize = 4;
/// Resolution of the automatic-box scouting pass.
pub const SCOUT_POINTS: usize = 61;
/// Half-width of the scouting box in predicted standard deviations.
pub const SCOUT_SIGMAS: f64 = 10.0;
/// Probability left outside the automatic box on each side of each axis.
pub const BOX_TAIL: f64 = 1e-6;
pub const DEFAULT_RESOLUTION: usize = 101;
pub const ENV_THREADS: &str = "TELEVAR_THREADS";

/// How cell evaluations are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    /// Rayon pool with the given number of threads (all cores if `None`).
    Parallel {
        threads: Option<usize>,
    },
}

impl Execution {
    /// Parallel, capped by `TELEVAR_THREADS` when it holds a positive integer.
    pub fn from_env() -> Self {
        let threads = std::env::var(ENV_THREADS).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
        Execution::Parallel { threads }
    }

    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match *self {
            Execution::Serial => (0..n).map(f).collect(),
            Execution::Parallel { threads: None } => (0..n).into_par_iter().map(f).collect(),
            Execution::Parallel { threads: Some(t) } => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
                Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
                Err(_) => (0..n).map(f).collect(),
            },
        }
    }
}

/// Uniform axis with an odd number of points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeAxis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl OutcomeAxis {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidArgument(format!("outcome axis [{min}, {max}]")));
        }
        if n < 9 || n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("outcome axis needs an odd resolution >= 9, got {n}")));
        }
        Ok(OutcomeAxis { min, max, n })
    }

    pub fn points(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.n)
    }

    pub fn refined(&self) -> Self {
        OutcomeAxis { n: 2 * self.n - 1, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeGrid {
    pub y_in: OutcomeAxis,
    pub e1: OutcomeAxis,
    pub e1_kind: E1Kind,
}

impl OutcomeGrid {
    pub fn cells(&self) -> usize {
        self.y_in.n * self.e1.n
    }

    pub fn refined(&self) -> Self {
        OutcomeGrid { y_in: self.y_in.refined(), e1: self.e1.refined(), e1_kind: self.e1_kind }
    }

    pub fn with_resolution(&self, n: usize) -> Result<Self> {
        Ok(OutcomeGrid {
            y_in: OutcomeAxis::new(self.y_in.min, self.y_in.max, n)?,
            e1: OutcomeAxis::new(self.e1.min, self.e1.max, n)?,
            e1_kind: self.e1_kind,
        })
    }
}

/// Everything needed to evaluate one protocol over an outcome lattice.
#[derive(Debug, Clone)]
pub struct SweepJob {
    pub protocol: ResourceSpec,
    pub input: InputSpec,
    /// Explicit lattice; chosen automatically when `None`.
    pub outcome_grid: Option<OutcomeGrid>,
    /// Points per axis of an automatic lattice.
    pub resolution: usize,
    pub grid: Grid,
    /// Fock truncation of the input.
    pub k_in: usize,
    /// Initial Fock truncation of the resource.
    pub k_res: usize,
    /// Number of times the cubic-phase ancilla quadrature is doubled
    /// beyond its default step.
    pub ancilla_refinements: u32,
    pub tolerance: f64,
    /// Also record the conditional output moments (Fock protocols only).
    pub with_moments: bool,
}

impl SweepJob {
    pub fn new(protocol: ResourceSpec, input: InputSpec) -> Self {
        SweepJob {
            protocol,
            input,
            outcome_grid: None,
            resolution: DEFAULT_RESOLUTION,
            grid: Grid::default(),
            k_in: DEFAULT_K,
            k_res: DEFAULT_K,
            ancilla_refinements: 0,
            tolerance: 1e-3,
            with_moments: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        if self.resolution < 9 || self.resolution.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("resolution must be odd and >= 9, got {}", self.resolution)));
        }
        if !(self.tolerance > 0.0) && self.tolerance != 0.0 {
            return Err(Error::InvalidArgument("tolerance must be >= 0".into()));
        }
        if let Some(og) = &self.outcome_grid {
            if og.e1_kind != self.e1_kind() {
                return Err(Error::InvalidArgument("outcome lattice measures the wrong quadrature".into()));
            }
        }
        Ok(())
    }

    pub fn e1_kind(&self) -> E1Kind {
        match self.protocol {
            ResourceSpec::Cpg { .. } => E1Kind::Y1,
            _ => E1Kind::X1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    BelowFloor,
    OutsideWorkingArea,
    Error(String),
}

/// Surfaces and diagnostics of one sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub outcome_grid: OutcomeGrid,
    pub fidelity: Surface,
    /// Outcome density; conditioned on heralding for photon subtraction.
    pub probability: Surface,
    pub status: Vec<CellStatus>,
    #[serde(skip)]
    pub moments: Option<Vec<Option<QuadratureMoments>>>,
    /// Integral of the outcome density over the box.
    pub mass: f64,
    /// Integral of the raw joint density (heralding included) over the box.
    pub joint_mass: f64,
    /// Heralding probability from the closed series (photon subtraction).
    pub heralding_probability: Option<f64>,
    /// The same by direct summation.
    pub heralding_probability_direct: Option<f64>,
    /// Mass on cells where the corrective shift is undefined (cubic phase).
    pub outside_mass: Option<f64>,
    pub input_moments: QuadratureMoments,
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn error_cells(&self) -> usize {
        self.status.iter().filter(|s| matches!(s, CellStatus::Error(_))).count()
    }

    pub fn count(&self, status: &CellStatus) -> usize {
        self.status.iter().filter(|s| *s == status).count()
    }

    pub fn average(&self) -> Result<f64> {
        averaged_fidelity(&self.fidelity, &self.probability, AverageMode::Weighted)
    }
}

struct Prepared {
    psi: crate::states::GridWavefunction,
    fock: crate::states::FockVector,
    moments: QuadratureMoments,
}

fn prepare(job: &SweepJob) -> Result<Prepared> {
    job.validate()?;
    let psi = job.input.wavefunction(job.grid)?;
    let (fock, moments) = match job.protocol {
        ResourceSpec::Cpg { .. } => {
            // Only the moments are needed; tolerate a larger tail.
            let f = fock_decompose_with_tolerance(&psi, job.k_in, 1.0)?;
            let m = f.quadrature_moments();
            (f, m)
        }
        _ => {
            let f = fock_decompose_with_tolerance(&psi, job.k_in, DEFAULT_TAIL_TOLERANCE)?;
            let m = f.quadrature_moments();
            (f, m)
        }
    };
    Ok(Prepared { psi, fock, moments })
}

/// Quantile bracket of a sampled density: the first and last nodes beyond
/// which at most `tail` of the mass lies.
fn quantile_bracket(axis: &[f64], density: &[f64], tail: f64) -> (f64, f64) {
    let n = axis.len();
    let h = axis[1] - axis[0];
    let mut cdf = vec![0.0; n];
    for i in 1..n {
        cdf[i] = cdf[i - 1] + 0.5 * h * (density[i - 1].max(0.0) + density[i].max(0.0));
    }
    let total = cdf[n - 1];
    let lo = cdf.iter().position(|&c| c > tail * total).unwrap_or(0).saturating_sub(1);
    let hi = cdf.iter().position(|&c| c >= (1.0 - tail) * total).map_or(n - 1, |i| (i + 1).min(n - 1));
    (axis[lo], axis[hi])
}

/// Lattice covering all but [`BOX_TAIL`] of each marginal, found from a
/// coarse pass over a box sized by the closed-form outcome moments.
pub fn auto_outcome_grid(job: &SweepJob, exec: Execution) -> Result<OutcomeGrid> {
    let prep = prepare(job)?;
    let photons = match job.protocol {
        ResourceSpec::Cpg { .. } => 0.0,
        _ => resource_mean_photons(&job.protocol.coeffs(job.k_res.max(200))?),
    };
    let e = expected_outcome(&job.protocol, &prep.moments, photons);
    let (sy, se) = (e.var_y_in.sqrt(), e.var_e1.sqrt());
    let scout = OutcomeGrid {
        y_in: OutcomeAxis::new(e.mean_y_in - SCOUT_SIGMAS * sy, e.mean_y_in + SCOUT_SIGMAS * sy, SCOUT_POINTS)?,
        e1: OutcomeAxis::new(e.mean_e1 - SCOUT_SIGMAS * se, e.mean_e1 + SCOUT_SIGMAS * se, SCOUT_POINTS)?,
        e1_kind: job.e1_kind(),
    };
    let res = evaluate(job, &prep, &scout, exec)?;
    let (y_lo, y_hi) = quantile_bracket(&res.probability.y_in_axis, &res.probability.marginal_y_in(), BOX_TAIL);
    let (e_lo, e_hi) = quantile_bracket(&res.probability.e1_axis, &res.probability.marginal_e1(), BOX_TAIL);
    Ok(OutcomeGrid {
        y_in: OutcomeAxis::new(y_lo, y_hi, job.resolution)?,
        e1: OutcomeAxis::new(e_lo, e_hi, job.resolution)?,
        e1_kind: job.e1_kind(),
    })
}

/// Evaluates the protocol on every lattice point. Per-cell failures are
/// recorded in `status` and do not abort the sweep.
pub fn sweep_surface(job: &SweepJob, exec: Execution) -> Result<SweepResult> {
    let og = match job.outcome_grid {
        Some(og) => og,
        None => auto_outcome_grid(job, exec)?,
    };
    let prep = prepare(job)?;
    evaluate(job, &prep, &og, exec)
}

struct Cell {
    p: Option<f64>,
    joint: f64,
    f: Option<f64>,
    status: CellStatus,
    moments: Option<QuadratureMoments>,
    warning: Option<String>,
}

fn evaluate(job: &SweepJob, prep: &Prepared, og: &OutcomeGrid, exec: Execution) -> Result<SweepResult> {
    let ys = og.y_in.points();
    let es = og.e1.points();
    let ne = es.len();
    let mut warnings = Vec::new();
    let mut heralding = None;
    let mut heralding_direct = None;
    let cells: Vec<Cell> = match job.protocol {
        ResourceSpec::Original { .. } | ResourceSpec::Ps { .. } => {
            let res = job.protocol.coeffs(job.k_res)?;
            if let ResourceFamily::Ps { q, r_bs } = res.family {
                heralding = res.series_weight();
                heralding_direct = Some(ps_success_probability_direct(q, r_bs));
            }
            let channel = FockChannel::new(&prep.fock, &res)?;
            exec.map(og.cells(), |c| {
                let (y, x) = (ys[c / ne], es[c % ne]);
                match channel.amplitudes(y, x) {
                    Ok(a) => {
                        let p = a.density();
                        let ok = p > PROBABILITY_FLOOR;
                        Cell {
                            p: Some(p),
                            joint: a.joint_density(),
                            f: if ok { a.fidelity() } else { None },
                            status: if ok { CellStatus::Ok } else { CellStatus::BelowFloor },
                            moments: if job.with_moments { Some(a.output_moments()) } else { None },
                            warning: a.warnings.into_iter().next(),
                        }
                    }
                    Err(Error::ZeroProbability { .. }) => Cell {
                        p: Some(0.0),
                        joint: 0.0,
                        f: None,
                        status: CellStatus::BelowFloor,
                        moments: None,
                        warning: None,
                    },
                    Err(e) => Cell {
                        p: None,
                        joint: 0.0,
                        f: None,
                        status: CellStatus::Error(e.to_string()),
                        moments: None,
                        warning: None,
                    },
                }
            })
        }
        ResourceSpec::Cpg { .. } => {
            let reach = og.e1.min.abs().max(og.e1.max.abs());
            let mut channel = CpgChannel::new(&prep.psi, &job.protocol, reach)?;
            for _ in 0..job.ancilla_refinements {
                channel = channel.with_refined_ancilla();
            }
            let far = if og.e1.max.abs() >= og.e1.min.abs() { og.e1.max } else { og.e1.min };
            let check = channel.clone().with_refined_ancilla();
            let (a, b) = (channel.psi2_row(far), check.psi2_row(far));
            let drift = a.iter().zip(&b).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            if drift > 1e-7 {
                warnings.push(format!("ancilla quadrature changes by {drift:e} under doubling at y1 = {far}"));
            }
            let b_rows = exec.map(ys.len(), |i| channel.b_row(ys[i]));
            let p2_rows = exec.map(ne, |j| channel.psi2_row(es[j]));
            exec.map(og.cells(), |c| {
                let (i, j) = (c / ne, c % ne);
                let pt = channel.point(ys[i], es[j], &b_rows[i], &p2_rows[j]);
                let status = if pt.outside {
                    CellStatus::OutsideWorkingArea
                } else if pt.p_density > PROBABILITY_FLOOR {
                    CellStatus::Ok
                } else {
                    CellStatus::BelowFloor
                };
                let f = if status == CellStatus::Ok { pt.fidelity } else { None };
                Cell { p: Some(pt.p_density), joint: pt.p_density, f, status, moments: None, warning: None }
            })
        }
    };

    let truncated = cells.iter().filter(|c| c.warning.is_some()).count();
    if let Some(w) = cells.iter().find_map(|c| c.warning.clone()) {
        warnings.push(format!("{truncated} cells flagged, first: {w}"));
    }
    let e1_kind = og.e1_kind;
    let p_values: Vec<Option<f64>> = cells.iter().map(|c| c.p).collect();
    let f_values: Vec<Option<f64>> = cells.iter().map(|c| c.f).collect();
    let probability = Surface::new(ys.clone(), es.clone(), p_values, SurfaceKind::Probability, AxesMode::Raw, e1_kind)?;
    let fidelity = Surface::new(ys, es, f_values, SurfaceKind::Fidelity, AxesMode::Raw, e1_kind)?;
    let joint_mass = probability.integrate_by(|i, j| cells[i * ne + j].joint);
    let outside_mass = match job.protocol {
        ResourceSpec::Cpg { .. } => Some(probability.integrate_by(|i, j| {
            let c = &cells[i * ne + j];
            if c.status == CellStatus::OutsideWorkingArea {
                c.p.unwrap_or(0.0)
            } else {
                0.0
            }
        })),
        _ => None,
    };
    let moments = if job.with_moments { Some(cells.iter().map(|c| c.moments).collect()) } else { None };
    let status = cells.into_iter().map(|c| c.status).collect();
    Ok(SweepResult {
        outcome_grid: *og,
        mass: probability.mass(),
        fidelity,
        probability,
        status,
        moments,
        joint_mass,
        heralding_probability: heralding,
        heralding_probability_direct: heralding_direct,
        outside_mass,
        input_moments: prep.moments,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceTarget {
    Average,
    Surface,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    DoubleGrid,
    /// Fock truncations for the Fock-basis protocols, the ancilla
    /// quadrature density for the cubic-phase protocol.
    DoubleK,
    DoubleOutcomeRes,
}

impl Refinement {
    pub const ALL: [Refinement; 3] = [Refinement::DoubleGrid, Refinement::DoubleK, Refinement::DoubleOutcomeRes];

    fn apply(self, job: &mut SweepJob) -> Result<()> {
        match self {
            Refinement::DoubleGrid => job.grid = job.grid.refined(),
            Refinement::DoubleK => match job.protocol {
                ResourceSpec::Cpg { .. } => job.ancilla_refinements += 1,
                _ => {
                    job.k_in *= 2;
                    job.k_res *= 2;
                }
            },
            Refinement::DoubleOutcomeRes => {
                let og =
                    job.outcome_grid.ok_or_else(|| Error::InvalidArgument("no outcome lattice to refine".into()))?;
                job.outcome_grid = Some(og.refined());
                job.resolution = og.refined().y_in.n;
            }
        }
        Ok(())
    }

    fn setting(self, job: &SweepJob) -> usize {
        match self {
            Refinement::DoubleGrid => job.grid.n_points(),
            Refinement::DoubleK => match job.protocol {
                ResourceSpec::Cpg { .. } => 1usize << job.ancilla_refinements,
                _ => job.k_in,
            },
            Refinement::DoubleOutcomeRes => job.outcome_grid.map_or(job.resolution, |g| g.y_in.n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLevel {
    /// Grid points, Fock truncation (or ancilla density factor), or outcome
    /// resolution, depending on the refinement.
    pub resolution: usize,
    /// Weighted averaged fidelity at this level.
    pub value: f64,
    /// Change against the previous level.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub target: ConvergenceTarget,
    pub refine: Refinement,
    pub tolerance: f64,
    pub levels: Vec<ConvergenceLevel>,
    pub converged: bool,
    pub final_delta: f64,
}

impl ConvergenceReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn final_value(&self) -> f64 {
        self.levels.last().map_or(f64::NAN, |l| l.value)
    }
}

/// Largest change of P or F between two sweeps on nested lattices.
fn surface_change(coarse: &SweepResult, fine: &SweepResult) -> f64 {
    let stride_y = (fine.outcome_grid.y_in.n - 1) / (coarse.outcome_grid.y_in.n - 1);
    let stride_e = (fine.outcome_grid.e1.n - 1) / (coarse.outcome_grid.e1.n - 1);
    let mut worst: f64 = 0.0;
    for i in 0..coarse.outcome_grid.y_in.n {
        for j in 0..coarse.outcome_grid.e1.n {
            for (a, b) in [(&coarse.probability, &fine.probability), (&coarse.fidelity, &fine.fidelity)] {
                if let (Some(u), Some(v)) = (a.get(i, j), b.get(i * stride_y, j * stride_e)) {
                    worst = worst.max((u - v).abs());
                }
            }
        }
    }
    worst
}

/// Refines `job` until the monitored quantity changes by less than
/// `job.tolerance` or [`LEVEL_CAP`] levels have run. The outcome box is
/// fixed at the first level.
pub fn converge(
    job: &SweepJob,
    target: ConvergenceTarget,
    refine: Refinement,
    exec: Execution,
) -> Result<ConvergenceReport> {
    let mut job = job.clone();
    if job.outcome_grid.is_none() {
        job.outcome_grid = Some(auto_outcome_grid(&job, exec)?);
    }
    let first = sweep_surface(&job, exec)?;
    converge_from(&job, &first, target, refine, exec)
}

/// As [`converge`], continuing from an already evaluated first level.
/// `first` must be the sweep of `job`; its lattice becomes the fixed box.
pub fn converge_from(
    job: &SweepJob,
    first: &SweepResult,
    target: ConvergenceTarget,
    refine: Refinement,
    exec: Execution,
) -> Result<ConvergenceReport> {
    let mut job = job.clone();
    job.outcome_grid = Some(first.outcome_grid);
    job.resolution = first.outcome_grid.y_in.n;
    let mut levels = vec![ConvergenceLevel { resolution: refine.setting(&job), value: first.average()?, delta: None }];
    let mut prev = first.clone();
    let mut converged = false;
    let mut final_delta = f64::INFINITY;
    for _ in 1..LEVEL_CAP {
        refine.apply(&mut job)?;
        let res = sweep_surface(&job, exec)?;
        let value = res.average()?;
        let d = match target {
            ConvergenceTarget::Average => (value - prev.average()?).abs(),
            ConvergenceTarget::Surface => surface_change(&prev, &res),
        };
        levels.push(ConvergenceLevel { resolution: refine.setting(&job), value, delta: Some(d) });
        final_delta = d;
        if d < job.tolerance {
            converged = true;
            break;
        }
        prev = res;
    }
    Ok(ConvergenceReport { target, refine, tolerance: job.tolerance, levels, converged, final_delta })
}
