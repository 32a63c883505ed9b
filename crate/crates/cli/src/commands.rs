//! The `surface`, `average` and `check` subcommands.

use std::fs;

use serde::Serialize;

use televar::metrics::{
    averaged_fidelity, ensemble_moments, expected_added_noise, normalize_axes, outcome_moments, AverageMode,
    NormalizeMode, OutcomeMoments, MASS_TOLERANCE,
};
use televar::numerics::sweep::{
    converge_from, sweep_surface, CellStatus, ConvergenceReport, ConvergenceTarget, Execution, OutcomeGrid, SweepJob,
    SweepResult,
};
use televar::protocols::{expected_outcome, teleport_original_direct, teleport_original_fock, Outcome};
use televar::resources::{
    epr_coeffs, epr_wavefunction, ps_success_probability_direct, ps_success_probability_series, ProtocolKind,
};
use televar::specfun::fock_wavefunction;
use televar::states::{db_to_r, fock_decompose_with_tolerance, l2_distance, InputSpec, QuadratureMoments};
use televar::{Grid, ResourceSpec};

use crate::config::{parse_input, ConfigError, RunConfig, REFERENCE_INPUTS};
use crate::emit;

/// Heralding probability commonly quoted for the reference photon
/// subtraction settings.
pub const QUOTED_HERALDING: f64 = 0.04;

pub enum Status {
    Ok,
    NotConverged,
    OracleFailed,
}

pub enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<televar::Error> for Failure {
    fn from(e: televar::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

#[derive(Serialize)]
struct Heralding {
    series: f64,
    direct: f64,
    relative_difference: f64,
    quoted: f64,
    ratio_to_quoted: f64,
    agrees_with_quoted: bool,
}

impl Heralding {
    fn from_sweep(res: &SweepResult) -> Option<Heralding> {
        let (series, direct) = (res.heralding_probability?, res.heralding_probability_direct?);
        let ratio = series / QUOTED_HERALDING;
        Some(Heralding {
            series,
            direct,
            relative_difference: (series - direct).abs() / series,
            quoted: QUOTED_HERALDING,
            ratio_to_quoted: ratio,
            agrees_with_quoted: (ratio - 1.0).abs() < 0.25,
        })
    }
}

#[derive(Serialize)]
struct Completeness {
    /// Mass of the (heralded) outcome density over the box.
    mass: f64,
    /// Mass of the unconditioned joint density, heralding included.
    joint_mass: f64,
    outside_working_area_mass: Option<f64>,
    within_tolerance: bool,
}

#[derive(Serialize)]
struct Cells {
    total: usize,
    ok: usize,
    below_floor: usize,
    outside_working_area: usize,
    error: usize,
}

#[derive(Serialize)]
struct Averages {
    weighted: f64,
    literal: Option<f64>,
}

#[derive(Serialize)]
struct SurfaceMeta<'a> {
    command: &'static str,
    protocol: ResourceSpec,
    resource_db: f64,
    input: &'a str,
    grid: Grid,
    k: usize,
    resolution: usize,
    tolerance: f64,
    axes: NormalizeMode,
    average_mode: AverageMode,
    outcome_grid: OutcomeGrid,
    input_moments: QuadratureMoments,
    outcome_moments: OutcomeMoments,
    averaged_fidelity: Averages,
    completeness: Completeness,
    heralding_probability: Option<Heralding>,
    cells: Cells,
    convergence: Option<ConvergenceReport>,
    warnings: Vec<String>,
}

fn completeness(res: &SweepResult) -> Completeness {
    Completeness {
        mass: res.mass,
        joint_mass: res.joint_mass,
        outside_working_area_mass: res.outside_mass,
        within_tolerance: (res.mass - 1.0).abs() <= MASS_TOLERANCE,
    }
}

fn cells(res: &SweepResult) -> Cells {
    Cells {
        total: res.status.len(),
        ok: res.count(&CellStatus::Ok),
        below_floor: res.count(&CellStatus::BelowFloor),
        outside_working_area: res.count(&CellStatus::OutsideWorkingArea),
        error: res.error_cells(),
    }
}

struct Evaluated {
    job: SweepJob,
    res: SweepResult,
    literal: Option<f64>,
    weighted: f64,
    convergence: Option<ConvergenceReport>,
}

fn evaluate(cfg: &RunConfig, job: SweepJob, exec: Execution) -> Result<Evaluated, Failure> {
    let res = sweep_surface(&job, exec)?;
    let weighted = res.average()?;
    let literal = match cfg.average {
        AverageMode::Literal => {
            let m = outcome_moments(&res.probability)?;
            let f = normalize_axes(&res.fidelity, &m, cfg.axes)?;
            let p = normalize_axes(&res.probability, &m, cfg.axes)?;
            Some(averaged_fidelity(&f, &p, AverageMode::Literal)?)
        }
        AverageMode::Weighted => None,
    };
    let convergence = match cfg.refine {
        Some(refine) => Some(converge_from(&job, &res, ConvergenceTarget::Average, refine, exec)?),
        None => None,
    };
    Ok(Evaluated { job, res, literal, weighted, convergence })
}

fn converged(e: &Evaluated) -> bool {
    e.convergence.as_ref().is_none_or(|c| c.converged)
}

pub fn surface(cfg: &RunConfig) -> Result<Status, Failure> {
    let exec = Execution::from_env();
    let ev = evaluate(cfg, cfg.job(cfg.protocol, cfg.input.clone()), exec)?;
    let res = &ev.res;
    let moments = outcome_moments(&res.probability)?;
    let p_norm = normalize_axes(&res.probability, &moments, cfg.axes)?;
    let f_norm = normalize_axes(&res.fidelity, &moments, cfg.axes)?;
    let sfx = if cfg.axes == NormalizeMode::Std { "p_std" } else { "p_var" };

    let meta = SurfaceMeta {
        command: "surface",
        protocol: ev.job.protocol,
        resource_db: cfg.resource_db,
        input: &cfg.input_label,
        grid: cfg.grid,
        k: cfg.k,
        resolution: cfg.resolution,
        tolerance: cfg.tolerance,
        axes: cfg.axes,
        average_mode: cfg.average,
        outcome_grid: res.outcome_grid,
        input_moments: res.input_moments,
        outcome_moments: moments,
        averaged_fidelity: Averages { weighted: ev.weighted, literal: ev.literal },
        completeness: completeness(res),
        heralding_probability: Heralding::from_sweep(res),
        cells: cells(res),
        convergence: ev.convergence.clone(),
        warnings: res.warnings.clone(),
    };

    fs::create_dir_all(&cfg.out)?;
    let p_csv = emit::surface_csv(&res.probability, &p_norm, &[("p", &res.probability), (sfx, &p_norm)], cfg.axes);
    emit::write(&cfg.out, "P.csv", &p_csv)?;
    let f_csv = emit::surface_csv(&res.fidelity, &f_norm, &[("f", &res.fidelity)], cfg.axes);
    emit::write(&cfg.out, "F.csv", &f_csv)?;
    emit::write(&cfg.out, "meta.json", &emit::json(&meta))?;
    let title = format!("{} protocol, {} input", cfg.protocol.name(), cfg.input_label);
    emit::write(&cfg.out, "plot.gp", &emit::surface_plot(&title, res.probability.e1_kind.label(), cfg.axes))?;

    println!("{title}: weighted <F> = {:.6}, mass = {:.6}", ev.weighted, res.mass);
    if let Some(l) = ev.literal {
        println!("literal <F> = {l:.6}");
    }
    if let Some(h) = &meta.heralding_probability {
        println!(
            "heralding probability {:.6e} (quoted {:.0}%; ratio {:.2e})",
            h.series,
            100.0 * h.quoted,
            h.ratio_to_quoted
        );
    }
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote P.csv, F.csv, meta.json, plot.gp to {}", cfg.out.display());
    Ok(if converged(&ev) { Status::Ok } else { report_unconverged(&[&ev]) })
}

fn report_unconverged(evs: &[&Evaluated]) -> Status {
    for ev in evs.iter().filter(|e| !converged(e)) {
        let c = ev.convergence.as_ref().unwrap();
        eprintln!(
            "not converged: {} / {}: last change {:.3e} under {:?} (tolerance {:e})",
            ev.job.protocol.kind().name(),
            ev.job.input.label(),
            c.final_delta,
            c.refine,
            c.tolerance
        );
    }
    Status::NotConverged
}

#[derive(Serialize)]
struct AverageEntry {
    protocol: &'static str,
    input: String,
    weighted: f64,
    literal: Option<f64>,
    mass: f64,
    joint_mass: f64,
    outside_working_area_mass: Option<f64>,
    heralding_probability: Option<Heralding>,
    outcome_grid: OutcomeGrid,
    convergence: Option<ConvergenceReport>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct Matrix {
    inputs: Vec<String>,
    protocols: Vec<&'static str>,
    /// `weighted[input][protocol]`.
    weighted: Vec<Vec<Option<f64>>>,
    literal: Option<Vec<Vec<Option<f64>>>>,
}

#[derive(Serialize)]
struct AverageDoc {
    command: &'static str,
    average_mode: AverageMode,
    axes: NormalizeMode,
    resource_db: f64,
    r_bs: f64,
    gamma: f64,
    alpha: f64,
    g: f64,
    grid: Grid,
    k: usize,
    resolution: usize,
    tolerance: f64,
    entries: Vec<AverageEntry>,
    matrix: Matrix,
}

pub fn average(cfg: &RunConfig, all: bool) -> Result<Status, Failure> {
    let cases: Vec<(ProtocolKind, String, InputSpec)> = if all {
        for kind in ProtocolKind::ALL {
            cfg.validate_protocol(kind)?;
        }
        let mut v = Vec::new();
        for label in REFERENCE_INPUTS {
            let input = parse_input(label)?;
            for kind in ProtocolKind::ALL {
                v.push((kind, label.to_string(), input.clone()));
            }
        }
        v
    } else {
        vec![(cfg.protocol, cfg.input_label.clone(), cfg.input.clone())]
    };

    let exec = Execution::from_env();
    let mut evs = Vec::new();
    for (kind, label, input) in &cases {
        let ev = evaluate(cfg, cfg.job(*kind, input.clone()), exec)?;
        print!("{:<9} {:<14} weighted <F> = {:.6}", kind.name(), label, ev.weighted);
        if let Some(l) = ev.literal {
            print!("  literal <F> = {l:.6}");
        }
        println!();
        evs.push(ev);
    }

    let mut inputs: Vec<String> = Vec::new();
    let mut protocols: Vec<&'static str> = Vec::new();
    for (kind, label, _) in &cases {
        if !inputs.contains(label) {
            inputs.push(label.clone());
        }
        if !protocols.contains(&kind.name()) {
            protocols.push(kind.name());
        }
    }
    let cell = |pick: &dyn Fn(&Evaluated) -> Option<f64>| -> Vec<Vec<Option<f64>>> {
        inputs
            .iter()
            .map(|i| {
                protocols
                    .iter()
                    .map(|p| {
                        cases
                            .iter()
                            .zip(&evs)
                            .find(|((k, l, _), _)| l == i && k.name() == *p)
                            .and_then(|(_, e)| pick(e))
                    })
                    .collect()
            })
            .collect()
    };
    let weighted = cell(&|e| Some(e.weighted));
    let literal = (cfg.average == AverageMode::Literal).then(|| cell(&|e| e.literal));

    let (bar_label, bar_values) = match &literal {
        Some(l) => ("literal", l.clone()),
        None => ("weighted", weighted.clone()),
    };
    let rows: Vec<(String, Vec<Option<f64>>)> = inputs.iter().cloned().zip(bar_values).collect();
    let bars = emit::bars_plot(bar_label, &protocols, &rows);

    let entries = cases
        .iter()
        .zip(&evs)
        .map(|((kind, label, _), e)| AverageEntry {
            protocol: kind.name(),
            input: label.clone(),
            weighted: e.weighted,
            literal: e.literal,
            mass: e.res.mass,
            joint_mass: e.res.joint_mass,
            outside_working_area_mass: e.res.outside_mass,
            heralding_probability: Heralding::from_sweep(&e.res),
            outcome_grid: e.res.outcome_grid,
            convergence: e.convergence.clone(),
            warnings: e.res.warnings.clone(),
        })
        .collect();
    let doc = AverageDoc {
        command: "average",
        average_mode: cfg.average,
        axes: cfg.axes,
        resource_db: cfg.resource_db,
        r_bs: cfg.r_bs,
        gamma: cfg.gamma,
        alpha: cfg.alpha,
        g: cfg.g,
        grid: cfg.grid,
        k: cfg.k,
        resolution: cfg.resolution,
        tolerance: cfg.tolerance,
        entries,
        matrix: Matrix { inputs, protocols, weighted, literal },
    };
    fs::create_dir_all(&cfg.out)?;
    emit::write(&cfg.out, "avg.json", &emit::json(&doc))?;
    emit::write(&cfg.out, "bars.gp", &bars)?;
    println!("wrote avg.json, bars.gp to {}", cfg.out.display());

    let refs: Vec<&Evaluated> = evs.iter().collect();
    Ok(if refs.iter().all(|e| converged(e)) { Status::Ok } else { report_unconverged(&refs) })
}

pub const ORACLES: [&str; 4] = ["dual-path", "completeness", "moment-oracle", "resource-agreement"];

struct OracleResult {
    pass: bool,
    detail: String,
}

fn oracle(pass: bool, detail: String) -> OracleResult {
    OracleResult { pass, detail }
}

/// Fock-sum and direct-integral routes of the two-mode-squeezed protocol
/// at 25 outcomes spread over three standard deviations of the mean.
fn dual_path(cfg: &RunConfig) -> Result<OracleResult, Failure> {
    let grid = cfg.grid;
    let psi = cfg.input.wavefunction(grid)?;
    let fock = fock_decompose_with_tolerance(&psi, cfg.k, 1.0)?;
    let r = db_to_r(cfg.resource_db);
    let q = r.tanh();
    let res = epr_coeffs(q, cfg.k)?;
    let e = expected_outcome(&ResourceSpec::Original { r }, &fock.quadrature_moments(), r.sinh().powi(2));
    let (sy, sx) = (e.var_y_in.sqrt(), e.var_e1.sqrt());
    let offsets = [-2.7, -1.4, 0.1, 1.3, 2.9];
    let mut worst: f64 = 0.0;
    for dy in offsets {
        for dx in offsets {
            let (y, x) = (e.mean_y_in + sy * dy, e.mean_e1 + sx * dx);
            let a = teleport_original_fock(&fock, &res, Outcome::x1(y, x), grid)?;
            let b = teleport_original_direct(&psi, q, Outcome::x1(y, x), grid)?;
            let d = l2_distance(&a.psi_out, &b.psi_out)?;
            worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
        }
    }
    Ok(oracle(worst < 1e-6, format!("max L2 distance {worst:.3e} over 25 outcomes (< 1e-6)")))
}

struct Sweeps {
    original: SweepResult,
    ps: SweepResult,
    cpg: SweepResult,
}

fn completeness_oracle(s: &Sweeps) -> OracleResult {
    let herald = s.ps.heralding_probability.unwrap_or(f64::NAN);
    let rel = (s.ps.joint_mass - herald).abs() / herald;
    let pass = (s.original.mass - 1.0).abs() <= 1e-3 && (s.cpg.mass - 1.0).abs() <= 1e-3 && rel <= 1e-3;
    oracle(
        pass,
        format!(
            "original mass {:.6}, cpg mass {:.6} (outside {:.2e}), ps raw mass {:.6e} vs series {herald:.6e} (rel {rel:.1e})",
            s.original.mass,
            s.cpg.mass,
            s.cpg.outside_mass.unwrap_or(0.0),
            s.ps.joint_mass
        ),
    )
}

fn moment_oracle(cfg: &RunConfig, s: &Sweeps) -> Result<OracleResult, Failure> {
    let cells = s.original.moments.as_ref().ok_or_else(|| Failure::Runtime("moments were not recorded".into()))?;
    let ens = ensemble_moments(&s.original.probability, cells)?;
    let noise = expected_added_noise(db_to_r(cfg.resource_db));
    let ax = ens.var_x - s.original.input_moments.var_x;
    let ay = ens.var_y - s.original.input_moments.var_y;
    let (ex, ey) = ((ax / noise - 1.0).abs(), (ay / noise - 1.0).abs());
    Ok(oracle(
        ex < 0.01 && ey < 0.01,
        format!("added noise x {ax:.6}, y {ay:.6}; expected {noise:.6} (rel {ex:.1e}, {ey:.1e}; < 1%)"),
    ))
}

/// Fock sum of the two-mode squeezed vacuum against its closed form, and
/// the heralding probability by series and by summation.
fn resource_agreement(cfg: &RunConfig) -> Result<OracleResult, Failure> {
    let q = db_to_r(cfg.resource_db).tanh();
    let k = if q > 0.0 { ((1e-12f64).ln() / q.ln()).ceil() as usize } else { 1 };
    let c = epr_coeffs(q, k)?;
    let mut worst: f64 = 0.0;
    for i in 0..=32 {
        for j in 0..=32 {
            let (x1, x2) = (-4.0 + 0.25 * i as f64, -4.0 + 0.25 * j as f64);
            let sum: f64 =
                c.coeffs.iter().enumerate().map(|(n, a)| a * fock_wavefunction(n, x1) * fock_wavefunction(n, x2)).sum();
            worst = worst.max((sum - epr_wavefunction(q, x1, x2)).abs());
        }
    }
    let series = ps_success_probability_series(q, cfg.r_bs);
    let direct = ps_success_probability_direct(q, cfg.r_bs);
    let rel = (series - direct).abs() / series;
    Ok(oracle(
        worst < 1e-9 && rel < 1e-10,
        format!("resource Fock sum (K={k}) vs closed form {worst:.2e} (< 1e-9); heralding series vs sum rel {rel:.1e} (< 1e-10)"),
    ))
}

pub fn check_list() -> Result<Status, Failure> {
    for name in ORACLES {
        println!("{name}");
    }
    Ok(Status::Ok)
}

pub fn check(cfg: &RunConfig) -> Result<Status, Failure> {
    for kind in ProtocolKind::ALL {
        cfg.validate_protocol(kind)?;
    }
    let exec = Execution::from_env();
    let mut results: Vec<(&str, OracleResult)> = Vec::new();
    let failed = |e: Failure| match e {
        Failure::Config(m) | Failure::Runtime(m) => oracle(false, format!("error: {m}")),
    };
    results.push(("dual-path", dual_path(cfg).unwrap_or_else(failed)));

    let sweeps = (|| -> Result<Sweeps, Failure> {
        let mut original = cfg.job(ProtocolKind::Original, cfg.input.clone());
        original.with_moments = true;
        Ok(Sweeps {
            original: sweep_surface(&original, exec)?,
            ps: sweep_surface(&cfg.job(ProtocolKind::Ps, cfg.input.clone()), exec)?,
            cpg: sweep_surface(&cfg.job(ProtocolKind::Cpg, cfg.input.clone()), exec)?,
        })
    })();
    match sweeps {
        Ok(s) => {
            results.push(("completeness", completeness_oracle(&s)));
            results.push(("moment-oracle", moment_oracle(cfg, &s).unwrap_or_else(failed)));
        }
        Err(Failure::Config(m) | Failure::Runtime(m)) => {
            results.push(("completeness", oracle(false, format!("error: {m}"))));
            results.push(("moment-oracle", oracle(false, format!("error: {m}"))));
        }
    }
    results.push(("resource-agreement", resource_agreement(cfg).unwrap_or_else(failed)));

    for (name, r) in &results {
        println!("{} {name:<19} {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
    }
    Ok(if results.iter().all(|(_, r)| r.pass) { Status::Ok } else { Status::OracleFailed })
}
