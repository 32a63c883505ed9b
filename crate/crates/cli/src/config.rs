//! Run configuration: a TOML file, command-line overrides, and defaults for
//! every field.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use televar::metrics::{AverageMode, NormalizeMode};
use televar::numerics::sweep::{Refinement, SweepJob, DEFAULT_RESOLUTION};
use televar::resources::{
    ProtocolKind, ResourceSpec, DEFAULT_ALPHA, DEFAULT_G, DEFAULT_GAMMA, DEFAULT_K, DEFAULT_RESOURCE_DB, DEFAULT_R_BS,
};
use televar::states::{db_to_r, InputSpec};
use televar::{Grid, GridWavefunction};

pub const DEFAULT_INPUT: &str = "squeezed:-5";
pub const DEFAULT_OUT: &str = "televar-out";
pub const DEFAULT_TOLERANCE: f64 = 1e-3;

/// The two inputs of the reference comparison.
pub const REFERENCE_INPUTS: [&str; 2] = ["squeezed:-5", "cat:1.5"];

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub protocol: Option<String>,
    pub input: Option<String>,
    pub out: Option<PathBuf>,
    pub resource: ResourceSection,
    pub numerics: NumericsSection,
    pub modes: ModesSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourceSection {
    /// Squeezing of the entangled resource in dB (negative).
    pub db: Option<f64>,
    pub r_bs: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub g: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsSection {
    pub grid_min: Option<f64>,
    pub grid_max: Option<f64>,
    pub grid_points: Option<usize>,
    /// Fock truncation of input and resource.
    pub k: Option<usize>,
    pub resolution: Option<usize>,
    pub tolerance: Option<f64>,
    /// `double_grid`, `double_k`, `double_outcome_res` or `none`.
    pub refine: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModesSection {
    pub axes: Option<String>,
    pub average: Option<String>,
}

/// Command-line values; each one, when present, wins over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub protocol: Option<String>,
    pub input: Option<String>,
    pub mode: Option<String>,
    pub axes: Option<String>,
    pub out: Option<PathBuf>,
    pub resource_db: Option<f64>,
    pub r_bs: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub g: Option<f64>,
    pub grid_points: Option<usize>,
    pub k: Option<usize>,
    pub resolution: Option<usize>,
    pub tolerance: Option<f64>,
    pub refine: Option<String>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub protocol: ProtocolKind,
    pub input: InputSpec,
    pub input_label: String,
    pub resource_db: f64,
    pub r_bs: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub g: f64,
    pub grid: Grid,
    pub k: usize,
    pub resolution: usize,
    pub tolerance: f64,
    pub refine: Option<Refinement>,
    pub axes: NormalizeMode,
    pub average: AverageMode,
    pub out: PathBuf,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

pub fn read_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    parse_file(&text).map_err(|ConfigError(m)| ConfigError(format!("{}: {m}", path.display())))
}

pub fn parse_file(text: &str) -> Result<FileConfig, ConfigError> {
    if text.trim().is_empty() {
        return err("configuration file is empty");
    }
    toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
}

fn parse_refine(s: &str) -> Result<Option<Refinement>, ConfigError> {
    match s {
        "none" => Ok(None),
        "double_grid" => Ok(Some(Refinement::DoubleGrid)),
        "double_k" => Ok(Some(Refinement::DoubleK)),
        "double_outcome_res" => Ok(Some(Refinement::DoubleOutcomeRes)),
        _ => err(format!("unknown refinement {s:?} (double_grid|double_k|double_outcome_res|none)")),
    }
}

/// Parses an input selector; `file:<path>` reads an `x,re,im` CSV.
pub fn parse_input(s: &str) -> Result<InputSpec, ConfigError> {
    if let Some(path) = s.strip_prefix("file:") {
        let f = File::open(path).map_err(|e| ConfigError(format!("{path}: {e}")))?;
        let psi = GridWavefunction::read_csv(BufReader::new(f)).map_err(|e| ConfigError(format!("{path}: {e}")))?;
        return Ok(InputSpec::Wavefunction(psi));
    }
    s.parse().map_err(|e: televar::Error| ConfigError(e.to_string()))
}

impl RunConfig {
    pub fn resolve(file: Option<FileConfig>, o: &Overrides) -> Result<RunConfig, ConfigError> {
        let f = file.unwrap_or_default();
        let protocol_s = o.protocol.clone().or(f.protocol).unwrap_or_else(|| "original".into());
        let protocol: ProtocolKind = protocol_s.parse().map_err(|e: televar::Error| ConfigError(e.to_string()))?;
        let input_label = o.input.clone().or(f.input).unwrap_or_else(|| DEFAULT_INPUT.into());
        let input = parse_input(&input_label)?;

        let pick = |a: Option<f64>, b: Option<f64>, d: f64| a.or(b).unwrap_or(d);
        let resource_db = pick(o.resource_db, f.resource.db, DEFAULT_RESOURCE_DB);
        let r_bs = pick(o.r_bs, f.resource.r_bs, DEFAULT_R_BS);
        let gamma = pick(o.gamma, f.resource.gamma, DEFAULT_GAMMA);
        let alpha = pick(o.alpha, f.resource.alpha, DEFAULT_ALPHA);
        let g = pick(o.g, f.resource.g, DEFAULT_G);

        let grid = match &input {
            InputSpec::Wavefunction(psi) => *psi.grid(),
            _ => {
                let d = Grid::default();
                let lo = f.numerics.grid_min.unwrap_or(d.x_min());
                let hi = f.numerics.grid_max.unwrap_or(d.x_max());
                let n = o.grid_points.or(f.numerics.grid_points).unwrap_or(d.n_points());
                Grid::new(lo, hi, n).map_err(|e| ConfigError(format!("grid: {e}")))?
            }
        };
        let k = o.k.or(f.numerics.k).unwrap_or(DEFAULT_K);
        if k == 0 {
            return err("Fock truncation k must be at least 1");
        }
        let resolution = o.resolution.or(f.numerics.resolution).unwrap_or(DEFAULT_RESOLUTION);
        let tolerance = pick(o.tolerance, f.numerics.tolerance, DEFAULT_TOLERANCE);
        if !(tolerance >= 0.0 && tolerance.is_finite()) {
            return err("tolerance must be finite and >= 0");
        }
        let refine =
            parse_refine(o.refine.as_deref().or(f.numerics.refine.as_deref()).unwrap_or("double_outcome_res"))?;
        let axes: NormalizeMode = o
            .axes
            .as_deref()
            .or(f.modes.axes.as_deref())
            .unwrap_or("std")
            .parse()
            .map_err(|e: televar::Error| ConfigError(e.to_string()))?;
        let average: AverageMode = o
            .mode
            .as_deref()
            .or(f.modes.average.as_deref())
            .unwrap_or("weighted")
            .parse()
            .map_err(|e: televar::Error| ConfigError(e.to_string()))?;
        let out = o.out.clone().or(f.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

        let cfg = RunConfig {
            protocol,
            input,
            input_label,
            resource_db,
            r_bs,
            gamma,
            alpha,
            g,
            grid,
            k,
            resolution,
            tolerance,
            refine,
            axes,
            average,
            out,
        };
        cfg.validate_protocol(protocol)?;
        cfg.job(protocol, cfg.input.clone()).validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn validate_protocol(&self, kind: ProtocolKind) -> Result<(), ConfigError> {
        self.spec(kind).validate().map_err(|e| ConfigError(format!("{}: {e}", kind.name())))
    }

    pub fn spec(&self, kind: ProtocolKind) -> ResourceSpec {
        let r = db_to_r(self.resource_db);
        match kind {
            ProtocolKind::Original => ResourceSpec::Original { r },
            ProtocolKind::Ps => ResourceSpec::Ps { r, r_bs: self.r_bs },
            ProtocolKind::Cpg => ResourceSpec::Cpg { r, gamma: self.gamma, alpha: self.alpha, g: self.g },
        }
    }

    pub fn job(&self, kind: ProtocolKind, input: InputSpec) -> SweepJob {
        let mut job = SweepJob::new(self.spec(kind), input);
        job.grid = self.grid;
        job.k_in = self.k;
        job.k_res = self.k;
        job.resolution = self.resolution;
        job.tolerance = self.tolerance;
        job
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_parameters() {
        let c = RunConfig::resolve(None, &Overrides::default()).unwrap();
        assert_eq!(c.protocol, ProtocolKind::Original);
        assert_eq!(c.input, InputSpec::Squeezed { db: -5.0 });
        assert_eq!(c.spec(ProtocolKind::Cpg), ResourceSpec::reference(ProtocolKind::Cpg));
        assert_eq!(c.spec(ProtocolKind::Ps), ResourceSpec::reference(ProtocolKind::Ps));
        assert_eq!(c.resolution, 101);
        assert_eq!(c.refine, Some(Refinement::DoubleOutcomeRes));
        assert_eq!(c.average, AverageMode::Weighted);
        assert_eq!(c.axes, NormalizeMode::Std);
    }

    #[test]
    fn file_and_flag_precedence() {
        let f = parse_file("protocol = \"ps\"\n[resource]\nr_bs = 0.1\n[numerics]\nresolution = 21\n").unwrap();
        let o = Overrides { resolution: Some(31), ..Default::default() };
        let c = RunConfig::resolve(Some(f), &o).unwrap();
        assert_eq!(c.protocol, ProtocolKind::Ps);
        assert_eq!(c.r_bs, 0.1);
        assert_eq!(c.resolution, 31);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(parse_file("").is_err());
        assert!(parse_file("  \n").is_err());
        assert!(parse_file("colour = 3").is_err());
        assert!(parse_file("[numerics]\nk = \"many\"").is_err());
        assert!(parse_file("[resource]\nbeta = 1.0").is_err());
        assert!(parse_file("protocol = ").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |o: Overrides| RunConfig::resolve(None, &o).is_err();
        assert!(bad(Overrides { protocol: Some("teleport".into()), ..Default::default() }));
        assert!(bad(Overrides { input: Some("coherent:1".into()), ..Default::default() }));
        assert!(bad(Overrides { resolution: Some(10), ..Default::default() }));
        assert!(bad(Overrides { grid_points: Some(100), ..Default::default() }));
        assert!(bad(Overrides { refine: Some("halve".into()), ..Default::default() }));
        assert!(bad(Overrides { protocol: Some("ps".into()), resource_db: Some(0.0), ..Default::default() }));
        assert!(bad(Overrides { protocol: Some("cpg".into()), gamma: Some(0.0), ..Default::default() }));
        assert!(bad(Overrides { input: Some("file:/nonexistent/psi.csv".into()), ..Default::default() }));
    }
}
