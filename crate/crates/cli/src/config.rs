//! Run configuration: TOML (primary) or JSON, unknown keys rejected.

use std::path::PathBuf;

use curlvar_core::brezis_nirenberg::BnConfig;
use curlvar_core::convex_inner::InnerMethod;
use curlvar_core::groundstate::GroundStateConfig;
use curlvar_core::verify::VerifyConfig;
use curlvar_core::GridSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("{0}")]
    Io(String),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    #[default]
    Groundstate,
    Spectrum,
    Bn,
    BnSweep,
    SobolevOracle,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Groundstate => "groundstate",
            Command::Spectrum => "spectrum",
            Command::Bn => "bn",
            Command::BnSweep => "bn-sweep",
            Command::SobolevOracle => "sobolev-oracle",
            Command::Verify => "verify",
        }
    }
}

/// Cells per side, or per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSize {
    Cube(usize),
    Cells([usize; 3]),
}

impl GridSize {
    pub fn cells(self) -> [usize; 3] {
        match self {
            GridSize::Cube(n) => [n; 3],
            GridSize::Cells(c) => c,
        }
    }
}

/// A length given as a number or as an expression such as `"pi"`, `"2pi"`,
/// `"pi/2"` or `"1.5"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Length {
    Number(f64),
    Text(String),
}

impl Length {
    pub fn value(&self) -> Result<f64, String> {
        match self {
            Length::Number(x) => Ok(*x),
            Length::Text(s) => parse_length(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoxSize {
    Cube(Length),
    Sides([Length; 3]),
}

impl BoxSize {
    pub fn lengths(&self) -> Result<[f64; 3], String> {
        match self {
            BoxSize::Cube(l) => Ok([l.value()?; 3]),
            BoxSize::Sides([a, b, c]) => Ok([a.value()?, b.value()?, c.value()?]),
        }
    }
}

/// `<a>`, `<a>pi`, `<a>*pi`, `pi`, each optionally followed by `/<b>`.
pub fn parse_length(text: &str) -> Result<f64, String> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (s.as_str(), None),
    };
    let bad = || format!("cannot read {text:?} as a length");
    let numerator = if let Some(coef) = num.strip_suffix("pi") {
        let coef = coef.strip_suffix('*').unwrap_or(coef);
        let c = if coef.is_empty() { 1.0 } else { coef.parse::<f64>().map_err(|_| bad())? };
        c * std::f64::consts::PI
    } else {
        num.parse::<f64>().map_err(|_| bad())?
    };
    let denominator = match den {
        Some(d) => d.parse::<f64>().map_err(|_| bad())?,
        None => 1.0,
    };
    Ok(numerator / denominator)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Command,
    pub grid: GridSize,
    #[serde(rename = "box")]
    pub box_size: BoxSize,
    pub seed: u64,
    /// Several ground-state runs; overrides `seed` for `groundstate`.
    pub seeds: Option<Vec<u64>>,
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub inner_method: InnerMethod,
    pub recenter_every: usize,
    pub smoothing: usize,
    pub dipole: f64,
    pub threads: usize,
    pub out: PathBuf,
    pub snapshot: bool,
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub eigen_count: usize,
    pub eigen_tol: f64,
    /// Reference level for `bn`; computed by a ground-state run when absent.
    pub c0: Option<f64>,
    pub bound_tol: f64,
    pub existence_tol: f64,
    pub plateau_tol: f64,
    /// Instanton width and box half-width of `sobolev-oracle`.
    pub eps: f64,
    pub oracle_half_width: f64,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gs = GroundStateConfig::default();
        let bn = BnConfig::default();
        Self {
            command: Command::Groundstate,
            grid: GridSize::Cube(32),
            box_size: BoxSize::Cube(Length::Text("pi".into())),
            seed: gs.seed,
            seeds: None,
            tol: gs.tol,
            max_iter: gs.max_iter,
            inner_tol: gs.inner_tol,
            inner_max_iter: gs.inner_max_iter,
            inner_method: gs.inner_method,
            recenter_every: gs.recenter_every,
            smoothing: gs.smoothing,
            dipole: gs.dipole,
            threads: 1,
            out: PathBuf::from("out"),
            snapshot: false,
            lambda: None,
            lambdas: None,
            eigen_count: 8,
            eigen_tol: 1e-8,
            c0: None,
            bound_tol: bn.bound_tol,
            existence_tol: bn.existence_tol,
            plateau_tol: bn.plateau_tol,
            eps: 1.0,
            oracle_half_width: 8.0,
            verify: VerifyConfig::default(),
        }
    }
}

/// Line and column (both 1-based) of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses a TOML document, or JSON when the first non-blank character is `{`,
/// and validates the result.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
            ConfigError::Parse { line, column, message: e.message().to_string() }
        })?
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("tol", self.tol),
            ("inner_tol", self.inner_tol),
            ("eigen_tol", self.eigen_tol),
            ("bound_tol", self.bound_tol),
            ("existence_tol", self.existence_tol),
            ("plateau_tol", self.plateau_tol),
            ("eps", self.eps),
            ("oracle_half_width", self.oracle_half_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.dipole >= 0.0 && self.dipole.is_finite()) {
            return Err(invalid("dipole", format!("must be nonnegative, got {}", self.dipole)));
        }
        for (name, v) in [
            ("max_iter", self.max_iter),
            ("inner_max_iter", self.inner_max_iter),
            ("threads", self.threads),
            ("eigen_count", self.eigen_count),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        if self.grid.cells().iter().any(|&n| n < 2) {
            return Err(invalid("grid", "needs at least 2 cells per axis"));
        }
        self.grid_spec()?;
        if let Some(c0) = self.c0 {
            if !(c0 > 0.0 && c0.is_finite()) {
                return Err(invalid("c0", format!("must be positive, got {c0}")));
            }
        }
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return Err(invalid("seeds", "must not be empty"));
            }
        }
        if let Some(l) = self.lambda {
            if !(l <= 0.0 && l.is_finite()) {
                return Err(invalid("lambda", format!("must be finite and <= 0, got {l}")));
            }
        }
        if let Some(ls) = &self.lambdas {
            if ls.is_empty() {
                return Err(invalid("lambdas", "must not be empty"));
            }
            if ls.iter().any(|l| !(*l <= 0.0 && l.is_finite())) {
                return Err(invalid("lambdas", "entries must be finite and <= 0"));
            }
            if ls.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(invalid("lambdas", "must be strictly ascending"));
            }
        }
        match self.command {
            Command::Bn if self.lambda.is_none() => return Err(invalid("lambda", "required by `bn`")),
            Command::BnSweep if self.lambdas.is_none() => return Err(invalid("lambdas", "required by `bn-sweep`")),
            _ => {}
        }
        self.verify.validate().map_err(|e| invalid("verify", e.to_string()))?;
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, ConfigError> {
        let lengths = self.box_size.lengths().map_err(|m| invalid("box", m))?;
        GridSpec::new(lengths, self.grid.cells()).map_err(|e| invalid("grid", e.to_string()))
    }

    pub fn groundstate(&self) -> GroundStateConfig {
        GroundStateConfig {
            seed: self.seed,
            tol: self.tol,
            max_iter: self.max_iter,
            inner_tol: self.inner_tol,
            inner_max_iter: self.inner_max_iter,
            inner_method: self.inner_method,
            recenter_every: self.recenter_every,
            smoothing: self.smoothing,
            dipole: self.dipole,
        }
    }

    pub fn bn(&self) -> BnConfig {
        BnConfig {
            sphere: self.groundstate(),
            bound_tol: self.bound_tol,
            existence_tol: self.existence_tol,
            plateau_tol: self.plateau_tol,
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![self.seed])
    }
}
