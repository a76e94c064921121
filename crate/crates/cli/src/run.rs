//! Dispatch to the solver modules and collection of artifacts. Files are
//! assembled in memory and written afterwards by a single writer.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use curlvar_core::brezis_nirenberg::{c0_from_quotient, compute_c_lambda, existence_window, sweep_c_lambda, sweep_csv};
use curlvar_core::export::{to_raw, write_vtk};
use curlvar_core::groundstate::{minimize_seeds, minimize_sphere, oracle_radius, sobolev_oracle};
use curlvar_core::nehari::quotient_from_action;
use curlvar_core::spectrum::{curl_curl_eigs, ladder, EigenPair};
use curlvar_core::verify::run_suite;
use curlvar_core::{Error, GridSpec, VectorField};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// Exit status for a module error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidGrid(_) | Error::InvalidField(_) | Error::Domain(_) | Error::UnderResolved(_) => EXIT_CONFIG,
        Error::NotConverged { .. } | Error::Degenerate(_) => EXIT_NOT_CONVERGED,
        Error::Contract(_) | Error::Numerical(_) => EXIT_INTERNAL,
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidGrid(_) => "invalid-grid",
        Error::InvalidField(_) => "invalid-field",
        Error::Domain(_) => "domain",
        Error::Contract(_) => "contract",
        Error::NotConverged { .. } => "not-converged",
        Error::Numerical(_) => "numerical",
        Error::Degenerate(_) => "degenerate",
        Error::UnderResolved(_) => "under-resolved",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl ErrorReport {
    pub fn from_error(e: &Error) -> Self {
        Self { kind: error_kind(e).into(), message: e.to_string(), exit_code: exit_code(e) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub available_parallelism: usize,
    pub debug_assertions: bool,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            debug_assertions: cfg!(debug_assertions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    /// Wall-clock seconds per stage.
    pub timing: BTreeMap<String, f64>,
    pub residuals: BTreeMap<String, f64>,
    /// Ground-state reference level used by `bn` and `bn-sweep`.
    pub c0: Option<f64>,
    pub environment: Environment,
    pub exit_code: i32,
    pub error: Option<ErrorReport>,
    pub artifacts: Vec<String>,
}

/// Everything a run produces, before anything touches the disk.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub stdout: String,
    pub timing: BTreeMap<String, f64>,
    pub residuals: BTreeMap<String, f64>,
    pub c0: Option<f64>,
    pub exit_code: i32,
    pub error: Option<ErrorReport>,
}

impl Artifacts {
    fn json(&mut self, name: &str, value: &Value) {
        let mut text = serde_json::to_string_pretty(value).expect("result serialises");
        text.push('\n');
        self.files.push((name.into(), text.into_bytes()));
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timing.insert(stage.into(), t.elapsed().as_secs_f64());
        out
    }

    fn snapshot(&mut self, stem: &str, u: &VectorField) {
        let (blob, header) = to_raw(u);
        self.files.push((format!("{stem}.bin"), blob));
        self.files.push((format!("{stem}.json"), serde_json::to_vec_pretty(&header).expect("header serialises")));
        let mut vtk = Vec::new();
        write_vtk(u, stem, &mut vtk).expect("writing to memory");
        self.files.push((format!("{stem}.vtk"), vtk));
    }

    fn fail(&mut self, e: &Error) {
        let report = ErrorReport::from_error(e);
        self.exit_code = report.exit_code;
        self.json("error.json", &serde_json::to_value(&report).expect("error serialises"));
        self.stdout.push_str(&format!("error: {}\n", report.message));
        self.error = Some(report);
    }
}

/// Runs the configured command. Module errors end up in the artifacts
/// together with their exit status.
pub fn execute(cfg: &RunConfig) -> Artifacts {
    let mut a = Artifacts::default();
    let grid = match cfg.grid_spec() {
        Ok(g) => g,
        Err(e) => {
            a.fail(&Error::Domain(e.to_string()));
            return a;
        }
    };
    let outcome = match cfg.command {
        Command::Groundstate => groundstate(cfg, &grid, &mut a),
        Command::Spectrum => spectrum(cfg, &grid, &mut a),
        Command::Bn => bn(cfg, &grid, &mut a),
        Command::BnSweep => bn_sweep(cfg, &grid, &mut a),
        Command::SobolevOracle => oracle(cfg, &mut a),
        Command::Verify => verify(cfg, &mut a),
    };
    if let Err(e) = outcome {
        a.fail(&e);
    }
    a
}

fn groundstate(cfg: &RunConfig, grid: &GridSpec, a: &mut Artifacts) -> curlvar_core::Result<()> {
    let seeds = cfg.seed_list();
    let gs = cfg.groundstate();
    let runs = a.timed("groundstate", || minimize_seeds(grid, &gs, &seeds, cfg.threads));
    let runs: Vec<_> = runs.into_iter().collect::<curlvar_core::Result<_>>()?;
    let mut best = 0;
    for (k, r) in runs.iter().enumerate() {
        a.residuals.insert(format!("seed{}.residual_ray", r.seed), r.point.residual_ray);
        a.residuals.insert(format!("seed{}.residual_w", r.seed), r.point.residual_w);
        if let Some(h) = r.history.last() {
            a.residuals.insert(format!("seed{}.grad_norm", r.seed), h.grad_norm);
        }
        if r.s_estimate < runs[best].s_estimate {
            best = k;
        }
        a.stdout.push_str(&format!(
            "seed {}: S_bar = {:.6}, J = {:.6}, iterations {}, converged {}\n",
            r.seed, r.s_estimate, r.point.j_value, r.iterations, r.converged
        ));
    }
    let summaries: Vec<_> = runs.iter().map(|r| r.summary()).collect();
    a.json("result.json", &json!({ "command": "groundstate", "best_seed": runs[best].seed, "runs": summaries }));
    if cfg.snapshot {
        a.snapshot("groundstate_u", &runs[best].point.u);
    }
    if runs.iter().any(|r| !r.converged) {
        a.exit_code = EXIT_NOT_CONVERGED;
    }
    Ok(())
}

fn eigenpairs(cfg: &RunConfig, grid: &GridSpec, count: usize, a: &mut Artifacts) -> curlvar_core::Result<Vec<EigenPair>> {
    let pairs = a.timed("spectrum", || curl_curl_eigs(grid, count, cfg.eigen_tol))?;
    let worst = pairs.iter().fold(0.0_f64, |m, p| m.max(p.rayleigh_residual));
    a.residuals.insert("eigen.rayleigh_max".into(), worst);
    Ok(pairs)
}

fn spectrum(cfg: &RunConfig, grid: &GridSpec, a: &mut Artifacts) -> curlvar_core::Result<()> {
    let pairs = eigenpairs(cfg, grid, cfg.eigen_count, a)?;
    let clusters = ladder(&pairs);
    for c in &clusters {
        a.stdout.push_str(&format!("{:.8}  x{}  (residual {:.1e})\n", c.lambda, c.multiplicity, c.residual));
    }
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.lambda_k).collect();
    let residuals: Vec<f64> = pairs.iter().map(|p| p.rayleigh_residual).collect();
    a.json(
        "result.json",
        &json!({
            "command": "spectrum",
            "grid": grid.cells,
            "box": grid.box_lengths,
            "eigenvalues": eigenvalues,
            "residuals": residuals,
            "ladder": clusters,
        }),
    );
    if cfg.snapshot {
        if let Some(p) = pairs.first() {
            a.snapshot("eigenfield_1", &p.e_k);
        }
    }
    Ok(())
}

/// `c0` from the configuration, or from a ground-state run whose minimiser
/// also seeds the shifted problems.
fn reference_level(cfg: &RunConfig, grid: &GridSpec, a: &mut Artifacts) -> curlvar_core::Result<(f64, Option<VectorField>)> {
    if let Some(c0) = cfg.c0 {
        a.c0 = Some(c0);
        return Ok((c0, None));
    }
    let gs = a.timed("groundstate", || minimize_sphere(grid, &cfg.groundstate()))?;
    let c0 = c0_from_quotient(gs.s_estimate);
    a.residuals.insert("groundstate.residual_ray".into(), gs.point.residual_ray);
    a.residuals.insert("groundstate.residual_w".into(), gs.point.residual_w);
    a.c0 = Some(c0);
    a.stdout.push_str(&format!("c0 = {c0:.6} (S_bar = {:.6})\n", gs.s_estimate));
    Ok((c0, Some(gs.point.u)))
}

fn bn(cfg: &RunConfig, grid: &GridSpec, a: &mut Artifacts) -> curlvar_core::Result<()> {
    let lambda = cfg.lambda.expect("validated");
    let pairs = eigenpairs(cfg, grid, cfg.eigen_count, a)?;
    let (c0, seed) = reference_level(cfg, grid, a)?;
    let bn_cfg = cfg.bn();
    let r = a.timed("bn", || compute_c_lambda(lambda, &pairs, grid, &bn_cfg, c0, seed.as_ref()))?;
    let s_bar = quotient_from_action(c0);
    let window = existence_window(r.nu, r.lambda_nu, r.lambda_prev, s_bar, grid.volume());
    a.residuals.insert("bn.residual_ray".into(), r.point.residual_ray);
    a.residuals.insert("bn.residual_w".into(), r.point.residual_w);
    a.residuals.insert("bn.identity".into(), r.identity_residual);
    let bound_holds = !r.flags.iter().any(|f| f == "above-eigen-bound");
    a.stdout.push_str(&format!(
        "lambda = {lambda}: c_lambda = {:.6e}, bound = {:.6e} ({}), existence predicted {}\n",
        r.c_lambda,
        r.bound,
        if bound_holds { "holds" } else { "violated" },
        r.existence_predicted
    ));
    a.json(
        "result.json",
        &json!({
            "command": "bn",
            "c0": c0,
            "c0_source": if cfg.c0.is_some() { "config" } else { "groundstate" },
            "S_bar": s_bar,
            "bound_holds": bound_holds,
            "existence_window": window,
            "result": r.summary(),
        }),
    );
    if cfg.snapshot {
        a.snapshot("bn_u", &r.point.u);
    }
    if !r.converged {
        a.exit_code = EXIT_NOT_CONVERGED;
    }
    Ok(())
}

fn bn_sweep(cfg: &RunConfig, grid: &GridSpec, a: &mut Artifacts) -> curlvar_core::Result<()> {
    let lambdas = cfg.lambdas.clone().expect("validated");
    let pairs = eigenpairs(cfg, grid, cfg.eigen_count, a)?;
    let (c0, seed) = reference_level(cfg, grid, a)?;
    let bn_cfg = cfg.bn();
    let sweep = a.timed("bn-sweep", || sweep_c_lambda(&lambdas, &pairs, grid, &bn_cfg, c0, seed.as_ref(), cfg.threads))?;
    let mut members = Vec::new();
    let mut all_converged = true;
    for (l, m) in sweep.lambdas.iter().zip(&sweep.members) {
        match m {
            Ok(r) => {
                all_converged &= r.converged;
                a.stdout.push_str(&format!("lambda = {l}: c_lambda = {:.6e}, bound = {:.6e}\n", r.c_lambda, r.bound));
                members.push(json!({ "lambda": l, "result": r.summary() }));
            }
            Err(e) => {
                all_converged = false;
                a.stdout.push_str(&format!("lambda = {l}: failed: {e}\n"));
                members.push(json!({ "lambda": l, "error": ErrorReport::from_error(e) }));
            }
        }
    }
    a.json("result.json", &json!({ "command": "bn-sweep", "c0": c0, "members": members, "report": sweep.report }));
    a.files.push(("sweep.csv".into(), sweep_csv(&sweep).into_bytes()));
    if !all_converged {
        a.exit_code = EXIT_NOT_CONVERGED;
    }
    Ok(())
}

fn oracle(cfg: &RunConfig, a: &mut Artifacts) -> curlvar_core::Result<()> {
    let hw = cfg.oracle_half_width;
    let g = GridSpec::with_origin([2.0 * hw; 3], cfg.grid.cells(), [-hw; 3])?;
    let value = a.timed("sobolev-oracle", || sobolev_oracle(&g, cfg.eps))?;
    a.stdout.push_str(&format!("S_oracle = {value:.8}\n"));
    a.json(
        "result.json",
        &json!({
            "command": "sobolev-oracle",
            "value": value,
            "eps": cfg.eps,
            "half_width": hw,
            "grid": g.cells,
            "cutoff_radius": oracle_radius(&g),
        }),
    );
    Ok(())
}

fn verify(cfg: &RunConfig, a: &mut Artifacts) -> curlvar_core::Result<()> {
    let vcfg = curlvar_core::verify::VerifyConfig { seed: cfg.seed, ..cfg.verify.clone() };
    let report = a.timed("verify", || run_suite(&vcfg))?;
    a.stdout.push_str(&report.table());
    for s in &report.sections {
        for c in &s.checks {
            a.residuals.insert(format!("{}.{}", s.name, c.name), c.value);
        }
    }
    a.json("result.json", &serde_json::to_value(&report).expect("report serialises"));
    if !report.passed() {
        a.exit_code = EXIT_INTERNAL;
    }
    Ok(())
}

/// Writes every artifact and the manifest into `dir`.
pub fn write_artifacts(cfg: &RunConfig, a: &Artifacts, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for (name, bytes) in &a.files {
        fs::write(dir.join(name), bytes)?;
        names.push(name.clone());
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        command: cfg.command.name().into(),
        config: cfg.clone(),
        timing: a.timing.clone(),
        residuals: a.residuals.clone(),
        c0: a.c0,
        environment: Environment::current(),
        exit_code: a.exit_code,
        error: a.error.clone(),
        artifacts: names,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)
}
