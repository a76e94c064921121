//! Outer minimisation of `J o m` over the unit sphere of divergence-free
//! fields, the instanton quotient used as a reference for the Sobolev
//! constant, and the concentration and recentering diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex_inner::{InnerMethod, InnerStart};
use crate::error::{Error, Result};
use crate::field::{ScalarPotential, VectorField};
use crate::grid::{GridSpec, Staggering};
use crate::helmholtz::project_divergence_free;
use crate::nehari::{project_nehari_lambda_with, project_nehari_with, quotient_from_action, NehariOptions, NehariPoint, NehariStart};
use crate::ops::{curl_curl, curl_edges, curl_faces, grad_nodes};
use crate::poisson::{PoissonMethod, PoissonSolver};
use crate::quadrature::{corner_positions, corner_samples, nemytskii, sample_weight};
use crate::rescale::rescale;
use crate::spectrum::SpectralSubspace;

/// Fraction of the curl energy that must sit in the smallest ball for the
/// concentration detector to fire.
pub const CONCENTRATION_FRACTION: f64 = 0.5;
/// Target interquartile radius of the curl energy after recentering, as a
/// fraction of the shortest box side.
pub const RECENTER_FRACTION: f64 = 0.1;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 30;
/// Longest trial step, measured in curl norm on the unit sphere.
const MAX_STEP: f64 = 0.5;
const SNAPSHOT_EVERY: usize = 5;
/// Inner tolerance during descent: this factor times the outer gradient
/// norm, capped at `INNER_TOL_MAX` and floored at the configured tolerance.
const INNER_TOL_FACTOR: f64 = 1e-2;
const INNER_TOL_MAX: f64 = 1e-4;
const MAX_SNAPSHOTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundStateConfig {
    pub seed: u64,
    /// Stop once the relative tangent gradient norm drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub inner_method: InnerMethod,
    /// Recenter every this many outer iterations; 0 disables the schedule
    /// (the concentration trigger stays active).
    pub recenter_every: usize,
    /// Applications of the inverse vector Laplacian to the random start;
    /// more pushes it towards the lowest cavity modes.
    pub smoothing: usize,
    /// Curl-norm weight of a Gaussian dipole swirl at the box centre added
    /// to the random start.
    pub dipole: f64,
}

impl Default for GroundStateConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            tol: 1e-3,
            max_iter: 400,
            inner_tol: 1e-7,
            inner_max_iter: 50,
            inner_method: InnerMethod::Newton,
            recenter_every: 25,
            smoothing: 3,
            dipole: 0.0,
        }
    }
}

impl GroundStateConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("tol", self.tol), ("inner_tol", self.inner_tol)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.dipole >= 0.0 && self.dipole.is_finite()) {
            return Err(Error::Domain(format!("dipole must be nonnegative, got {}", self.dipole)));
        }
        if self.max_iter == 0 || self.inner_max_iter == 0 {
            return Err(Error::Domain("iteration caps must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn nehari(&self) -> NehariOptions {
        NehariOptions {
            tol: self.inner_tol,
            inner_max_iter: self.inner_max_iter,
            method: self.inner_method,
            best_effort: true,
            ..NehariOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub j: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recenter {
    pub iteration: usize,
    pub s: f64,
    pub y: [f64; 3],
    /// Relative change of the objective caused by resampling.
    pub j_change: f64,
}

/// Outcome of a sphere minimisation, shared by the unshifted and shifted problems.
#[derive(Debug, Clone)]
pub struct SphereRun {
    pub point: NehariPoint,
    pub iterations: usize,
    pub history: Vec<HistoryEntry>,
    pub recenters: Vec<Recenter>,
    pub converged: bool,
    pub flags: Vec<String>,
    pub concentration: Option<ConcentrationReport>,
}

#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub point: NehariPoint,
    /// `(3 J)^{2/3}` at the final point: the discrete estimate of the
    /// constant for the box.
    pub s_estimate: f64,
    pub grid: GridSpec,
    pub seed: u64,
    pub iterations: usize,
    pub history: Vec<HistoryEntry>,
    pub recenters: Vec<Recenter>,
    pub converged: bool,
    pub flags: Vec<String>,
    pub concentration: Option<ConcentrationReport>,
    /// Share of `|u|_6^6` captured by the best radial hedgehog fit.
    pub radial_capture: f64,
}

/// Serializable summary of a ground-state run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateSummary {
    #[serde(rename = "S_bar_estimate")]
    pub s_bar_estimate: f64,
    #[serde(rename = "J_min")]
    pub j_min: f64,
    pub grid: [usize; 3],
    #[serde(rename = "box")]
    pub box_lengths: [f64; 3],
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub flags: Vec<String>,
    pub final_grad_norm: f64,
    pub residual_ray: f64,
    pub residual_w: f64,
    pub radial_capture: f64,
    pub concentration_flagged: bool,
    pub recenters: Vec<Recenter>,
    pub history: Vec<HistoryEntry>,
}

/// `S_oracle <= S_estimate` with its margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub s_oracle: f64,
    pub s_estimate: f64,
    /// `S_estimate - S_oracle`
    pub margin: f64,
    pub holds: bool,
}

impl GroundStateResult {
    pub fn ordering(&self, s_oracle: f64) -> OrderingCheck {
        let margin = self.s_estimate - s_oracle;
        OrderingCheck { s_oracle, s_estimate: self.s_estimate, margin, holds: margin >= 0.0 }
    }

    pub fn summary(&self) -> GroundStateSummary {
        GroundStateSummary {
            s_bar_estimate: self.s_estimate,
            j_min: self.point.j_value,
            grid: self.grid.cells,
            box_lengths: self.grid.box_lengths,
            seed: self.seed,
            iterations: self.iterations,
            converged: self.converged,
            flags: self.flags.clone(),
            final_grad_norm: self.history.last().map_or(f64::NAN, |h| h.grad_norm),
            residual_ray: self.point.residual_ray,
            residual_w: self.point.residual_w,
            radial_capture: self.radial_capture,
            concentration_flagged: self.concentration.as_ref().is_some_and(|c| c.flagged),
            recenters: self.recenters.clone(),
            history: self.history.clone(),
        }
    }
}

/// `J_lambda o m_lambda` on `V+`, normalised by `|curl v|_2 = 1`.
pub(crate) struct SphereProblem<'a> {
    lambda: f64,
    vtilde: &'a SpectralSubspace,
    solver: PoissonSolver,
    opts: NehariOptions,
}

/// A point of the sphere with its projection and gradient data.
struct Evaluated {
    v: VectorField,
    point: NehariPoint,
    /// Unprojected `L2` gradient of `J_lambda` at `m(v)`, times `t`.
    raw: VectorField,
    /// Preconditioned tangent gradient.
    grad: VectorField,
    /// `<raw, grad>`, the squared dual norm of the derivative.
    gg: f64,
}

impl<'a> SphereProblem<'a> {
    pub(crate) fn new(grid: &GridSpec, lambda: f64, vtilde: &'a SpectralSubspace, opts: NehariOptions) -> Self {
        Self { lambda, vtilde, solver: PoissonSolver::new(grid, PoissonMethod::Spectral), opts }
    }

    /// Projects onto `V+` and normalises the curl.
    pub(crate) fn project(&self, v: &VectorField) -> Result<VectorField> {
        let mut p = project_divergence_free(v, &self.solver)?;
        if !self.vtilde.is_empty() {
            p = self.vtilde.project_out(&p);
        }
        let n = curl_edges(&p).norm_l2();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Degenerate("field has no divergence-free part outside the eigenblock".into()));
        }
        p.scale(1.0 / n);
        Ok(p)
    }

    fn nehari(&self, v: &VectorField, warm: Option<&NehariPoint>, tol: f64) -> Result<NehariPoint> {
        let opts = NehariOptions { tol, ..self.opts };
        let start = warm.map_or_else(NehariStart::default, |p| {
            let mut xi = p.xi.clone();
            xi.scale(1.0 / p.t);
            NehariStart {
                t: Some(p.t),
                inner: InnerStart { xi: Some(xi), z: Some(p.z.iter().map(|c| c / p.t).collect()) },
            }
        });
        if self.lambda == 0.0 && self.vtilde.is_empty() {
            project_nehari_with(v, &opts, &start)
        } else {
            project_nehari_lambda_with(v, self.lambda, self.vtilde, &opts, &start)
        }
    }

    /// Riesz representative of the derivative in the metric of `Q` on `V+`.
    fn precondition(&self, g: &VectorField) -> Result<VectorField> {
        let lambda = self.lambda;
        let gv = project_divergence_free(g, &self.solver)?;
        let k = self.solver.vector_laplacian_filter(&gv, |mu| 1.0 / (mu + lambda).max(1e-6 * mu));
        Ok(if self.vtilde.is_empty() { k } else { self.vtilde.project_out(&k) })
    }

    fn evaluate(&self, v: VectorField, warm: Option<&NehariPoint>, tol: f64) -> Result<Evaluated> {
        let point = self.nehari(&v, warm, tol)?;
        let u = &point.u;
        // J_lambda'(u) = curl curl u + lambda u - |u|^4 u; by the envelope
        // property the derivative of v -> J(m(v)) is t J'(u) restricted to V+.
        let mut raw = curl_curl(u);
        raw.axpy(self.lambda, u);
        raw.axpy(-1.0, &nemytskii(u));
        raw.scale(point.t);
        let grad = self.precondition(&raw)?;
        let gg = raw.dot(&grad);
        Ok(Evaluated { v, point, raw, grad, gg })
    }

    /// Derivative of `J_lambda o m_lambda` at `v` in direction `d`.
    pub(crate) fn derivative(&self, v: &VectorField, d: &VectorField) -> Result<f64> {
        let e = self.evaluate(v.clone(), None, self.opts.tol)?;
        Ok(e.raw.dot(d))
    }

    /// `J_lambda(m_lambda(v))` without normalising `v`.
    pub(crate) fn value(&self, v: &VectorField) -> Result<f64> {
        Ok(self.nehari(v, None, self.opts.tol)?.j_value)
    }

    fn trial(&self, v: &VectorField, d: &VectorField, alpha: f64, warm: &NehariPoint, tol: f64) -> Result<Option<Evaluated>> {
        let mut x = v.clone();
        x.axpy(alpha, d);
        let x = self.project(&x)?;
        match self.evaluate(x, Some(warm), tol) {
            Ok(e) => Ok(Some(e)),
            Err(err) if err.is_non_convergence() || matches!(err, Error::Degenerate(_)) => Ok(None),
            Err(err) => Err(err),
        }
    }

    /// Riemannian PR+ conjugate gradients with Armijo backtracking.
    pub(crate) fn minimize(&self, v0: &VectorField, cfg: &GroundStateConfig) -> Result<SphereRun> {
        let hmin = v0.grid().spacing().into_iter().fold(f64::INFINITY, f64::min);
        let radii = [2.0 * hmin, 4.0 * hmin, 8.0 * hmin];
        let rel = |e: &Evaluated| e.gg.max(0.0).sqrt() / e.point.j_value.abs().max(f64::MIN_POSITIVE);
        // The objective error is quadratic in the inner residual, so the
        // inner solves only need to track the outer gradient.
        let final_tol = self.opts.tol;
        let adaptive = |g: f64| (INNER_TOL_FACTOR * g).clamp(final_tol, INNER_TOL_MAX.max(final_tol));
        let mut cur = self.evaluate(self.project(v0)?, None, INNER_TOL_MAX.max(final_tol))?;
        let mut history = vec![HistoryEntry { j: cur.point.j_value, grad_norm: rel(&cur) }];
        let mut recenters = Vec::new();
        let mut flags = Vec::new();
        // curl profile right after the last recenter, compared against the current one
        let mut reference = cur.point.u.clone();
        let mut all_snapshots: Vec<VectorField> = vec![cur.point.u.clone()];
        let mut d = cur.grad.scaled(-1.0);
        let mut alpha_guess: Option<f64> = None;
        let mut prev_slope = 0.0;
        let mut converged = rel(&cur) <= cfg.tol;
        let mut since_recenter = 0;
        let mut iterations = 0;

        while !converged && iterations < cfg.max_iter {
            iterations += 1;
            since_recenter += 1;
            let mut slope = cur.raw.dot(&d);
            if !(slope < 0.0) {
                d = cur.grad.scaled(-1.0);
                slope = -cur.gg;
            }
            if !(slope < 0.0) {
                flags.push("zero-gradient".into());
                break;
            }
            let dn = curl_edges(&d).norm_l2();
            let cap = MAX_STEP / dn;
            let mut alpha = match alpha_guess {
                Some(a) => (a * prev_slope / slope).min(cap),
                None => (0.05 / dn).min(cap),
            };
            let tol = adaptive(rel(&cur));
            if cur.point.residual_w > tol {
                // tighten the current point so both sides of the comparison match
                cur = self.evaluate(cur.v.clone(), Some(&cur.point), tol)?;
                if let Some(last) = history.last_mut() {
                    *last = HistoryEntry { j: cur.point.j_value, grad_norm: rel(&cur) };
                }
                slope = cur.raw.dot(&d);
                if !(slope < 0.0) {
                    d = cur.grad.scaled(-1.0);
                    slope = -cur.gg;
                }
            }
            let e0 = cur.point.j_value;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACK {
                if let Some(t) = self.trial(&cur.v, &d, alpha, &cur.point, tol)? {
                    let e1 = t.point.j_value;
                    if e1 <= e0 + ARMIJO * alpha * slope {
                        accepted = Some(t);
                        break;
                    }
                    // minimiser of the quadratic through e0, slope and e1
                    let denom = 2.0 * (e1 - e0 - slope * alpha);
                    let a = if denom > 0.0 { -slope * alpha * alpha / denom } else { 0.5 * alpha };
                    alpha = a.clamp(0.1 * alpha, 0.5 * alpha);
                } else {
                    alpha *= 0.5;
                }
            }
            let Some(next) = accepted else {
                flags.push(format!("line-search-stall at iteration {iterations}"));
                break;
            };
            alpha_guess = Some(alpha);
            prev_slope = slope;
            // PR+ with the old direction carried over unchanged
            let beta = (next.raw.dot(&next.grad) - next.raw.dot(&cur.grad)) / cur.gg;
            let beta = if beta.is_finite() { beta.max(0.0) } else { 0.0 };
            d.scale(beta);
            d.axpy(-1.0, &next.grad);
            if !self.vtilde.is_empty() {
                d = self.vtilde.project_out(&d);
            }
            cur = next;
            history.push(HistoryEntry { j: cur.point.j_value, grad_norm: rel(&cur) });
            converged = rel(&cur) <= cfg.tol;

            let snapshot = iterations % SNAPSHOT_EVERY == 0;
            if snapshot {
                if all_snapshots.len() >= MAX_SNAPSHOTS {
                    all_snapshots.remove(1);
                }
                all_snapshots.push(cur.point.u.clone());
            }
            let scheduled = cfg.recenter_every > 0 && since_recenter >= cfg.recenter_every;
            let triggered = snapshot
                && concentration_report(&[reference.clone(), cur.point.u.clone()], &radii)?.flagged;
            if !converged && (scheduled || triggered) {
                since_recenter = 0;
                if let Some(r) = self.try_recenter(&cur, iterations, tol)? {
                    recenters.push(r.0);
                    cur = r.1;
                    d = cur.grad.scaled(-1.0);
                    alpha_guess = None;
                    reference = cur.point.u.clone();
                    history.push(HistoryEntry { j: cur.point.j_value, grad_norm: rel(&cur) });
                    converged = rel(&cur) <= cfg.tol;
                }
            }
        }
        if !converged && !flags.iter().any(|f| f.starts_with("line-search")) && iterations >= cfg.max_iter {
            flags.push("iteration-cap".into());
        }
        if cur.point.residual_w > final_tol {
            let polished = self.evaluate(cur.v.clone(), Some(&cur.point), final_tol)?;
            if let Some(last) = history.last_mut() {
                *last = HistoryEntry { j: polished.point.j_value, grad_norm: rel(&polished) };
            }
            cur = polished;
        }
        if cur.point.residual_w > final_tol {
            flags.push(format!("inner-residual {:.2e}", cur.point.residual_w));
        }
        let concentration = if all_snapshots.len() >= 2 {
            let report = concentration_report(&all_snapshots, &radii)?;
            if report.flagged {
                flags.push("concentration".into());
            }
            Some(report)
        } else {
            None
        };
        Ok(SphereRun { point: cur.point, iterations, history, recenters, converged, flags, concentration })
    }

    /// Applies `T_{s,y}` to the current field and keeps it only if the
    /// objective does not increase.
    fn try_recenter(&self, cur: &Evaluated, iteration: usize, tol: f64) -> Result<Option<(Recenter, Evaluated)>> {
        let (moved, s, y) = recenter(&cur.v)?;
        if (s - 1.0).abs() < 1e-3 && y.iter().zip(cur.v.grid().spacing()).all(|(y, h)| y.abs() < 0.5 * h) {
            return Ok(None);
        }
        let moved = match self.project(&moved) {
            Ok(m) => m,
            Err(Error::Degenerate(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let Some(e) = self.trial(&moved, &moved.scaled(0.0), 0.0, &cur.point, tol)? else {
            return Ok(None);
        };
        let j0 = cur.point.j_value;
        if e.point.j_value > j0 {
            return Ok(None);
        }
        let r = Recenter { iteration, s, y, j_change: (e.point.j_value - j0) / j0 };
        Ok(Some((r, e)))
    }
}

/// Starting field: a random field from `seed` smoothed `smoothing` times by
/// the inverse vector Laplacian, plus `dipole` times a curl-normalised
/// Gaussian swirl at the box centre, projected onto `V` and normalised.
pub fn initial_field(grid: &GridSpec, seed: u64, smoothing: usize, dipole: f64) -> Result<VectorField> {
    grid.validate()?;
    let solver = PoissonSolver::new(grid, PoissonMethod::Spectral);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = VectorField::random(grid, rng.random());
    for _ in 0..smoothing {
        v = solver.inverse_vector_laplacian(&v);
        let n = v.norm_l2();
        v.scale(1.0 / n);
    }
    let mut v = project_divergence_free(&v, &solver)?;
    v.scale(1.0 / curl_edges(&v).norm_l2());
    if dipole > 0.0 {
        let c = grid.center();
        let sigma = grid.box_lengths.iter().fold(f64::INFINITY, |m, &l| m.min(l)) / 8.0;
        // curl of (0, 0, exp(-r^2 / 2 sigma^2)) on faces is an azimuthal swirl
        let a = VectorField::from_fn(grid, Staggering::Face, |x| {
            let r2: f64 = (0..3).map(|d| (x[d] - c[d]).powi(2)).sum();
            [0.0, 0.0, (-0.5 * r2 / (sigma * sigma)).exp()]
        });
        let mut swirl = curl_faces(&a);
        swirl.enforce_boundary();
        v.axpy(dipole / curl_edges(&swirl).norm_l2(), &swirl);
    }
    let n = curl_edges(&v).norm_l2();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Degenerate("random start has no divergence-free part".into()));
    }
    Ok(v.scaled(1.0 / n))
}

/// Minimises `J o m` over `{v in V : |curl v|_2 = 1}` from [`initial_field`].
pub fn minimize_sphere(grid: &GridSpec, cfg: &GroundStateConfig) -> Result<GroundStateResult> {
    cfg.validate()?;
    let v0 = initial_field(grid, cfg.seed, cfg.smoothing, cfg.dipole)?;
    minimize_sphere_from(&v0, cfg)
}

/// As [`minimize_sphere`] from a given start.
pub fn minimize_sphere_from(v0: &VectorField, cfg: &GroundStateConfig) -> Result<GroundStateResult> {
    cfg.validate()?;
    let grid = *v0.grid();
    let empty = SpectralSubspace::empty(0.0);
    let problem = SphereProblem::new(&grid, 0.0, &empty, cfg.nehari());
    let run = problem.minimize(v0, cfg)?;
    let radial = radial_capture(&run.point.u);
    Ok(GroundStateResult {
        s_estimate: quotient_from_action(run.point.j_value),
        point: run.point,
        grid,
        seed: cfg.seed,
        iterations: run.iterations,
        history: run.history,
        recenters: run.recenters,
        converged: run.converged,
        flags: run.flags,
        concentration: run.concentration,
        radial_capture: radial,
    })
}

/// Runs one minimisation per seed on up to `threads` workers and returns the
/// results in seed order.
pub fn minimize_seeds(grid: &GridSpec, cfg: &GroundStateConfig, seeds: &[u64], threads: usize) -> Vec<Result<GroundStateResult>> {
    let threads = threads.max(1);
    let mut out: Vec<Option<Result<GroundStateResult>>> = (0..seeds.len()).map(|_| None).collect();
    for (chunk_seeds, chunk_out) in seeds.chunks(threads).zip(out.chunks_mut(threads)) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk_seeds
                .iter()
                .map(|&seed| {
                    let cfg = GroundStateConfig { seed, ..*cfg };
                    scope.spawn(move || minimize_sphere(grid, &cfg))
                })
                .collect();
            for (slot, h) in chunk_out.iter_mut().zip(handles) {
                *slot = Some(h.join().unwrap_or_else(|_| Err(Error::Numerical("worker panicked".into()))));
            }
        });
    }
    out.into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Result of comparing the envelope derivative against central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub analytic: f64,
    /// `(step, central difference)` for each step.
    pub finite_differences: Vec<(f64, f64)>,
    /// Smallest relative discrepancy over the steps.
    pub relative_error: f64,
}

/// Compares the derivative of `v -> J(m(v))` at `v` along `d` with central
/// differences. Both fields are first projected onto `V`.
pub fn derivative_check(v: &VectorField, d: &VectorField, steps: &[f64], inner_tol: f64) -> Result<DerivativeCheck> {
    if steps.is_empty() || steps.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Domain("derivative check needs positive steps".into()));
    }
    let empty = SpectralSubspace::empty(0.0);
    let opts = NehariOptions { tol: inner_tol, ..NehariOptions::default() };
    let problem = SphereProblem::new(v.grid(), 0.0, &empty, opts);
    let v = problem.project(v)?;
    let d = project_divergence_free(d, &problem.solver)?;
    let analytic = problem.derivative(&v, &d)?;
    let mut fd = Vec::with_capacity(steps.len());
    for &s in steps {
        let plus = problem.value(&VectorField::lin_comb(1.0, &v, s, &d))?;
        let minus = problem.value(&VectorField::lin_comb(1.0, &v, -s, &d))?;
        fd.push((s, (plus - minus) / (2.0 * s)));
    }
    let scale = analytic.abs().max(f64::MIN_POSITIVE);
    let relative_error = fd.iter().map(|(_, x)| (x - analytic).abs() / scale).fold(f64::INFINITY, f64::min);
    Ok(DerivativeCheck { analytic, finite_differences: fd, relative_error })
}

/// `3^{1/4} (eps^2 + r^2)^{-1/2}`
pub fn instanton(eps: f64, r: f64) -> f64 {
    3f64.powf(0.25) / (eps * eps + r * r).sqrt()
}

/// Quintic smoothstep cutoff: 1 on `[0, 0.8 R]`, 0 beyond `R`, `C^2`.
pub fn cutoff(r: f64, radius: f64) -> f64 {
    let start = 0.8 * radius;
    if r <= start {
        1.0
    } else if r >= radius {
        0.0
    } else {
        let s = (r - start) / (radius - start);
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Cut-off instanton profile `(U(r) - U(R)) chi(r)` with `R` at 90% of the
/// box half-width.
pub fn cutoff_instanton(eps: f64, r: f64, radius: f64) -> f64 {
    (instanton(eps, r) - instanton(eps, radius)) * cutoff(r, radius)
}

/// Radius of the instanton cutoff for a grid.
pub fn oracle_radius(grid: &GridSpec) -> f64 {
    0.9 * 0.5 * grid.box_lengths.iter().fold(f64::INFINITY, |m, &l| m.min(l))
}

/// Rayleigh quotient `|grad U|_2^2 / |U|_6^2` of the cut-off instanton on
/// the nodes of `grid`, centred in the box.
pub fn sobolev_oracle(grid: &GridSpec, eps: f64) -> Result<f64> {
    grid.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let c = grid.center();
    let radius = oracle_radius(grid);
    let f = ScalarPotential::from_fn(grid, |x| {
        let r = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt();
        cutoff_instanton(eps, r, radius)
    });
    let grad = grad_nodes(grid, f.values());
    let num = grad.norm_l2_sq();
    let l6: f64 = f.values().iter().map(|x| x.powi(6)).sum::<f64>() * grid.cell_volume();
    Ok(num / l6.cbrt())
}

/// Oracle configuration used as the reference for `S`: `eps = 1` on
/// `(-8, 8)^3` with `96^3` cells.
pub const REFERENCE_ORACLE: (f64, usize, f64) = (8.0, 96, 1.0);

/// [`sobolev_oracle`] at [`REFERENCE_ORACLE`].
pub fn reference_oracle() -> Result<f64> {
    let (half, n, eps) = REFERENCE_ORACLE;
    sobolev_oracle(&GridSpec::centered_cube(half, n)?, eps)
}

/// Curl energy `|curl u|^2` of every cell, integrated over the cell.
pub fn cell_curl_energy(u: &VectorField) -> Vec<f64> {
    let g = u.grid();
    let f = curl_edges(u);
    let cells = g.cell_shape();
    let vol = g.cell_volume();
    let mut out = vec![0.0; cells.len()];
    for c in 0..3 {
        let shape = g.face_shape(c);
        let stride = shape.strides()[c];
        let data = f.comp(c);
        let [n0, n1, n2] = cells.dims;
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let lo = shape.idx(i, j, k);
                    let a = data[lo];
                    let b = data[lo + stride];
                    out[cells.idx(i, j, k)] += 0.5 * (a * a + b * b) * vol;
                }
            }
        }
    }
    out
}

fn cell_centers(g: &GridSpec) -> Vec<[f64; 3]> {
    let [n0, n1, n2] = g.cells;
    let mut out = Vec::with_capacity(n0 * n1 * n2);
    for i in 0..n0 {
        for j in 0..n1 {
            for k in 0..n2 {
                out.push(g.cell_center(i, j, k));
            }
        }
    }
    out
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub ball_radii: Vec<f64>,
    /// Curl energy inside each ball around the densest cell, per iterate.
    pub local_curl_mass: Vec<Vec<f64>>,
    pub total_curl_mass: Vec<f64>,
    pub flagged: bool,
    pub location: Option<[f64; 3]>,
}

/// Tracks how much curl energy sits near the densest cell of each iterate.
/// Flags when the share inside the smallest ball rises past
/// [`CONCENTRATION_FRACTION`] after starting below it.
pub fn concentration_report(history: &[VectorField], radii: &[f64]) -> Result<ConcentrationReport> {
    if history.len() < 2 {
        return Err(Error::Domain("concentration report needs at least two iterates".into()));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain("ball radii must be positive".into()));
    }
    let g = *history[0].grid();
    for u in history {
        history[0].check_compatible(u)?;
    }
    let rmin = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let centers = cell_centers(&g);
    let mut masses = Vec::with_capacity(history.len());
    let mut totals = Vec::with_capacity(history.len());
    let mut peaks = Vec::with_capacity(history.len());
    let mut shares = Vec::with_capacity(history.len());
    for u in history {
        let e = cell_curl_energy(u);
        let total: f64 = e.iter().sum();
        let peak = e.iter().enumerate().fold(0, |best, (i, x)| if *x > e[best] { i } else { best });
        let p = centers[peak];
        let ball = |r: f64| -> f64 {
            centers.iter().zip(&e).filter(|(c, _)| dist(**c, p) <= r).map(|(_, x)| x).sum::<f64>().min(total)
        };
        masses.push(radii.iter().map(|&r| ball(r)).collect::<Vec<_>>());
        shares.push(if total > 0.0 { ball(rmin) / total } else { 0.0 });
        totals.push(total);
        peaks.push(p);
    }
    let crossing = if shares[0] < CONCENTRATION_FRACTION {
        shares.iter().position(|&s| s >= CONCENTRATION_FRACTION)
    } else {
        None
    };
    Ok(ConcentrationReport {
        ball_radii: radii.to_vec(),
        local_curl_mass: masses,
        total_curl_mass: totals,
        flagged: crossing.is_some(),
        location: crossing.map(|i| peaks[i]),
    })
}

/// Centroid and quartiles of the distance to it, weighted by curl energy.
fn energy_moments(u: &VectorField) -> Result<([f64; 3], f64, f64)> {
    let g = u.grid();
    let e = cell_curl_energy(u);
    let total: f64 = e.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("field carries no curl energy".into()));
    }
    let centers = cell_centers(g);
    let mut c = [0.0; 3];
    for (x, w) in centers.iter().zip(&e) {
        for d in 0..3 {
            c[d] += w * x[d];
        }
    }
    for cd in &mut c {
        *cd /= total;
    }
    let mut r: Vec<(f64, f64)> = centers.iter().zip(&e).map(|(x, w)| (dist(*x, c), *w)).collect();
    r.sort_by(|a, b| a.0.total_cmp(&b.0));
    let quantile = |q: f64| {
        let mut acc = 0.0;
        for (ri, wi) in &r {
            acc += wi;
            if acc >= q * total {
                return *ri;
            }
        }
        r.last().unwrap().0
    };
    Ok((c, quantile(0.25), quantile(0.75)))
}

/// Moves the curl-energy centroid to the box centre and rescales so that the
/// interquartile spread of the curl energy is [`RECENTER_FRACTION`] of the
/// shortest side. Returns `(T_{s,y} u, s, y)`.
pub fn recenter(u: &VectorField) -> Result<(VectorField, f64, [f64; 3])> {
    u.validate()?;
    let g = *u.grid();
    let (c, q1, q3) = energy_moments(u)?;
    let lmin = g.box_lengths.iter().fold(f64::INFINITY, |m, &l| m.min(l));
    let spread = (q3 - q1).max(g.spacing().into_iter().fold(f64::INFINITY, f64::min));
    let s = spread / (RECENTER_FRACTION * lmin);
    let mid = g.center();
    // the point mapped onto the box centre is the centroid: s * mid + y = c
    let y = [c[0] - s * mid[0], c[1] - s * mid[1], c[2] - s * mid[2]];
    Ok((rescale(u, s, y)?, s, y))
}

/// Share of `|u|_6^6` captured by the best fit `phi(|x - c|) (x - c)/|x - c|`
/// around the `|u|^6` centroid, with `phi` fitted shell by shell.
pub fn radial_capture(u: &VectorField) -> f64 {
    let g = *u.grid();
    let samples = corner_samples(u);
    let pos = corner_positions(&g);
    let w = sample_weight(&g);
    let mut c = [0.0; 3];
    let mut mass = 0.0;
    for (s, x) in samples.iter().zip(&pos) {
        let m = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).powi(3);
        mass += m;
        for d in 0..3 {
            c[d] += m * x[d];
        }
    }
    if !(mass > 0.0) {
        return 0.0;
    }
    for cd in &mut c {
        *cd /= mass;
    }
    let h = g.spacing().into_iter().fold(f64::INFINITY, f64::min);
    let bins = (g.box_lengths.iter().map(|l| l * l).sum::<f64>().sqrt() / h) as usize + 2;
    let mut sum = vec![0.0; bins];
    let mut count = vec![0.0; bins];
    // radial direction of each component taken at its own edge midpoint
    let dirs: Vec<[f64; 3]> = pos
        .iter()
        .map(|x| {
            let mut n = [0.0; 3];
            for (comp, nc) in n.iter_mut().enumerate() {
                let mut p = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
                p[comp] += 0.5 * g.spacing()[comp];
                let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                *nc = if r > 0.0 { p[comp] / r } else { 0.0 };
            }
            n
        })
        .collect();
    let mut radial = Vec::with_capacity(samples.len());
    for ((s, x), n) in samples.iter().zip(&pos).zip(&dirs) {
        let r = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt();
        let b = ((r / h) as usize).min(bins - 1);
        sum[b] += s[0] * n[0] + s[1] * n[1] + s[2] * n[2];
        count[b] += 1.0;
        radial.push(b);
    }
    let mut captured = 0.0;
    let mut full = 0.0;
    for ((s, &b), n) in samples.iter().zip(&radial).zip(&dirs) {
        let phi = sum[b] / count[b];
        captured += w * (phi * phi * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2])).powi(3);
        full += w * (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).powi(3);
    }
    if full > 0.0 {
        captured / full
    } else {
        0.0
    }
}

/// Least-squares fit `S(h) = S0 + c h^order` over `(h, S)` samples; returns `S0`.
pub fn extrapolate_in_h(samples: &[(f64, f64)], order: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Domain("extrapolation needs at least two samples".into()));
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|(h, _)| h.powf(order)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = samples.iter().map(|(_, s)| s).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain("extrapolation needs distinct spacings".into()));
    }
    let sxy: f64 = xs.iter().zip(samples).map(|(x, (_, s))| (x - mx) * (s - my)).sum();
    Ok(my - sxy / sxx * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nehari::curl_quotient;
    use crate::quadrature::power_integral;

    fn swirl(g: &GridSpec, c: [f64; 3], rho: f64) -> VectorField {
        VectorField::from_fn(g, Staggering::Edge, |x| {
            let d = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if r2 >= rho * rho {
                return [0.0; 3];
            }
            let q = 1.0 - r2 / (rho * rho);
            let f = -8.0 * q * q * q / (rho * rho);
            [f * d[1], -f * d[0], 0.0]
        })
    }

    #[test]
    fn instanton_cutoff_vanishes_at_the_radius() {
        assert_eq!(cutoff(0.5, 1.0), 1.0);
        assert_eq!(cutoff(1.0, 1.0), 0.0);
        assert!(cutoff_instanton(1.0, 0.99, 1.0).abs() < 1e-4);
        assert!(sobolev_oracle(&GridSpec::cube(1.0, 8).unwrap(), 0.0).is_err());
    }

    #[test]
    fn initial_field_is_normalised_and_divergence_free() {
        let g = GridSpec::cube(std::f64::consts::PI, 12).unwrap();
        let v = initial_field(&g, 3, 3, 0.0).unwrap();
        assert!((curl_edges(&v).norm_l2() - 1.0).abs() < 1e-12);
        let div = crate::ops::div_edges(&v);
        let m = div.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        assert!(m < 1e-9 * v.max_abs() * 12.0, "{m}");
        let w = initial_field(&g, 4, 3, 0.0).unwrap();
        assert!(w.sub(&v).max_abs() > 1e-6);
        assert_eq!(initial_field(&g, 3, 3, 0.0).unwrap(), v);
    }

    #[test]
    fn envelope_derivative_matches_differences() {
        let g = GridSpec::cube(std::f64::consts::PI, 10).unwrap();
        let v = initial_field(&g, 7, 1, 0.5).unwrap();
        let d = VectorField::random(&g, 8);
        let check = derivative_check(&v, &d, &[1e-3, 1e-4, 1e-5], 1e-12).unwrap();
        assert!(check.relative_error < 1e-5, "{check:?}");
    }

    #[test]
    fn descent_is_monotone_and_consistent() {
        let g = GridSpec::cube(std::f64::consts::PI, 10).unwrap();
        let cfg = GroundStateConfig { max_iter: 15, tol: 1e-8, ..GroundStateConfig::default() };
        let r = minimize_sphere(&g, &cfg).unwrap();
        for w in r.history.windows(2) {
            assert!(w[1].j <= w[0].j * (1.0 + 1e-10), "{:?}", r.history);
        }
        assert!(r.history.last().unwrap().j < r.history[0].j);
        // S = (3J)^{2/3} agrees with the curl quotient of the projected point
        let q = curl_quotient(&r.point.u);
        assert!((r.s_estimate - q).abs() <= 1e-8 * q);
        let j3 = power_integral(&r.point.u, 6.0) / 3.0;
        assert!((r.point.j_value - j3).abs() <= 1e-8 * j3);
    }

    #[test]
    fn concentration_needs_two_iterates() {
        let g = GridSpec::cube(1.0, 8).unwrap();
        let u = VectorField::random(&g, 1);
        assert!(concentration_report(&[u], &[0.1]).is_err());
    }

    #[test]
    fn constant_history_is_not_flagged() {
        let g = GridSpec::cube(2.0, 24).unwrap();
        let u = swirl(&g, g.center(), 0.6);
        let r = concentration_report(&[u.clone(), u.clone(), u], &[0.2, 0.4]).unwrap();
        assert!(!r.flagged);
        for (row, total) in r.local_curl_mass.iter().zip(&r.total_curl_mass) {
            assert!(row.iter().all(|m| *m >= 0.0 && *m <= *total));
        }
    }

    #[test]
    fn shrinking_bumps_are_flagged_at_their_centre() {
        let g = GridSpec::cube(2.0, 32).unwrap();
        let c = [0.9, 1.1, 1.05];
        let history: Vec<_> = [0.8, 0.4, 0.2, 0.1].iter().map(|&rho| swirl(&g, c, rho)).collect();
        let r = concentration_report(&history, &[0.125, 0.25]).unwrap();
        assert!(r.flagged);
        let loc = r.location.unwrap();
        assert!(dist(loc, c) <= 2.0 * g.spacing()[0], "{loc:?}");
    }

    #[test]
    fn recenter_has_normalised_bumps_as_fixed_points() {
        let g = GridSpec::cube(2.0, 48).unwrap();
        let u = swirl(&g, [0.8, 1.1, 1.0], 0.5);
        let (once, _, _) = recenter(&u).unwrap();
        let (twice, s, y) = recenter(&once).unwrap();
        assert!((s - 1.0).abs() < 0.05, "s = {s}");
        let h = g.spacing()[0];
        assert!(y.iter().all(|c| c.abs() < h), "{y:?}");
        assert!(twice.sub(&once).norm_l2() < 0.1 * once.norm_l2());
    }

    #[test]
    fn recenter_finds_translations() {
        let g = GridSpec::cube(2.0, 48).unwrap();
        let (base, _, _) = recenter(&swirl(&g, g.center(), 0.5)).unwrap();
        let y0 = [0.2, -0.15, 0.1];
        let shifted = rescale(&base, 1.0, [-y0[0], -y0[1], -y0[2]]).unwrap();
        let (_, s, y) = recenter(&shifted).unwrap();
        assert!((s - 1.0).abs() < 0.05);
        let h = g.spacing()[0];
        for d in 0..3 {
            assert!((y[d] - y0[d]).abs() <= h, "{y:?}");
        }
    }

    #[test]
    fn hedgehogs_are_fully_captured_and_swirls_are_not() {
        let g = GridSpec::cube(2.0, 32).unwrap();
        let c = g.center();
        let swirl_field = swirl(&g, c, 0.6);
        assert!(radial_capture(&swirl_field) < 0.01);
        let g = GridSpec::cube(4.0, 48).unwrap();
        let c = g.center();
        let hedgehog = crate::ops::discrete_grad(&ScalarPotential::from_fn(&g, |x| {
            let r2: f64 = (0..3).map(|d| (x[d] - c[d]).powi(2)).sum();
            (-2.0 * r2).exp()
        }))
        .unwrap();
        assert!(radial_capture(&hedgehog) > 0.9, "{}", radial_capture(&hedgehog));
    }

    #[test]
    fn extrapolation_recovers_a_linear_model() {
        let s0 = extrapolate_in_h(&[(0.1, 5.0 + 0.3 * 0.01), (0.05, 5.0 + 0.3 * 0.0025)], 2.0).unwrap();
        assert!((s0 - 5.0).abs() < 1e-12);
        assert!(extrapolate_in_h(&[(0.1, 1.0)], 2.0).is_err());
    }
}
