//! The Brezis-Nirenberg branch `curl curl u + lambda u = |u|^4 u` with
//! `lambda <= 0`: the level `c_lambda = inf J_lambda` over the Nehari set,
//! its eigenvalue bound, sweeps in `lambda`, the existence window and the
//! multiplicity counting function.
//!
//! On a finite grid every infimum is attained, so loss of compactness only
//! shows up as `c_lambda` sitting at the unperturbed level `c0` and in the
//! concentration diagnostics of the sphere minimiser.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::GridSpec;
use crate::groundstate::{initial_field, GroundStateConfig, HistoryEntry, SphereProblem};
use crate::nehari::{quotient_from_action, NehariPoint};
use crate::quadrature::{corner_samples, power_integral, sample_weight};
use crate::spectrum::{build_Vtilde, EigenPair};

/// Caveat attached to every plateau estimate.
pub const PLATEAU_CAVEAT: &str =
    "the plateau start only bounds -lambda_nu + eps_nu from above on this grid; eps_nu > lambda_nu - lambda_(nu-1) is not excluded";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BnConfig {
    pub sphere: GroundStateConfig,
    /// Absolute slack in `c_lambda <= bound`.
    pub bound_tol: f64,
    /// Relative margin below `c0` required to predict existence.
    pub existence_tol: f64,
    /// Relative distance to `c0` counted as the plateau.
    pub plateau_tol: f64,
}

impl Default for BnConfig {
    fn default() -> Self {
        Self { sphere: GroundStateConfig::default(), bound_tol: 1e-6, existence_tol: 1e-4, plateau_tol: 1e-3 }
    }
}

impl BnConfig {
    pub fn validate(&self) -> Result<()> {
        self.sphere.validate()?;
        for (name, v) in [("bound_tol", self.bound_tol), ("existence_tol", self.existence_tol), ("plateau_tol", self.plateau_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BnResult {
    pub lambda: f64,
    /// Gap index: `lambda` lies in `(-lambda_nu, -lambda_(nu-1)]`.
    pub nu: usize,
    pub lambda_nu: f64,
    /// `lambda_(nu-1)`, zero for the first gap.
    pub lambda_prev: f64,
    pub c_lambda: f64,
    /// `(lambda + lambda_nu)^{3/2} |Omega| / 3`
    pub bound: f64,
    pub c0: f64,
    pub existence_predicted: bool,
    pub multiplicity_lower: usize,
    /// The minimiser, when the outer iteration converged.
    pub ground_state: Option<NehariPoint>,
    /// Last iterate regardless of convergence.
    pub point: NehariPoint,
    pub converged: bool,
    pub iterations: usize,
    pub flags: Vec<String>,
    /// `|c_lambda - |u|_6^6 / 3| / c_lambda`
    pub identity_residual: f64,
    /// Which starting field won: `eigenfield`, `seed` or `random`.
    pub start: String,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnSummary {
    pub lambda: f64,
    pub nu: usize,
    pub lambda_nu: f64,
    pub lambda_prev: f64,
    pub c_lambda: f64,
    pub bound: f64,
    pub c0: f64,
    pub existence_predicted: bool,
    pub multiplicity_lower: usize,
    pub converged: bool,
    pub iterations: usize,
    pub flags: Vec<String>,
    pub identity_residual: f64,
    pub residual_ray: f64,
    pub residual_w: f64,
    pub final_grad_norm: f64,
    pub start: String,
    pub history: Vec<HistoryEntry>,
}

impl BnResult {
    pub fn summary(&self) -> BnSummary {
        BnSummary {
            lambda: self.lambda,
            nu: self.nu,
            lambda_nu: self.lambda_nu,
            lambda_prev: self.lambda_prev,
            c_lambda: self.c_lambda,
            bound: self.bound,
            c0: self.c0,
            existence_predicted: self.existence_predicted,
            multiplicity_lower: self.multiplicity_lower,
            converged: self.converged,
            iterations: self.iterations,
            flags: self.flags.clone(),
            identity_residual: self.identity_residual,
            residual_ray: self.point.residual_ray,
            residual_w: self.point.residual_w,
            final_grad_norm: self.history.last().map_or(f64::NAN, |h| h.grad_norm),
            start: self.start.clone(),
            history: self.history.clone(),
        }
    }
}

/// `(lambda + lambda_nu)^{3/2} |Omega| / 3`, the level of the first
/// eigenfield above the cut.
pub fn eigen_bound(lambda: f64, lambda_nu: f64, volume: f64) -> f64 {
    (lambda + lambda_nu).max(0.0).powf(1.5) * volume / 3.0
}

/// `c0 = S^{3/2} / 3` for a quotient `S`.
pub fn c0_from_quotient(s_bar: f64) -> f64 {
    s_bar.powf(1.5) / 3.0
}

/// `c_lambda` by sphere minimisation over `V+ = V - Vtilde`.
///
/// `pairs` must resolve the spectrum past `-lambda`. The minimisation starts
/// from the best of the eigenfields at `lambda_nu`, `seed` (typically the
/// unperturbed minimiser) and the default random start.
pub fn compute_c_lambda(
    lambda: f64,
    pairs: &[EigenPair],
    grid: &GridSpec,
    cfg: &BnConfig,
    c0: f64,
    seed: Option<&VectorField>,
) -> Result<BnResult> {
    cfg.validate()?;
    grid.validate()?;
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::Domain(format!("c0 must be positive, got {c0}")));
    }
    let vtilde = build_Vtilde(pairs, lambda)?;
    let lambda_nu = vtilde.lambda_next.expect("build_Vtilde resolves the next eigenvalue");
    let lambda_prev = vtilde.pairs.last().map_or(0.0, |p| p.lambda_k);
    let nu = vtilde.nu();
    let problem = SphereProblem::new(grid, lambda, &vtilde, cfg.sphere.nehari());

    let mut candidates: Vec<(&str, VectorField)> = pairs
        .iter()
        .skip(vtilde.dim())
        .take_while(|p| (p.lambda_k - lambda_nu).abs() <= crate::spectrum::CLUSTER_TOL * lambda_nu)
        .map(|p| ("eigenfield", p.e_k.clone()))
        .collect();
    if let Some(s) = seed {
        candidates.push(("seed", s.clone()));
    }
    candidates.push(("random", initial_field(grid, cfg.sphere.seed, cfg.sphere.smoothing, cfg.sphere.dipole)?));
    let mut best: Option<(f64, &str, VectorField)> = None;
    for (name, c) in candidates {
        let v = match problem.project(&c) {
            Ok(v) => v,
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        };
        let j = match problem.value(&v) {
            Ok(j) => j,
            Err(e) if e.is_non_convergence() || matches!(e, Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().map_or(true, |b| j < b.0) {
            best = Some((j, name, v));
        }
    }
    let Some((_, start, v0)) = best else {
        return Err(Error::Degenerate("no starting field has a Nehari point".into()));
    };

    let run = problem.minimize(&v0, &cfg.sphere)?;
    let c_lambda = run.point.j_value;
    let volume = grid.volume();
    let bound = eigen_bound(lambda, lambda_nu, volume);
    let mut flags = run.flags;
    if c_lambda > bound + cfg.bound_tol {
        flags.push(format!("above-eigen-bound by {:.3e}", c_lambda - bound));
    }
    if c_lambda > c0 * (1.0 + cfg.existence_tol) {
        flags.push(format!("above-c0 by {:.3e}", c_lambda - c0));
    }
    let l6 = power_integral(&run.point.u, 6.0);
    let identity_residual = (c_lambda - l6 / 3.0).abs() / c_lambda.abs().max(f64::MIN_POSITIVE);
    let ladder: Vec<f64> = pairs.iter().map(|p| p.lambda_k).collect();
    let multiplicity_lower = multiplicity_count(lambda, &ladder, quotient_from_action(c0), volume)?;
    Ok(BnResult {
        lambda,
        nu,
        lambda_nu,
        lambda_prev,
        c_lambda,
        bound,
        c0,
        existence_predicted: c_lambda < c0 * (1.0 - cfg.existence_tol),
        multiplicity_lower,
        ground_state: run.converged.then(|| run.point.clone()),
        point: run.point,
        converged: run.converged,
        iterations: run.iterations,
        flags,
        identity_residual,
        start: start.to_string(),
        history: run.history,
    })
}

/// An interval `(lower, upper)` or `(lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lower: f64,
    pub upper: f64,
    pub upper_closed: bool,
}

impl Window {
    pub fn is_empty(&self) -> bool {
        !(self.upper > self.lower)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && (x < self.upper || (self.upper_closed && x == self.upper))
    }
}

/// `(-lambda_nu, -lambda_nu + S |Omega|^{-2/3})`, clipped to the gap
/// `(-lambda_nu, -lambda_prev]`. Pass `lambda_prev = 0` for the first gap.
pub fn existence_window(nu: usize, lambda_nu: f64, lambda_prev: f64, s_bar: f64, volume: f64) -> Window {
    let lambda_prev = if nu <= 1 { 0.0 } else { lambda_prev };
    let lower = -lambda_nu;
    let width = s_bar * volume.powf(-2.0 / 3.0);
    let upper = lower + if width.is_finite() { width.max(0.0) } else { 0.0 };
    if upper >= -lambda_prev {
        Window { lower, upper: -lambda_prev, upper_closed: true }
    } else {
        Window { lower, upper, upper_closed: false }
    }
}

/// `#{k : -lambda_k < lambda < -lambda_k + S |Omega|^{-2/3} / 3}` counted
/// with multiplicity over an ascending ladder.
pub fn multiplicity_count(lambda: f64, ladder: &[f64], s_bar: f64, volume: f64) -> Result<usize> {
    multiplicity_count_with_threshold(lambda, ladder, s_bar * volume.powf(-2.0 / 3.0) / 3.0)
}

/// As [`multiplicity_count`] with the width given directly.
pub fn multiplicity_count_with_threshold(lambda: f64, ladder: &[f64], threshold: f64) -> Result<usize> {
    if ladder.iter().any(|l| !l.is_finite()) {
        return Err(Error::Domain("ladder entries must be finite".into()));
    }
    if ladder.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract("ladder must be ascending".into()));
    }
    // sum cluster multiplicities; the test is the defining inequality itself
    let mut count = 0;
    let mut i = 0;
    while i < ladder.len() {
        let l = ladder[i];
        let m = ladder[i..].iter().take_while(|&&x| x == l).count();
        if -l < lambda && lambda < -l + threshold {
            count += m;
        }
        i += m;
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// `c(lambda_lo) - c(lambda_hi)`, positive.
    pub amount: f64,
    /// Whether the drop exceeds the solver tolerance.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    /// Smallest swept `lambda` from which every member sits at `c0`.
    pub lambda_start: f64,
    /// `lambda_start + lambda_nu`
    pub eps_nu_estimate: f64,
    /// Whether the sweep reaches the right end of the gap.
    pub reaches_gap_end: bool,
    pub caveat: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub nu: usize,
    pub lambda_nu: f64,
    pub c0: f64,
    pub violations: Vec<MonotonicityViolation>,
    pub monotone: bool,
    pub below_c0: bool,
    pub below_bound: bool,
    pub failures: Vec<(f64, String)>,
    pub plateau: Option<Plateau>,
}

pub struct Sweep {
    pub lambdas: Vec<f64>,
    pub members: Vec<Result<BnResult>>,
    pub report: SweepReport,
}

/// `c_lambda` over an ascending list of `lambda` in one spectral gap. Members
/// are independent and run on up to `threads` workers; a failed member is
/// reported and the sweep continues.
pub fn sweep_c_lambda(
    lambdas: &[f64],
    pairs: &[EigenPair],
    grid: &GridSpec,
    cfg: &BnConfig,
    c0: f64,
    seed: Option<&VectorField>,
    threads: usize,
) -> Result<Sweep> {
    cfg.validate()?;
    if lambdas.is_empty() {
        return Err(Error::Domain("the sweep needs at least one lambda".into()));
    }
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Contract("sweep values must be strictly ascending".into()));
    }
    let subspaces: Vec<_> = lambdas.iter().map(|&l| build_Vtilde(pairs, l)).collect::<Result<_>>()?;
    let nu = subspaces[0].nu();
    if subspaces.iter().any(|s| s.nu() != nu) {
        return Err(Error::Domain("sweep values must lie in one spectral gap".into()));
    }
    let lambda_nu = subspaces[0].lambda_next.expect("resolved");
    let lambda_prev = subspaces[0].pairs.last().map_or(0.0, |p| p.lambda_k);

    let threads = threads.max(1);
    let mut members: Vec<Option<Result<BnResult>>> = (0..lambdas.len()).map(|_| None).collect();
    for (chunk, out) in lambdas.chunks(threads).zip(members.chunks_mut(threads)) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&l| scope.spawn(move || compute_c_lambda(l, pairs, grid, cfg, c0, seed)))
                .collect();
            for (slot, h) in out.iter_mut().zip(handles) {
                *slot = Some(h.join().unwrap_or_else(|_| Err(Error::Numerical("worker panicked".into()))));
            }
        });
    }
    let members: Vec<Result<BnResult>> = members.into_iter().map(|m| m.expect("filled")).collect();

    let mut failures = Vec::new();
    let mut ok: Vec<&BnResult> = Vec::new();
    for (l, m) in lambdas.iter().zip(&members) {
        match m {
            Ok(r) => ok.push(r),
            Err(e) => failures.push((*l, e.to_string())),
        }
    }
    let mut violations = Vec::new();
    for w in ok.windows(2) {
        let drop = w[0].c_lambda - w[1].c_lambda;
        if drop > 0.0 {
            let tol = cfg.sphere.tol * w[0].c_lambda.abs().max(w[1].c_lambda.abs());
            violations.push(MonotonicityViolation {
                lambda_lo: w[0].lambda,
                lambda_hi: w[1].lambda,
                amount: drop,
                significant: drop > tol,
            });
        }
    }
    let on_plateau = |r: &BnResult| r.c_lambda >= c0 * (1.0 - cfg.plateau_tol);
    let plateau = if ok.last().is_some_and(|r| on_plateau(r)) {
        let first = ok.iter().rposition(|r| !on_plateau(r)).map_or(0, |i| i + 1);
        let start = ok[first].lambda;
        let end = ok.last().expect("nonempty").lambda;
        Some(Plateau {
            lambda_start: start,
            eps_nu_estimate: start + lambda_nu,
            reaches_gap_end: (end + lambda_prev).abs() <= 1e-9 * lambda_nu.max(1.0),
            caveat: PLATEAU_CAVEAT.to_string(),
        })
    } else {
        None
    };
    let report = SweepReport {
        nu,
        lambda_nu,
        c0,
        monotone: !violations.iter().any(|v| v.significant),
        violations,
        below_c0: ok.iter().all(|r| r.c_lambda <= c0 * (1.0 + cfg.existence_tol)),
        below_bound: ok.iter().all(|r| r.c_lambda <= r.bound + cfg.bound_tol),
        failures,
        plateau,
    };
    Ok(Sweep { lambdas: lambdas.to_vec(), members, report })
}

/// CSV with one row per sweep member:
/// `lambda,nu,c_lambda,bound,c0,existence,multiplicity,flags`.
pub fn sweep_csv(sweep: &Sweep) -> String {
    let mut out = String::from("lambda,nu,c_lambda,bound,c0,existence,multiplicity,flags\n");
    for (l, m) in sweep.lambdas.iter().zip(&sweep.members) {
        match m {
            Ok(r) => out.push_str(&format!(
                "{},{},{},{},{},{},{},\"{}\"\n",
                r.lambda,
                r.nu,
                r.c_lambda,
                r.bound,
                r.c0,
                r.existence_predicted,
                r.multiplicity_lower,
                r.flags.join(";").replace('"', "'")
            )),
            Err(e) => out.push_str(&format!(
                "{},{},,,{},,,\"error: {}\"\n",
                l,
                sweep.report.nu,
                sweep.report.c0,
                e.to_string().replace('"', "'")
            )),
        }
    }
    out
}

fn n_of(x: [f64; 3]) -> [f64; 3] {
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    [r2 * r2 * x[0], r2 * r2 * x[1], r2 * r2 * x[2]]
}

/// `|N(u_n) - N(u_n - u) - N(u)|_{6/5}` with `N(u) = |u|^4 u`, evaluated on
/// the corner samples. Tends to zero along sequences `u_n -> u` almost
/// everywhere that stay bounded in `L^6`.
pub fn brezis_lieb_defect(u_n: &VectorField, u: &VectorField) -> Result<f64> {
    u_n.check_compatible(u)?;
    let w = sample_weight(u.grid());
    let (a, b) = (corner_samples(u_n), corner_samples(u));
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(&b) {
        let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
        let (na, nd, nb) = (n_of(*x), n_of(d), n_of(*y));
        let r = [na[0] - nd[0] - nb[0], na[1] - nd[1] - nb[1], na[2] - nd[2] - nb[2]];
        let m = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        acc += w * m.powf(1.2);
    }
    Ok(acc.powf(1.0 / 1.2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Staggering;
    use crate::rescale::rescale;
    use crate::spectrum::curl_curl_eigs;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Index-by-index recount of the defining inequality.
    fn brute_force(lambda: f64, ladder: &[f64], threshold: f64) -> usize {
        ladder.iter().filter(|&&l| -l < lambda && lambda < -l + threshold).count()
    }

    #[test]
    fn window_arithmetic() {
        let w = existence_window(1, 2.0, 0.0, 6.0, PI.powi(3));
        assert_eq!(w.lower, -2.0);
        assert!((w.upper - (-2.0 + 6.0 / (PI * PI))).abs() <= 1e-15);
        assert!(!w.upper_closed && !w.is_empty());
        assert!(w.contains(-1.5) && !w.contains(-2.0) && !w.contains(w.upper));
    }

    #[test]
    fn window_is_clipped_to_the_gap() {
        let w = existence_window(2, 3.0, 2.0, 100.0, 1.0);
        assert_eq!((w.lower, w.upper, w.upper_closed), (-3.0, -2.0, true));
        assert!(w.contains(-2.0));
        let first = existence_window(1, 2.0, 7.0, 100.0, 1.0);
        assert_eq!(first.upper, 0.0);
    }

    #[test]
    fn window_grows_with_the_constant_and_vanishes_for_large_volume() {
        let a = existence_window(1, 2.0, 0.0, 5.0, 40.0);
        let b = existence_window(1, 2.0, 0.0, 6.0, 40.0);
        assert!(b.upper >= a.upper && a.lower == b.lower);
        assert!(existence_window(1, 2.0, 0.0, 6.0, f64::INFINITY).is_empty());
        assert!(existence_window(1, 2.0, 0.0, 6.0, 1e300).is_empty());
    }

    #[test]
    fn multiplicity_examples() {
        assert_eq!(multiplicity_count_with_threshold(-0.8, &[1.0, 2.0, 2.0, 5.0], 0.5).unwrap(), 1);
        assert_eq!(multiplicity_count_with_threshold(-7.0, &[1.0, 2.0, 2.0, 5.0], 0.5).unwrap(), 0);
        let cube = [2.0, 2.0, 2.0, 3.0, 3.0, 5.0];
        assert_eq!(multiplicity_count_with_threshold(-1.9, &cube, 0.5).unwrap(), 3);
        // with S and the volume
        let s = 0.5 * 3.0 * PI * PI;
        assert_eq!(multiplicity_count(-1.9, &cube, s, PI.powi(3)).unwrap(), 3);
    }

    #[test]
    fn multiplicity_rejects_unsorted_ladders() {
        assert!(matches!(
            multiplicity_count_with_threshold(-1.0, &[2.0, 1.0], 0.5),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn bound_arithmetic() {
        assert!((eigen_bound(-1.0, 2.0, PI.powi(3)) - PI.powi(3) / 3.0).abs() <= 1e-14);
        assert_eq!(eigen_bound(-2.0, 2.0, 1.0), 0.0);
        assert!((c0_from_quotient(quotient_from_action(2.5)) - 2.5).abs() <= 1e-14);
    }

    proptest! {
        #[test]
        fn multiplicity_matches_a_recount(
            mut ladder in proptest::collection::vec(0.1f64..20.0, 0..30),
            lambda in -22.0f64..0.0,
            threshold in 0.0f64..5.0,
        ) {
            ladder.sort_by(f64::total_cmp);
            prop_assert_eq!(
                multiplicity_count_with_threshold(lambda, &ladder, threshold).unwrap(),
                brute_force(lambda, &ladder, threshold)
            );
        }
    }

    fn bump(g: &GridSpec, c: [f64; 3], rho: f64) -> VectorField {
        VectorField::from_fn(g, Staggering::Edge, |x| {
            let r2: f64 = (0..3).map(|d| (x[d] - c[d]).powi(2)).sum();
            let e = (-r2 / (rho * rho)).exp();
            [e, 0.5 * e, -e]
        })
    }

    #[test]
    fn brezis_lieb_defect_vanishes_for_disjoint_supports_and_decays_under_concentration() {
        let g = GridSpec::cube(2.0, 48).unwrap();
        let u = bump(&g, [0.5, 1.0, 1.0], 0.2);
        let far = bump(&g, [1.6, 1.0, 1.0], 0.1);
        assert!(brezis_lieb_defect(&u.add(&far), &u).unwrap() <= 1e-6);
        assert!(brezis_lieb_defect(&u, &u).unwrap() == 0.0);

        let c = [0.6, 1.0, 1.0];
        let phi = bump(&g, c, 0.3);
        let defect = |s: f64| {
            let y = [c[0] - s * c[0], c[1] - s * c[1], c[2] - s * c[2]];
            let phi_s = rescale(&phi, s, y).unwrap();
            brezis_lieb_defect(&u.add(&phi_s), &u).unwrap()
        };
        let (d1, d2, d4) = (defect(1.0), defect(2.0), defect(4.0));
        assert!(d1 > d2 && d2 > d4, "{d1} {d2} {d4}");
        assert!(d4 < 0.8 * d1, "{d1} {d4}");
    }

    #[test]
    fn sweep_rejects_mixed_gaps_and_unsorted_values() {
        let g = GridSpec::cube(PI, 6).unwrap();
        let pairs = curl_curl_eigs(&g, 6, 1e-8).unwrap();
        let cfg = BnConfig::default();
        assert!(matches!(
            sweep_c_lambda(&[-1.0, -1.5], &pairs, &g, &cfg, 1.0, None, 1),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            sweep_c_lambda(&[-2.5, -1.0], &pairs, &g, &cfg, 1.0, None, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn first_gap_levels_respect_the_bounds() {
        let g = GridSpec::cube(PI, 8).unwrap();
        let pairs = curl_curl_eigs(&g, 6, 1e-9).unwrap();
        let cfg = BnConfig { sphere: GroundStateConfig { max_iter: 60, ..Default::default() }, ..Default::default() };
        let gs = crate::groundstate::minimize_sphere(&g, &cfg.sphere).unwrap();
        let c0 = gs.point.j_value;
        let sweep = sweep_c_lambda(&[-1.9, -1.0], &pairs, &g, &cfg, c0, Some(&gs.point.witness_v), 2).unwrap();
        for m in &sweep.members {
            let r = m.as_ref().unwrap();
            assert_eq!(r.nu, 1);
            assert!(r.c_lambda > 0.0);
            assert!(r.c_lambda <= r.bound + 1e-6, "{} > {}", r.c_lambda, r.bound);
            assert!(r.c_lambda <= c0);
            assert!(r.identity_residual <= 1e-6, "{}", r.identity_residual);
        }
        let (a, b) = (sweep.members[0].as_ref().unwrap(), sweep.members[1].as_ref().unwrap());
        assert!(a.c_lambda < b.c_lambda);
        assert!(sweep.report.monotone && sweep.report.below_bound && sweep.report.below_c0);
        let csv = sweep_csv(&sweep);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("lambda,nu,c_lambda,bound,c0,existence,multiplicity,flags"));
    }

    #[test]
    fn lambda_zero_reproduces_the_unperturbed_level() {
        let g = GridSpec::cube(PI, 8).unwrap();
        let pairs = curl_curl_eigs(&g, 4, 1e-9).unwrap();
        let cfg = BnConfig { sphere: GroundStateConfig { max_iter: 80, ..Default::default() }, ..Default::default() };
        let gs = crate::groundstate::minimize_sphere(&g, &cfg.sphere).unwrap();
        let r = compute_c_lambda(0.0, &pairs, &g, &cfg, gs.point.j_value, Some(&gs.point.witness_v)).unwrap();
        assert_eq!(r.nu, 1);
        assert!((r.c_lambda - gs.point.j_value).abs() <= 1e-3 * gs.point.j_value, "{} vs {}", r.c_lambda, gs.point.j_value);
        assert!(!r.existence_predicted);
    }
}
