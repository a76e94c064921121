//! Invariant suite: mimetic identities, the Helmholtz splitting, the inner
//! minimiser, Nehari identities, the convexity gap and the envelope
//! derivative. Every check reports its measured value next to its threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex_inner::{minimize_w, solve_inner, InnerOptions, InnerStart, NonlinearitySpec};
use crate::error::{Error, Result};
use crate::field::{dot_slices, ScalarPotential, VectorField};
use crate::grid::{GridSpec, Staggering};
use crate::groundstate::{derivative_check, initial_field};
use crate::helmholtz::{decompose, project_V};
use crate::nehari::{action_from_quotient, gradient_field, convexity_gap, project_nehari, quotient_from_action, NehariPoint};
use crate::ops::{curl_edges, curl_faces, discrete_div, discrete_grad};
use crate::quadrature::lp_norm;
use crate::spectrum::SpectralSubspace;

/// One measured invariant. `passed` is `value <= threshold` unless the check
/// is a lower bound, in which case the comparison is reversed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub lower_bound: bool,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, lower_bound: false, passed: value <= threshold }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, lower_bound: true, passed: value >= threshold }
    }
}

/// Sizes of the individual suites. The defaults are the full-scale settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Set by the caller's run seed, not read from configuration files.
    #[serde(skip)]
    pub seed: u64,
    /// Random grids for the mimetic identities; the last one is always cubic
    /// with `mimetic_max_cells` cells per side.
    pub mimetic_grids: usize,
    pub mimetic_max_cells: usize,
    pub helmholtz_fields: usize,
    pub helmholtz_cells: usize,
    pub inner_fields: usize,
    pub inner_cells: usize,
    /// Grid and count of the Nehari points used by the identity and gap checks.
    pub nehari_points: usize,
    pub nehari_cells: usize,
    pub gap_samples: usize,
    pub derivative_points: usize,
    pub derivative_cells: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            mimetic_grids: 5,
            mimetic_max_cells: 48,
            helmholtz_fields: 20,
            helmholtz_cells: 32,
            inner_fields: 10,
            inner_cells: 32,
            nehari_points: 5,
            nehari_cells: 16,
            gap_samples: 100,
            derivative_points: 5,
            derivative_cells: 12,
        }
    }
}

impl VerifyConfig {
    /// A reduced suite that finishes in a few seconds.
    pub fn quick() -> Self {
        Self {
            mimetic_grids: 3,
            mimetic_max_cells: 16,
            helmholtz_fields: 3,
            helmholtz_cells: 12,
            inner_fields: 2,
            inner_cells: 12,
            nehari_points: 2,
            nehari_cells: 10,
            gap_samples: 20,
            derivative_points: 2,
            derivative_cells: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cells = [
            ("mimetic_max_cells", self.mimetic_max_cells),
            ("helmholtz_cells", self.helmholtz_cells),
            ("inner_cells", self.inner_cells),
            ("nehari_cells", self.nehari_cells),
            ("derivative_cells", self.derivative_cells),
        ];
        for (name, n) in cells {
            if n < 4 {
                return Err(Error::Domain(format!("{name} must be at least 4, got {n}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub checks: Vec<Check>,
}

impl Section {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub sections: Vec<Section>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.sections.iter().all(Section::passed)
    }

    /// One line per check.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            for c in &s.checks {
                let op = if c.lower_bound { ">=" } else { "<=" };
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                out.push_str(&format!(
                    "{verdict}  {:<10} {:<34} {:>12.4e} {op} {:.1e}\n",
                    s.name, c.name, c.value, c.threshold
                ));
            }
        }
        out
    }
}

fn h_min(g: &GridSpec) -> f64 {
    let h = g.spacing();
    h[0].min(h[1]).min(h[2])
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Random boxes with `count - 1` random cell counts in `[4, max_cells]` and a
/// final `max_cells^3` grid.
pub fn random_grids(count: usize, max_cells: usize, seed: u64) -> Result<Vec<GridSpec>> {
    let mut r = rng(seed, 1);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let cells = if k + 1 == count {
            [max_cells; 3]
        } else {
            [0; 3].map(|_| r.random_range(4..=max_cells))
        };
        let lengths = [0; 3].map(|_| r.random_range(0.5..4.0));
        out.push(GridSpec::new(lengths, cells)?);
    }
    Ok(out)
}

/// Face field with independent uniform samples everywhere, normal
/// boundary faces included.
fn random_face_field(g: &GridSpec, seed: u64) -> Result<VectorField> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let comps = [0, 1, 2].map(|c| (0..g.face_shape(c).len()).map(|_| r.random_range(-1.0..1.0)).collect());
    VectorField::from_components(g, Staggering::Face, comps)
}

/// Discrete identities on a batch of grids, worst case over the batch:
/// `div curl`, `curl grad` relative to the field scale `max|.| / h^2`, and
/// the two adjointness relations relative to the product of norms.
pub fn mimetic_checks(grids: &[GridSpec], seed: u64) -> Result<Vec<Check>> {
    let (mut div_curl, mut curl_grad, mut curl_adj, mut grad_adj) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for (k, g) in grids.iter().enumerate() {
        let s = seed.wrapping_mul(1000).wrapping_add(k as u64);
        let hh = h_min(g).powi(2);
        let u = VectorField::random(g, s);
        let xi = ScalarPotential::random(g, s + 500);

        let dc = discrete_div(&curl_edges(&u))?;
        div_curl = div_curl.max(dc.max_abs() * hh / u.max_abs());
        let cg = curl_edges(&discrete_grad(&xi)?);
        curl_grad = curl_grad.max(cg.max_abs() * hh / xi.values().iter().fold(0.0_f64, |m, x| m.max(x.abs())));

        let f = random_face_field(g, s + 900)?;
        let cu = curl_edges(&u);
        let lhs = cu.dot(&f);
        let rhs = u.dot(&curl_faces(&f));
        curl_adj = curl_adj.max((lhs - rhs).abs() / (cu.norm_l2() * f.norm_l2()));

        let gx = discrete_grad(&xi)?;
        let du = discrete_div(&u)?;
        let lhs = gx.dot(&u);
        let rhs = -dot_slices(xi.values(), &du.values) * g.cell_volume();
        grad_adj = grad_adj.max((lhs - rhs).abs() / (gx.norm_l2() * u.norm_l2()));
    }
    Ok(vec![
        Check::at_most("div curl (scaled)", div_curl, 1e-13),
        Check::at_most("curl grad (scaled)", curl_grad, 1e-13),
        Check::at_most("curl adjointness", curl_adj, 1e-13),
        Check::at_most("grad/div adjointness", grad_adj, 1e-13),
    ])
}

/// Reconstruction, orthogonality and Pythagoras residuals of the splitting
/// for `count` random fields, worst case.
pub fn helmholtz_checks(grid: &GridSpec, count: usize, seed: u64) -> Result<Vec<Check>> {
    let (mut rec, mut orth, mut pyth) = (0.0_f64, 0.0_f64, 0.0_f64);
    for k in 0..count {
        let u = VectorField::random(grid, seed.wrapping_mul(1000).wrapping_add(100 + k as u64));
        let d = decompose(&u, crate::helmholtz::DEFAULT_TOL)?;
        rec = rec.max(d.reconstruction_residual);
        orth = orth.max(d.orthogonality_residual);
        pyth = pyth.max(d.pythagoras_residual);
    }
    Ok(vec![
        Check::at_most("reconstruction", rec, 1e-9),
        Check::at_most("orthogonality", orth, 1e-9),
        Check::at_most("pythagoras", pyth, 1e-9),
    ])
}

const INNER_TOL: f64 = 1e-10;
const INNER_MAX_ITER: usize = 200;

/// Optimality, homogeneity `w(2.5 u) = 2.5 w(u)` and uniqueness from two
/// starts, for `count` random divergence-free fields.
pub fn inner_checks(grid: &GridSpec, count: usize, seed: u64) -> Result<Vec<Check>> {
    let spec = NonlinearitySpec::pure();
    let (mut opt, mut homog, mut unique) = (0.0_f64, 0.0_f64, 0.0_f64);
    for k in 0..count {
        let s = seed.wrapping_mul(1000).wrapping_add(200 + k as u64);
        let u = project_V(&VectorField::random(grid, s), crate::helmholtz::DEFAULT_TOL)?;
        let base = minimize_w(&u, &spec, INNER_TOL, INNER_MAX_ITER)?;
        let w_norm = lp_norm(&base.w_tilde, 6.0)?;
        opt = opt.max(base.optimality_residual);

        let scaled = minimize_w(&u.scaled(2.5), &spec, INNER_TOL, INNER_MAX_ITER)?;
        opt = opt.max(scaled.optimality_residual);
        let diff = scaled.w_tilde.sub(&base.w_tilde.scaled(2.5));
        homog = homog.max(lp_norm(&diff, 6.0)? / (2.5 * w_norm));

        let mut xi0 = ScalarPotential::random(grid, s + 7);
        xi0.scale(u.max_abs() * h_min(grid));
        let other = solve_inner(
            &u,
            &spec,
            &SpectralSubspace::empty(0.0),
            &InnerOptions::new(INNER_TOL, INNER_MAX_ITER),
            &InnerStart { xi: Some(xi0), z: None },
        )?;
        opt = opt.max(other.optimality_residual);
        unique = unique.max(lp_norm(&other.w_tilde.sub(&base.w_tilde), 6.0)? / w_norm);
    }
    Ok(vec![
        Check::at_most("optimality residual", opt, 1e-8),
        Check::at_most("homogeneity |w(2.5u)-2.5w(u)|_6", homog, 1e-7),
        Check::at_most("two-start gap", unique, 1e-7),
    ])
}

/// Nehari projections of `count` smoothed random fields.
pub fn nehari_points(grid: &GridSpec, count: usize, seed: u64) -> Result<Vec<NehariPoint>> {
    (0..count)
        .map(|k| {
            let v = initial_field(grid, seed.wrapping_mul(1000).wrapping_add(300 + k as u64), 1 + k % 3, 0.0)?;
            project_nehari(&v, INNER_TOL)
        })
        .collect()
}

/// `|curl u|^2 = |u|_6^6`, `J = |u|_6^6 / 3` and the quotient/action round trip.
pub fn nehari_checks(points: &[NehariPoint]) -> Vec<Check> {
    let (mut ray, mut action, mut round_trip, mut consistency) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for p in points {
        let e = &p.energy;
        ray = ray.max((e.curl_energy - e.l6_6).abs() / e.l6_6);
        action = action.max((e.j - e.l6_6 / 3.0).abs() / e.j);
        let s = quotient_from_action(p.j_value);
        round_trip = round_trip.max((action_from_quotient(s) - p.j_value).abs() / p.j_value);
        let direct = e.curl_energy / e.l6_6.cbrt();
        consistency = consistency.max((direct - s).abs() / s);
    }
    vec![
        Check::at_most("|curl u|^2 vs |u|_6^6", ray, 1e-8),
        Check::at_most("J vs |u|_6^6 / 3", action, 1e-8),
        Check::at_most("quotient/action round trip", round_trip, 8.0 * f64::EPSILON),
        Check::at_most("quotient vs (3J)^(2/3)", consistency, 1e-8),
    ]
}

/// Convexity gap along `t u + w` for random `t in [0, 3]` and gradient
/// perturbations `w` of random size, at each point.
pub fn gap_checks(points: &[NehariPoint], samples: usize, seed: u64) -> Result<Vec<Check>> {
    let mut r = rng(seed, 5);
    let (mut gap_min, mut phi_min) = (f64::INFINITY, f64::INFINITY);
    let mut at_identity = 0.0_f64;
    for (k, p) in points.iter().enumerate() {
        let g = *p.u.grid();
        let zero = VectorField::zeros(&g, Staggering::Edge);
        let rep = convexity_gap(&p.u, 1.0, &zero)?;
        let phi_max = rep.phi.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        at_identity = at_identity.max(rep.gap.abs()).max(phi_max);
        let per_point = samples / points.len() + usize::from(k < samples % points.len());
        for _ in 0..per_point {
            let t = r.random_range(0.0..3.0);
            let xi = ScalarPotential::random(&g, r.random::<u64>());
            let mut w = gradient_field(&xi);
            let amp = r.random_range(0.0..2.0) * p.u.norm_l2() / w.norm_l2();
            w.scale(amp);
            let rep = convexity_gap(&p.u, t, &w)?;
            gap_min = gap_min.min(rep.gap);
            phi_min = phi_min.min(rep.phi_min);
        }
    }
    Ok(vec![
        Check::at_least("gap (minimum)", gap_min, -1e-10),
        Check::at_least("pointwise integrand (minimum)", phi_min, -1e-12),
        Check::at_most("gap and integrand at (1, 0)", at_identity, 1e-12),
    ])
}

/// Envelope derivative of `J o m` against central differences with steps
/// `1e-3, 1e-4, 1e-5`, at `count` random sphere points.
pub fn derivative_checks(grid: &GridSpec, count: usize, seed: u64) -> Result<Vec<Check>> {
    let mut worst = 0.0_f64;
    for k in 0..count {
        let s = seed.wrapping_mul(1000).wrapping_add(400 + k as u64);
        let v = initial_field(grid, s, 1, 0.0)?;
        let d = VectorField::random(grid, s + 1);
        let rep = derivative_check(&v, &d, &[1e-3, 1e-4, 1e-5], 1e-11)?;
        worst = worst.max(rep.relative_error);
    }
    Ok(vec![Check::at_most("envelope vs central differences", worst, 1e-4)])
}

/// Runs every section.
pub fn run_suite(cfg: &VerifyConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let seed = cfg.seed;
    let cube = |n: usize| GridSpec::cube(std::f64::consts::PI, n);
    let mut sections = Vec::new();
    let grids = random_grids(cfg.mimetic_grids, cfg.mimetic_max_cells, seed)?;
    sections.push(Section { name: "mimetic".into(), checks: mimetic_checks(&grids, seed)? });
    sections.push(Section {
        name: "helmholtz".into(),
        checks: helmholtz_checks(&cube(cfg.helmholtz_cells)?, cfg.helmholtz_fields, seed)?,
    });
    sections.push(Section { name: "inner".into(), checks: inner_checks(&cube(cfg.inner_cells)?, cfg.inner_fields, seed)? });
    let points = nehari_points(&cube(cfg.nehari_cells)?, cfg.nehari_points.max(1), seed)?;
    sections.push(Section { name: "nehari".into(), checks: nehari_checks(&points) });
    sections.push(Section { name: "gap".into(), checks: gap_checks(&points, cfg.gap_samples, seed)? });
    sections.push(Section {
        name: "envelope".into(),
        checks: derivative_checks(&cube(cfg.derivative_cells)?, cfg.derivative_points, seed)?,
    });
    Ok(VerifyReport { config: cfg.clone(), sections })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let rep = run_suite(&VerifyConfig::quick()).unwrap();
        assert!(rep.passed(), "{}", rep.table());
    }

    #[test]
    fn check_direction() {
        assert!(Check::at_most("a", 1.0, 1.0).passed);
        assert!(!Check::at_most("a", 1.1, 1.0).passed);
        assert!(Check::at_least("a", -1e-13, -1e-12).passed);
        assert!(!Check::at_least("a", -1.0, 0.0).passed);
    }

    #[test]
    fn random_grids_end_with_the_largest_cube() {
        let g = random_grids(4, 20, 3).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g[3].cells, [20; 3]);
        assert!(g.iter().all(|g| g.cells.iter().all(|&n| (4..=20).contains(&n))));
    }

    #[test]
    fn tiny_grids_are_rejected() {
        let cfg = VerifyConfig { inner_cells: 2, ..VerifyConfig::quick() };
        assert!(matches!(run_suite(&cfg), Err(Error::Domain(m)) if m.contains("inner_cells")));
    }
}
