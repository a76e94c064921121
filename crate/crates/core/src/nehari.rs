//! Projections onto the Nehari sets of `J` and `J_lambda`, their residuals,
//! and the convexity gap along rays perturbed by gradients.

use crate::convex_inner::{inner_residual, solve_inner, InnerMethod, InnerOptions, InnerStart, NonlinearitySpec};
use crate::energy::{energy_unchecked, EnergyReport};
use crate::error::{Error, Result};
use crate::field::{ScalarPotential, VectorField};
use crate::grid::Staggering;
use crate::ops::{curl_edges, grad_nodes};
use crate::quadrature::{corner_samples, nemytskii, power_integral, sample_weight};
use crate::spectrum::SpectralSubspace;

pub const DEFAULT_MAX_OUTER: usize = 200;

/// A point of the Nehari set together with the data that produced it.
#[derive(Debug, Clone)]
pub struct NehariPoint {
    pub u: VectorField,
    /// Scaling of the source field: `u = t v + w~`.
    pub t: f64,
    /// `J_lambda(u)` (equal to `J(u)` when `lambda = 0`).
    pub j_value: f64,
    /// `|J'(u) u| / |curl u|_2^2`
    pub residual_ray: f64,
    /// Optimality of `u` over the enlarged kernel, as reported by the inner solver.
    pub residual_w: f64,
    pub witness_v: VectorField,
    pub lambda: f64,
    pub energy: EnergyReport,
    /// Potential of the gradient part of `u - t v`.
    pub xi: ScalarPotential,
    /// Eigen-coefficients of `u - t v`.
    pub z: Vec<f64>,
    /// Outer iterations (always 1 for the unshifted projection).
    pub iterations: usize,
    /// `J_lambda` after every outer iteration.
    pub j_history: Vec<f64>,
}

impl NehariPoint {
    /// `w~ = u - t v`
    pub fn w_tilde(&self) -> VectorField {
        self.u.sub(&self.witness_v.scaled(self.t))
    }

    /// `(3 J)^{2/3}`, the quotient matched to the action.
    pub fn quotient(&self) -> f64 {
        quotient_from_action(self.j_value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NehariOptions {
    pub tol: f64,
    pub inner_max_iter: usize,
    pub max_outer: usize,
    pub method: InnerMethod,
    /// Accept points whose inner residual stays above `tol` once the
    /// iteration stalls; the residual is still reported.
    pub best_effort: bool,
}

impl Default for NehariOptions {
    fn default() -> Self {
        Self {
            tol: crate::convex_inner::DEFAULT_TOL,
            inner_max_iter: crate::convex_inner::DEFAULT_MAX_ITER,
            max_outer: DEFAULT_MAX_OUTER,
            method: InnerMethod::Newton,
            best_effort: false,
        }
    }
}

impl NehariOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    fn inner(&self) -> InnerOptions {
        InnerOptions { best_effort: self.best_effort, ..InnerOptions::new(self.tol, self.inner_max_iter).with_method(self.method) }
    }
}

/// Warm start for a projection: the unscaled inner unknowns and a ray scale.
#[derive(Debug, Clone, Default)]
pub struct NehariStart {
    pub t: Option<f64>,
    pub inner: InnerStart,
}

/// `t = (curl_sq / l6_6)^{1/4}`, the scale putting `t U` on the Nehari set.
pub fn scalar_t(curl_sq: f64, l6_6: f64) -> Result<f64> {
    if !(curl_sq > 0.0 && curl_sq.is_finite()) || !(l6_6 > 0.0 && l6_6.is_finite()) {
        return Err(Error::Domain(format!(
            "scalar_t needs positive finite inputs, got curl_sq = {curl_sq}, l6_6 = {l6_6}"
        )));
    }
    Ok((curl_sq / l6_6).powf(0.25))
}

/// `J = A^{3/2} / 3`
pub fn action_from_quotient(a: f64) -> f64 {
    a.powf(1.5) / 3.0
}

/// `A = (3 J)^{2/3}`
pub fn quotient_from_action(j: f64) -> f64 {
    (3.0 * j).powf(2.0 / 3.0)
}

/// `|curl u|_2^2 / |u + w(u)|_6^2` given the inner total `u + w(u)`.
pub fn curl_quotient(total: &VectorField) -> f64 {
    curl_edges(total).norm_l2_sq() / power_integral(total, 6.0).powf(1.0 / 3.0)
}

fn check_edge(v: &VectorField) -> Result<()> {
    if v.staggering() != Staggering::Edge {
        return Err(Error::InvalidField("Nehari projections act on edge fields".into()));
    }
    v.validate()
}

/// `m(v) = t(v) (v + w(v))`.
pub fn project_nehari(v: &VectorField, tol: f64) -> Result<NehariPoint> {
    project_nehari_with(v, &NehariOptions::with_tol(tol), &NehariStart::default())
}

pub fn project_nehari_with(v: &VectorField, opts: &NehariOptions, start: &NehariStart) -> Result<NehariPoint> {
    check_edge(v)?;
    let a = curl_edges(v).norm_l2_sq();
    if curl_is_negligible(v, a) {
        return Err(Error::Degenerate("curl v vanishes, so v is a gradient field".into()));
    }
    let spec = NonlinearitySpec::pure();
    let inner = solve_inner(v, &spec, &SpectralSubspace::empty(0.0), &opts.inner(), &start.inner)?;
    let b = power_integral(&inner.total, 6.0);
    let t = scalar_t(a, b)?;
    let u = inner.total.scaled(t);
    let e = energy_unchecked(&u, None);
    let mut xi = inner.xi;
    xi.scale(t);
    Ok(NehariPoint {
        residual_ray: ray_residual(&e, 0.0),
        residual_w: inner.optimality_residual,
        j_value: e.j,
        u,
        t,
        witness_v: v.clone(),
        lambda: 0.0,
        energy: e,
        xi,
        z: Vec::new(),
        iterations: 1,
        j_history: vec![e.j],
    })
}

/// Whether `|curl v|_2^2 = a` is at rounding level relative to `v`.
fn curl_is_negligible(v: &VectorField, a: f64) -> bool {
    let h = v.grid().spacing();
    let hmin = h[0].min(h[1]).min(h[2]);
    a.sqrt() <= 1e-12 * v.norm_l2() / hmin
}

fn ray_residual(e: &EnergyReport, lambda: f64) -> f64 {
    let q = e.curl_energy + lambda * e.l2_sq;
    (q - e.l6_6).abs() / e.curl_energy.max(f64::MIN_POSITIVE)
}

/// `m_lambda(v+)`: the maximiser of `J_lambda` over `R+ v+ (+) Vtilde (+) W`.
pub fn project_nehari_lambda(
    v_plus: &VectorField,
    lambda: f64,
    vtilde: &SpectralSubspace,
    tol: f64,
) -> Result<NehariPoint> {
    project_nehari_lambda_with(v_plus, lambda, vtilde, &NehariOptions::with_tol(tol), &NehariStart::default())
}

/// Alternates an inner solve at fixed `t` with the closed-form maximisation
/// of `J_lambda` along the ray through the current point. Each half-step
/// increases `J_lambda`; the loop ends once the rescaled point is still
/// optimal over the enlarged kernel.
pub fn project_nehari_lambda_with(
    v_plus: &VectorField,
    lambda: f64,
    vtilde: &SpectralSubspace,
    opts: &NehariOptions,
    start: &NehariStart,
) -> Result<NehariPoint> {
    check_edge(v_plus)?;
    let spec = NonlinearitySpec::shifted(lambda)?;
    let curl_sq = curl_edges(v_plus).norm_l2_sq();
    let q_v = curl_sq + lambda * v_plus.norm_l2_sq();
    if !(q_v > 0.0) {
        return Err(Error::Degenerate(format!(
            "the quadratic form is not positive on v+ (Q = {q_v:.3e})"
        )));
    }
    let mut t = match start.t {
        Some(t) if t > 0.0 && t.is_finite() => t,
        _ => (q_v / power_integral(v_plus, 6.0)).powf(0.25),
    };
    let mut inner_start = InnerStart {
        xi: start.inner.xi.as_ref().map(|x| {
            let mut x = x.clone();
            x.scale(t);
            x
        }),
        z: start.inner.z.as_ref().map(|z| z.iter().map(|c| c * t).collect()),
    };
    let mut j_history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let v = v_plus.scaled(t);
        let inner = solve_inner(&v, &spec, vtilde, &opts.inner(), &inner_start)?;
        let u = &inner.total;
        let e = energy_unchecked(u, Some(lambda));
        let q = e.curl_energy + lambda * e.l2_sq;
        if !(q > 0.0) {
            return Err(Error::Degenerate(format!(
                "the ray through the current point has no interior maximum (Q = {q:.3e})"
            )));
        }
        let s = (q / e.l6_6).powf(0.25);
        t *= s;
        let mut xi = inner.xi.clone();
        xi.scale(s);
        let z: Vec<f64> = inner.z.iter().map(|c| c * s).collect();
        let u = u.scaled(s);
        let e = energy_unchecked(&u, Some(lambda));
        let j = e.j_lambda.unwrap_or(e.j);
        j_history.push(j);
        let v = v_plus.scaled(t);
        let residual_w = inner_residual(&v, &spec, vtilde, &xi, &z)?;
        let stalled = j_history.len() >= 2 && {
            let prev = j_history[j_history.len() - 2];
            (j - prev).abs() <= 1e-14 * j.abs().max(1.0)
        };
        if residual_w <= opts.tol || (stalled && (opts.best_effort || residual_w <= 10.0 * opts.tol)) {
            return Ok(NehariPoint {
                residual_ray: ray_residual(&e, lambda),
                residual_w,
                j_value: j,
                u,
                t,
                witness_v: v_plus.clone(),
                lambda,
                energy: e,
                xi,
                z,
                iterations,
                j_history,
            });
        }
        if iterations >= opts.max_outer && opts.best_effort {
            return Ok(NehariPoint {
                residual_ray: ray_residual(&e, lambda),
                residual_w,
                j_value: j,
                u,
                t,
                witness_v: v_plus.clone(),
                lambda,
                energy: e,
                xi,
                z,
                iterations,
                j_history,
            });
        }
        if iterations >= opts.max_outer {
            return Err(Error::NotConverged { solver: "nehari-lambda", iterations, residual: residual_w });
        }
        inner_start = InnerStart { xi: Some(xi), z: Some(z) };
    }
}

/// Convexity gap of the action along `t u + w` with `w` curl-free.
#[derive(Debug, Clone)]
pub struct GapReport {
    /// Sum of the pointwise integrand.
    pub gap: f64,
    /// The same quantity from whole-field energies and derivatives.
    pub gap_from_energies: f64,
    pub phi_min: f64,
    /// Pointwise integrand at every corner sample.
    pub phi: Vec<f64>,
}

/// Pointwise integrand of the gap with `p = |u|^2`, `q = <u, tu + w>`,
/// `r = |tu + w|^2`.
pub fn gap_integrand(t: f64, p: f64, q: f64, r: f64) -> f64 {
    r * r * r / 6.0 - t * p * p * q + (0.5 * t * t + 1.0 / 3.0) * p * p * p
}

/// `J(u) - J(tu + w) + J'(u)[(t^2 - 1)/2 u + t w]`.
pub fn convexity_gap(u: &VectorField, t: f64, w: &VectorField) -> Result<GapReport> {
    check_edge(u)?;
    check_edge(w)?;
    u.check_compatible(w)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t must be finite and nonnegative, got {t}")));
    }
    if u.is_zero() {
        return Err(Error::Domain("the gap is defined for nonzero u".into()));
    }
    let h = u.grid().spacing();
    let curl_w = curl_edges(w).max_abs();
    let limit = 1e-10 * w.max_abs() / h[0].min(h[1]).min(h[2]);
    if curl_w > limit {
        return Err(Error::Contract(format!("w is not curl-free (|curl w| = {curl_w:.3e})")));
    }
    let b = u.scaled(t).add(w);
    let ju = energy_unchecked(u, None).j;
    let jb = energy_unchecked(&b, None).j;
    let dir = u.scaled(0.5 * (t * t - 1.0)).add(&w.scaled(t));
    let derivative = curl_edges(u).dot(&curl_edges(&dir)) - nemytskii(u).dot(&dir);
    let gap_from_energies = ju - jb + derivative;

    let (sa, sb) = (corner_samples(u), corner_samples(&b));
    let phi: Vec<f64> = sa
        .iter()
        .zip(&sb)
        .map(|(a, b)| {
            let p = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
            let q = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            let r = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
            gap_integrand(t, p, q, r)
        })
        .collect();
    let gap = crate::field::dot_slices(&phi, &vec![1.0; phi.len()]) * sample_weight(u.grid());
    let phi_min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(GapReport { gap, gap_from_energies, phi_min, phi })
}

/// `grad xi` as a convenience for building curl-free perturbations.
pub fn gradient_field(xi: &ScalarPotential) -> VectorField {
    grad_nodes(xi.grid(), xi.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::helmholtz::project_V;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridSpec {
        GridSpec::cube(std::f64::consts::PI, 10).unwrap()
    }

    fn sample_v(seed: u64) -> VectorField {
        project_V(&VectorField::random(&grid(), seed), 1e-12).unwrap()
    }

    #[test]
    fn scalar_t_examples() {
        assert!((scalar_t(16.0, 81.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(scalar_t(5.0, 5.0).unwrap(), 1.0);
        assert!(matches!(scalar_t(0.0, 1.0), Err(Error::Domain(_))));
        assert!(scalar_t(1.0, -1.0).is_err());
    }

    #[test]
    fn projection_satisfies_nehari_identities() {
        let p = project_nehari(&sample_v(1), 1e-10).unwrap();
        let e = p.energy;
        assert!((e.curl_energy - e.l6_6).abs() <= 1e-12 * e.l6_6);
        assert!((p.j_value - e.l6_6 / 3.0).abs() <= 1e-12 * p.j_value);
        assert!(p.residual_ray <= 1e-12 && p.residual_w <= 1e-10);
        assert!(p.j_value > 0.0);
    }

    #[test]
    fn projection_is_scale_invariant() {
        let v = sample_v(2);
        let a = project_nehari(&v, 1e-11).unwrap();
        let b = project_nehari(&v.scaled(3.0), 1e-11).unwrap();
        assert!(a.u.sub(&b.u).norm_l2() <= 1e-8 * a.u.norm_l2());
    }

    #[test]
    fn action_matches_quotient() {
        let v = sample_v(3);
        let p = project_nehari(&v, 1e-10).unwrap();
        let total = p.u.scaled(1.0 / p.t);
        let a = curl_quotient(&total);
        assert!((p.j_value - action_from_quotient(a)).abs() <= 1e-10 * p.j_value);
        assert!((quotient_from_action(action_from_quotient(a)) - a).abs() <= 1e-13 * a);
    }

    #[test]
    fn projection_maximises_along_ray_and_kernel() {
        let v = sample_v(4);
        let p = project_nehari(&v, 1e-10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 0..10 {
            let t = p.t * rng.random_range(0.5..1.5);
            let mut xi = p.xi.clone();
            xi.scale(t / p.t);
            xi.axpy(0.1, &ScalarPotential::random(&grid(), 50 + k));
            let cand = v.scaled(t).add(&gradient_field(&xi));
            assert!(energy_unchecked(&cand, None).j <= p.j_value * (1.0 + 1e-12));
        }
    }

    #[test]
    fn gradient_input_is_degenerate() {
        let w = gradient_field(&ScalarPotential::random(&grid(), 3));
        assert!(matches!(project_nehari(&w, 1e-8), Err(Error::Degenerate(_))));
    }

    #[test]
    fn shifted_projection_reduces_to_unshifted() {
        let v = sample_v(5);
        let a = project_nehari(&v, 1e-10).unwrap();
        let b = project_nehari_lambda(&v, 0.0, &SpectralSubspace::empty(0.0), 1e-10).unwrap();
        assert!(a.u.sub(&b.u).norm_l2() <= 1e-8 * a.u.norm_l2());
        assert!((a.j_value - b.j_value).abs() <= 1e-10 * a.j_value);
    }

    #[test]
    fn shifted_projection_residuals_and_energy_identity() {
        let v = sample_v(6);
        let lambda = -1.0;
        let p = project_nehari_lambda(&v, lambda, &SpectralSubspace::empty(-lambda), 1e-10).unwrap();
        assert!(p.residual_ray <= 1e-10 && p.residual_w <= 1e-10);
        // J_lambda(u) - J_lambda'(u)u / 2 = |u|_6^6 / 3
        assert!((p.j_value - p.energy.l6_6 / 3.0).abs() <= 1e-9 * p.j_value);
        assert!(p.j_history.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-13)));
    }

    #[test]
    fn shifted_projection_rejects_nonpositive_form() {
        // a high-frequency field has large curl energy; a huge shift makes Q negative
        let v = sample_v(7);
        let lambda = -10.0 * curl_edges(&v).norm_l2_sq() / v.norm_l2_sq();
        let err = project_nehari_lambda(&v, lambda, &SpectralSubspace::empty(0.0), 1e-8);
        assert!(err.is_err());
    }

    #[test]
    fn gap_vanishes_at_identity_and_equals_action_at_origin() {
        let v = sample_v(8);
        let p = project_nehari(&v, 1e-11).unwrap();
        let zero = VectorField::zeros(&grid(), Staggering::Edge);
        let g = convexity_gap(&p.u, 1.0, &zero).unwrap();
        assert!(g.gap.abs() <= 1e-12 * p.j_value);
        let g0 = convexity_gap(&p.u, 0.0, &zero).unwrap();
        assert!((g0.gap_from_energies - p.j_value).abs() <= 1e-9 * p.j_value);
    }

    #[test]
    fn gap_is_nonnegative_for_random_perturbations() {
        let v = sample_v(9);
        let p = project_nehari(&v, 1e-11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 0..20 {
            let t = rng.random_range(0.0..3.0);
            let w = gradient_field(&ScalarPotential::random(&grid(), 200 + k)).scaled(rng.random_range(0.0..1.0));
            let g = convexity_gap(&p.u, t, &w).unwrap();
            assert!(g.gap >= -1e-10 && g.phi_min >= -1e-12);
            assert!((g.gap - g.gap_from_energies).abs() <= 1e-8 * (1.0 + g.gap.abs()));
        }
    }

    #[test]
    fn gap_rejects_fields_with_curl() {
        let v = sample_v(10);
        assert!(matches!(convexity_gap(&v, 1.0, &v), Err(Error::Contract(_))));
    }
}
