//! L2-orthogonal splitting of edge fields into a divergence-free part and a
//! gradient part.
//!
//! On a box every curl-free field with vanishing tangential trace is the
//! gradient of a zero-boundary potential, so solving `lap xi = div u` and
//! setting `w = grad xi`, `v = u - w` yields the full splitting.

use crate::error::{Error, Result};
use crate::field::{ScalarPotential, VectorField};
use crate::grid::Staggering;
use crate::ops::{div_edges, grad_nodes};
use crate::poisson::{PoissonMethod, PoissonSolver};

/// Default relative tolerance of the splitting.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DecomposedField {
    /// Divergence-free part.
    pub v: VectorField,
    /// Gradient part `grad xi`.
    pub w: VectorField,
    pub xi: ScalarPotential,
    /// Largest of the reconstruction, orthogonality and Pythagoras residuals.
    pub residual: f64,
    pub reconstruction_residual: f64,
    pub orthogonality_residual: f64,
    pub pythagoras_residual: f64,
    /// `|div v|_2 / |div u|_2`.
    pub divergence_residual: f64,
    pub poisson_iterations: usize,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a
    } else {
        a / b
    }
}

fn nodal_norm(values: &[f64], cell_volume: f64) -> f64 {
    (crate::field::dot_slices(values, values) * cell_volume).sqrt()
}

/// Splits `u = v + w` with the default spectral Poisson solver.
pub fn decompose(u: &VectorField, tol: f64) -> Result<DecomposedField> {
    decompose_with(u, tol, &PoissonSolver::new(u.grid(), PoissonMethod::Spectral))
}

pub fn decompose_with(u: &VectorField, tol: f64, solver: &PoissonSolver) -> Result<DecomposedField> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if u.staggering() != Staggering::Edge {
        return Err(Error::InvalidField("the splitting acts on edge fields".into()));
    }
    u.validate()?;
    u.check_compatible(&VectorField::zeros(solver.grid(), Staggering::Edge))?;
    let g = *u.grid();
    let div_u = div_edges(u);
    let (xi, stats) = solver.solve_nodes(&div_u, tol)?;
    let w = grad_nodes(&g, &xi);
    let v = u.sub(&w);

    let nu = u.norm_l2();
    let (nv, nw) = (v.norm_l2(), w.norm_l2());
    let reconstruction_residual = ratio(v.add(&w).sub(u).norm_l2(), nu);
    let orthogonality_residual = if nv == 0.0 || nw == 0.0 { 0.0 } else { v.dot(&w).abs() / (nv * nw) };
    let pythagoras_residual = ratio((nu * nu - nv * nv - nw * nw).abs(), nu * nu);
    let divergence_residual = ratio(
        nodal_norm(&div_edges(&v), g.cell_volume()),
        nodal_norm(&div_u, g.cell_volume()),
    );
    let residual = reconstruction_residual.max(orthogonality_residual).max(pythagoras_residual);
    Ok(DecomposedField {
        v,
        w,
        xi: ScalarPotential::from_values(&g, xi)?,
        residual,
        reconstruction_residual,
        orthogonality_residual,
        pythagoras_residual,
        divergence_residual,
        poisson_iterations: stats.iterations,
    })
}

/// The divergence-free part of `u`.
#[allow(non_snake_case)]
pub fn project_V(u: &VectorField, tol: f64) -> Result<VectorField> {
    Ok(decompose(u, tol)?.v)
}

/// Divergence-free part computed with a prebuilt solver; no residual bookkeeping.
pub(crate) fn project_divergence_free(u: &VectorField, solver: &PoissonSolver) -> Result<VectorField> {
    let (xi, _) = solver.solve_nodes(&div_edges(u), DEFAULT_TOL)?;
    let mut v = u.sub(&grad_nodes(u.grid(), &xi));
    v.enforce_boundary();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::ops::{curl_edges, curl_faces, discrete_grad};
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new([1.0, 1.2, 0.9], [8, 7, 6]).unwrap()
    }

    #[test]
    fn gradient_input_has_no_solenoidal_part() {
        let g = grid();
        let u = discrete_grad(&ScalarPotential::random(&g, 3)).unwrap();
        let d = decompose(&u, 1e-10).unwrap();
        assert!(d.v.norm_l2() <= 1e-10 * u.norm_l2());
        assert!(d.w.sub(&u).norm_l2() <= 1e-10 * u.norm_l2());
    }

    #[test]
    fn curl_input_is_a_fixed_point() {
        let g = grid();
        let z = VectorField::random(&g, 5);
        let u = curl_faces(&curl_edges(&z));
        let d = decompose(&u, 1e-10).unwrap();
        assert!(d.w.norm_l2() <= 1e-12 * u.norm_l2());
    }

    #[test]
    fn random_field_residuals() {
        let g = grid();
        let u = VectorField::random(&g, 8);
        let d = decompose(&u, 1e-10).unwrap();
        assert!(d.residual <= 1e-12, "{}", d.residual);
        assert!(d.divergence_residual <= 1e-12);
    }

    #[test]
    fn cg_route_matches_spectral() {
        let g = grid();
        let u = VectorField::random(&g, 9);
        let a = decompose(&u, 1e-12).unwrap();
        let b = decompose_with(&u, 1e-12, &PoissonSolver::new(&g, PoissonMethod::ConjugateGradient)).unwrap();
        assert!(a.v.sub(&b.v).norm_l2() <= 1e-9 * u.norm_l2());
    }

    #[test]
    fn projection_is_idempotent_and_preserves_curl() {
        let g = grid();
        let u = VectorField::random(&g, 10);
        let v = project_V(&u, 1e-10).unwrap();
        let vv = project_V(&v, 1e-10).unwrap();
        assert!(vv.sub(&v).norm_l2() <= 1e-10 * v.norm_l2());
        let (cu, cv) = (curl_edges(&u), curl_edges(&v));
        assert!(cu.sub(&cv).max_abs() <= 1e-11 * cu.max_abs());
    }

    #[test]
    fn rejects_bad_tolerance() {
        let g = grid();
        assert!(decompose(&VectorField::random(&g, 1), 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn splitting_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = GridSpec::cube(1.0, 5).unwrap();
            let (u1, u2) = (VectorField::random(&g, s1), VectorField::random(&g, s2));
            let d = decompose(&VectorField::lin_comb(a, &u1, b, &u2), 1e-10).unwrap();
            let (d1, d2) = (decompose(&u1, 1e-10).unwrap(), decompose(&u2, 1e-10).unwrap());
            let v = VectorField::lin_comb(a, &d1.v, b, &d2.v);
            prop_assert!(d.v.sub(&v).norm_l2() <= 1e-10 * (1.0 + v.norm_l2()));
        }

        #[test]
        fn pythagoras_holds(seed in 0u64..10_000) {
            let g = GridSpec::new([1.0, 2.0, 1.5], [5, 6, 4]).unwrap();
            let d = decompose(&VectorField::random(&g, seed), 1e-10).unwrap();
            prop_assert!(d.pythagoras_residual <= 1e-12);
        }
    }
}
