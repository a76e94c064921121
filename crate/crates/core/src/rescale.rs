//! The dilation-translation `T_{s,y} u(x) = s^{1/2} u(s x + y)`, which leaves
//! `|curl u|_2` and `|u|_6` invariant in the continuum.

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::GridSpec;

/// Trilinear interpolation of one staggered component at a physical point.
/// Lattice neighbours outside the array contribute zero.
fn interpolate(g: &GridSpec, data: &[f64], dims: [usize; 3], off: [f64; 3], x: [f64; 3]) -> f64 {
    let h = g.spacing();
    let mut base = [0isize; 3];
    let mut frac = [0.0; 3];
    for d in 0..3 {
        if x[d] < g.origin[d] || x[d] > g.origin[d] + g.box_lengths[d] {
            return 0.0;
        }
        let q = (x[d] - g.origin[d]) / h[d] - off[d];
        let f = q.floor();
        base[d] = f as isize;
        frac[d] = q - f;
    }
    let mut acc = 0.0;
    for a in 0..2 {
        let wa = if a == 0 { 1.0 - frac[0] } else { frac[0] };
        let i = base[0] + a as isize;
        if wa == 0.0 || i < 0 || i >= dims[0] as isize {
            continue;
        }
        for b in 0..2 {
            let wb = if b == 0 { 1.0 - frac[1] } else { frac[1] };
            let j = base[1] + b as isize;
            if wb == 0.0 || j < 0 || j >= dims[1] as isize {
                continue;
            }
            for c in 0..2 {
                let wc = if c == 0 { 1.0 - frac[2] } else { frac[2] };
                let k = base[2] + c as isize;
                if wc == 0.0 || k < 0 || k >= dims[2] as isize {
                    continue;
                }
                let idx = (i as usize * dims[1] + j as usize) * dims[2] + k as usize;
                acc += wa * wb * wc * data[idx];
            }
        }
    }
    acc
}

/// Resamples `s^{1/2} u(s x + y)` on the grid of `u`.
pub fn rescale(u: &VectorField, s: f64, y: [f64; 3]) -> Result<VectorField> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("scale must be positive and finite, got {s}")));
    }
    if y.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("translation must be finite".into()));
    }
    u.validate()?;
    let g = *u.grid();
    let st = u.staggering();
    let amp = s.sqrt();
    let mut comps: [Vec<f64>; 3] = Default::default();
    for (c, out) in comps.iter_mut().enumerate() {
        let shape = u.shape(c);
        let off = GridSpec::stagger_offset(st, c);
        let src = u.comp(c);
        let [n0, n1, n2] = shape.dims;
        *out = vec![0.0; shape.len()];
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let x = g.sample_position(st, c, i, j, k);
                    let target = [s * x[0] + y[0], s * x[1] + y[1], s * x[2] + y[2]];
                    out[shape.idx(i, j, k)] = amp * interpolate(&g, src, shape.dims, off, target);
                }
            }
        }
    }
    let mut out = VectorField::zeros(&g, st);
    for (c, data) in comps.into_iter().enumerate() {
        out.comp_mut(c).copy_from_slice(&data);
    }
    out.enforce_boundary();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Staggering;
    use crate::ops::curl_edges;
    use crate::quadrature::lp_norm;

    /// Divergence-free swirl `curl (0, 0, psi)` with compact support of radius `rho`.
    fn swirl(g: &GridSpec, c: [f64; 3], rho: f64) -> VectorField {
        VectorField::from_fn(g, Staggering::Edge, |x| {
            let d = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if r2 >= rho * rho {
                return [0.0; 3];
            }
            // psi = (1 - r^2/rho^2)^4, grad psi = -8 (1 - r^2/rho^2)^3 d / rho^2
            let q = 1.0 - r2 / (rho * rho);
            let f = -8.0 * q * q * q / (rho * rho);
            [f * d[1], -f * d[0], 0.0]
        })
    }

    #[test]
    fn identity_parameters_reproduce_the_field() {
        let g = GridSpec::cube(1.0, 8).unwrap();
        let u = VectorField::random(&g, 3);
        let t = rescale(&u, 1.0, [0.0; 3]).unwrap();
        assert!(t.sub(&u).max_abs() <= 1e-12);
    }

    #[test]
    fn rejects_nonpositive_scale() {
        let g = GridSpec::cube(1.0, 4).unwrap();
        let u = VectorField::random(&g, 1);
        assert!(matches!(rescale(&u, 0.0, [0.0; 3]), Err(Error::Domain(_))));
        assert!(rescale(&u, -1.0, [0.0; 3]).is_err());
    }

    #[test]
    fn shrinking_preserves_norms_approximately() {
        let g = GridSpec::cube(2.0, 64).unwrap();
        let c = g.center();
        let u = swirl(&g, c, 0.6);
        let s = 2.0;
        // keep the centre fixed: s c + y = c
        let y = [c[0] - s * c[0], c[1] - s * c[1], c[2] - s * c[2]];
        let t = rescale(&u, s, y).unwrap();
        let r6 = lp_norm(&t, 6.0).unwrap() / lp_norm(&u, 6.0).unwrap();
        let rc = curl_edges(&t).norm_l2() / curl_edges(&u).norm_l2();
        assert!((r6 - 1.0).abs() <= 0.02, "L6 ratio {r6}");
        assert!((rc - 1.0).abs() <= 0.05, "curl ratio {rc}");
    }
}
