//! Corner (trapezoid-type) quadrature for nonlinear integrals of staggered
//! fields.
//!
//! Each cell carries eight samples, one per corner. The sample at corner
//! `(a, b, c)` of cell `(i, j, k)` is assembled from the three cell edges
//! that meet at that corner, and carries a weight of `|cell| / 8`. The rule
//! is second-order accurate, exact for `p = 2` against the edge inner
//! product, and has no spurious kernel: a sample vanishes for every corner of
//! a cell only when every edge of the cell vanishes. That keeps the sextic
//! functional strictly convex along gradient directions.

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::Staggering;

/// Edge indices feeding the eight corner samples of one cell.
#[derive(Clone, Copy)]
struct CellEdges {
    x: [usize; 4], // (b, c) -> x-edge at (i, j+b, k+c)
    y: [usize; 4], // (a, c) -> y-edge at (i+a, j, k+c)
    z: [usize; 4], // (a, b) -> z-edge at (i+a, j+b, k)
}

const CORNERS: [(usize, usize, usize); 8] = [
    (0, 0, 0),
    (0, 0, 1),
    (0, 1, 0),
    (0, 1, 1),
    (1, 0, 0),
    (1, 0, 1),
    (1, 1, 0),
    (1, 1, 1),
];

#[inline(always)]
fn corner_slots(a: usize, b: usize, c: usize) -> (usize, usize, usize) {
    (2 * b + c, 2 * a + c, 2 * a + b)
}

/// Visits every cell of an edge field with the indices of its twelve edges.
#[inline(always)]
fn for_each_cell<F: FnMut(CellEdges)>(u: &VectorField, mut f: F) {
    let g = u.grid();
    let [nx, ny, nz] = g.cells;
    let (sx, sy, sz) = (g.edge_shape(0), g.edge_shape(1), g.edge_shape(2));
    let [_, sx1, sx2] = sx.strides();
    let [sy0, _, sy2] = sy.strides();
    let [sz0, sz1, _] = sz.strides();
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let bx = sx.idx(i, j, k);
                let by = sy.idx(i, j, k);
                let bz = sz.idx(i, j, k);
                f(CellEdges {
                    x: [bx, bx + sx2, bx + sx1, bx + sx1 + sx2],
                    y: [by, by + sy2, by + sy0, by + sy0 + sy2],
                    z: [bz, bz + sz1, bz + sz0, bz + sz0 + sz1],
                });
            }
        }
    }
}

#[inline(always)]
fn gather(u: &[&[f64]; 3], e: &CellEdges) -> ([f64; 4], [f64; 4], [f64; 4]) {
    (
        [u[0][e.x[0]], u[0][e.x[1]], u[0][e.x[2]], u[0][e.x[3]]],
        [u[1][e.y[0]], u[1][e.y[1]], u[1][e.y[2]], u[1][e.y[3]]],
        [u[2][e.z[0]], u[2][e.z[1]], u[2][e.z[2]], u[2][e.z[3]]],
    )
}

fn comps(u: &VectorField) -> [&[f64]; 3] {
    [u.comp(0), u.comp(1), u.comp(2)]
}

/// `sum_q w_q |u_q|^p` over all corner samples.
pub fn power_integral(u: &VectorField, p: f64) -> f64 {
    let w = u.grid().cell_volume() / 8.0;
    match u.staggering() {
        Staggering::Edge => {
            let uc = comps(u);
            let mut total = 0.0;
            let even6 = p == 6.0;
            let even2 = p == 2.0;
            for_each_cell(u, |e| {
                let (x, y, z) = gather(&uc, &e);
                let mut cell = 0.0;
                for &(a, b, c) in &CORNERS {
                    let (ix, iy, iz) = corner_slots(a, b, c);
                    let s = x[ix] * x[ix] + y[iy] * y[iy] + z[iz] * z[iz];
                    cell += if even6 {
                        s * s * s
                    } else if even2 {
                        s
                    } else {
                        s.powf(0.5 * p)
                    };
                }
                total += cell;
            });
            total * w
        }
        Staggering::Face => {
            let mut total = 0.0;
            for_each_face_sample(u, |s| total += (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).powf(0.5 * p));
            total * w
        }
    }
}

fn for_each_face_sample<F: FnMut([f64; 3])>(u: &VectorField, mut f: F) {
    let g = u.grid();
    let [nx, ny, nz] = g.cells;
    let (s0, s1, s2) = (g.face_shape(0), g.face_shape(1), g.face_shape(2));
    let (fx, fy, fz) = (u.comp(0), u.comp(1), u.comp(2));
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                for &(a, b, c) in &CORNERS {
                    f([fx[s0.idx(i + a, j, k)], fy[s1.idx(i, j + b, k)], fz[s2.idx(i, j, k + c)]]);
                }
            }
        }
    }
}

/// L^p norm under the corner rule.
pub fn lp_norm(u: &VectorField, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("L^p norm needs finite p >= 1, got {p}")));
    }
    Ok(power_integral(u, p).powf(1.0 / p))
}

/// All corner samples of an edge field, cell-major, eight per cell, in the
/// order of the corner table.
pub fn corner_samples(u: &VectorField) -> Vec<[f64; 3]> {
    let uc = comps(u);
    let mut out = Vec::with_capacity(8 * u.grid().cell_shape().len());
    for_each_cell(u, |e| {
        let (x, y, z) = gather(&uc, &e);
        for &(a, b, c) in &CORNERS {
            let (ix, iy, iz) = corner_slots(a, b, c);
            out.push([x[ix], y[iy], z[iz]]);
        }
    });
    out
}

/// Mean of `|U|^p` over the corner samples attached to each node, on the
/// node lattice. Nodes without samples cannot occur.
pub(crate) fn nodal_mean_power(u: &VectorField, p: f64) -> Vec<f64> {
    let g = *u.grid();
    let nodes = g.nodes();
    let mut sum = vec![0.0; nodes.len()];
    let mut count = vec![0u32; nodes.len()];
    let samples = corner_samples(u);
    let [nx, ny, nz] = g.cells;
    let mut q = 0;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                for &(a, b, c) in &CORNERS {
                    let s = samples[q];
                    q += 1;
                    let n = nodes.idx(i + a, j + b, k + c);
                    sum[n] += (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).powf(0.5 * p);
                    count[n] += 1;
                }
            }
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
}

/// Physical positions of the corner samples, matching [`corner_samples`].
/// A sample is attributed to its corner node.
pub fn corner_positions(g: &crate::grid::GridSpec) -> Vec<[f64; 3]> {
    let [nx, ny, nz] = g.cells;
    let mut out = Vec::with_capacity(8 * nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                for &(a, b, c) in &CORNERS {
                    out.push(g.node_position(i + a, j + b, k + c));
                }
            }
        }
    }
    out
}

/// Weight of each corner sample.
pub fn sample_weight(g: &crate::grid::GridSpec) -> f64 {
    g.cell_volume() / 8.0
}

/// `sum_q w_q |u_q|^6` together with the L2 Riesz representative of the
/// derivative of `(1/6) sum_q w_q |u_q|^6`, i.e. the discrete `|u|^4 u`.
pub fn sextic_with_gradient(u: &VectorField) -> (f64, VectorField) {
    let uc = comps(u);
    let mut grad = VectorField::zeros(u.grid(), Staggering::Edge);
    let mut total = 0.0;
    {
        let mut gx = vec![0.0; uc[0].len()];
        let mut gy = vec![0.0; uc[1].len()];
        let mut gz = vec![0.0; uc[2].len()];
        for_each_cell(u, |e| {
            let (x, y, z) = gather(&uc, &e);
            let mut ax = [0.0; 4];
            let mut ay = [0.0; 4];
            let mut az = [0.0; 4];
            for &(a, b, c) in &CORNERS {
                let (ix, iy, iz) = corner_slots(a, b, c);
                let s = x[ix] * x[ix] + y[iy] * y[iy] + z[iz] * z[iz];
                let s2 = s * s;
                total += s2 * s;
                ax[ix] += s2 * x[ix];
                ay[iy] += s2 * y[iy];
                az[iz] += s2 * z[iz];
            }
            for q in 0..4 {
                gx[e.x[q]] += ax[q];
                gy[e.y[q]] += ay[q];
                gz[e.z[q]] += az[q];
            }
        });
        // weight |cell|/8 divided by the edge weight |cell|
        for (dst, src) in [(0, gx), (1, gy), (2, gz)] {
            grad.comp_mut(dst).iter_mut().zip(src).for_each(|(d, s)| *d = 0.125 * s);
        }
    }
    grad.enforce_boundary();
    (total * sample_weight(u.grid()), grad)
}

/// Discrete `|u|^4 u` alone.
pub fn nemytskii(u: &VectorField) -> VectorField {
    sextic_with_gradient(u).1
}

/// Action of the Hessian of `(1/6) sum_q w_q |u_q|^6` at `u` on `d`, as an L2
/// Riesz representative: samplewise `|u|^4 d + 4 |u|^2 <u, d> u`.
pub fn sextic_hessian_apply(u: &VectorField, d: &VectorField) -> VectorField {
    let uc = comps(u);
    let dc = comps(d);
    let mut gx = vec![0.0; uc[0].len()];
    let mut gy = vec![0.0; uc[1].len()];
    let mut gz = vec![0.0; uc[2].len()];
    for_each_cell(u, |e| {
        let (x, y, z) = gather(&uc, &e);
        let (dx, dy, dz) = gather(&dc, &e);
        let mut ax = [0.0; 4];
        let mut ay = [0.0; 4];
        let mut az = [0.0; 4];
        for &(a, b, c) in &CORNERS {
            let (ix, iy, iz) = corner_slots(a, b, c);
            let s = x[ix] * x[ix] + y[iy] * y[iy] + z[iz] * z[iz];
            let ud = x[ix] * dx[ix] + y[iy] * dy[iy] + z[iz] * dz[iz];
            let s2 = s * s;
            let t = 4.0 * s * ud;
            ax[ix] += s2 * dx[ix] + t * x[ix];
            ay[iy] += s2 * dy[iy] + t * y[iy];
            az[iz] += s2 * dz[iz] + t * z[iz];
        }
        for q in 0..4 {
            gx[e.x[q]] += ax[q];
            gy[e.y[q]] += ay[q];
            gz[e.z[q]] += az[q];
        }
    });
    let mut out = VectorField::zeros(u.grid(), Staggering::Edge);
    for (dst, src) in [(0, gx), (1, gy), (2, gz)] {
        out.comp_mut(dst).iter_mut().zip(src).for_each(|(o, s)| *o = 0.125 * s);
    }
    out.enforce_boundary();
    out
}

/// Coefficients `c[0..=6]` of the polynomial `alpha -> sum_q w_q |u_q + alpha d_q|^6`.
pub fn sextic_line_polynomial(u: &VectorField, d: &VectorField) -> [f64; 7] {
    let uc = comps(u);
    let dc = comps(d);
    let mut acc = [0.0; 7];
    for_each_cell(u, |e| {
        let (x, y, z) = gather(&uc, &e);
        let (dx, dy, dz) = gather(&dc, &e);
        for &(a, b, c) in &CORNERS {
            let (ix, iy, iz) = corner_slots(a, b, c);
            let q0 = x[ix] * x[ix] + y[iy] * y[iy] + z[iz] * z[iz];
            let q1 = 2.0 * (x[ix] * dx[ix] + y[iy] * dy[iy] + z[iz] * dz[iz]);
            let q2 = dx[ix] * dx[ix] + dy[iy] * dy[iy] + dz[iz] * dz[iz];
            // (q0 + q1 a + q2 a^2)^3
            let q00 = q0 * q0;
            let q11 = q1 * q1;
            let q22 = q2 * q2;
            acc[0] += q00 * q0;
            acc[1] += 3.0 * q00 * q1;
            acc[2] += 3.0 * (q00 * q2 + q0 * q11);
            acc[3] += q11 * q1 + 6.0 * q0 * q1 * q2;
            acc[4] += 3.0 * (q11 * q2 + q0 * q22);
            acc[5] += 3.0 * q1 * q22;
            acc[6] += q22 * q2;
        }
    });
    let w = sample_weight(u.grid());
    acc.map(|c| c * w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn p2_rule_matches_edge_inner_product() {
        let g = GridSpec::new([1.0, 2.0, 1.5], [5, 6, 7]).unwrap();
        let u = VectorField::random(&g, 11);
        let a = power_integral(&u, 2.0);
        let b = u.norm_l2_sq();
        assert!((a - b).abs() <= 1e-13 * b);
    }

    #[test]
    fn rejects_p_below_one() {
        let g = GridSpec::cube(1.0, 4).unwrap();
        let u = VectorField::random(&g, 1);
        assert!(matches!(lp_norm(&u, 0.5), Err(Error::Domain(_))));
        assert!(lp_norm(&u, f64::NAN).is_err());
    }

    #[test]
    fn nemytskii_is_riesz_gradient() {
        let g = GridSpec::cube(1.0, 5).unwrap();
        let u = VectorField::random(&g, 3);
        let d = VectorField::random(&g, 4);
        let (_, n) = sextic_with_gradient(&u);
        let h = 1e-5;
        let fp = power_integral(&u.add(&d.scaled(h)), 6.0) / 6.0;
        let fm = power_integral(&u.sub(&d.scaled(h)), 6.0) / 6.0;
        let fd = (fp - fm) / (2.0 * h);
        let an = n.dot(&d);
        assert!((fd - an).abs() <= 1e-7 * an.abs());
    }

    #[test]
    fn hessian_matches_gradient_difference() {
        let g = GridSpec::cube(1.0, 5).unwrap();
        let u = VectorField::random(&g, 5);
        let d = VectorField::random(&g, 6);
        let hd = sextic_hessian_apply(&u, &d);
        let h = 1e-6;
        let np = nemytskii(&u.add(&d.scaled(h)));
        let nm = nemytskii(&u.sub(&d.scaled(h)));
        let fd = np.sub(&nm).scaled(0.5 / h);
        assert!(fd.sub(&hd).norm_l2() <= 1e-6 * hd.norm_l2());
    }

    #[test]
    fn line_polynomial_is_exact() {
        let g = GridSpec::cube(1.0, 4).unwrap();
        let u = VectorField::random(&g, 7);
        let d = VectorField::random(&g, 8);
        let c = sextic_line_polynomial(&u, &d);
        for alpha in [-0.7, 0.0, 0.3, 1.9] {
            let direct = power_integral(&u.add(&d.scaled(alpha)), 6.0);
            let poly: f64 = c.iter().rev().fold(0.0, |acc, ci| acc * alpha + ci);
            assert!((direct - poly).abs() <= 1e-11 * direct);
        }
    }
}
