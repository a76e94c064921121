//! Mimetic difference operators on the Yee staggering.
//!
//! `grad: nodes -> edges`, `curl: edges -> faces`, `div: faces -> cells` form
//! an exact sequence, and the nodal divergence of edge fields is the negative
//! adjoint of `grad`. The face-to-edge curl is the adjoint of the primal one,
//! so applying [`discrete_curl`] twice yields the discrete curl-curl operator.

use crate::error::{Error, Result};
use crate::field::{ScalarPotential, VectorField};
use crate::grid::{GridSpec, Shape3, Staggering};

/// Where a scalar array is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarLocation {
    Node,
    Cell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarArray {
    pub grid: GridSpec,
    pub location: ScalarLocation,
    pub values: Vec<f64>,
}

impl ScalarArray {
    pub fn shape(&self) -> Shape3 {
        match self.location {
            ScalarLocation::Node => self.grid.nodes(),
            ScalarLocation::Cell => self.grid.cell_shape(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn norm_l2(&self) -> f64 {
        (crate::field::dot_slices(&self.values, &self.values) * self.grid.cell_volume()).sqrt()
    }
}

fn check_valid(u: &VectorField) -> Result<()> {
    for c in 0..3 {
        let expected = u.shape(c).len();
        if u.comp(c).len() != expected {
            return Err(Error::InvalidField(format!(
                "component {c} has {} entries, expected {expected}",
                u.comp(c).len()
            )));
        }
    }
    Ok(())
}

/// Curl of a field. Edge fields map to faces with the primal stencil; face
/// fields map back to edges with its adjoint.
pub fn discrete_curl(u: &VectorField) -> Result<VectorField> {
    check_valid(u)?;
    Ok(match u.staggering() {
        Staggering::Edge => curl_edges(u),
        Staggering::Face => curl_faces(u),
    })
}

pub(crate) fn curl_edges(u: &VectorField) -> VectorField {
    let g = *u.grid();
    let [nx, ny, nz] = g.cells;
    let [hx, hy, hz] = g.spacing();
    let (ex, ey, ez) = (u.comp(0), u.comp(1), u.comp(2));
    let (sx, sy, sz) = (g.edge_shape(0), g.edge_shape(1), g.edge_shape(2));
    let mut out = VectorField::zeros(&g, Staggering::Face);

    let fx_shape = g.face_shape(0);
    let fx = out.comp_mut(0);
    for i in 0..=nx {
        for j in 0..ny {
            for k in 0..nz {
                let dz_dy = (ez[sz.idx(i, j + 1, k)] - ez[sz.idx(i, j, k)]) / hy;
                let dy_dz = (ey[sy.idx(i, j, k + 1)] - ey[sy.idx(i, j, k)]) / hz;
                fx[fx_shape.idx(i, j, k)] = dz_dy - dy_dz;
            }
        }
    }
    let fy_shape = g.face_shape(1);
    let fy = out.comp_mut(1);
    for i in 0..nx {
        for j in 0..=ny {
            for k in 0..nz {
                let dx_dz = (ex[sx.idx(i, j, k + 1)] - ex[sx.idx(i, j, k)]) / hz;
                let dz_dx = (ez[sz.idx(i + 1, j, k)] - ez[sz.idx(i, j, k)]) / hx;
                fy[fy_shape.idx(i, j, k)] = dx_dz - dz_dx;
            }
        }
    }
    let fz_shape = g.face_shape(2);
    let fz = out.comp_mut(2);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..=nz {
                let dy_dx = (ey[sy.idx(i + 1, j, k)] - ey[sy.idx(i, j, k)]) / hx;
                let dx_dy = (ex[sx.idx(i, j + 1, k)] - ex[sx.idx(i, j, k)]) / hy;
                fz[fz_shape.idx(i, j, k)] = dy_dx - dx_dy;
            }
        }
    }
    out
}

/// Transpose of [`curl_edges`] restricted to edges with free tangential trace.
pub(crate) fn curl_faces(f: &VectorField) -> VectorField {
    let g = *f.grid();
    let [nx, ny, nz] = g.cells;
    let [hx, hy, hz] = g.spacing();
    let (sx, sy, sz) = (g.edge_shape(0), g.edge_shape(1), g.edge_shape(2));
    let mut ex = vec![0.0; sx.len()];
    let mut ey = vec![0.0; sy.len()];
    let mut ez = vec![0.0; sz.len()];

    let fx_shape = g.face_shape(0);
    let fx = f.comp(0);
    for i in 0..=nx {
        for j in 0..ny {
            for k in 0..nz {
                let v = fx[fx_shape.idx(i, j, k)];
                ez[sz.idx(i, j + 1, k)] += v / hy;
                ez[sz.idx(i, j, k)] -= v / hy;
                ey[sy.idx(i, j, k + 1)] -= v / hz;
                ey[sy.idx(i, j, k)] += v / hz;
            }
        }
    }
    let fy_shape = g.face_shape(1);
    let fy = f.comp(1);
    for i in 0..nx {
        for j in 0..=ny {
            for k in 0..nz {
                let v = fy[fy_shape.idx(i, j, k)];
                ex[sx.idx(i, j, k + 1)] += v / hz;
                ex[sx.idx(i, j, k)] -= v / hz;
                ez[sz.idx(i + 1, j, k)] -= v / hx;
                ez[sz.idx(i, j, k)] += v / hx;
            }
        }
    }
    let fz_shape = g.face_shape(2);
    let fz = f.comp(2);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..=nz {
                let v = fz[fz_shape.idx(i, j, k)];
                ey[sy.idx(i + 1, j, k)] += v / hx;
                ey[sy.idx(i, j, k)] -= v / hx;
                ex[sx.idx(i, j + 1, k)] -= v / hy;
                ex[sx.idx(i, j, k)] += v / hy;
            }
        }
    }
    let mut out = VectorField::zeros(&g, Staggering::Edge);
    out.comp_mut(0).copy_from_slice(&ex);
    out.comp_mut(1).copy_from_slice(&ey);
    out.comp_mut(2).copy_from_slice(&ez);
    out.enforce_boundary();
    out
}

/// The curl-curl operator on edge fields.
pub fn curl_curl(u: &VectorField) -> VectorField {
    curl_faces(&curl_edges(u))
}

/// Divergence: nodal (interior nodes, zero on the boundary) for edge fields,
/// cell-centred for face fields.
pub fn discrete_div(u: &VectorField) -> Result<ScalarArray> {
    check_valid(u)?;
    Ok(match u.staggering() {
        Staggering::Edge => ScalarArray {
            grid: *u.grid(),
            location: ScalarLocation::Node,
            values: div_edges(u),
        },
        Staggering::Face => ScalarArray {
            grid: *u.grid(),
            location: ScalarLocation::Cell,
            values: div_faces(u),
        },
    })
}

pub(crate) fn div_edges(u: &VectorField) -> Vec<f64> {
    let g = *u.grid();
    let [nx, ny, nz] = g.cells;
    let [hx, hy, hz] = g.spacing();
    let nodes = g.nodes();
    let (sx, sy, sz) = (g.edge_shape(0), g.edge_shape(1), g.edge_shape(2));
    let (ex, ey, ez) = (u.comp(0), u.comp(1), u.comp(2));
    let mut out = vec![0.0; nodes.len()];
    for i in 1..nx {
        for j in 1..ny {
            for k in 1..nz {
                let d = (ex[sx.idx(i, j, k)] - ex[sx.idx(i - 1, j, k)]) / hx
                    + (ey[sy.idx(i, j, k)] - ey[sy.idx(i, j - 1, k)]) / hy
                    + (ez[sz.idx(i, j, k)] - ez[sz.idx(i, j, k - 1)]) / hz;
                out[nodes.idx(i, j, k)] = d;
            }
        }
    }
    out
}

fn div_faces(f: &VectorField) -> Vec<f64> {
    let g = *f.grid();
    let [nx, ny, nz] = g.cells;
    let [hx, hy, hz] = g.spacing();
    let cells = g.cell_shape();
    let (s0, s1, s2) = (g.face_shape(0), g.face_shape(1), g.face_shape(2));
    let (fx, fy, fz) = (f.comp(0), f.comp(1), f.comp(2));
    let mut out = vec![0.0; cells.len()];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                out[cells.idx(i, j, k)] = (fx[s0.idx(i + 1, j, k)] - fx[s0.idx(i, j, k)]) / hx
                    + (fy[s1.idx(i, j + 1, k)] - fy[s1.idx(i, j, k)]) / hy
                    + (fz[s2.idx(i, j, k + 1)] - fz[s2.idx(i, j, k)]) / hz;
            }
        }
    }
    out
}

/// Edge gradient of a zero-boundary potential. The result has zero
/// tangential trace because the potential vanishes on the boundary.
pub fn discrete_grad(xi: &ScalarPotential) -> Result<VectorField> {
    let b = xi.boundary_max();
    if b != 0.0 {
        return Err(Error::Contract(format!("potential has boundary values up to {b:.3e}")));
    }
    Ok(grad_nodes(xi.grid(), xi.values()))
}

pub(crate) fn grad_nodes(g: &GridSpec, xi: &[f64]) -> VectorField {
    let [nx, ny, nz] = g.cells;
    let [hx, hy, hz] = g.spacing();
    let nodes = g.nodes();
    let mut out = VectorField::zeros(g, Staggering::Edge);
    let sx = g.edge_shape(0);
    let gx = out.comp_mut(0);
    for i in 0..nx {
        for j in 0..=ny {
            for k in 0..=nz {
                gx[sx.idx(i, j, k)] = (xi[nodes.idx(i + 1, j, k)] - xi[nodes.idx(i, j, k)]) / hx;
            }
        }
    }
    let sy = g.edge_shape(1);
    let gy = out.comp_mut(1);
    for i in 0..=nx {
        for j in 0..ny {
            for k in 0..=nz {
                gy[sy.idx(i, j, k)] = (xi[nodes.idx(i, j + 1, k)] - xi[nodes.idx(i, j, k)]) / hy;
            }
        }
    }
    let sz = g.edge_shape(2);
    let gz = out.comp_mut(2);
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..nz {
                gz[sz.idx(i, j, k)] = (xi[nodes.idx(i, j, k + 1)] - xi[nodes.idx(i, j, k)]) / hz;
            }
        }
    }
    out
}

/// Nodal discrete Laplacian `div grad` on zero-boundary arrays.
pub(crate) fn laplacian_nodes(g: &GridSpec, xi: &[f64]) -> Vec<f64> {
    div_edges(&grad_nodes(g, xi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new([1.0, 1.3, 0.7], [6, 7, 5]).unwrap()
    }

    #[test]
    fn curl_of_rotation_is_constant() {
        let g = grid();
        let u = VectorField::from_fn(&g, Staggering::Edge, |x| [-x[1], x[0], 0.0]);
        let c = discrete_curl(&u).unwrap();
        let [nx, ny, _] = g.cells;
        let s = g.face_shape(2);
        for i in 1..nx - 1 {
            for j in 1..ny - 1 {
                for k in 1..4 {
                    assert!((c.comp(2)[s.idx(i, j, k)] - 2.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn div_of_position_is_three() {
        let g = grid();
        let u = VectorField::from_fn(&g, Staggering::Edge, |x| x);
        let d = discrete_div(&u).unwrap();
        let s = g.nodes();
        for i in 2..4 {
            for j in 2..5 {
                for k in 2..3 {
                    assert!((d.values[s.idx(i, j, k)] - 3.0).abs() < 1e-12);
                }
            }
        }
        let f = VectorField::from_fn(&g, Staggering::Face, |x| x);
        let d = discrete_div(&f).unwrap();
        assert!(d.values.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn constant_face_field_is_divergence_free() {
        let g = grid();
        let f = VectorField::from_fn(&g, Staggering::Face, |_| [0.3, -1.0, 2.0]);
        assert!(discrete_div(&f).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn grad_of_zero_is_zero() {
        let g = grid();
        let z = ScalarPotential::zeros(&g);
        assert!(discrete_grad(&z).unwrap().is_zero());
    }

    #[test]
    fn face_curl_is_adjoint_of_edge_curl() {
        let g = grid();
        let u = VectorField::random(&g, 1);
        let mut f = VectorField::zeros(&g, Staggering::Face);
        let r = VectorField::random(&g, 2);
        // any face field will do; build one from the curl of another edge field
        f.axpy(1.0, &curl_edges(&r));
        f.comp_mut(0)[3] += 0.7;
        let lhs = curl_edges(&u).dot(&f);
        let rhs = u.dot(&curl_faces(&f));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let g = grid();
        let u = VectorField::random(&g, 1);
        let other = VectorField::random(&GridSpec::cube(1.0, 6).unwrap(), 1);
        assert!(u.check_compatible(&other).is_err());
    }
}
