//! Box geometry and the index spaces of the Yee staggering.
//!
//! Scalar potentials live on nodes, primal vector fields on edges, curls on
//! faces and divergences of face fields on cell centres. All arrays are stored
//! row-major with the z index fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of cells per direction.
pub const MIN_CELLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    YeeStaggered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub box_lengths: [f64; 3],
    pub cells: [usize; 3],
    /// Lower corner of the box.
    #[serde(default)]
    pub origin: [f64; 3],
    #[serde(default)]
    pub scheme: Scheme,
}

/// Dimensions of one staggered array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape3 {
    pub dims: [usize; 3],
}

impl Shape3 {
    pub const fn new(n0: usize, n1: usize, n2: usize) -> Self {
        Self { dims: [n0, n1, n2] }
    }

    #[inline(always)]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Strides for unit steps in i, j, k.
    #[inline(always)]
    pub fn strides(&self) -> [usize; 3] {
        [self.dims[1] * self.dims[2], self.dims[2], 1]
    }
}

impl GridSpec {
    pub fn new(box_lengths: [f64; 3], cells: [usize; 3]) -> Result<Self> {
        Self::with_origin(box_lengths, cells, [0.0; 3])
    }

    pub fn with_origin(box_lengths: [f64; 3], cells: [usize; 3], origin: [f64; 3]) -> Result<Self> {
        let g = Self {
            box_lengths,
            cells,
            origin,
            scheme: Scheme::YeeStaggered,
        };
        g.validate()?;
        Ok(g)
    }

    /// The cube `(0, L)^3` with `n` cells per side.
    pub fn cube(length: f64, n: usize) -> Result<Self> {
        Self::new([length; 3], [n; 3])
    }

    /// The cube `(-h, h)^3` centred at the origin.
    pub fn centered_cube(half_width: f64, n: usize) -> Result<Self> {
        Self::with_origin([2.0 * half_width; 3], [n; 3], [-half_width; 3])
    }

    pub fn validate(&self) -> Result<()> {
        for d in 0..3 {
            if self.cells[d] < MIN_CELLS {
                return Err(Error::InvalidGrid(format!(
                    "cells[{d}] = {} is below the minimum of {MIN_CELLS}",
                    self.cells[d]
                )));
            }
            let l = self.box_lengths[d];
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("box_lengths[{d}] = {l} must be positive")));
            }
            if !self.origin[d].is_finite() {
                return Err(Error::InvalidGrid(format!("origin[{d}] is not finite")));
            }
        }
        if self.cell_volume() <= 0.0 {
            return Err(Error::InvalidGrid("cell volume underflows".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        [
            self.box_lengths[0] / self.cells[0] as f64,
            self.box_lengths[1] / self.cells[1] as f64,
            self.box_lengths[2] / self.cells[2] as f64,
        ]
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        let h = self.spacing();
        h[0] * h[1] * h[2]
    }

    pub fn volume(&self) -> f64 {
        self.box_lengths.iter().product()
    }

    pub fn center(&self) -> [f64; 3] {
        [
            self.origin[0] + 0.5 * self.box_lengths[0],
            self.origin[1] + 0.5 * self.box_lengths[1],
            self.origin[2] + 0.5 * self.box_lengths[2],
        ]
    }

    pub fn max_cells(&self) -> usize {
        *self.cells.iter().max().unwrap()
    }

    pub fn nodes(&self) -> Shape3 {
        let [nx, ny, nz] = self.cells;
        Shape3::new(nx + 1, ny + 1, nz + 1)
    }

    pub fn cell_shape(&self) -> Shape3 {
        let [nx, ny, nz] = self.cells;
        Shape3::new(nx, ny, nz)
    }

    /// Shape of the edge array carrying component `c`.
    pub fn edge_shape(&self, c: usize) -> Shape3 {
        let [nx, ny, nz] = self.cells;
        match c {
            0 => Shape3::new(nx, ny + 1, nz + 1),
            1 => Shape3::new(nx + 1, ny, nz + 1),
            _ => Shape3::new(nx + 1, ny + 1, nz),
        }
    }

    /// Shape of the face array carrying component `c`.
    pub fn face_shape(&self, c: usize) -> Shape3 {
        let [nx, ny, nz] = self.cells;
        match c {
            0 => Shape3::new(nx + 1, ny, nz),
            1 => Shape3::new(nx, ny + 1, nz),
            _ => Shape3::new(nx, ny, nz + 1),
        }
    }

    /// Physical position of node `(i, j, k)`.
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.spacing();
        [
            self.origin[0] + i as f64 * h[0],
            self.origin[1] + j as f64 * h[1],
            self.origin[2] + k as f64 * h[2],
        ]
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.spacing();
        [
            self.origin[0] + (i as f64 + 0.5) * h[0],
            self.origin[1] + (j as f64 + 0.5) * h[1],
            self.origin[2] + (k as f64 + 0.5) * h[2],
        ]
    }

    /// Offsets (in cells) of the sample points of a staggered array relative
    /// to the node lattice: 0.5 in the directions where the array is shifted.
    pub fn stagger_offset(staggering: Staggering, c: usize) -> [f64; 3] {
        let mut off = match staggering {
            Staggering::Edge => [0.0; 3],
            Staggering::Face => [0.5; 3],
        };
        off[c] = match staggering {
            Staggering::Edge => 0.5,
            Staggering::Face => 0.0,
        };
        off
    }

    pub fn sample_position(&self, staggering: Staggering, c: usize, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.spacing();
        let off = Self::stagger_offset(staggering, c);
        [
            self.origin[0] + (i as f64 + off[0]) * h[0],
            self.origin[1] + (j as f64 + off[1]) * h[1],
            self.origin[2] + (k as f64 + off[2]) * h[2],
        ]
    }

    /// Whether edge `(i, j, k)` of component `c` lies on the boundary and is
    /// tangential to it.
    #[inline]
    pub fn is_tangential_boundary_edge(&self, c: usize, i: usize, j: usize, k: usize) -> bool {
        let [nx, ny, nz] = self.cells;
        let idx = [i, j, k];
        let n = [nx, ny, nz];
        (0..3).filter(|&d| d != c).any(|d| idx[d] == 0 || idx[d] == n[d])
    }

    pub fn is_boundary_node(&self, i: usize, j: usize, k: usize) -> bool {
        let [nx, ny, nz] = self.cells;
        i == 0 || j == 0 || k == 0 || i == nx || j == ny || k == nz
    }

    pub(crate) fn same_as(&self, other: &GridSpec) -> bool {
        self.cells == other.cells
            && self.box_lengths == other.box_lengths
            && self.origin == other.origin
            && self.scheme == other.scheme
    }
}

/// Where the three components of a vector field are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Staggering {
    /// Primal edges; the home of `u`, `v`, `w`.
    Edge,
    /// Primal faces; the home of `curl u`.
    Face,
}

impl Staggering {
    pub fn dual(self) -> Self {
        match self {
            Staggering::Edge => Staggering::Face,
            Staggering::Face => Staggering::Edge,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_coarse_grids() {
        assert!(GridSpec::new([1.0; 3], [3, 8, 8]).is_err());
        assert!(GridSpec::new([1.0, -1.0, 1.0], [8; 3]).is_err());
        assert!(GridSpec::new([1.0; 3], [4; 3]).is_ok());
    }

    #[test]
    fn tangential_edges() {
        let g = GridSpec::cube(1.0, 4).unwrap();
        // x-edge on the y=0 face is tangential
        assert!(g.is_tangential_boundary_edge(0, 1, 0, 2));
        // x-edge touching x=0 is normal to that face
        assert!(!g.is_tangential_boundary_edge(0, 0, 2, 2));
        assert!(g.is_tangential_boundary_edge(2, 4, 1, 1));
    }

    #[test]
    fn shapes() {
        let g = GridSpec::new([1.0; 3], [4, 5, 6]).unwrap();
        assert_eq!(g.edge_shape(0).dims, [4, 6, 7]);
        assert_eq!(g.face_shape(2).dims, [4, 5, 7]);
        assert_eq!(g.nodes().len(), 5 * 6 * 7);
    }
}
