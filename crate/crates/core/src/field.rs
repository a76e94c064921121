//! Staggered vector fields and nodal scalar potentials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Shape3, Staggering};

/// A three-component field sampled on edges (primal) or faces (curl output).
///
/// Edge fields always carry zero tangential components on the boundary of
/// the box, which is the discrete metallic condition `nu x u = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    staggering: Staggering,
    comps: [Vec<f64>; 3],
}

impl VectorField {
    pub fn zeros(grid: &GridSpec, staggering: Staggering) -> Self {
        let comps = std::array::from_fn(|c| vec![0.0; Self::shape_of(grid, staggering, c).len()]);
        Self {
            grid: *grid,
            staggering,
            comps,
        }
    }

    pub fn shape_of(grid: &GridSpec, staggering: Staggering, c: usize) -> Shape3 {
        match staggering {
            Staggering::Edge => grid.edge_shape(c),
            Staggering::Face => grid.face_shape(c),
        }
    }

    /// Samples `f` at the staggered location of every component. Tangential
    /// boundary edges are set to zero.
    pub fn from_fn<F>(grid: &GridSpec, staggering: Staggering, f: F) -> Self
    where
        F: Fn([f64; 3]) -> [f64; 3],
    {
        let mut out = Self::zeros(grid, staggering);
        for c in 0..3 {
            let shape = out.shape(c);
            let [n0, n1, n2] = shape.dims;
            let data = &mut out.comps[c];
            for i in 0..n0 {
                for j in 0..n1 {
                    for k in 0..n2 {
                        let x = grid.sample_position(staggering, c, i, j, k);
                        data[shape.idx(i, j, k)] = f(x)[c];
                    }
                }
            }
        }
        out.enforce_boundary();
        out
    }

    /// Builds a field from raw component arrays. Edge fields must already
    /// satisfy the metallic boundary condition.
    pub fn from_components(grid: &GridSpec, staggering: Staggering, comps: [Vec<f64>; 3]) -> Result<Self> {
        grid.validate()?;
        for (c, comp) in comps.iter().enumerate() {
            let expected = Self::shape_of(grid, staggering, c).len();
            if comp.len() != expected {
                return Err(Error::InvalidField(format!(
                    "component {c} has {} entries, expected {expected}",
                    comp.len()
                )));
            }
        }
        let field = Self {
            grid: *grid,
            staggering,
            comps,
        };
        field.validate()?;
        Ok(field)
    }

    /// Edge field with independent uniform entries in `[-1, 1]`.
    pub fn random(grid: &GridSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::zeros(grid, Staggering::Edge);
        for c in 0..3 {
            for x in out.comps[c].iter_mut() {
                *x = rng.random_range(-1.0..1.0);
            }
        }
        out.enforce_boundary();
        out
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn staggering(&self) -> Staggering {
        self.staggering
    }

    pub fn shape(&self, c: usize) -> Shape3 {
        Self::shape_of(&self.grid, self.staggering, c)
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub(crate) fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    pub fn components(&self) -> &[Vec<f64>; 3] {
        &self.comps
    }

    pub fn into_components(self) -> [Vec<f64>; 3] {
        self.comps
    }

    pub fn len(&self) -> usize {
        self.comps.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks finiteness and, for edge fields, the tangential trace.
    pub fn validate(&self) -> Result<()> {
        for (c, comp) in self.comps.iter().enumerate() {
            if comp.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidField(format!("component {c} has non-finite entries")));
            }
        }
        if self.staggering == Staggering::Edge {
            let t = self.tangential_trace_max();
            if t != 0.0 {
                return Err(Error::InvalidField(format!("tangential boundary trace is {t:.3e}, not zero")));
            }
        }
        Ok(())
    }

    /// Largest absolute tangential boundary entry (edge fields only).
    pub fn tangential_trace_max(&self) -> f64 {
        if self.staggering != Staggering::Edge {
            return 0.0;
        }
        let mut m: f64 = 0.0;
        self.for_each_tangential(|c, idx| m = m.max(self.comps[c][idx].abs()));
        m
    }

    fn for_each_tangential<F: FnMut(usize, usize)>(&self, mut f: F) {
        let g = self.grid;
        for c in 0..3 {
            let shape = g.edge_shape(c);
            let [n0, n1, n2] = shape.dims;
            for i in 0..n0 {
                for j in 0..n1 {
                    for k in 0..n2 {
                        if g.is_tangential_boundary_edge(c, i, j, k) {
                            f(c, shape.idx(i, j, k));
                        }
                    }
                }
            }
        }
    }

    /// Zeroes tangential boundary edges; no-op for face fields.
    pub fn enforce_boundary(&mut self) {
        if self.staggering != Staggering::Edge {
            return;
        }
        let g = self.grid;
        for c in 0..3 {
            let shape = g.edge_shape(c);
            let [n0, n1, n2] = shape.dims;
            let data = &mut self.comps[c];
            for i in 0..n0 {
                for j in 0..n1 {
                    for k in 0..n2 {
                        if g.is_tangential_boundary_edge(c, i, j, k) {
                            data[shape.idx(i, j, k)] = 0.0;
                        }
                    }
                }
            }
        }
    }

    pub(crate) fn check_compatible(&self, other: &VectorField) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::InvalidField("fields live on different grids".into()));
        }
        if self.staggering != other.staggering {
            return Err(Error::InvalidField(format!(
                "staggering mismatch: {:?} vs {:?}",
                self.staggering, other.staggering
            )));
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for comp in self.comps.iter_mut() {
            comp.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &VectorField) {
        debug_assert!(self.check_compatible(x).is_ok());
        for c in 0..3 {
            for (y, xv) in self.comps[c].iter_mut().zip(&x.comps[c]) {
                *y += a * xv;
            }
        }
    }

    /// `a * self + b * x` as a new field.
    pub fn lin_comb(a: f64, x: &VectorField, b: f64, y: &VectorField) -> Self {
        debug_assert!(x.check_compatible(y).is_ok());
        let comps = std::array::from_fn(|c| x.comps[c].iter().zip(&y.comps[c]).map(|(p, q)| a * p + b * q).collect());
        Self {
            grid: x.grid,
            staggering: x.staggering,
            comps,
        }
    }

    pub fn add(&self, other: &VectorField) -> Self {
        Self::lin_comb(1.0, self, 1.0, other)
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        Self::lin_comb(1.0, self, -1.0, other)
    }

    /// Discrete L2 inner product: every staggered sample carries the cell volume.
    pub fn dot(&self, other: &VectorField) -> f64 {
        debug_assert!(self.check_compatible(other).is_ok());
        let mut s = 0.0;
        for c in 0..3 {
            s += dot_slices(&self.comps[c], &other.comps[c]);
        }
        s * self.grid.cell_volume()
    }

    pub fn norm_l2_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm_l2(&self) -> f64 {
        self.norm_l2_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|&x| x == 0.0))
    }
}

/// Fixed-order sum used for every reduction in the crate.
#[inline]
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators, combined in a fixed order, so results
    // depend only on the data.
    let mut acc = [0.0_f64; 4];
    let chunks = a.len() / 4;
    for q in 0..chunks {
        let o = 4 * q;
        acc[0] += a[o] * b[o];
        acc[1] += a[o + 1] * b[o + 1];
        acc[2] += a[o + 2] * b[o + 2];
        acc[3] += a[o + 3] * b[o + 3];
    }
    for o in 4 * chunks..a.len() {
        acc[0] += a[o] * b[o];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Nodal scalar with exactly zero boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPotential {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarPotential {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            grid: *grid,
            values: vec![0.0; grid.nodes().len()],
        }
    }

    pub fn from_fn<F: FnMut([f64; 3]) -> f64>(grid: &GridSpec, mut f: F) -> Self {
        let mut out = Self::zeros(grid);
        let shape = grid.nodes();
        let [n0, n1, n2] = shape.dims;
        for i in 1..n0 - 1 {
            for j in 1..n1 - 1 {
                for k in 1..n2 - 1 {
                    out.values[shape.idx(i, j, k)] = f(grid.node_position(i, j, k));
                }
            }
        }
        out
    }

    /// Rejects arrays with nonzero boundary values.
    pub fn from_values(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        let shape = grid.nodes();
        if values.len() != shape.len() {
            return Err(Error::InvalidField(format!(
                "potential has {} values, expected {}",
                values.len(),
                shape.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidField("potential has non-finite values".into()));
        }
        let [n0, n1, n2] = shape.dims;
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    if grid.is_boundary_node(i, j, k) && values[shape.idx(i, j, k)] != 0.0 {
                        return Err(Error::Contract(format!(
                            "potential is nonzero at boundary node ({i}, {j}, {k})"
                        )));
                    }
                }
            }
        }
        Ok(Self { grid: *grid, values })
    }

    pub fn random(grid: &GridSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(grid, |_| rng.random_range(-1.0..1.0))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &ScalarPotential) -> f64 {
        dot_slices(&self.values, &other.values) * self.grid.cell_volume()
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|x| *x *= s);
    }

    pub fn axpy(&mut self, a: f64, x: &ScalarPotential) {
        for (y, xv) in self.values.iter_mut().zip(&x.values) {
            *y += a * xv;
        }
    }

    pub fn boundary_max(&self) -> f64 {
        let shape = self.grid.nodes();
        let [n0, n1, n2] = shape.dims;
        let mut m: f64 = 0.0;
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    if self.grid.is_boundary_node(i, j, k) {
                        m = m.max(self.values[shape.idx(i, j, k)].abs());
                    }
                }
            }
        }
        m
    }
}
