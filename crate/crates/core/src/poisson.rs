//! Poisson solvers on the staggered grid.
//!
//! The nodal Laplacian `div grad` with zero Dirichlet data and the edge vector
//! Laplacian `-(curl^T curl - grad div)` both diagonalise in separable 1-D
//! bases: interior sine modes along directions where the unknowns vanish on
//! the walls and half-shifted cosine modes along the direction an edge
//! component points. The transforms are applied as dense matrix products per
//! axis, which is exact to rounding and fast enough on desk-scale grids. A
//! matrix-free conjugate-gradient solver on the 7-point Laplacian is kept as
//! an independent route.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dot_slices, VectorField};
use crate::grid::{GridSpec, Staggering};
use crate::ops::laplacian_nodes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoissonMethod {
    #[default]
    Spectral,
    ConjugateGradient,
}

/// Outcome of a nodal Poisson solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonStats {
    pub iterations: usize,
    /// `|lap xi - rhs|_2 / |rhs|_2` on interior nodes.
    pub relative_residual: f64,
}

/// One orthonormal 1-D basis with the eigenvalues of the second difference.
#[derive(Debug, Clone)]
struct Axis {
    m: usize,
    /// Row `k` holds mode `k` sampled at the `m` points.
    modes: Vec<f64>,
    eig: Vec<f64>,
}

impl Axis {
    /// Interior points `1..n` of a Dirichlet problem.
    fn dirichlet(n: usize, h: f64) -> Self {
        let m = n - 1;
        let scale = (2.0 / n as f64).sqrt();
        let mut modes = vec![0.0; m * m];
        for k in 0..m {
            for i in 0..m {
                modes[k * m + i] = scale * (PI * ((k + 1) * (i + 1)) as f64 / n as f64).sin();
            }
        }
        let eig = (1..=m)
            .map(|k| (2.0 / h * (PI * k as f64 / (2.0 * n as f64)).sin()).powi(2))
            .collect();
        Self { m, modes, eig }
    }

    /// Cell-centred points `i + 1/2` with reflecting ends.
    fn neumann(n: usize, h: f64) -> Self {
        let mut modes = vec![0.0; n * n];
        for k in 0..n {
            let c = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            for i in 0..n {
                modes[k * n + i] = c * (PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
            }
        }
        let eig = (0..n)
            .map(|k| (2.0 / h * (PI * k as f64 / (2.0 * n as f64)).sin()).powi(2))
            .collect();
        Self { m: n, modes, eig }
    }
}

/// Applies `modes` (or its transpose) along `axis` of a dense array.
fn transform(data: &[f64], dims: [usize; 3], axis: usize, ax: &Axis, transpose: bool) -> Vec<f64> {
    let m = ax.m;
    debug_assert_eq!(dims[axis], m);
    let pre: usize = dims[..axis].iter().product();
    let post: usize = dims[axis + 1..].iter().product();
    let mut out = vec![0.0; data.len()];
    let coef = |k: usize, i: usize| if transpose { ax.modes[i * m + k] } else { ax.modes[k * m + i] };
    if post == 1 {
        let mut row = vec![0.0; m];
        for p in 0..pre {
            let line = &data[p * m..(p + 1) * m];
            for (k, r) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for (i, x) in line.iter().enumerate() {
                    s += coef(k, i) * x;
                }
                *r = s;
            }
            out[p * m..(p + 1) * m].copy_from_slice(&row);
        }
    } else {
        for p in 0..pre {
            let base = p * m * post;
            for k in 0..m {
                let dst = base + k * post;
                for i in 0..m {
                    let a = coef(k, i);
                    let src = base + i * post;
                    let (o, d) = (&mut out[dst..dst + post], &data[src..src + post]);
                    for (oo, dd) in o.iter_mut().zip(d) {
                        *oo += a * dd;
                    }
                }
            }
        }
    }
    out
}

fn extract(src: &[f64], src_dims: [usize; 3], offset: [usize; 3], dims: [usize; 3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(dims.iter().product());
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            let base = ((i + offset[0]) * src_dims[1] + j + offset[1]) * src_dims[2] + offset[2];
            out.extend_from_slice(&src[base..base + dims[2]]);
        }
    }
    out
}

fn insert(dst: &mut [f64], dst_dims: [usize; 3], offset: [usize; 3], dims: [usize; 3], data: &[f64]) {
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            let base = ((i + offset[0]) * dst_dims[1] + j + offset[1]) * dst_dims[2] + offset[2];
            let row = (i * dims[1] + j) * dims[2];
            dst[base..base + dims[2]].copy_from_slice(&data[row..row + dims[2]]);
        }
    }
}

/// Multiplies every separable mode of `data` by `f(eigenvalue)`.
fn filter<F: Fn(f64) -> f64>(data: &[f64], dims: [usize; 3], axes: [&Axis; 3], f: F) -> Vec<f64> {
    let mut x = data.to_vec();
    for (a, ax) in axes.iter().enumerate() {
        x = transform(&x, dims, a, ax, false);
    }
    let mut idx = 0;
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            let eij = axes[0].eig[i] + axes[1].eig[j];
            for k in 0..dims[2] {
                x[idx] *= f(eij + axes[2].eig[k]);
                idx += 1;
            }
        }
    }
    for (a, ax) in axes.iter().enumerate() {
        x = transform(&x, dims, a, ax, true);
    }
    x
}

/// Separable bases for one grid; cheap to build.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    grid: GridSpec,
    method: PoissonMethod,
    dirichlet: [Axis; 3],
    neumann: [Axis; 3],
    cg_cap: Option<usize>,
}

impl PoissonSolver {
    pub fn new(grid: &GridSpec, method: PoissonMethod) -> Self {
        let h = grid.spacing();
        let n = grid.cells;
        Self {
            grid: *grid,
            method,
            dirichlet: [0, 1, 2].map(|d| Axis::dirichlet(n[d], h[d])),
            neumann: [0, 1, 2].map(|d| Axis::neumann(n[d], h[d])),
            cg_cap: None,
        }
    }

    /// Overrides the conjugate-gradient iteration cap.
    pub fn with_cg_cap(mut self, cap: usize) -> Self {
        self.cg_cap = Some(cap);
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn method(&self) -> PoissonMethod {
        self.method
    }

    fn interior_dims(&self) -> [usize; 3] {
        self.grid.cells.map(|n| n - 1)
    }

    /// Solves `div grad xi = rhs` for a zero-boundary nodal `xi`. Boundary
    /// entries of `rhs` are ignored.
    pub fn solve_nodes(&self, rhs: &[f64], tol: f64) -> Result<(Vec<f64>, PoissonStats)> {
        let nodes = self.grid.nodes();
        if rhs.len() != nodes.len() {
            return Err(Error::InvalidField(format!(
                "nodal array has {} entries, expected {}",
                rhs.len(),
                nodes.len()
            )));
        }
        if !(tol > 0.0) {
            return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
        }
        match self.method {
            PoissonMethod::Spectral => {
                let dims = self.interior_dims();
                let r = extract(rhs, nodes.dims, [1; 3], dims);
                let axes = [&self.dirichlet[0], &self.dirichlet[1], &self.dirichlet[2]];
                let x = filter(&r, dims, axes, |mu| -1.0 / mu);
                let mut xi = vec![0.0; nodes.len()];
                insert(&mut xi, nodes.dims, [1; 3], dims, &x);
                let relative_residual = self.nodal_residual(&xi, rhs);
                Ok((xi, PoissonStats { iterations: 1, relative_residual }))
            }
            PoissonMethod::ConjugateGradient => self.solve_nodes_cg(rhs, tol),
        }
    }

    fn interior_rhs(&self, rhs: &[f64]) -> Vec<f64> {
        let nodes = self.grid.nodes();
        let dims = self.interior_dims();
        let mut b = vec![0.0; nodes.len()];
        insert(&mut b, nodes.dims, [1; 3], dims, &extract(rhs, nodes.dims, [1; 3], dims));
        b
    }

    fn nodal_residual(&self, xi: &[f64], rhs: &[f64]) -> f64 {
        let b = self.interior_rhs(rhs);
        let lap = laplacian_nodes(&self.grid, xi);
        let r: Vec<f64> = lap.iter().zip(&b).map(|(l, b)| l - b).collect();
        let nb = dot_slices(&b, &b).sqrt();
        let nr = dot_slices(&r, &r).sqrt();
        if nb == 0.0 {
            nr
        } else {
            nr / nb
        }
    }

    /// Iteration cap of the conjugate-gradient route.
    pub fn cg_cap(&self) -> usize {
        let n = self.grid.max_cells() + 1;
        self.cg_cap.unwrap_or(10 * n * n)
    }

    fn solve_nodes_cg(&self, rhs: &[f64], tol: f64) -> Result<(Vec<f64>, PoissonStats)> {
        // CG on the SPD operator -lap with right-hand side -rhs.
        let b: Vec<f64> = self.interior_rhs(rhs).iter().map(|x| -x).collect();
        let nb = dot_slices(&b, &b).sqrt();
        let mut x = vec![0.0; b.len()];
        if nb == 0.0 {
            return Ok((x, PoissonStats { iterations: 0, relative_residual: 0.0 }));
        }
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rr = dot_slices(&r, &r);
        let cap = self.cg_cap();
        for it in 1..=cap {
            let ap: Vec<f64> = laplacian_nodes(&self.grid, &p).iter().map(|x| -x).collect();
            let pap = dot_slices(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::Numerical(format!("Poisson CG lost positivity (pAp = {pap:e})")));
            }
            let alpha = rr / pap;
            for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
                *xi += alpha * pi;
                *ri -= alpha * api;
            }
            let rr_new = dot_slices(&r, &r);
            if rr_new.sqrt() <= tol * nb {
                let relative_residual = self.nodal_residual(&x, rhs);
                return Ok((x, PoissonStats { iterations: it, relative_residual }));
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
        }
        Err(Error::NotConverged {
            solver: "poisson-cg",
            iterations: cap,
            residual: rr.sqrt() / nb,
        })
    }

    /// Applies `f(mu)` to every mode of the edge vector Laplacian `-Delta`,
    /// whose spectrum `mu` is positive.
    pub fn vector_laplacian_filter<F: Fn(f64) -> f64 + Copy>(&self, u: &VectorField, f: F) -> VectorField {
        debug_assert_eq!(u.staggering(), Staggering::Edge);
        let mut out = VectorField::zeros(&self.grid, Staggering::Edge);
        for c in 0..3 {
            let shape = self.grid.edge_shape(c);
            let mut offset = [1; 3];
            offset[c] = 0;
            let mut dims = self.interior_dims();
            dims[c] = self.grid.cells[c];
            let mut axes = [&self.dirichlet[0], &self.dirichlet[1], &self.dirichlet[2]];
            axes[c] = &self.neumann[c];
            let x = extract(u.comp(c), shape.dims, offset, dims);
            let y = filter(&x, dims, axes, f);
            insert(out.comp_mut(c), shape.dims, offset, dims, &y);
        }
        out
    }

    /// `(-Delta)^{-1} u`. On divergence-free fields this inverts curl-curl.
    pub fn inverse_vector_laplacian(&self, u: &VectorField) -> VectorField {
        self.vector_laplacian_filter(u, |mu| 1.0 / mu)
    }

    /// Smallest eigenvalue of `-Delta` on edges.
    pub fn vector_laplacian_min_eig(&self) -> f64 {
        (0..3)
            .map(|c| {
                (0..3)
                    .map(|d| if d == c { self.neumann[d].eig[0] } else { self.dirichlet[d].eig[0] })
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }
}
