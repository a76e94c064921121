//! Curl-curl eigenpairs in the divergence-free subspace.
//!
//! The gradient fields form the (huge) kernel of curl-curl; working inside
//! the divergence-free subspace removes it. On that subspace curl-curl agrees
//! with the edge vector Laplacian, whose separable inverse is therefore an
//! exact preconditioner for a block LOBPCG iteration.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::{GridSpec, Staggering};
use crate::helmholtz::project_divergence_free;
use crate::ops::{curl_curl, curl_edges};
use crate::poisson::{PoissonMethod, PoissonSolver};

/// Relative width of an eigenvalue cluster.
pub const CLUSTER_TOL: f64 = 1e-6;
/// Guard eigenvalues this close (relative) to the last wanted one are
/// iterated to convergence before the last cluster is closed.
const NEAR_CLUSTER: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda_k: f64,
    pub e_k: VectorField,
    /// `|curl curl e - lambda e|_2 / (lambda |e|_2)`
    pub rayleigh_residual: f64,
}

/// Orthonormal eigenfields spanning the part of the spectrum at or below a cut.
#[derive(Debug, Clone)]
pub struct SpectralSubspace {
    pub pairs: Vec<EigenPair>,
    pub lambda_cut: f64,
    /// `max |G - I|` of the Gram matrix of the basis.
    pub gram_residual: f64,
    /// Smallest computed eigenvalue above the cut, when known.
    pub lambda_next: Option<f64>,
}

impl SpectralSubspace {
    pub fn empty(lambda_cut: f64) -> Self {
        Self { pairs: Vec::new(), lambda_cut, gram_residual: 0.0, lambda_next: None }
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn basis(&self) -> Vec<&VectorField> {
        self.pairs.iter().map(|p| &p.e_k).collect()
    }

    /// Index `nu` with `lambda_{nu-1} <= cut < lambda_nu`, i.e. `dim + 1`.
    pub fn nu(&self) -> usize {
        self.dim() + 1
    }

    /// Removes the components along the basis.
    pub fn project_out(&self, x: &VectorField) -> VectorField {
        let mut out = x.clone();
        for e in self.basis() {
            let c = out.dot(e);
            out.axpy(-c, e);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub lambda: f64,
    pub multiplicity: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Target relative residual of every returned pair.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the random starting block.
    pub seed: u64,
    /// Extra vectors carried beyond `count`.
    pub guard: Option<usize>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 400, seed: 0x5eed, guard: None }
    }
}

/// The `count` smallest positive curl-curl eigenpairs with the default options.
pub fn curl_curl_eigs(grid: &GridSpec, count: usize, tol: f64) -> Result<Vec<EigenPair>> {
    curl_curl_eigs_with(grid, count, &EigenOptions { tol, ..EigenOptions::default() })
}

struct Block {
    x: Vec<VectorField>,
    ax: Vec<VectorField>,
}

fn combine(cols: &[&VectorField], coeffs: impl Fn(usize) -> f64) -> VectorField {
    let mut out = VectorField::zeros(cols[0].grid(), Staggering::Edge);
    for (i, c) in cols.iter().enumerate() {
        let a = coeffs(i);
        if a != 0.0 {
            out.axpy(a, c);
        }
    }
    out
}

fn gram(a: &[&VectorField], b: &[&VectorField]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| a[i].dot(b[j]))
}

/// Rayleigh-Ritz on the span of `s` with SVQB orthonormalisation. Returns
/// ascending Ritz values and coefficient columns.
fn rayleigh_ritz(s: &[&VectorField], as_: &[&VectorField]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let g = gram(s, s);
    let mut h = gram(s, as_);
    h = (&h + h.transpose()) * 0.5;
    let eg = SymmetricEigen::new(g);
    let dmax = eg.eigenvalues.iter().fold(0.0_f64, |m, x| m.max(*x));
    let keep: Vec<usize> = (0..s.len()).filter(|&i| eg.eigenvalues[i] > 1e-12 * dmax).collect();
    if keep.is_empty() {
        return Err(Error::Numerical("eigensolver search space collapsed".into()));
    }
    let b = DMatrix::from_fn(s.len(), keep.len(), |i, j| {
        eg.eigenvectors[(i, keep[j])] / eg.eigenvalues[keep[j]].sqrt()
    });
    let hr = b.transpose() * &h * &b;
    let hr = (&hr + hr.transpose()) * 0.5;
    let eh = SymmetricEigen::new(hr);
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by(|&i, &j| eh.eigenvalues[i].total_cmp(&eh.eigenvalues[j]));
    let vals = order.iter().map(|&i| eh.eigenvalues[i]).collect();
    let y = DMatrix::from_fn(keep.len(), order.len(), |i, j| eh.eigenvectors[(i, order[j])]);
    Ok((vals, b * y))
}

pub fn curl_curl_eigs_with(grid: &GridSpec, count: usize, opts: &EigenOptions) -> Result<Vec<EigenPair>> {
    if count == 0 {
        return Err(Error::Domain("eigenpair count must be at least 1".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", opts.tol)));
    }
    grid.validate()?;
    let solver = PoissonSolver::new(grid, PoissonMethod::Spectral);
    let kb = count + opts.guard.unwrap_or((count / 3).max(3));

    // random divergence-free start, smoothed once by the preconditioner
    let mut start = Vec::with_capacity(kb);
    for i in 0..kb {
        let r = VectorField::random(grid, opts.seed.wrapping_add(i as u64 * 7919));
        let r = solver.inverse_vector_laplacian(&r);
        start.push(project_divergence_free(&r, &solver)?);
    }
    let refs: Vec<&VectorField> = start.iter().collect();
    let a_start: Vec<VectorField> = start.iter().map(curl_curl).collect();
    let arefs: Vec<&VectorField> = a_start.iter().collect();
    let (mut theta, c) = rayleigh_ritz(&refs, &arefs)?;
    if theta.len() < kb {
        return Err(Error::Numerical("random starting block is rank deficient".into()));
    }
    let mut blk = Block {
        x: (0..kb).map(|j| combine(&refs, |i| c[(i, j)])).collect(),
        ax: (0..kb).map(|j| combine(&arefs, |i| c[(i, j)])).collect(),
    };
    theta.truncate(kb);
    let mut p: Vec<VectorField> = Vec::new();
    let mut ap: Vec<VectorField> = Vec::new();
    let mut residuals = vec![f64::INFINITY; kb];

    for _iter in 0..opts.max_iter {
        // residuals and convergence
        let mut r = Vec::with_capacity(kb);
        for j in 0..kb {
            let mut rj = blk.ax[j].clone();
            rj.axpy(-theta[j], &blk.x[j]);
            residuals[j] = rj.norm_l2() / (theta[j].abs().max(f64::MIN_POSITIVE) * blk.x[j].norm_l2());
            r.push(rj);
        }
        // guard vectors that may still join the last wanted cluster must
        // converge as well before the cluster can be completed
        let last = theta[count - 1];
        let near = |j: usize| (theta[j] - last).abs() <= NEAR_CLUSTER * last.abs();
        if residuals[..count].iter().all(|&x| x <= opts.tol) && (count..kb).all(|j| !near(j) || residuals[j] <= opts.tol) {
            let mut n = count;
            while n < kb && (theta[n] - last).abs() <= CLUSTER_TOL * last.abs() {
                n += 1;
            }
            if n == kb {
                // the cluster may continue past the block
                let guard = 2 * (kb - count);
                return curl_curl_eigs_with(grid, count, &EigenOptions { guard: Some(guard), ..*opts });
            }
            return Ok(finish(blk, &theta, &residuals, n));
        }

        // preconditioned residuals of the unconverged vectors, kept in the
        // divergence-free subspace and orthogonal to the current block
        let mut w = Vec::with_capacity(kb);
        for (j, rj) in r.iter().enumerate() {
            if residuals[j] <= 0.1 * opts.tol {
                continue;
            }
            let t = solver.inverse_vector_laplacian(rj);
            let mut t = project_divergence_free(&t, &solver)?;
            for x in &blk.x {
                let c = t.dot(x);
                t.axpy(-c, x);
            }
            let n = t.norm_l2();
            if n > 0.0 {
                t.scale(1.0 / n);
                w.push(t);
            }
        }
        let aw: Vec<VectorField> = w.iter().map(curl_curl).collect();

        let mut s: Vec<&VectorField> = blk.x.iter().collect();
        s.extend(w.iter());
        s.extend(p.iter());
        let mut as_: Vec<&VectorField> = blk.ax.iter().collect();
        as_.extend(aw.iter());
        as_.extend(ap.iter());
        let (vals, c) = rayleigh_ritz(&s, &as_)?;
        if vals.len() < kb {
            return Err(Error::Numerical("eigensolver search space lost rank".into()));
        }
        let nx = kb;
        let new_x: Vec<VectorField> = (0..kb).map(|j| combine(&s, |i| c[(i, j)])).collect();
        let new_ax: Vec<VectorField> = (0..kb).map(|j| combine(&as_, |i| c[(i, j)])).collect();
        let mut new_p = Vec::with_capacity(kb);
        let mut new_ap = Vec::with_capacity(kb);
        for j in 0..kb {
            let mut pj = combine(&s, |i| if i >= nx { c[(i, j)] } else { 0.0 });
            let n0 = pj.norm_l2();
            for x in &new_x {
                let a = pj.dot(x) / x.norm_l2_sq();
                pj.axpy(-a, x);
            }
            // a remainder at rounding level carries no direction; keeping it
            // would poison the next Rayleigh-Ritz step
            let n = pj.norm_l2();
            if n > 1e-8 * n0 && n > 0.0 {
                pj.scale(1.0 / n);
                new_ap.push(curl_curl(&pj));
                new_p.push(pj);
            }
        }
        blk = Block { x: new_x, ax: new_ax };
        p = new_p;
        ap = new_ap;
        theta = vals[..kb].to_vec();
    }
    let worst = residuals[..count].iter().fold(0.0_f64, |m, x| m.max(*x));
    Err(Error::NotConverged { solver: "lobpcg", iterations: opts.max_iter, residual: worst })
}

fn finish(blk: Block, theta: &[f64], residuals: &[f64], n: usize) -> Vec<EigenPair> {
    blk.x
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(j, mut e)| {
            let norm = e.norm_l2();
            e.scale(1.0 / norm);
            EigenPair { lambda_k: theta[j], e_k: e, rayleigh_residual: residuals[j] }
        })
        .collect()
}

/// Groups ascending eigenvalues into clusters of relative width [`CLUSTER_TOL`].
pub fn ladder(pairs: &[EigenPair]) -> Vec<LadderEntry> {
    let mut out: Vec<LadderEntry> = Vec::new();
    for p in pairs {
        match out.last_mut() {
            Some(last) if (p.lambda_k - last.lambda).abs() <= CLUSTER_TOL * last.lambda.abs() => {
                last.multiplicity += 1;
                last.residual = last.residual.max(p.rayleigh_residual);
            }
            _ => out.push(LadderEntry { lambda: p.lambda_k, multiplicity: 1, residual: p.rayleigh_residual }),
        }
    }
    out
}

/// `Vtilde = span{ e_k : lambda_k <= -lambda }`, eigenvalues within the
/// cluster tolerance of `-lambda` included.
#[allow(non_snake_case)]
pub fn build_Vtilde(pairs: &[EigenPair], lambda: f64) -> Result<SpectralSubspace> {
    if !(lambda <= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be finite and <= 0, got {lambda}")));
    }
    if pairs.windows(2).any(|w| w[1].lambda_k < w[0].lambda_k) {
        return Err(Error::Contract("eigenpairs must be sorted ascending".into()));
    }
    let cut = -lambda;
    let inside = |l: f64| l <= cut + CLUSTER_TOL * cut.abs().max(l.abs());
    let selected: Vec<EigenPair> = pairs.iter().filter(|p| inside(p.lambda_k)).cloned().collect();
    let lambda_next = pairs.iter().map(|p| p.lambda_k).find(|&l| !inside(l));
    if lambda_next.is_none() {
        let top = pairs.last().map(|p| p.lambda_k).unwrap_or(0.0);
        return Err(Error::UnderResolved(format!(
            "largest computed eigenvalue {top:.6} does not exceed -lambda = {cut:.6}; compute more eigenpairs"
        )));
    }
    let basis: Vec<&VectorField> = selected.iter().map(|p| &p.e_k).collect();
    let gram_residual = if basis.is_empty() {
        0.0
    } else {
        let g = gram(&basis, &basis);
        let mut m = 0.0_f64;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let e = if i == j { 1.0 } else { 0.0 };
                m = m.max((g[(i, j)] - e).abs());
            }
        }
        m
    };
    Ok(SpectralSubspace { pairs: selected, lambda_cut: cut, gram_residual, lambda_next })
}

/// `Q(v) = |curl v|_2^2 + lambda |v|_2^2`
pub fn quadratic_form(v: &VectorField, lambda: f64) -> f64 {
    curl_edges(v).norm_l2_sq() + lambda * v.norm_l2_sq()
}

/// Spectrum export: `[{lambda, multiplicity, residual}]`.
pub fn ladder_json(ladder: &[LadderEntry]) -> String {
    serde_json::to_string_pretty(ladder).expect("ladder serialises")
}
