//! The inner convex problem over gradient fields (and, in the shifted case,
//! over a finite block of low curl-curl eigenfields).
//!
//! For fixed `v` the unknowns are a zero-boundary potential `xi` and
//! coefficients `z` against an orthonormal eigenbasis `e_k`. With
//! `U = v + sum z_k e_k + grad xi` the objective is
//!
//! ```text
//! G(xi, z) = int F(U) - 1/2 z^T C z - b^T z,
//! F(u) = |u|^6 / 6 - lambda/2 |u|^2,
//! C_kl = <curl e_k, curl e_l>,  b_k = <curl v, curl e_k>,
//! ```
//!
//! so minimising `G` maximises `J_lambda(v + w~)` over `w~`. `G` is convex as
//! long as every eigenvalue in the block is at most `-lambda`, and strictly
//! convex along directions where `U` does not vanish. Without an eigenblock it
//! is just `int F(v + grad xi)`.

use crate::error::{Error, Result};
use crate::field::{dot_slices, ScalarPotential, VectorField};
use crate::grid::Staggering;
use crate::linesearch::{minimize_convex_poly, poly_eval};
use crate::ops::{curl_edges, div_edges, grad_nodes};
use crate::poisson::{PoissonMethod, PoissonSolver};
use crate::quadrature::{nodal_mean_power, power_integral, sextic_hessian_apply, sextic_line_polynomial, sextic_with_gradient};
use crate::spectrum::SpectralSubspace;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
/// Lower bound of the nodal preconditioner coefficient relative to its mean.
const NODE_FLOOR: f64 = 1e-3;
/// Newton stops once the residual has not dropped below `STALL_FACTOR` times
/// its best value for `STALL_WINDOW` iterations and the objective has moved
/// by less than `STALL_PROGRESS` (relative) meanwhile.
const STALL_FACTOR: f64 = 0.5;
const STALL_WINDOW: usize = 8;
const STALL_PROGRESS: f64 = 1e-12;
const MAX_PCG_ITER: usize = 200;

/// `F(x, u) = |u|^6 / 6 - (lambda / 2) |u|^2` with a constant `lambda <= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearitySpec {
    pub lambda: f64,
}

impl NonlinearitySpec {
    pub fn pure() -> Self {
        Self { lambda: 0.0 }
    }

    pub fn shifted(lambda: f64) -> Result<Self> {
        let s = Self { lambda };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda <= 0.0) {
            return Err(Error::Domain(format!("lambda must be finite and <= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn description(&self) -> String {
        if self.lambda == 0.0 {
            "F(x,u) = |u|^6/6".into()
        } else {
            format!("F(x,u) = |u|^6/6 - ({}/2)|u|^2", self.lambda)
        }
    }

    /// `int F(u)` under the corner rule.
    pub fn integral(&self, u: &VectorField) -> f64 {
        power_integral(u, 6.0) / 6.0 - 0.5 * self.lambda * u.norm_l2_sq()
    }

    /// L2 Riesz representative of `f = dF/du`.
    pub fn derivative(&self, u: &VectorField) -> VectorField {
        let (_, mut f) = sextic_with_gradient(u);
        f.axpy(-self.lambda, u);
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    /// Truncated Newton with preconditioned CG for the Newton systems.
    #[default]
    Newton,
    /// Polak-Ribiere+ nonlinear CG, Laplacian-preconditioned.
    NonlinearCg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: InnerMethod,
    /// Return the last iterate with its residual instead of failing when the
    /// tolerance is not reached.
    pub best_effort: bool,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, method: InnerMethod::Newton, best_effort: false }
    }
}

impl InnerOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter, ..Self::default() }
    }

    pub fn with_method(mut self, method: InnerMethod) -> Self {
        self.method = method;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Starting point of the inner iteration. Zero by default.
#[derive(Debug, Clone, Default)]
pub struct InnerStart {
    pub xi: Option<ScalarPotential>,
    pub z: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct InnerSolution {
    /// `sum z_k e_k + grad xi`
    pub w_tilde: VectorField,
    pub xi: ScalarPotential,
    pub z: Vec<f64>,
    /// `v + w_tilde`
    pub total: VectorField,
    /// Norm of the gradient of `G`, measured in the dual of the gradient
    /// energy for `xi` and euclidean for `z`, relative to `|f(v + w~)|_2`.
    pub optimality_residual: f64,
    /// `int F(v + w~)`
    pub f_value: f64,
    /// `G` at the minimiser.
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial value.
    pub objective_history: Vec<f64>,
}

/// Minimises `int |u + grad xi|^6 / 6` over zero-boundary potentials.
pub fn minimize_w(u: &VectorField, spec: &NonlinearitySpec, tol: f64, max_iter: usize) -> Result<InnerSolution> {
    if spec.lambda != 0.0 {
        return Err(Error::Domain(format!(
            "minimize_w is the unshifted problem; got lambda = {}",
            spec.lambda
        )));
    }
    solve_inner(u, spec, &SpectralSubspace::empty(0.0), &InnerOptions::new(tol, max_iter), &InnerStart::default())
}

/// Joint minimisation over `(z, xi)` for a field `v_plus` orthogonal to the
/// eigenblock and to gradients.
pub fn minimize_w_tilde(
    v_plus: &VectorField,
    spec: &NonlinearitySpec,
    vtilde: &SpectralSubspace,
    tol: f64,
    max_iter: usize,
) -> Result<InnerSolution> {
    check_orthogonal(v_plus, vtilde, 1e-6)?;
    solve_inner(v_plus, spec, vtilde, &InnerOptions::new(tol, max_iter), &InnerStart::default())
}

fn check_orthogonal(v: &VectorField, vtilde: &SpectralSubspace, tol: f64) -> Result<()> {
    let nv = v.norm_l2();
    if nv == 0.0 {
        return Ok(());
    }
    let solver = PoissonSolver::new(v.grid(), PoissonMethod::Spectral);
    let (xi, _) = solver.solve_nodes(&div_edges(v), 1e-12)?;
    let grad_part = grad_nodes(v.grid(), &xi).norm_l2() / nv;
    if grad_part > tol {
        return Err(Error::Contract(format!("input has a gradient component of relative size {grad_part:.3e}")));
    }
    for (k, e) in vtilde.basis().into_iter().enumerate() {
        let c = v.dot(e).abs() / nv;
        if c > tol {
            return Err(Error::Contract(format!("input has relative component {c:.3e} along eigenfield {k}")));
        }
    }
    Ok(())
}

/// General entry point with warm start and algorithm choice.
pub fn solve_inner(
    v: &VectorField,
    spec: &NonlinearitySpec,
    vtilde: &SpectralSubspace,
    opts: &InnerOptions,
    start: &InnerStart,
) -> Result<InnerSolution> {
    spec.validate()?;
    opts.validate()?;
    if v.staggering() != Staggering::Edge {
        return Err(Error::InvalidField("the inner problem acts on edge fields".into()));
    }
    v.validate()?;
    for e in vtilde.basis() {
        v.check_compatible(e)?;
    }
    let problem = Problem::new(v, spec.lambda, vtilde)?;
    problem.run(opts, start)
}

/// Optimality residual of a given `(xi, z)` without iterating.
pub fn inner_residual(
    v: &VectorField,
    spec: &NonlinearitySpec,
    vtilde: &SpectralSubspace,
    xi: &ScalarPotential,
    z: &[f64],
) -> Result<f64> {
    spec.validate()?;
    if z.len() != vtilde.dim() {
        return Err(Error::InvalidField(format!("expected {} eigen-coefficients, got {}", vtilde.dim(), z.len())));
    }
    let problem = Problem::new(v, spec.lambda, vtilde)?;
    let x = Unknowns { xi: xi.values().to_vec(), z: z.to_vec() };
    let u = v.add(&problem.field_of(&x));
    let f_v = problem.gradient(v, &vec![0.0; z.len()]).f.norm_l2();
    let grad = problem.gradient(&u, z);
    let scale = grad.f.norm_l2().max(1e-12 * f_v).max(f64::MIN_POSITIVE);
    Ok(problem.residual(&grad, scale))
}

/// Vector of unknowns: nodal potential (boundary entries stay zero) and
/// eigen-coefficients.
#[derive(Debug, Clone)]
struct Unknowns {
    xi: Vec<f64>,
    z: Vec<f64>,
}

impl Unknowns {
    fn axpy(&mut self, a: f64, x: &Unknowns) {
        self.xi.iter_mut().zip(&x.xi).for_each(|(y, x)| *y += a * x);
        self.z.iter_mut().zip(&x.z).for_each(|(y, x)| *y += a * x);
    }

    fn scaled(&self, a: f64) -> Unknowns {
        Unknowns {
            xi: self.xi.iter().map(|x| a * x).collect(),
            z: self.z.iter().map(|x| a * x).collect(),
        }
    }
}

struct Scaling {
    omega: f64,
    /// `D^{-1/2}` per node.
    node: Vec<f64>,
}

struct Problem<'a> {
    v: &'a VectorField,
    lambda: f64,
    basis: Vec<&'a VectorField>,
    /// `C` row-major
    c: Vec<f64>,
    b: Vec<f64>,
    solver: PoissonSolver,
    cell_volume: f64,
}

struct Gradient {
    f: VectorField,
    g: Unknowns,
}

impl<'a> Problem<'a> {
    fn new(v: &'a VectorField, lambda: f64, vtilde: &'a SpectralSubspace) -> Result<Self> {
        let basis = vtilde.basis();
        let m = basis.len();
        let curls: Vec<VectorField> = basis.iter().map(|e| curl_edges(e)).collect();
        let mut c = vec![0.0; m * m];
        for k in 0..m {
            for l in 0..m {
                c[k * m + l] = curls[k].dot(&curls[l]);
            }
        }
        for k in 0..m {
            if c[k * m + k] > -lambda * (1.0 + 1e-6) + 1e-12 {
                return Err(Error::Contract(format!(
                    "eigenfield {k} has curl energy {:.6} above -lambda = {:.6}; the inner problem would not be convex",
                    c[k * m + k], -lambda
                )));
            }
        }
        let cv = curl_edges(v);
        let b = curls.iter().map(|ce| cv.dot(ce)).collect();
        Ok(Self {
            v,
            lambda,
            basis,
            c,
            b,
            solver: PoissonSolver::new(v.grid(), PoissonMethod::Spectral),
            cell_volume: v.grid().cell_volume(),
        })
    }

    fn m(&self) -> usize {
        self.basis.len()
    }

    fn dot(&self, a: &Unknowns, b: &Unknowns) -> f64 {
        dot_slices(&a.xi, &b.xi) * self.cell_volume + dot_slices(&a.z, &b.z)
    }

    fn cz(&self, z: &[f64]) -> Vec<f64> {
        let m = self.m();
        (0..m).map(|k| (0..m).map(|l| self.c[k * m + l] * z[l]).sum()).collect()
    }

    /// `grad xi + sum z_k e_k`
    fn field_of(&self, x: &Unknowns) -> VectorField {
        let mut w = grad_nodes(self.v.grid(), &x.xi);
        for (zk, e) in x.z.iter().zip(&self.basis) {
            w.axpy(*zk, e);
        }
        w
    }

    fn objective(&self, u: &VectorField, z: &[f64]) -> f64 {
        let cz = self.cz(z);
        power_integral(u, 6.0) / 6.0 - 0.5 * self.lambda * u.norm_l2_sq() - 0.5 * dot_slices(z, &cz) - dot_slices(&self.b, z)
    }

    fn gradient(&self, u: &VectorField, z: &[f64]) -> Gradient {
        let (_, mut f) = sextic_with_gradient(u);
        f.axpy(-self.lambda, u);
        let xi = div_edges(&f).iter().map(|d| -d).collect();
        let cz = self.cz(z);
        let gz = (0..self.m()).map(|k| f.dot(self.basis[k]) - cz[k] - self.b[k]).collect();
        Gradient { f, g: Unknowns { xi, z: gz } }
    }

    /// `(-lap)^{-1}` on the potential block, identity on the eigen block.
    fn riesz(&self, r: &Unknowns) -> Unknowns {
        let (x, _) = self.solver.solve_nodes(&r.xi, 1e-12).expect("spectral solve");
        Unknowns { xi: x.iter().map(|v| -v).collect(), z: r.z.clone() }
    }

    fn residual(&self, grad: &Gradient, scale: f64) -> f64 {
        let p = self.riesz(&grad.g);
        self.dot(&grad.g, &p).max(0.0).sqrt() / scale
    }

    fn hessian(&self, u: &VectorField, d: &Unknowns) -> Unknowns {
        let du = self.field_of(d);
        let mut hu = sextic_hessian_apply(u, &du);
        hu.axpy(-self.lambda, &du);
        let xi = div_edges(&hu).iter().map(|x| -x).collect();
        let cd = self.cz(&d.z);
        let z = (0..self.m()).map(|k| hu.dot(self.basis[k]) - cd[k]).collect();
        Unknowns { xi, z }
    }

    /// `D^{-1/2} (-Delta)^{-1} D^{-1/2}` on potentials, with `D` the nodal
    /// average of the Hessian coefficient; diagonal on the eigen-coefficients.
    fn precondition(&self, r: &Unknowns, sc: &Scaling) -> Unknowns {
        let scaled = Unknowns {
            xi: r.xi.iter().zip(&sc.node).map(|(x, s)| x * s).collect(),
            z: r.z.clone(),
        };
        let mut p = self.riesz(&scaled);
        p.xi.iter_mut().zip(&sc.node).for_each(|(x, s)| *x *= s);
        let m = self.m();
        for k in 0..m {
            let d = (sc.omega - self.c[k * m + k]).max(1e-3 * sc.omega);
            p.z[k] = r.z[k] / d;
        }
        p
    }

    fn scaling(&self, u: &VectorField) -> Scaling {
        let vol = u.grid().volume();
        let mean4 = power_integral(u, 4.0) / vol;
        let w = 7.0 / 3.0 * mean4 - self.lambda;
        let omega = if w > 0.0 { w } else { 1.0 };
        // the sextic is degenerate where U vanishes; the floor keeps D
        // invertible without letting those nodes dominate
        let floor = NODE_FLOOR * omega;
        let node = nodal_mean_power(u, 4.0)
            .into_iter()
            .map(|a| 1.0 / (7.0 / 3.0 * a - self.lambda).max(floor).sqrt())
            .collect();
        Scaling { omega, node }
    }

    /// Truncated preconditioned CG for `H d = -g`.
    fn newton_direction(&self, u: &VectorField, g: &Unknowns, eta: f64, sc: &Scaling) -> Unknowns {
        let mut d = Unknowns { xi: vec![0.0; g.xi.len()], z: vec![0.0; g.z.len()] };
        let mut r = g.scaled(-1.0);
        let mut s = self.precondition(&r, sc);
        let mut p = s.clone();
        let mut rs = self.dot(&r, &s);
        let rs0 = rs;
        for it in 0..MAX_PCG_ITER {
            let hp = self.hessian(u, &p);
            let php = self.dot(&p, &hp);
            if !(php > 0.0) {
                if it == 0 {
                    return s;
                }
                break;
            }
            let alpha = rs / php;
            d.axpy(alpha, &p);
            r.axpy(-alpha, &hp);
            s = self.precondition(&r, sc);
            let rs_new = self.dot(&r, &s);
            if rs_new <= eta * eta * rs0 {
                break;
            }
            let beta = rs_new / rs;
            rs = rs_new;
            let mut next = s.clone();
            next.axpy(beta, &p);
            p = next;
        }
        d
    }

    /// Exact minimisation of `G` along `d`; `G` restricted to a line is a
    /// polynomial of degree six.
    fn line_search(&self, u: &VectorField, z: &[f64], du: &VectorField, dz: &[f64]) -> Result<(f64, f64)> {
        let mut c = sextic_line_polynomial(u, du).map(|x| x / 6.0);
        let l = self.lambda;
        c[0] += -0.5 * l * u.norm_l2_sq();
        c[1] += -l * u.dot(du);
        c[2] += -0.5 * l * du.norm_l2_sq();
        let (cz, cdz) = (self.cz(z), self.cz(dz));
        c[0] += -0.5 * dot_slices(z, &cz) - dot_slices(&self.b, z);
        c[1] += -dot_slices(dz, &cz) - dot_slices(&self.b, dz);
        c[2] += -0.5 * dot_slices(dz, &cdz);
        let alpha = minimize_convex_poly(&c).ok_or_else(|| {
            Error::Numerical("inner line search met a non-finite or unbounded objective".into())
        })?;
        // change of G, summed without the constant term to avoid cancellation
        let delta = alpha * poly_eval(&c[1..], alpha);
        Ok((alpha, delta))
    }

    fn run(&self, opts: &InnerOptions, start: &InnerStart) -> Result<InnerSolution> {
        let g = *self.v.grid();
        let m = self.m();
        let mut x = Unknowns {
            xi: match &start.xi {
                Some(p) => {
                    if !p.grid().same_as(&g) {
                        return Err(Error::InvalidField("warm-start potential lives on another grid".into()));
                    }
                    p.values().to_vec()
                }
                None => vec![0.0; g.nodes().len()],
            },
            z: match &start.z {
                Some(z) if z.len() == m => z.clone(),
                Some(z) => {
                    return Err(Error::InvalidField(format!(
                        "warm start has {} eigen-coefficients, expected {m}",
                        z.len()
                    )))
                }
                None => vec![0.0; m],
            },
        };
        let f_v = self.gradient(self.v, &vec![0.0; m]).f.norm_l2();
        let mut u = self.v.add(&self.field_of(&x));
        let mut obj = self.objective(&u, &x.z);
        let mut history = vec![obj];
        let mut grad = self.gradient(&u, &x.z);
        let scale_of = |f: &VectorField| f.norm_l2().max(1e-12 * f_v).max(f64::MIN_POSITIVE);
        let mut res = self.residual(&grad, scale_of(&grad.f));
        let mut iterations = 0;
        let mut best = res;
        let mut obj_at_best = obj;
        let mut since_best = 0;
        // nonlinear CG memory
        let mut prev: Option<(Unknowns, Unknowns, f64)> = None;

        while res > opts.tol && iterations < opts.max_iter {
            iterations += 1;
            let sc = self.scaling(&u);
            let d = match opts.method {
                InnerMethod::Newton => {
                    let eta = res.sqrt().clamp(1e-6, 0.5);
                    self.newton_direction(&u, &grad.g, eta, &sc)
                }
                InnerMethod::NonlinearCg => {
                    let s = self.precondition(&grad.g, &sc);
                    let gs = self.dot(&grad.g, &s);
                    let mut d = s.scaled(-1.0);
                    if let Some((g_old, d_old, gs_old)) = &prev {
                        let beta = ((gs - self.dot(g_old, &s)) / gs_old).max(0.0);
                        d.axpy(beta, d_old);
                        if self.dot(&grad.g, &d) >= 0.0 {
                            d = s.scaled(-1.0);
                        }
                    }
                    prev = Some((grad.g.clone(), d.clone(), gs));
                    d
                }
            };
            let du = self.field_of(&d);
            let (alpha, delta) = self.line_search(&u, &x.z, &du, &d.z)?;
            if !delta.is_finite() {
                return Err(Error::Numerical("inner objective became non-finite".into()));
            }
            if alpha == 0.0 || delta > 0.0 {
                // no representable decrease left along this direction
                if opts.method == InnerMethod::NonlinearCg && prev.is_some() {
                    prev = None;
                    continue;
                }
                break;
            }
            x.axpy(alpha, &d);
            u.axpy(alpha, &du);
            obj += delta;
            history.push(obj);
            grad = self.gradient(&u, &x.z);
            res = self.residual(&grad, scale_of(&grad.f));
            if res < STALL_FACTOR * best {
                best = res;
                obj_at_best = obj;
                since_best = 0;
            } else {
                since_best += 1;
                let progress = obj_at_best - obj;
                if opts.method == InnerMethod::Newton
                    && since_best >= STALL_WINDOW
                    && progress <= STALL_PROGRESS * obj.abs().max(f64::MIN_POSITIVE)
                {
                    break;
                }
            }
        }

        // rebuild from the unknowns so the returned fields are consistent
        let w_tilde = self.field_of(&x);
        let total = self.v.add(&w_tilde);
        let grad = self.gradient(&total, &x.z);
        let res = self.residual(&grad, scale_of(&grad.f));
        if !res.is_finite() {
            return Err(Error::Numerical("inner residual is not finite".into()));
        }
        if res > opts.tol && !opts.best_effort {
            return Err(Error::NotConverged { solver: "inner", iterations, residual: res });
        }
        let f_value = NonlinearitySpec { lambda: self.lambda }.integral(&total);
        Ok(InnerSolution {
            w_tilde,
            xi: ScalarPotential::from_values(&g, x.xi)?,
            z: x.z,
            total,
            optimality_residual: res,
            f_value,
            objective: obj,
            iterations,
            objective_history: history,
        })
    }
}
