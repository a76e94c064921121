//! Variational solver for the critical curl-curl equation
//! `curl curl u = |u|^4 u` (and its Brezis-Nirenberg perturbation
//! `curl curl u + lambda u = |u|^4 u`) on box cavities with metallic walls.
//!
//! The crate is organised bottom-up: staggered fields and mimetic operators,
//! quadrature and energies, Poisson solvers and the Helmholtz splitting, the
//! inner convex problem over gradient fields, Nehari projections, the cavity
//! spectrum, and finally the outer sphere minimisations.

pub mod brezis_nirenberg;
pub mod convex_inner;
pub mod energy;
pub mod export;
pub mod error;
pub mod field;
pub mod grid;
pub mod groundstate;
pub mod helmholtz;
mod linesearch;
pub mod nehari;
pub mod ops;
pub mod poisson;
pub mod quadrature;
pub mod rescale;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};
pub use field::{ScalarPotential, VectorField};
pub use grid::{GridSpec, Scheme, Shape3, Staggering};
pub use ops::{curl_curl, discrete_curl, discrete_div, discrete_grad, ScalarArray, ScalarLocation};
pub use quadrature::lp_norm;
pub use energy::{energy, EnergyReport};
pub use poisson::{PoissonMethod, PoissonSolver};
pub use helmholtz::{decompose, project_V, DecomposedField};
