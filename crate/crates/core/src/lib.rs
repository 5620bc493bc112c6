//! Variational time stepping for finite-strain Poynting-Thomson viscoelasticity.
//!
//! Each time step minimizes the total energy plus the dissipation needed to
//! move the viscous deformation away from its previous value. The crate
//! holds the constitutive densities ([`rheology`]), the state
//! representations ([`domain`]), the minimizers ([`minimize`]), the
//! incremental scheme and its De Giorgi interpolation ([`stepper`]), the
//! small-strain limit ([`linearized`]) and a verification harness
//! ([`analysis`]).

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod domain;
pub mod error;
pub mod linearized;
pub mod minimize;
pub mod rheology;
pub mod stepper;

pub use domain::{Loading, Mode, Polynomial, ShearColumnMesh, State};
pub use error::{Error, Result};
pub use linearized::{LinProblem, LinState, LinTrajectory};
pub use minimize::{Method, MinimizeSettings};
pub use rheology::{MaterialModel, QuadraticLimit};
pub use stepper::{Problem, TimeGrid, Trajectory};
