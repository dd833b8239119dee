//! Numerics for infinite-horizon Hamilton–Jacobi–Bellman problems with state
//! constraints.
//!
//! The crate is organised bottom-up:
//!
//! - [`setgeom`]: distances, excess, Hausdorff distance, sampled cones, boundary normals.
//! - [`fenchel`]: grid functions, Legendre–Fenchel conjugation, Hamiltonian models and their checks.
//! - [`representation`]: velocity/cost parametrization of a Hamiltonian over the unit ball.
//! - [`tubes`]: time-sampled set-valued maps and their variation functionals.
//! - [`inclusion`]: differential-inclusion trajectories, Filippov correction, viability.
//! - [`nft`]: neighboring feasible trajectories under a state constraint.
//! - [`hjb`]: value function, residual checker, vanishing check and comparison experiment.

pub mod error;
pub mod fenchel;
pub mod grid;
pub mod hjb;
pub mod inclusion;
pub mod linalg;
pub mod nft;
pub mod representation;
pub mod setgeom;
pub mod tubes;

pub use error::{Error, Result};
