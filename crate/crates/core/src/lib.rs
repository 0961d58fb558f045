//! Distributed attitude and formation estimation for rigid-body networks on
//! SO(3) with tree interaction graphs.
//!
//! - [`so3`]: rotation-group toolbox (hat/vex, ψ, Rodrigues, exp, polar projection).
//! - [`topology`]: validated trees, incidence and Laplacian matrices, the
//!   rotation-weighted incidence matrix and the bearing Laplacian.
//! - [`attitude`]: the continuous and hybrid attitude observers, the hybrid
//!   potential with its gradients, flow/jump sets and parameter synthesis.
//! - [`formation`]: bearing-based distributed position estimation.
//! - [`runtime`]: hybrid-system executor with a geometric RK4 integrator.
//! - [`scenario`] and [`sim`]: declarative scenarios, ground truth, and the
//!   coupled simulation that ties everything together.

pub mod attitude;
pub mod formation;
pub mod output;
pub mod runtime;
pub mod scenario;
pub mod sim;
pub mod so3;
pub mod topology;

pub use so3::{Mat3, Rotation, Vec3};
