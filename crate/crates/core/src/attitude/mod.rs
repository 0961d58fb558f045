//! Distributed attitude observers.
//!
//! Each agent integrates `R̂̇_i = R̂_i hat(ω_i − k_R R̂_iᵀ σ_i)` where the
//! correcting term `σ_i` only uses relative measurements and estimates of its
//! neighbours. Two choices of `σ_i` are provided: the smooth gradient of
//! `tr(A(I − R̄))` ([`sigma_continuous`]), and the hybrid scheme that augments
//! every edge with a scalar `ξ_k` subject to hysteresis-driven resets
//! ([`sigma_hybrid`], [`xi_flow`], [`apply_jump`]).

use thiserror::Error;

use crate::so3::Rotation;
use crate::topology::{EdgeRotations, TopologyError, TreeTopology};

mod observer;
mod params;
mod potential;

pub use observer::{
    consensus_linearization, instability_certificate, observer_body_rates, observer_flow,
    relative_error_from_measurements, sigma_continuous, sigma_hybrid, stack,
};
pub use params::{
    check_params, spectrum, synthesize_direction, synthesize_params, undesired_critical_rotations, Check,
    ObserverParams, ParamReport, Spectrum, Synthesis, SynthesisCase,
};
pub use potential::{
    apply_jump, grad_r, grad_xi, gradient_audit, hysteresis_gap, in_jump_set, potential_u, potential_v, total_potential,
    total_potential_v, xi_flow, xi_star, GradientAudit, JumpSetMembership,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttitudeError {
    #[error("the hysteresis set Ξ is empty")]
    EmptyXiSet,
    #[error("Ξ[{index}] = {value} must satisfy 0 < |ξ| <= π")]
    XiOutOfRange { index: usize, value: f64 },
    #[error("A must be symmetric")]
    NotSymmetric,
    #[error("A must be positive definite (smallest eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("eigenvalues {values:?} of A violate 0 < λ1 <= λ2 < λ3")]
    EigenvalueOrderViolation { values: [f64; 3] },
    #[error("u must be a unit vector (norm {0})")]
    NotUnitU(f64),
    #[error("{0} must be finite")]
    NotFinite(&'static str),
    #[error("gain {name} = {value} must be positive")]
    NonPositiveGain { name: &'static str, value: f64 },
    #[error("{name} = {value} must lie in (0, 1)")]
    BadFraction { name: &'static str, value: f64 },
    #[error("state is not in the jump set")]
    NotInJumpSet,
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Attitude estimates `R̂_i`, one per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeEstimates(pub Vec<Rotation>);

/// Relative orientation measurements `R_ij = R_iᵀ R_j`, one per edge with
/// `i` the head and `j` the tail.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeMeasurements(pub Vec<Rotation>);

impl RelativeMeasurements {
    /// Exact measurements generated from ground-truth attitudes.
    pub fn from_truth(t: &TreeTopology, truth: &[Rotation]) -> Self {
        RelativeMeasurements(
            t.edges().iter().map(|e| truth[e.head].transpose() * truth[e.tail]).collect(),
        )
    }

    /// `R_ij` seen from agent `i` towards neighbour `j` across edge `k`.
    pub fn towards(&self, t: &TreeTopology, k: usize, i: usize) -> Rotation {
        if t.edge(k).head == i {
            self.0[k]
        } else {
            self.0[k].transpose()
        }
    }
}

/// Hybrid state on the edges: relative attitude errors and the auxiliary
/// scalars. `ξ_k` is owned by the head of edge `k` (see
/// [`TreeTopology::xi_owner`]) and read by its tail.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridEdgeState {
    pub r_bar: EdgeRotations,
    pub xi: Vec<f64>,
}

impl HybridEdgeState {
    pub fn new(t: &TreeTopology, r_bar: EdgeRotations, xi: Vec<f64>) -> Result<Self, AttitudeError> {
        t.check_edge_count(r_bar.len())?;
        t.check_edge_count(xi.len())?;
        Ok(HybridEdgeState { r_bar, xi })
    }
}
