use nalgebra::{DMatrix, DVector};

use super::potential::grad_r;
use super::{AttitudeEstimates, HybridEdgeState, ObserverParams, RelativeMeasurements};
use crate::so3::{hat, psi, reorthonormalize, Mat3, Rotation, Vec3};
use crate::topology::{kron_block, laplacian, EdgeRotations, TreeTopology};

/// `R̄_k = R̂_j R_ijᵀ R̂_iᵀ` for every edge `k = (i, j)`.
pub fn relative_error_from_measurements(t: &TreeTopology, meas: &RelativeMeasurements, est: &AttitudeEstimates) -> EdgeRotations {
    EdgeRotations(
        t.edges()
            .iter()
            .zip(&meas.0)
            .map(|(e, rij)| {
                let m = est.0[e.tail].matrix() * rij.matrix().transpose() * est.0[e.head].matrix().transpose();
                reorthonormalize(&m).expect("product of rotations")
            })
            .collect(),
    )
}

/// Continuous correcting term, computed agent by agent from neighbour data:
/// `σ_i = −Σ_{j∈N_i} ψ(A R̂_j R_ijᵀ R̂_iᵀ)`.
pub fn sigma_continuous(t: &TreeTopology, meas: &RelativeMeasurements, est: &AttitudeEstimates, a: &Mat3) -> Vec<Vec3> {
    (0..t.n_agents())
        .map(|i| {
            let ri = est.0[i].matrix();
            t.head_edges(i)
                .iter()
                .chain(t.tail_edges(i))
                .map(|&k| {
                    let e = t.edge(k);
                    let j = if e.head == i { e.tail } else { e.head };
                    let rij = meas.towards(t, k, i);
                    -psi(&(a * est.0[j].matrix() * rij.matrix().transpose() * ri.transpose()))
                })
                .sum()
        })
        .collect()
}

/// Hybrid correcting term
/// `σ_i = Σ_{l: i tail} R̄_l g_l − Σ_{n: i head} g_n` with `g_k` the body-frame
/// rotational gradient of the potential on edge `k`.
pub fn sigma_hybrid(t: &TreeTopology, state: &HybridEdgeState, p: &ObserverParams) -> Vec<Vec3> {
    let grads: Vec<Vec3> = state.r_bar.iter().zip(&state.xi).map(|(r, &x)| grad_r(r, x, p)).collect();
    (0..t.n_agents())
        .map(|i| {
            let incoming: Vec3 = t.tail_edges(i).iter().map(|&l| state.r_bar[l].matrix() * grads[l]).sum();
            let outgoing: Vec3 = t.head_edges(i).iter().map(|&n| grads[n]).sum();
            incoming - outgoing
        })
        .collect()
}

/// Body angular velocity of each estimate, `ω_i − k_R R̂_iᵀ σ_i`.
pub fn observer_body_rates(est: &AttitudeEstimates, omega_body: &[Vec3], sigma: &[Vec3], k_r: f64) -> Vec<Vec3> {
    est.0
        .iter()
        .zip(omega_body)
        .zip(sigma)
        .map(|((r, w), s)| w - k_r * (r.matrix().transpose() * s))
        .collect()
}

/// Time derivative `R̂̇_i = R̂_i hat(ω_i − k_R R̂_iᵀ σ_i)` of every estimate.
pub fn observer_flow(t: &TreeTopology, est: &AttitudeEstimates, omega_body: &[Vec3], sigma: &[Vec3], k_r: f64) -> Vec<Mat3> {
    debug_assert_eq!(est.0.len(), t.n_agents());
    observer_body_rates(est, omega_body, sigma, k_r)
        .iter()
        .zip(&est.0)
        .map(|(w, r)| r.matrix() * hat(w))
        .collect()
}

/// Stacks per-agent or per-edge vectors into one column.
pub fn stack(v: &[Vec3]) -> DVector<f64> {
    DVector::from_iterator(3 * v.len(), v.iter().flat_map(|x| x.iter().copied()))
}

/// Linearisation of the continuous scheme around the desired equilibrium:
/// `−(k_R/2)(ℒ ⊗ (tr(A)I₃ − A))`.
pub fn consensus_linearization(t: &TreeTopology, a: &Mat3, k_r: f64) -> DMatrix<f64> {
    let a_bar = Mat3::identity() * a.trace() - a;
    kron_block(&laplacian(t), &a_bar) * (-k_r / 2.0)
}

/// `−(tr(A R)I₃ − (A R)ᵀ)` for a half-turn `R` about an eigenvector of `A`.
/// A positive eigenvalue certifies that the undesired equilibrium is unstable.
pub fn instability_certificate(a: &Mat3, half_turn: &Rotation) -> Mat3 {
    let ar = a * half_turn.matrix();
    -(Mat3::identity() * ar.trace() - ar.transpose())
}
