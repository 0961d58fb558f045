//! The hybrid potential `U(R̄, ξ) = tr(A(I − R̄ R_α(ξ,u))) + γξ²/2`, its
//! gradients, and the flow/jump logic built on top of it.

use super::{AttitudeError, HybridEdgeState, ObserverParams};
use crate::so3::{exp_so3, psi, Mat3, Rotation, Vec3};

fn rot_u(xi: f64, p: &ObserverParams) -> Rotation {
    exp_so3(&(p.u * xi))
}

fn a_rbar_rot(r_bar: &Rotation, xi: f64, p: &ObserverParams) -> (Rotation, Mat3) {
    let ru = rot_u(xi, p);
    (ru, p.a * r_bar.matrix() * ru.matrix())
}

/// Potential of a single edge.
pub fn potential_u(r_bar: &Rotation, xi: f64, p: &ObserverParams) -> f64 {
    let (_, m) = a_rbar_rot(r_bar, xi, p);
    (p.a.trace() - m.trace()) + 0.5 * p.gamma * xi * xi
}

/// Smooth potential `tr(A(I − R̄))` used by the continuous observer.
pub fn potential_v(r_bar: &Rotation, a: &Mat3) -> f64 {
    a.trace() - (a * r_bar.matrix()).trace()
}

/// Body-frame rotational gradient `ψ(R̄ᵀ∇U) = R_α(ξ,u) ψ(A R̄ R_α(ξ,u))`.
///
/// With the metric `⟨R̄ X, R̄ Y⟩ = tr(XᵀY)`, the derivative of `U` along
/// `R̄ exp(ε hat(e))` equals `2 eᵀ grad_r`.
pub fn grad_r(r_bar: &Rotation, xi: f64, p: &ObserverParams) -> Vec3 {
    let (ru, m) = a_rbar_rot(r_bar, xi, p);
    ru.matrix() * psi(&m)
}

/// `∂U/∂ξ = γξ + 2uᵀψ(A R̄ R_α(ξ,u))`.
pub fn grad_xi(r_bar: &Rotation, xi: f64, p: &ObserverParams) -> f64 {
    let (_, m) = a_rbar_rot(r_bar, xi, p);
    p.gamma * xi + 2.0 * p.u.dot(&psi(&m))
}

/// Element of Ξ minimising `U(R̄, ·)`; ties go to the earliest entry.
pub fn xi_star(r_bar: &Rotation, p: &ObserverParams) -> f64 {
    let mut best = p.xi_set[0];
    let mut best_u = potential_u(r_bar, best, p);
    for &xi in &p.xi_set[1..] {
        let u = potential_u(r_bar, xi, p);
        if u < best_u {
            best = xi;
            best_u = u;
        }
    }
    best
}

/// `U(R̄, ξ) − min_{ξ̄∈Ξ} U(R̄, ξ̄)`.
pub fn hysteresis_gap(r_bar: &Rotation, xi: f64, p: &ObserverParams) -> f64 {
    potential_u(r_bar, xi, p) - potential_u(r_bar, xi_star(r_bar, p), p)
}

/// Network potential `U_T = Σ_k U(R̄_k, ξ_k)`.
pub fn total_potential(state: &HybridEdgeState, p: &ObserverParams) -> f64 {
    state.r_bar.iter().zip(&state.xi).map(|(r, &x)| potential_u(r, x, p)).sum()
}

/// `V_T = Σ_k tr(A(I − R̄_k))`.
pub fn total_potential_v(r_bar: &[Rotation], a: &Mat3) -> f64 {
    r_bar.iter().map(|r| potential_v(r, a)).sum()
}

/// Per-edge and aggregate membership in the jump set.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSetMembership {
    /// Edge `k` satisfies `U(R̄_k, ξ_k) − min_Ξ U(R̄_k, ·) ≥ δ`.
    pub edges: Vec<bool>,
    /// Edge `k` satisfies the flow inequality `≤ δ`.
    pub flow_edges: Vec<bool>,
    pub gaps: Vec<f64>,
}

impl JumpSetMembership {
    /// State lies in the network jump set (union over agents).
    pub fn any(&self) -> bool {
        self.edges.iter().any(|&b| b)
    }

    /// State lies in the network flow set (intersection over agents).
    pub fn in_flow_set(&self) -> bool {
        self.flow_edges.iter().all(|&b| b)
    }

    /// Per-agent jump-set membership; an agent checks only the edges it heads.
    pub fn per_agent(&self, t: &crate::topology::TreeTopology) -> Vec<bool> {
        (0..t.n_agents()).map(|i| t.head_edges(i).iter().any(|&k| self.edges[k])).collect()
    }

    pub fn jumping_edges(&self) -> Vec<usize> {
        self.edges.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k).collect()
    }
}

pub fn in_jump_set(state: &HybridEdgeState, p: &ObserverParams) -> JumpSetMembership {
    let gaps: Vec<f64> = state.r_bar.iter().zip(&state.xi).map(|(r, &x)| hysteresis_gap(r, x, p)).collect();
    JumpSetMembership {
        edges: gaps.iter().map(|&g| g >= p.delta).collect(),
        flow_edges: gaps.iter().map(|&g| g <= p.delta).collect(),
        gaps,
    }
}

/// Resets `ξ_k ← ξ*_k` on every edge at or above the hysteresis threshold.
/// `R̄` is left untouched.
pub fn apply_jump(state: &HybridEdgeState, p: &ObserverParams) -> Result<HybridEdgeState, AttitudeError> {
    let membership = in_jump_set(state, p);
    if !membership.any() {
        return Err(AttitudeError::NotInJumpSet);
    }
    let mut next = state.clone();
    for k in membership.jumping_edges() {
        next.xi[k] = xi_star(&state.r_bar[k], p);
    }
    Ok(next)
}

/// `ξ̇_k = −k_ξ ∂U/∂ξ_k` for every edge.
pub fn xi_flow(state: &HybridEdgeState, p: &ObserverParams) -> Vec<f64> {
    state.r_bar.iter().zip(&state.xi).map(|(r, &x)| -p.k_xi * grad_xi(r, x, p)).collect()
}

/// Outcome of [`gradient_audit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientAudit {
    pub samples: usize,
    pub max_rel_err_r: f64,
    pub max_rel_err_xi: f64,
}

impl GradientAudit {
    pub fn max_rel_err(&self) -> f64 {
        self.max_rel_err_r.max(self.max_rel_err_xi)
    }
}

/// Compares [`grad_r`] and [`grad_xi`] with central differences of
/// [`potential_u`] at uniformly random `(R̄, ξ)`, `ξ ∈ [−π, π)`.
///
/// Errors are relative to `max(‖analytic‖, ‖numeric‖, 1)`, so gradients near
/// zero are compared absolutely.
pub fn gradient_audit(p: &ObserverParams, samples: usize, seed: u64) -> GradientAudit {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let rel = |a: f64, f: f64, diff: f64| diff / a.max(f).max(1.0);
    let mut audit = GradientAudit { samples, max_rel_err_r: 0.0, max_rel_err_xi: 0.0 };
    for _ in 0..samples {
        let r = crate::so3::sample::random_rotation(&mut rng);
        let xi = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let mut fd = Vec3::zeros();
        for i in 0..3 {
            let mut e = Vec3::zeros();
            e[i] = h;
            let d = potential_u(&(r * exp_so3(&e)), xi, p) - potential_u(&(r * exp_so3(&-e)), xi, p);
            fd[i] = d / (2.0 * h) / 2.0;
        }
        let fd_xi = (potential_u(&r, xi + h, p) - potential_u(&r, xi - h, p)) / (2.0 * h);
        let g = grad_r(&r, xi, p);
        let gx = grad_xi(&r, xi, p);
        audit.max_rel_err_r = audit.max_rel_err_r.max(rel(g.norm(), fd.norm(), (g - fd).norm()));
        audit.max_rel_err_xi = audit.max_rel_err_xi.max(rel(gx.abs(), fd_xi.abs(), (gx - fd_xi).abs()));
    }
    audit
}
