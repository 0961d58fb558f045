//! Coupled simulation of ground truth, attitude observer and position
//! estimator for a [`Scenario`].
//!
//! State layout: rotations `[R_1..R_N, R̂_1..R̂_N]`, vector `[ξ_1..ξ_M, p̂_1..p̂_N]`.
//! In continuous mode `ξ` is frozen and the logged `U_T` equals `V_T`.

use serde::Serialize;

use crate::attitude::{
    apply_jump, in_jump_set, observer_body_rates, relative_error_from_measurements, sigma_continuous, sigma_hybrid,
    total_potential, total_potential_v, xi_flow, AttitudeEstimates, HybridEdgeState, RelativeMeasurements,
};
use crate::formation::{bearings_from_truth, centroid, position_flow, ptilde, PositionEstimates};
use crate::runtime::{run_hybrid, HybridSystem, HybridTime, LieState, LogRow, RuntimeError, SimLog, Tangent};
use crate::scenario::{ObserverKind, Scenario};
use crate::so3::{dist_identity, Rotation, Vec3};
use crate::topology::EdgeRotations;

pub const INTEGRATOR: &str = "geometric RK4 (Runge-Kutta-Munthe-Kaas, exact so(3) dexp inverse), fixed step";

pub struct CoupledSystem<'a> {
    sc: &'a Scenario,
    kind: ObserverKind,
    positions: bool,
    centroid0: Vec3,
}

struct Split<'x> {
    truth: &'x [Rotation],
    est: AttitudeEstimates,
    xi: &'x [f64],
    p_hat: PositionEstimates,
}

impl<'a> CoupledSystem<'a> {
    pub fn new(sc: &'a Scenario) -> Self {
        let mut sys = CoupledSystem { sc, kind: sc.observer, positions: true, centroid0: Vec3::zeros() };
        let x0 = sys.initial_state();
        sys.centroid0 = centroid(&sys.ptilde_at(0.0, &x0));
        sys
    }

    /// Truth and attitude observer only; the position estimator is dropped.
    /// Attitude trajectories are identical to those of [`CoupledSystem::new`].
    pub fn attitude_only(sc: &'a Scenario) -> Self {
        CoupledSystem { sc, kind: sc.observer, positions: false, centroid0: Vec3::zeros() }
    }

    pub fn initial_state(&self) -> LieState {
        let sc = self.sc;
        let mut rotations = sc.truth_attitudes.clone();
        rotations.extend_from_slice(&sc.estimated_attitudes);
        let mut vector = sc.xi0.clone();
        if self.positions {
            vector.extend(sc.estimated_positions.iter().flat_map(|p| p.iter().copied()));
        }
        LieState { rotations, vector }
    }

    fn n(&self) -> usize {
        self.sc.n_agents()
    }

    fn m(&self) -> usize {
        self.sc.topology.n_edges()
    }

    fn split<'x>(&self, x: &'x LieState) -> Split<'x> {
        let (n, m) = (self.n(), self.m());
        Split {
            truth: &x.rotations[..n],
            est: AttitudeEstimates(x.rotations[n..].to_vec()),
            xi: &x.vector[..m],
            p_hat: PositionEstimates(x.vector[m..].chunks(3).map(Vec3::from_column_slice).collect()),
        }
    }

    fn edge_state(&self, s: &Split) -> (RelativeMeasurements, HybridEdgeState) {
        let t = &self.sc.topology;
        let meas = RelativeMeasurements::from_truth(t, s.truth);
        let r_bar = relative_error_from_measurements(t, &meas, &s.est);
        (meas, HybridEdgeState { r_bar, xi: s.xi.to_vec() })
    }

    pub fn relative_errors(&self, x: &LieState) -> EdgeRotations {
        self.edge_state(&self.split(x)).1.r_bar
    }

    pub fn ptilde_at(&self, t: f64, x: &LieState) -> Vec<Vec3> {
        let s = self.split(x);
        ptilde(&s.p_hat, &self.sc.truth_positions(t), s.truth, &s.est)
    }

    pub fn centroid0(&self) -> Vec3 {
        self.centroid0
    }
}

impl HybridSystem for CoupledSystem<'_> {
    fn flow(&self, t: f64, x: &LieState) -> Result<Tangent, RuntimeError> {
        let sc = self.sc;
        let topo = &sc.topology;
        let s = self.split(x);
        let (meas, edges) = self.edge_state(&s);
        let (sigma, xi_dot) = match self.kind {
            ObserverKind::Continuous => (sigma_continuous(topo, &meas, &s.est, &sc.params.a), vec![0.0; self.m()]),
            ObserverKind::Hybrid => (sigma_hybrid(topo, &edges, &sc.params), xi_flow(&edges, &sc.params)),
        };
        let omega = sc.omega_body(t);
        let est_rates = observer_body_rates(&s.est, &omega, &sigma, sc.params.k_r);

        let mut body_rates = omega;
        body_rates.extend(est_rates);
        let mut vector = xi_dot;
        if self.positions {
            let positions = sc.truth_positions(t);
            let bearings = bearings_from_truth(topo, &positions, s.truth).map_err(|e| RuntimeError::Model { t, message: e.to_string() })?;
            let v_body: Vec<Vec3> = s.truth.iter().zip(sc.truth_velocities(t)).map(|(r, v)| r.matrix().transpose() * v).collect();
            let p_dot = position_flow(topo, &s.p_hat, &s.est, &meas, &bearings, &v_body, &sigma, sc.k_p, sc.params.k_r);
            vector.extend(p_dot.iter().flat_map(|p| p.iter().copied()));
        }
        Ok(Tangent { body_rates, vector })
    }

    fn in_jump_set(&self, _t: f64, x: &LieState) -> bool {
        match self.kind {
            ObserverKind::Continuous => false,
            ObserverKind::Hybrid => in_jump_set(&self.edge_state(&self.split(x)).1, &self.sc.params).any(),
        }
    }

    fn jump(&self, t: f64, x: &LieState) -> Result<(LieState, Vec<usize>), RuntimeError> {
        let edges = self.edge_state(&self.split(x)).1;
        let affected = in_jump_set(&edges, &self.sc.params).jumping_edges();
        let next = apply_jump(&edges, &self.sc.params).map_err(|e| RuntimeError::Model { t, message: e.to_string() })?;
        let mut y = x.clone();
        y.vector[..self.m()].copy_from_slice(&next.xi);
        Ok((y, affected))
    }

    fn potential(&self, x: &LieState) -> f64 {
        let edges = self.edge_state(&self.split(x)).1;
        match self.kind {
            ObserverKind::Continuous => total_potential_v(&edges.r_bar.0, &self.sc.params.a),
            ObserverKind::Hybrid => total_potential(&edges, &self.sc.params),
        }
    }

    fn record(&self, time: HybridTime, x: &LieState) -> Result<LogRow, RuntimeError> {
        let edges = self.edge_state(&self.split(x)).1;
        let v_total = total_potential_v(&edges.r_bar.0, &self.sc.params.a);
        let u_total = match self.kind {
            ObserverKind::Continuous => v_total,
            ObserverKind::Hybrid => total_potential(&edges, &self.sc.params),
        };
        let pt = if self.positions { self.ptilde_at(time.t, x) } else { vec![] };
        let e = pt.iter().map(|p| p - self.centroid0).collect();
        Ok(LogRow {
            t: time.t,
            j: time.j,
            rbar: edges.r_bar.iter().map(dist_identity).collect(),
            xi: edges.xi,
            u_total,
            v_total,
            ptilde: pt,
            e,
        })
    }

    fn jump_bound(&self, x: &LieState) -> Option<usize> {
        match self.kind {
            ObserverKind::Continuous => None,
            ObserverKind::Hybrid => Some(jump_bound(self.potential(x), self.sc.params.delta)),
        }
    }
}

/// `⌈U_T(0) / δ⌉`.
pub fn jump_bound(u0: f64, delta: f64) -> usize {
    if delta > 0.0 {
        (u0 / delta).ceil().max(0.0) as usize
    } else {
        usize::MAX
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub observer: String,
    pub agents: usize,
    pub edges: usize,
    pub integrator: String,
    pub dt: f64,
    pub t_end: f64,
    pub steps: usize,
    pub jump_count: usize,
    pub u_total_initial: f64,
    pub u_total_final: f64,
    pub delta: f64,
    /// `⌈U_T(0)/δ⌉`, only meaningful for the hybrid observer.
    pub jump_bound: Option<usize>,
    pub max_flow_increase: f64,
    pub min_jump_drop: Option<f64>,
    pub final_rbar: Vec<f64>,
    pub final_xi: Vec<f64>,
    pub final_ptilde_norms: Vec<f64>,
    pub e_norm_initial: f64,
    pub e_norm_final: f64,
    /// Largest deviation of the centroid `(1/N) Σ e_i` from its initial value.
    pub centroid_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub log: SimLog,
    pub summary: Summary,
}

pub fn simulate(sc: &Scenario) -> Result<SimOutput, RuntimeError> {
    run(sc, CoupledSystem::new(sc))
}

/// Like [`simulate`] without the position estimator; position fields of the
/// log and summary are empty.
pub fn simulate_attitude_only(sc: &Scenario) -> Result<SimOutput, RuntimeError> {
    run(sc, CoupledSystem::attitude_only(sc))
}

fn run(sc: &Scenario, sys: CoupledSystem) -> Result<SimOutput, RuntimeError> {
    let x0 = sys.initial_state();
    let u0 = sys.potential(&x0);
    let log = run_hybrid(&sys, x0, &sc.sim)?;
    let summary = summarize(sc, &log, u0);
    Ok(SimOutput { log, summary })
}

fn summarize(sc: &Scenario, log: &SimLog, u0: f64) -> Summary {
    let first = &log.rows[0];
    let last = log.last();
    let s0 = first.e_sum();
    let n = first.e.len().max(1) as f64;
    let centroid_drift = log.rows.iter().map(|r| (r.e_sum() - s0).norm() / n).fold(0.0, f64::max);
    Summary {
        name: sc.name.clone(),
        observer: sc.observer.to_string(),
        agents: sc.n_agents(),
        edges: sc.topology.n_edges(),
        integrator: INTEGRATOR.into(),
        dt: sc.sim.dt,
        t_end: sc.sim.t_end,
        steps: log.steps,
        jump_count: log.jumps.len(),
        u_total_initial: u0,
        u_total_final: last.u_total,
        delta: sc.params.delta,
        jump_bound: (sc.observer == ObserverKind::Hybrid).then(|| jump_bound(u0, sc.params.delta)),
        max_flow_increase: log.max_flow_increase,
        min_jump_drop: log.min_jump_drop(),
        final_rbar: last.rbar.clone(),
        final_xi: last.xi.clone(),
        final_ptilde_norms: last.ptilde_norms(),
        e_norm_initial: first.e_norm(),
        e_norm_final: last.e_norm(),
        centroid_drift,
    }
}
