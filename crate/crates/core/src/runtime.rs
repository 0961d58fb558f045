//! Hybrid-system executor: flows `ẋ = F(x)` on the flow set, jumps
//! `x⁺ = G(x)` on the jump set, with jumps taking priority on the overlap.
//!
//! States live on `SO(3)^K × R^n`. Flows are integrated with a
//! Runge–Kutta–Munthe-Kaas scheme using the classical RK4 tableau: rotations
//! are advanced as `R exp(θ)` with `θ` driven through the exact inverse
//! differential of `exp`, vector components with plain RK4 on the same stages.

use thiserror::Error;

use crate::so3::{dexp_inv_body, exp_so3, reorthonormalize, Rotation, Vec3, DRIFT_REPAIR_TOL};

/// Orthonormality error beyond which a step is rejected outright.
pub const REJECT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("step at t = {t} rejected: {reason}")]
    StepRejected { t: f64, reason: String },
    #[error("more than {limit} jumps by t = {t}")]
    MaxJumpsExceeded { limit: usize, t: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("model error at t = {t}: {message}")]
    Model { t: f64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridTime {
    pub t: f64,
    pub j: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LieState {
    pub rotations: Vec<Rotation>,
    pub vector: Vec<f64>,
}

/// Body-frame angular velocities (`Ṙ = R hat(ω)`) and vector derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub body_rates: Vec<Vec3>,
    pub vector: Vec<f64>,
}

/// Quantities recorded for one point of the hybrid time domain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub j: usize,
    pub rbar: Vec<f64>,
    pub xi: Vec<f64>,
    pub u_total: f64,
    pub v_total: f64,
    pub ptilde: Vec<Vec3>,
    pub e: Vec<Vec3>,
}

impl LogRow {
    pub fn ptilde_norms(&self) -> Vec<f64> {
        self.ptilde.iter().map(|p| p.norm()).collect()
    }

    pub fn e_norm(&self) -> f64 {
        self.e.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn e_sum(&self) -> Vec3 {
        self.e.iter().sum()
    }
}

pub trait HybridSystem {
    fn flow(&self, t: f64, x: &LieState) -> Result<Tangent, RuntimeError>;
    fn in_jump_set(&self, t: f64, x: &LieState) -> bool;
    /// Applies the jump map, returning the new state and the (0-based)
    /// components that were reset.
    fn jump(&self, t: f64, x: &LieState) -> Result<(LieState, Vec<usize>), RuntimeError>;
    /// Lyapunov-like potential audited by the runner.
    fn potential(&self, x: &LieState) -> f64;
    fn record(&self, time: HybridTime, x: &LieState) -> Result<LogRow, RuntimeError>;
    /// Upper bound on the number of jumps from `x`, if the system knows one.
    fn jump_bound(&self, _x: &LieState) -> Option<usize> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Defaults to ten times the system's jump bound.
    pub max_jumps: Option<usize>,
    pub repair_every: usize,
    pub log_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { dt: 1e-3, t_end: 30.0, max_jumps: None, repair_every: 100, log_every: 1 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        let bad = |m: &str| Err(RuntimeError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt must be positive");
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return bad("t_end must be at least dt");
        }
        if self.repair_every == 0 || self.log_every == 0 {
            return bad("cadences must be positive");
        }
        if self.max_jumps == Some(0) {
            return bad("max_jumps must be positive");
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub t: f64,
    /// Jump counter after the event.
    pub j: usize,
    pub components: Vec<usize>,
    pub u_before: f64,
    pub u_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub rows: Vec<LogRow>,
    pub jumps: Vec<JumpEvent>,
    /// Largest increase of the potential over a single flow step.
    pub max_flow_increase: f64,
    pub max_jumps: usize,
    pub steps: usize,
    pub final_state: LieState,
}

impl SimLog {
    pub fn min_jump_drop(&self) -> Option<f64> {
        self.jumps.iter().map(|e| e.u_before - e.u_after).reduce(f64::min)
    }

    pub fn last(&self) -> &LogRow {
        self.rows.last().expect("log has the initial row")
    }
}

fn advance(x: &LieState, k: &Tangent, h: f64) -> LieState {
    LieState {
        rotations: x.rotations.iter().zip(&k.body_rates).map(|(r, w)| *r * exp_so3(&(w * h))).collect(),
        vector: x.vector.iter().zip(&k.vector).map(|(a, b)| a + b * h).collect(),
    }
}

fn check_tangent(t: f64, x: &LieState, k: &Tangent) -> Result<(), RuntimeError> {
    if k.body_rates.len() != x.rotations.len() || k.vector.len() != x.vector.len() {
        return Err(RuntimeError::Model { t, message: "flow returned a tangent of the wrong shape".into() });
    }
    Ok(())
}

/// One geometric RK4 step of length `dt` from `(t, x)`.
pub fn integrate_step<S: HybridSystem + ?Sized>(sys: &S, t: f64, x: &LieState, dt: f64) -> Result<LieState, RuntimeError> {
    // stage i evaluates the field at R exp(θ_i) and pulls it back through dexp⁻¹_θ_i
    let stage = |c: f64, theta: &[Vec3], v: &[f64]| -> Result<Tangent, RuntimeError> {
        let y = LieState {
            rotations: x.rotations.iter().zip(theta).map(|(r, th)| *r * exp_so3(th)).collect(),
            vector: v.to_vec(),
        };
        let f = sys.flow(t + c * dt, &y)?;
        check_tangent(t, x, &f)?;
        Ok(Tangent {
            body_rates: theta.iter().zip(&f.body_rates).map(|(th, w)| dexp_inv_body(th, w)).collect(),
            vector: f.vector,
        })
    };
    let theta_of = |k: &Tangent, h: f64| -> Vec<Vec3> { k.body_rates.iter().map(|w| w * h).collect() };
    let vec_of = |k: &Tangent, h: f64| -> Vec<f64> { x.vector.iter().zip(&k.vector).map(|(a, b)| a + b * h).collect() };

    let zero = vec![Vec3::zeros(); x.rotations.len()];
    let k1 = stage(0.0, &zero, &x.vector)?;
    let k2 = stage(0.5, &theta_of(&k1, dt / 2.0), &vec_of(&k1, dt / 2.0))?;
    let k3 = stage(0.5, &theta_of(&k2, dt / 2.0), &vec_of(&k2, dt / 2.0))?;
    let k4 = stage(1.0, &theta_of(&k3, dt), &vec_of(&k3, dt))?;
    let combined = Tangent {
        body_rates: (0..x.rotations.len())
            .map(|i| k1.body_rates[i] + 2.0 * k2.body_rates[i] + 2.0 * k3.body_rates[i] + k4.body_rates[i])
            .collect(),
        vector: (0..x.vector.len()).map(|i| k1.vector[i] + 2.0 * k2.vector[i] + 2.0 * k3.vector[i] + k4.vector[i]).collect(),
    };
    Ok(advance(x, &combined, dt / 6.0))
}

fn max_drift(x: &LieState) -> f64 {
    x.rotations.iter().map(|r| r.orthonormality_error()).fold(0.0, f64::max)
}

fn screen(t: f64, x: &mut LieState, repair: bool) -> Result<(), RuntimeError> {
    if x.vector.iter().any(|v| !v.is_finite()) || x.rotations.iter().any(|r| r.matrix().iter().any(|v| !v.is_finite())) {
        return Err(RuntimeError::StepRejected { t, reason: "non-finite state".into() });
    }
    let drift = max_drift(x);
    if drift > REJECT_TOL {
        return Err(RuntimeError::StepRejected { t, reason: format!("orthonormality drift {drift:e}") });
    }
    if repair && drift > DRIFT_REPAIR_TOL {
        for r in &mut x.rotations {
            *r = reorthonormalize(r.matrix()).map_err(|e| RuntimeError::StepRejected { t, reason: e.to_string() })?;
        }
    }
    Ok(())
}

/// Runs the hybrid system from `x0` at `t = 0` until `t_end`.
///
/// At every step boundary the jump set is tested first; while the state is in
/// it, jumps are applied (each incrementing `j`). Otherwise one flow step is
/// taken. The potential is audited across every flow step and every jump.
pub fn run_hybrid<S: HybridSystem + ?Sized>(sys: &S, x0: LieState, cfg: &SimConfig) -> Result<SimLog, RuntimeError> {
    cfg.validate()?;
    let steps = cfg.steps();
    let max_jumps = cfg
        .max_jumps
        .unwrap_or_else(|| sys.jump_bound(&x0).map_or(1_000_000, |b| b.saturating_mul(10).max(1)));
    let mut x = x0;
    let mut j = 0;
    let mut n = 0;
    let mut rows = vec![sys.record(HybridTime { t: 0.0, j: 0 }, &x)?];
    let mut jumps = Vec::new();
    let mut max_flow_increase = f64::NEG_INFINITY;
    let mut u = sys.potential(&x);
    loop {
        let t = n as f64 * cfg.dt;
        if sys.in_jump_set(t, &x) {
            if j >= max_jumps {
                return Err(RuntimeError::MaxJumpsExceeded { limit: max_jumps, t });
            }
            let (next, components) = sys.jump(t, &x)?;
            x = next;
            j += 1;
            let u_after = sys.potential(&x);
            jumps.push(JumpEvent { t, j, components, u_before: u, u_after });
            u = u_after;
            rows.push(sys.record(HybridTime { t, j }, &x)?);
            continue;
        }
        if n >= steps {
            break;
        }
        let mut next = integrate_step(sys, t, &x, cfg.dt)?;
        n += 1;
        let t_next = n as f64 * cfg.dt;
        screen(t_next, &mut next, n % cfg.repair_every == 0)?;
        x = next;
        let u_next = sys.potential(&x);
        max_flow_increase = max_flow_increase.max(u_next - u);
        u = u_next;
        if n % cfg.log_every == 0 || n == steps {
            rows.push(sys.record(HybridTime { t: t_next, j }, &x)?);
        }
    }
    Ok(SimLog { rows, jumps, max_flow_increase, max_jumps, steps, final_state: x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::sample::{random_rotation, random_vec};
    use crate::so3::Mat3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `Ṙ = R hat(ω(t))`, `ẋ = −x` with optional resets of `x` to 0 once `x ≤ threshold`.
    struct Toy<F: Fn(f64) -> Vec3> {
        omega: F,
        reset_below: Option<f64>,
    }

    impl<F: Fn(f64) -> Vec3> HybridSystem for Toy<F> {
        fn flow(&self, t: f64, x: &LieState) -> Result<Tangent, RuntimeError> {
            Ok(Tangent { body_rates: vec![(self.omega)(t); x.rotations.len()], vector: x.vector.iter().map(|v| -v).collect() })
        }
        fn in_jump_set(&self, _t: f64, x: &LieState) -> bool {
            self.reset_below.is_some_and(|b| x.vector[0] != 0.0 && x.vector[0] <= b)
        }
        fn jump(&self, _t: f64, x: &LieState) -> Result<(LieState, Vec<usize>), RuntimeError> {
            Ok((LieState { rotations: x.rotations.clone(), vector: vec![0.0] }, vec![0]))
        }
        fn potential(&self, x: &LieState) -> f64 {
            x.vector[0].abs()
        }
        fn record(&self, time: HybridTime, x: &LieState) -> Result<LogRow, RuntimeError> {
            Ok(LogRow { t: time.t, j: time.j, xi: x.vector.clone(), ..Default::default() })
        }
    }

    fn state(r: Rotation) -> LieState {
        LieState { rotations: vec![r], vector: vec![1.0] }
    }

    #[test]
    fn zero_flow_leaves_state_unchanged() {
        struct Still;
        impl HybridSystem for Still {
            fn flow(&self, _t: f64, x: &LieState) -> Result<Tangent, RuntimeError> {
                Ok(Tangent { body_rates: vec![Vec3::zeros(); x.rotations.len()], vector: vec![0.0; x.vector.len()] })
            }
            fn in_jump_set(&self, _t: f64, _x: &LieState) -> bool {
                false
            }
            fn jump(&self, _t: f64, x: &LieState) -> Result<(LieState, Vec<usize>), RuntimeError> {
                Ok((x.clone(), vec![]))
            }
            fn potential(&self, _x: &LieState) -> f64 {
                0.0
            }
            fn record(&self, time: HybridTime, _x: &LieState) -> Result<LogRow, RuntimeError> {
                Ok(LogRow { t: time.t, j: time.j, ..Default::default() })
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let x = LieState { rotations: vec![random_rotation(&mut rng)], vector: vec![2.0, -1.0] };
        assert_eq!(integrate_step(&Still, 0.0, &x, 1e-3).unwrap(), x);
    }

    #[test]
    fn constant_body_rate_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let w = random_vec(&mut rng, 3.0);
        let r0 = random_rotation(&mut rng);
        let sys = Toy { omega: |_| w, reset_below: None };
        let log = run_hybrid(&sys, state(r0), &SimConfig { dt: 1e-3, t_end: 1.0, ..Default::default() }).unwrap();
        let exact = r0 * exp_so3(&w);
        assert!((log.final_state.rotations[0].matrix() - exact.matrix()).norm() < 1e-8);
        assert!((log.final_state.vector[0] - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(log.rows.len(), 1001);
        assert!(log.jumps.is_empty());
        assert_eq!(log.last().j, 0);
    }

    #[test]
    fn time_varying_rate_converges_at_fourth_order() {
        // R(t) = R0 exp(t a) exp(t b) has body rate exp(−t b) a + b
        let (a, b) = (Vec3::new(3.0, -2.0, 4.0), Vec3::new(1.0, 2.0, -1.5));
        let r0 = exp_so3(&Vec3::new(0.3, 0.2, -0.1));
        let sys = Toy { omega: move |t: f64| exp_so3(&(-b * t)).matrix() * a + b, reset_below: None };
        let exact = r0 * exp_so3(&a) * exp_so3(&b);
        let err = |dt: f64| {
            let log = run_hybrid(&sys, state(r0), &SimConfig { dt, t_end: 1.0, log_every: 1000, ..Default::default() }).unwrap();
            (log.final_state.rotations[0].matrix() - exact.matrix()).norm()
        };
        let ratio = err(2e-3) / err(1e-3);
        assert!((ratio - 16.0).abs() < 3.0, "ratio {ratio}");
    }

    #[test]
    fn jumps_take_priority_and_are_logged() {
        let sys = Toy { omega: |_| Vec3::zeros(), reset_below: Some(0.5) };
        let log = run_hybrid(&sys, state(Rotation::identity()), &SimConfig { dt: 1e-2, t_end: 1.0, ..Default::default() }).unwrap();
        assert_eq!(log.jumps.len(), 1);
        let ev = &log.jumps[0];
        // e^{-t} crosses 0.5 at t = ln 2
        assert!((ev.t - 0.7).abs() < 1e-12);
        assert_eq!(ev.j, 1);
        assert_eq!(ev.components, vec![0]);
        assert!(ev.u_before - ev.u_after > 0.49);
        let at_jump: Vec<_> = log.rows.iter().filter(|r| (r.t - 0.7).abs() < 1e-12).collect();
        assert_eq!(at_jump.len(), 2);
        assert_eq!((at_jump[0].j, at_jump[1].j), (0, 1));
        assert!(log.rows.windows(2).all(|w| (w[0].t, w[0].j) < (w[1].t, w[1].j)));
        assert!(log.max_flow_increase <= 0.0);
    }

    #[test]
    fn runaway_jumps_are_reported() {
        struct Chatter;
        impl HybridSystem for Chatter {
            fn flow(&self, _t: f64, x: &LieState) -> Result<Tangent, RuntimeError> {
                Ok(Tangent { body_rates: vec![], vector: vec![0.0; x.vector.len()] })
            }
            fn in_jump_set(&self, _t: f64, _x: &LieState) -> bool {
                true
            }
            fn jump(&self, _t: f64, x: &LieState) -> Result<(LieState, Vec<usize>), RuntimeError> {
                Ok((x.clone(), vec![0]))
            }
            fn potential(&self, _x: &LieState) -> f64 {
                1.0
            }
            fn record(&self, time: HybridTime, _x: &LieState) -> Result<LogRow, RuntimeError> {
                Ok(LogRow { t: time.t, j: time.j, ..Default::default() })
            }
            fn jump_bound(&self, _x: &LieState) -> Option<usize> {
                Some(3)
            }
        }
        let x = LieState { rotations: vec![], vector: vec![0.0] };
        let err = run_hybrid(&Chatter, x, &SimConfig::default()).unwrap_err();
        assert_eq!(err, RuntimeError::MaxJumpsExceeded { limit: 30, t: 0.0 });
    }

    #[test]
    fn runs_are_deterministic() {
        let sys = Toy { omega: |t: f64| Vec3::new(t.cos(), 1.0, (2.0 * t).sin()), reset_below: Some(0.3) };
        let cfg = SimConfig { dt: 1e-3, t_end: 2.0, ..Default::default() };
        let r0 = exp_so3(&Vec3::new(1.0, 0.0, 0.5));
        assert_eq!(run_hybrid(&sys, state(r0), &cfg).unwrap(), run_hybrid(&sys, state(r0), &cfg).unwrap());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let sys = Toy { omega: |_| Vec3::zeros(), reset_below: None };
        for cfg in [
            SimConfig { dt: 0.0, ..Default::default() },
            SimConfig { t_end: 1e-4, ..Default::default() },
            SimConfig { repair_every: 0, ..Default::default() },
            SimConfig { max_jumps: Some(0), ..Default::default() },
        ] {
            assert!(matches!(run_hybrid(&sys, state(Rotation::identity()), &cfg), Err(RuntimeError::InvalidConfig(_))));
        }
    }

    #[test]
    fn non_finite_flow_is_rejected() {
        let sys = Toy { omega: |_| Vec3::new(f64::NAN, 0.0, 0.0), reset_below: None };
        let err = run_hybrid(&sys, state(Rotation::identity()), &SimConfig { t_end: 0.01, ..Default::default() }).unwrap_err();
        assert!(matches!(err, RuntimeError::StepRejected { .. }));
    }

    #[test]
    fn drift_stays_below_repair_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let w = random_vec(&mut rng, 5.0);
        let sys = Toy { omega: move |t: f64| w * (1.0 + t.sin()), reset_below: None };
        let log = run_hybrid(&sys, state(random_rotation(&mut rng)), &SimConfig { dt: 1e-3, t_end: 5.0, log_every: 100, ..Default::default() }).unwrap();
        let r = log.final_state.rotations[0];
        assert!((r.matrix().transpose() * r.matrix() - Mat3::identity()).norm() < 1e-8);
    }
}
