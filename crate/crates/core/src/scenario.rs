//! Declarative scenarios: graph, ground-truth motion, initial estimates,
//! observer choice and parameters, integration settings.
//!
//! Scenarios are JSON documents (see `docs/scenario-schema.md`). Loading
//! validates everything up front and reports the offending field path.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude::{synthesize_params, ObserverParams};
use crate::formation::inertial_bearings;
use crate::runtime::{run_hybrid, HybridSystem, HybridTime, LieState, LogRow, RuntimeError, SimConfig, Tangent};
use crate::so3::{angle_axis, exp_so3, Mat3, Rotation, Vec3};
use crate::topology::{validate_tree, TreeTopology};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario field `{path}`: {message}")]
    Validation { path: String, message: String },
}

fn invalid<T>(path: impl Into<String>, message: impl fmt::Display) -> Result<T, ScenarioError> {
    Err(ScenarioError::Validation { path: path.into(), message: message.to_string() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObserverKind {
    Continuous,
    Hybrid,
}

impl fmt::Display for ObserverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObserverKind::Continuous => "continuous",
            ObserverKind::Hybrid => "hybrid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    Cos,
    Sin,
}

/// One component of an angular-velocity profile: a constant, or
/// `amplitude · wave(frequency · t) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComponentProfile {
    Constant(f64),
    Harmonic {
        wave: Wave,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl ComponentProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            ComponentProfile::Constant(c) => c,
            ComponentProfile::Harmonic { wave: Wave::Cos, amplitude, frequency, offset } => amplitude * (frequency * t).cos() + offset,
            ComponentProfile::Harmonic { wave: Wave::Sin, amplitude, frequency, offset } => amplitude * (frequency * t).sin() + offset,
        }
    }

    fn values(&self) -> [f64; 3] {
        match *self {
            ComponentProfile::Constant(c) => [c, 0.0, 0.0],
            ComponentProfile::Harmonic { amplitude, frequency, offset, .. } => [amplitude, frequency, offset],
        }
    }
}

/// Inertial position of one agent over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionProfile {
    Static([f64; 3]),
    /// `p(t) = p0 + velocity · t`.
    Linear { p0: [f64; 3], velocity: [f64; 3] },
    /// `p(t) = exp(rate · t · axis) p0`, a rigid rotation about `axis` through the origin.
    Rotating { p0: [f64; 3], axis: [f64; 3], rate: f64 },
}

impl PositionProfile {
    pub fn position(&self, t: f64) -> Vec3 {
        match *self {
            PositionProfile::Static(p) => Vec3::from(p),
            PositionProfile::Linear { p0, velocity } => Vec3::from(p0) + Vec3::from(velocity) * t,
            PositionProfile::Rotating { p0, axis, rate } => exp_so3(&(Vec3::from(axis) * (rate * t))) * Vec3::from(p0),
        }
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        match *self {
            PositionProfile::Static(_) => Vec3::zeros(),
            PositionProfile::Linear { velocity, .. } => Vec3::from(velocity),
            PositionProfile::Rotating { axis, rate, .. } => (Vec3::from(axis) * rate).cross(&self.position(t)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleAxisSpec {
    pub angle: f64,
    pub axis: [f64; 3],
}

impl AngleAxisSpec {
    fn rotation(&self, path: String) -> Result<Rotation, ScenarioError> {
        if !self.angle.is_finite() {
            return invalid(format!("{path}.angle"), "must be finite");
        }
        angle_axis(self.angle, &Vec3::from(self.axis)).or_else(|e| invalid(format!("{path}.axis"), e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub agents: usize,
    /// 1-based `[head, tail]` pairs.
    pub edges: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    /// Defaults to the identity for every agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_attitudes: Option<Vec<AngleAxisSpec>>,
    /// Body-frame angular velocity per agent.
    pub angular_velocity: Vec<[ComponentProfile; 3]>,
    pub positions: Vec<PositionProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSpec {
    pub attitudes: Vec<AngleAxisSpec>,
    pub positions: Vec<[f64; 3]>,
    /// Defaults to zero on every edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ParamsSpec {
    Explicit { xi_set: Vec<f64>, a: [[f64; 3]; 3], u: [f64; 3], gamma: f64, delta: f64 },
    Synthesize { xi_set: Vec<f64>, a: [[f64; 3]; 3], gamma_fraction: f64, delta_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub k_r: f64,
    pub k_xi: f64,
    pub k_p: f64,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_t_end() -> f64 {
    30.0
}
fn default_repair() -> usize {
    100
}
fn default_stride() -> usize {
    10
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_jumps: Option<usize>,
    #[serde(default = "default_repair")]
    pub repair_every: usize,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec { dt: default_dt(), t_end: default_t_end(), max_jumps: None, repair_every: default_repair() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Keep every `stride`-th integration step in the CSV time series.
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_true")]
    pub plots: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: None, stride: default_stride(), plots: true }
    }
}

/// The scenario document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub graph: GraphSpec,
    pub truth: TruthSpec,
    pub estimates: EstimateSpec,
    pub observer: ObserverKind,
    pub params: ParamsSpec,
    pub gains: Gains,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// A validated scenario, ready to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub topology: TreeTopology,
    pub truth_attitudes: Vec<Rotation>,
    pub angular_velocity: Vec<[ComponentProfile; 3]>,
    pub positions: Vec<PositionProfile>,
    pub estimated_attitudes: Vec<Rotation>,
    pub estimated_positions: Vec<Vec3>,
    pub xi0: Vec<f64>,
    pub observer: ObserverKind,
    pub params: ObserverParams,
    pub k_p: f64,
    pub sim: SimConfig,
    pub output: OutputSpec,
    /// The document this scenario was built from.
    pub config: ScenarioConfig,
}

fn check_count(path: &str, expected: usize, got: usize, what: &str) -> Result<(), ScenarioError> {
    if expected != got {
        return invalid(path, format!("expected {expected} entries (one per {what}), got {got}"));
    }
    Ok(())
}

fn check_finite(path: String, values: &[f64]) -> Result<(), ScenarioError> {
    if values.iter().any(|v| !v.is_finite()) {
        return invalid(path, "values must be finite");
    }
    Ok(())
}

fn matrix(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| rows[i][j])
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        let g = &config.graph;
        if g.agents == 0 {
            return invalid("graph.agents", "at least one agent is required");
        }
        let Some(edges) = &g.edges else {
            return invalid("graph.edges", "the edge list is required");
        };
        let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
        let topology = validate_tree(g.agents, &pairs).or_else(|e| invalid("graph.edges", e))?;
        let n = topology.n_agents();
        let m = topology.n_edges();

        let truth = &config.truth;
        let truth_attitudes = match &truth.initial_attitudes {
            None => vec![Rotation::identity(); n],
            Some(list) => {
                check_count("truth.initial_attitudes", n, list.len(), "agent")?;
                list.iter().enumerate().map(|(i, s)| s.rotation(format!("truth.initial_attitudes[{i}]"))).collect::<Result<_, _>>()?
            }
        };
        check_count("truth.angular_velocity", n, truth.angular_velocity.len(), "agent")?;
        for (i, w) in truth.angular_velocity.iter().enumerate() {
            for (c, comp) in w.iter().enumerate() {
                check_finite(format!("truth.angular_velocity[{i}][{c}]"), &comp.values())?;
            }
        }
        check_count("truth.positions", n, truth.positions.len(), "agent")?;
        for (i, p) in truth.positions.iter().enumerate() {
            let path = format!("truth.positions[{i}]");
            match p {
                PositionProfile::Static(p0) => check_finite(path, p0)?,
                PositionProfile::Linear { p0, velocity } => {
                    check_finite(path.clone(), p0)?;
                    check_finite(path, velocity)?;
                }
                PositionProfile::Rotating { p0, axis, rate } => {
                    check_finite(path.clone(), p0)?;
                    check_finite(path.clone(), &[*rate])?;
                    let norm = Vec3::from(*axis).norm();
                    if (norm - 1.0).abs() > 1e-9 {
                        return invalid(format!("{path}.axis"), format!("axis must be a unit vector (norm {norm})"));
                    }
                }
            }
        }
        let p0: Vec<Vec3> = truth.positions.iter().map(|p| p.position(0.0)).collect();
        inertial_bearings(&topology, &p0).or_else(|e| invalid("truth.positions", e))?;

        let est = &config.estimates;
        check_count("estimates.attitudes", n, est.attitudes.len(), "agent")?;
        let estimated_attitudes = est
            .attitudes
            .iter()
            .enumerate()
            .map(|(i, s)| s.rotation(format!("estimates.attitudes[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        check_count("estimates.positions", n, est.positions.len(), "agent")?;
        for (i, p) in est.positions.iter().enumerate() {
            check_finite(format!("estimates.positions[{i}]"), p)?;
        }
        let xi0 = match &est.xi {
            None => vec![0.0; m],
            Some(xi) => {
                check_count("estimates.xi", m, xi.len(), "edge")?;
                check_finite("estimates.xi".into(), xi)?;
                xi.clone()
            }
        };

        let gains = config.gains;
        for (name, v) in [("k_r", gains.k_r), ("k_xi", gains.k_xi), ("k_p", gains.k_p)] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("gains.{name}"), "must be positive");
            }
        }
        let params = match &config.params {
            ParamsSpec::Explicit { xi_set, a, u, gamma, delta } => {
                ObserverParams::new(xi_set.clone(), matrix(a), Vec3::from(*u), *gamma, *delta, gains.k_r, gains.k_xi)
            }
            ParamsSpec::Synthesize { xi_set, a, gamma_fraction, delta_fraction } => {
                synthesize_params(&matrix(a), xi_set, *gamma_fraction, *delta_fraction).and_then(|p| p.with_gains(gains.k_r, gains.k_xi))
            }
        }
        .or_else(|e| invalid("params", e))?;
        if let Some(k) = xi0.iter().position(|x| x.abs() > params.xi_max()) {
            return invalid(format!("estimates.xi[{k}]"), format!("must lie in [-{m}, {m}]", m = params.xi_max()));
        }

        let s = &config.sim;
        let sim = SimConfig { dt: s.dt, t_end: s.t_end, max_jumps: s.max_jumps, repair_every: s.repair_every, log_every: 1 };
        sim.validate().or_else(|e| invalid("sim", e))?;
        if config.output.stride == 0 {
            return invalid("output.stride", "must be positive");
        }

        Ok(Scenario {
            name: config.name.clone(),
            topology,
            truth_attitudes,
            angular_velocity: truth.angular_velocity.clone(),
            positions: truth.positions.clone(),
            estimated_attitudes,
            estimated_positions: est.positions.iter().map(|p| Vec3::from(*p)).collect(),
            xi0,
            observer: config.observer,
            params,
            k_p: gains.k_p,
            sim,
            output: config.output.clone(),
            config,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Scenario::from_config(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Scenario::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.config).expect("scenario config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn n_agents(&self) -> usize {
        self.topology.n_agents()
    }

    pub fn omega_body(&self, t: f64) -> Vec<Vec3> {
        self.angular_velocity.iter().map(|w| Vec3::new(w[0].eval(t), w[1].eval(t), w[2].eval(t))).collect()
    }

    pub fn truth_positions(&self, t: f64) -> Vec<Vec3> {
        self.positions.iter().map(|p| p.position(t)).collect()
    }

    pub fn truth_velocities(&self, t: f64) -> Vec<Vec3> {
        self.positions.iter().map(|p| p.velocity(t)).collect()
    }
}

/// Ground-truth rates at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthVelocity {
    pub omega_body: Vec<Vec3>,
    pub v_inertial: Vec<Vec3>,
    /// `v_i^i = R_iᵀ v_i`.
    pub v_body: Vec<Vec3>,
}

pub fn ground_truth_velocity(sc: &Scenario, t: f64, attitudes: &[Rotation]) -> TruthVelocity {
    let v_inertial = sc.truth_velocities(t);
    let v_body = attitudes.iter().zip(&v_inertial).map(|(r, v)| r.matrix().transpose() * v).collect();
    TruthVelocity { omega_body: sc.omega_body(t), v_inertial, v_body }
}

/// Central finite-difference velocity of the position profiles.
pub fn fd_velocity(sc: &Scenario, t: f64, h: f64) -> Vec<Vec3> {
    let (a, b) = (sc.truth_positions(t + h), sc.truth_positions(t - h));
    a.iter().zip(&b).map(|(p, q)| (p - q) / (2.0 * h)).collect()
}

/// Sampled ground truth on the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub times: Vec<f64>,
    pub attitudes: Vec<Vec<Rotation>>,
    pub positions: Vec<Vec<Vec3>>,
    pub omega_body: Vec<Vec<Vec3>>,
    pub velocities: Vec<Vec<Vec3>>,
}

struct Kinematics<'a>(&'a Scenario);

impl HybridSystem for Kinematics<'_> {
    fn flow(&self, t: f64, _x: &LieState) -> Result<Tangent, RuntimeError> {
        Ok(Tangent { body_rates: self.0.omega_body(t), vector: vec![] })
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

impl GroundTruth {
    /// Integrates `Ṙ_i = R_i hat(ω_i(t))` with the simulation integrator and
    /// samples every `stride` steps.
    pub fn generate(sc: &Scenario, dt: f64, t_end: f64, stride: usize) -> Result<Self, RuntimeError> {
        let cfg = SimConfig { dt, t_end, log_every: 1, repair_every: sc.sim.repair_every, max_jumps: None };
        cfg.validate()?;
        let stride = stride.max(1);
        let mut gt = GroundTruth { times: vec![], attitudes: vec![], positions: vec![], omega_body: vec![], velocities: vec![] };
        let sys = Kinematics(sc);
        let mut x = LieState { rotations: sc.truth_attitudes.clone(), vector: vec![] };
        let steps = cfg.steps();
        for n in 0..=steps {
            let t = n as f64 * dt;
            if n % stride == 0 || n == steps {
                gt.times.push(t);
                gt.attitudes.push(x.rotations.clone());
                gt.positions.push(sc.truth_positions(t));
                gt.omega_body.push(sc.omega_body(t));
                gt.velocities.push(sc.truth_velocities(t));
            }
            if n < steps {
                x = crate::runtime::integrate_step(&sys, t, &x, dt)?;
            }
        }
        Ok(gt)
    }
}

/// Runs only the truth kinematics; convenient for checking attitude invariants.
pub fn truth_attitudes_at_end(sc: &Scenario) -> Result<Vec<Rotation>, RuntimeError> {
    let x = LieState { rotations: sc.truth_attitudes.clone(), vector: vec![] };
    Ok(run_hybrid(&Kinematics(sc), x, &sc.sim)?.final_state.rotations)
}

fn aa(angle: f64, axis: [f64; 3]) -> AngleAxisSpec {
    AngleAxisSpec { angle, axis }
}

fn harmonic(wave: Wave, amplitude: f64, frequency: f64) -> ComponentProfile {
    ComponentProfile::Harmonic { wave, amplitude, frequency, offset: 0.0 }
}

/// The five-agent rotating square pyramid on the path graph 1–2–3–4–5.
pub fn paper_preset_config() -> ScenarioConfig {
    use ComponentProfile::Constant as C;
    use Wave::{Cos, Sin};
    let z = [0.0, 0.0, 1.0];
    let corners = [[-2.0, -2.0, -2.0], [2.0, -2.0, -2.0], [-2.0, 2.0, -2.0], [2.0, 2.0, -2.0], [0.0, 0.0, 0.0]];
    let half = PI / 2.0;
    ScenarioConfig {
        name: "rotating-pyramid".into(),
        graph: GraphSpec { agents: 5, edges: Some(vec![[1, 2], [2, 3], [3, 4], [4, 5]]) },
        truth: TruthSpec {
            initial_attitudes: None,
            angular_velocity: vec![
                [C(1.0), C(-2.0), C(1.0)],
                [harmonic(Cos, -1.0, 3.0), C(1.0), harmonic(Sin, 1.0, 2.0)],
                [harmonic(Cos, -1.0, 1.0), C(1.0), harmonic(Sin, 1.0, 2.0)],
                [harmonic(Cos, -1.0, 2.0), C(1.0), harmonic(Sin, 1.0, 5.0)],
                [C(1.5), C(4.0), C(5.0)],
            ],
            // p_i(t) = R(t)ᵀ p_i(0) with R(t) the z-rotation by (π/6) t
            positions: corners.iter().map(|&p0| PositionProfile::Rotating { p0, axis: z, rate: -PI / 6.0 }).collect(),
        },
        estimates: EstimateSpec {
            attitudes: vec![aa(-half, z), aa(half, z), aa(-half, z), aa(half, z), aa(-half, z)],
            positions: vec![[1.0, 1.0, 0.0], [-1.0, 2.0, 1.0], [-2.0, 0.0, -1.0], [-1.0, 2.0, 2.0], [-1.0, 1.0, 1.0]],
            xi: Some(vec![0.0; 4]),
        },
        observer: ObserverKind::Hybrid,
        params: ParamsSpec::Explicit {
            xi_set: vec![0.08 * PI],
            a: [[5.0, 0.0, 0.0], [0.0, 8.57, 0.0], [0.0, 0.0, 12.0]],
            u: [0.0, 0.6455, 0.7638],
            gamma: 1.9251,
            delta: 0.0030,
        },
        gains: Gains { k_r: 1.1, k_xi: 5.0, k_p: 1.0 },
        sim: SimSpec::default(),
        output: OutputSpec::default(),
    }
}

pub fn paper_preset() -> Scenario {
    Scenario::from_config(paper_preset_config()).expect("preset is valid")
}
