//! Bearing-based distributed position estimation.
//!
//! Each agent measures, in its own body frame, the unit bearing towards each
//! neighbour. Combined with the attitude estimates, agent `i` integrates
//!
//! ```text
//! p̂̇_i = R̂_i v_i − k_p Σ_j R̂_i (P_{b_ij^i} R̂_iᵀ p̂_i − R_ij P_{b_ji^j} R̂_jᵀ p̂_j) − k_R hat(σ_i) p̂_i
//! ```
//!
//! so that the error `p̃_i = R̃_i p̂_i − p_i` obeys `p̃̇ = −k_p L_B(t) p̃`
//! whatever the attitude observer is doing.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::attitude::{AttitudeEstimates, RelativeMeasurements};
use crate::so3::{hat, orthogonal_projector, Mat3, Rotation, Vec3};
use crate::topology::{bearing_laplacian, kron_i3, laplacian, TopologyError, TreeTopology};

/// Minimum inter-agent distance on an edge below which bearings are undefined.
pub const COLLISION_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormationError {
    #[error("agents on edge {edge} are {distance:e} m apart (collision)")]
    Collision { edge: usize, distance: f64 },
    #[error("bearing samples span {span} s, shorter than the window {window} s")]
    InsufficientSamples { span: f64, window: f64 },
    #[error("invalid BPE configuration: {0}")]
    BadConfig(&'static str),
    #[error("expected {expected} {what}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionEstimates(pub Vec<Vec3>);

/// Body-frame bearings per edge `k = (i, j)`: `head[k] = b_ij^i` measured by
/// `i`, `tail[k] = b_ji^j` measured by `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingMeasurements {
    pub head: Vec<Vec3>,
    pub tail: Vec<Vec3>,
}

/// Inertial unit bearings `b_ij = (p_j − p_i)/‖p_j − p_i‖` with `i` the head.
pub fn inertial_bearings(t: &TreeTopology, positions: &[Vec3]) -> Result<Vec<Vec3>, FormationError> {
    check_len("positions", t.n_agents(), positions.len())?;
    t.edges()
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let d = positions[e.tail] - positions[e.head];
            let distance = d.norm();
            if !(distance >= COLLISION_EPS) {
                return Err(FormationError::Collision { edge: k + 1, distance });
            }
            Ok(d / distance)
        })
        .collect()
}

pub fn bearings_from_truth(t: &TreeTopology, positions: &[Vec3], attitudes: &[Rotation]) -> Result<BearingMeasurements, FormationError> {
    check_len("attitudes", t.n_agents(), attitudes.len())?;
    let b = inertial_bearings(t, positions)?;
    let head = t.edges().iter().zip(&b).map(|(e, b)| attitudes[e.head].transpose() * *b).collect();
    let tail = t.edges().iter().zip(&b).map(|(e, b)| attitudes[e.tail].transpose() * -*b).collect();
    Ok(BearingMeasurements { head, tail })
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), FormationError> {
    if expected == got {
        Ok(())
    } else {
        Err(FormationError::DimensionMismatch { what, expected, got })
    }
}

fn projector(b: &Vec3) -> Mat3 {
    orthogonal_projector(b).expect("bearings are unit vectors")
}

/// Right-hand side of the position estimator for every agent. Agent `i` only
/// reads its own bearings, `R_ij`, and `R̂_j`, `p̂_j`, `b_ji^j` of neighbours.
#[allow(clippy::too_many_arguments)]
pub fn position_flow(
    t: &TreeTopology,
    p_hat: &PositionEstimates,
    est: &AttitudeEstimates,
    meas: &RelativeMeasurements,
    bearings: &BearingMeasurements,
    v_body: &[Vec3],
    sigma: &[Vec3],
    k_p: f64,
    k_r: f64,
) -> Vec<Vec3> {
    (0..t.n_agents())
        .map(|i| {
            let ri = est.0[i].matrix();
            let mut correction = Vec3::zeros();
            for &k in t.head_edges(i).iter().chain(t.tail_edges(i)) {
                let e = t.edge(k);
                let (j, b_own, b_other) = if e.head == i {
                    (e.tail, bearings.head[k], bearings.tail[k])
                } else {
                    (e.head, bearings.tail[k], bearings.head[k])
                };
                let rij = meas.towards(t, k, i);
                let rj = est.0[j].matrix();
                correction += ri
                    * (projector(&b_own) * ri.transpose() * p_hat.0[i]
                        - rij.matrix() * projector(&b_other) * rj.transpose() * p_hat.0[j]);
            }
            ri * v_body[i] - k_p * correction - k_r * hat(&sigma[i]) * p_hat.0[i]
        })
        .collect()
}

/// `p̃` and its centroid-reduced counterpart `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionErrorState {
    pub ptilde: Vec<Vec3>,
    pub e: Vec<Vec3>,
}

impl PositionErrorState {
    pub fn e_norm(&self) -> f64 {
        self.e.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn e_sum(&self) -> Vec3 {
        self.e.iter().sum()
    }
}

/// `p̃_i = R_i R̂_iᵀ p̂_i − p_i`.
pub fn ptilde(p_hat: &PositionEstimates, truth_p: &[Vec3], truth_r: &[Rotation], est: &AttitudeEstimates) -> Vec<Vec3> {
    p_hat
        .0
        .iter()
        .zip(truth_p)
        .zip(truth_r.iter().zip(&est.0))
        .map(|((ph, p), (r, rh))| r.matrix() * (rh.matrix().transpose() * ph) - p)
        .collect()
}

pub fn centroid(v: &[Vec3]) -> Vec3 {
    v.iter().sum::<Vec3>() / v.len() as f64
}

/// Position error at the initial time: `e` is `p̃` minus its own centroid.
pub fn position_error(t: &TreeTopology, p_hat: &PositionEstimates, truth_p: &[Vec3], truth_r: &[Rotation], est: &AttitudeEstimates) -> PositionErrorState {
    debug_assert_eq!(p_hat.0.len(), t.n_agents());
    let pt = ptilde(p_hat, truth_p, truth_r, est);
    let c = centroid(&pt);
    position_error_from(pt, &c)
}

/// Position error at a later time, reduced by the centroid of `p̃(0)`.
pub fn position_error_from(ptilde: Vec<Vec3>, initial_centroid: &Vec3) -> PositionErrorState {
    let e = ptilde.iter().map(|p| p - initial_centroid).collect();
    PositionErrorState { ptilde, e }
}

/// `−k_p L_B p̃` evaluated edge by edge from inertial bearings.
pub fn ptilde_rate(t: &TreeTopology, bearings: &[Vec3], ptilde: &[Vec3], k_p: f64) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); t.n_agents()];
    for (e, b) in t.edges().iter().zip(bearings) {
        let f = projector(b) * (ptilde[e.head] - ptilde[e.tail]) * k_p;
        out[e.head] -= f;
        out[e.tail] += f;
    }
    out
}

/// Integrates `p̃̇ = −k_p L_B(t) p̃` with classical RK4, returning the state at
/// every step (`steps + 1` entries). `bearings_at(t)` supplies inertial bearings.
pub fn integrate_ptilde<F>(t: &TreeTopology, p0: &[Vec3], k_p: f64, dt: f64, steps: usize, mut bearings_at: F) -> Result<Vec<Vec<Vec3>>, FormationError>
where
    F: FnMut(f64) -> Result<Vec<Vec3>, FormationError>,
{
    let axpy = |x: &[Vec3], k: &[Vec3], h: f64| -> Vec<Vec3> { x.iter().zip(k).map(|(a, b)| a + b * h).collect() };
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = p0.to_vec();
    out.push(x.clone());
    for n in 0..steps {
        let s = n as f64 * dt;
        let b0 = bearings_at(s)?;
        let bh = bearings_at(s + dt / 2.0)?;
        let b1 = bearings_at(s + dt)?;
        let k1 = ptilde_rate(t, &b0, &x, k_p);
        let k2 = ptilde_rate(t, &bh, &axpy(&x, &k1, dt / 2.0), k_p);
        let k3 = ptilde_rate(t, &bh, &axpy(&x, &k2, dt / 2.0), k_p);
        let k4 = ptilde_rate(t, &b1, &axpy(&x, &k3, dt), k_p);
        for i in 0..x.len() {
            x[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (dt / 6.0);
        }
        out.push(x.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpeConfig {
    pub window: f64,
    pub mu: f64,
    /// Number of evenly spaced window starts.
    pub starts: usize,
}

impl BpeConfig {
    pub fn new(window: f64, mu: f64) -> Self {
        BpeConfig { window, mu, starts: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpeReport {
    pub window: f64,
    pub mu: f64,
    /// Smallest eigenvalue of `∫L_B − μ(ℒ⊗I₃)` across windows.
    pub min_eigenvalue: f64,
    pub worst_start: f64,
    pub windows: usize,
}

impl BpeReport {
    pub fn passed(&self) -> bool {
        self.min_eigenvalue >= -1e-9
    }
}

/// Windowed integrals `∫_s^{s+T} L_B` by the trapezoid rule on the sample grid.
fn window_integrals(t: &TreeTopology, times: &[f64], bearings: &[Vec<Vec3>], cfg: &BpeConfig) -> Result<Vec<(f64, DMatrix<f64>)>, FormationError> {
    if !(cfg.window > 0.0) || !cfg.window.is_finite() {
        return Err(FormationError::BadConfig("window must be positive"));
    }
    if !(cfg.mu >= 0.0) || !cfg.mu.is_finite() {
        return Err(FormationError::BadConfig("mu must be nonnegative"));
    }
    if cfg.starts == 0 {
        return Err(FormationError::BadConfig("at least one window start is needed"));
    }
    check_len("bearing samples", times.len(), bearings.len())?;
    let span = match (times.first(), times.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    let tol = 1e-9 * cfg.window.max(1.0);
    if times.len() < 2 || span + tol < cfg.window {
        return Err(FormationError::InsufficientSamples { span, window: cfg.window });
    }
    let t0 = times[0];
    let latest = span - cfg.window;
    let index_at = |s: f64| times.partition_point(|&x| x < s - tol).min(times.len() - 1);
    let mut bounds = Vec::with_capacity(cfg.starts);
    for w in 0..cfg.starts {
        let s = if cfg.starts == 1 { t0 } else { t0 + latest * w as f64 / (cfg.starts - 1) as f64 };
        bounds.push((index_at(s), index_at(s + cfg.window)));
    }
    let mut needed: Vec<usize> = bounds.iter().flat_map(|&(a, b)| [a, b]).collect();
    needed.sort_unstable();
    needed.dedup();

    // one pass accumulating the trapezoid prefix integral, kept only at needed indices
    let dim = 3 * t.n_agents();
    let mut acc = DMatrix::zeros(dim, dim);
    let mut prev = bearing_laplacian(t, &bearings[0])?;
    let mut saved = Vec::with_capacity(needed.len());
    let mut next = 0;
    for idx in 0..times.len() {
        if idx > 0 {
            let cur = bearing_laplacian(t, &bearings[idx])?;
            acc += (&prev + &cur) * (0.5 * (times[idx] - times[idx - 1]));
            prev = cur;
        }
        while next < needed.len() && needed[next] == idx {
            saved.push(acc.clone());
            next += 1;
        }
        if next == needed.len() {
            break;
        }
    }
    let lookup = |i: usize| &saved[needed.binary_search(&i).expect("index recorded")];
    Ok(bounds.iter().map(|&(a, b)| (times[a], lookup(b) - lookup(a))).collect())
}

fn min_eig(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Checks `∫_s^{s+T} L_B(τ) dτ ⪰ μ (ℒ ⊗ I₃)` over evenly spaced window starts.
pub fn check_bpe(t: &TreeTopology, times: &[f64], bearings: &[Vec<Vec3>], cfg: &BpeConfig) -> Result<BpeReport, FormationError> {
    let windows = window_integrals(t, times, bearings, cfg)?;
    let l3 = kron_i3(&laplacian(t));
    Ok(report_for(&windows, &l3, cfg))
}

fn report_for(windows: &[(f64, DMatrix<f64>)], l3: &DMatrix<f64>, cfg: &BpeConfig) -> BpeReport {
    let mut min_eigenvalue = f64::INFINITY;
    let mut worst_start = windows[0].0;
    for (s, w) in windows {
        let m = min_eig(w - l3 * cfg.mu);
        if m < min_eigenvalue {
            min_eigenvalue = m;
            worst_start = *s;
        }
    }
    BpeReport { window: cfg.window, mu: cfg.mu, min_eigenvalue, worst_start, windows: windows.len() }
}

/// Largest `μ` (to a relative precision of 1e-6) for which [`check_bpe`] passes,
/// found by bisection on `[0, T]`. Returns the report at that `μ`, or `None` if
/// only `μ = 0` passes.
pub fn certify_bpe(t: &TreeTopology, times: &[f64], bearings: &[Vec<Vec3>], window: f64) -> Result<Option<BpeReport>, FormationError> {
    let cfg = BpeConfig::new(window, 0.0);
    let windows = window_integrals(t, times, bearings, &cfg)?;
    let l3 = kron_i3(&laplacian(t));
    let at = |mu: f64| report_for(&windows, &l3, &BpeConfig { mu, ..cfg });
    // ∫L_B ⪯ T (ℒ⊗I₃), so no μ above T can pass
    let (mut lo, mut hi) = (0.0, window);
    if at(hi).passed() {
        return Ok(Some(at(hi)));
    }
    while hi - lo > 1e-6 * window {
        let mid = 0.5 * (lo + hi);
        if at(mid).passed() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo > 0.0).then(|| at(lo)))
}
