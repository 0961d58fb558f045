use std::f64::consts::PI;
use std::fmt;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use super::potential::{potential_u, xi_star};
use super::AttitudeError;
use crate::so3::{angle_axis, Mat3, Rotation, Vec3};

/// Tolerance for accepting a user supplied `u` as a unit vector. Printed
/// parameter sets are typically rounded to four digits.
const U_NORM_TOL: f64 = 1e-3;
/// Relative tolerance on the boundary between synthesis cases (b) and (c).
const CASE_BOUNDARY_RTOL: f64 = 1e-3;
const EIG_EQUAL_RTOL: f64 = 1e-9;

/// Hybrid observer parameters `{Ξ, A, u, γ, δ}` plus the gains `k_R`, `k_ξ`.
///
/// Construction checks only structural validity. The inequalities that make
/// the hybrid scheme work are audited by [`check_params`], which reports
/// violations instead of refusing the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverParams {
    pub xi_set: Vec<f64>,
    pub a: Mat3,
    pub u: Vec3,
    pub gamma: f64,
    pub delta: f64,
    pub k_r: f64,
    pub k_xi: f64,
}

impl ObserverParams {
    pub fn new(xi_set: Vec<f64>, a: Mat3, u: Vec3, gamma: f64, delta: f64, k_r: f64, k_xi: f64) -> Result<Self, AttitudeError> {
        let mut p = ObserverParams { xi_set, a, u, gamma, delta, k_r, k_xi };
        p.validate()?;
        p.u = p.u.normalize();
        Ok(p)
    }

    pub fn with_gains(mut self, k_r: f64, k_xi: f64) -> Result<Self, AttitudeError> {
        self.k_r = k_r;
        self.k_xi = k_xi;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), AttitudeError> {
        validate_xi_set(&self.xi_set)?;
        spectrum(&self.a)?;
        let n = self.u.norm();
        if !n.is_finite() || (n - 1.0).abs() > U_NORM_TOL {
            return Err(AttitudeError::NotUnitU(n));
        }
        for (name, v) in [("gamma", self.gamma), ("delta", self.delta)] {
            if !v.is_finite() {
                return Err(AttitudeError::NotFinite(name));
            }
        }
        for (name, v) in [("k_r", self.k_r), ("k_xi", self.k_xi)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AttitudeError::NonPositiveGain { name, value: v });
            }
        }
        Ok(())
    }

    /// `max |ξ|` over the hysteresis set.
    pub fn xi_max(&self) -> f64 {
        self.xi_set.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn validate_xi_set(xi_set: &[f64]) -> Result<(), AttitudeError> {
    if xi_set.is_empty() {
        return Err(AttitudeError::EmptyXiSet);
    }
    for (index, &value) in xi_set.iter().enumerate() {
        if !(value.abs() > 0.0 && value.abs() <= PI) {
            return Err(AttitudeError::XiOutOfRange { index, value });
        }
    }
    Ok(())
}

/// Ascending eigenvalues of a symmetric positive-definite `A` with
/// sign-normalised eigenvectors (largest-magnitude component positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub values: [f64; 3],
    pub vectors: [Vec3; 3],
}

impl Spectrum {
    pub fn distinct(&self) -> bool {
        !approx_eq(self.values[0], self.values[1]) && !approx_eq(self.values[1], self.values[2])
    }
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= EIG_EQUAL_RTOL * a.abs().max(b.abs())
}

pub fn spectrum(a: &Mat3) -> Result<Spectrum, AttitudeError> {
    if !a.iter().all(|v| v.is_finite()) || (a - a.transpose()).norm() > 1e-9 * (1.0 + a.norm()) {
        return Err(AttitudeError::NotSymmetric);
    }
    let eig = SymmetricEigen::new(*a);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values = idx.map(|i| eig.eigenvalues[i]);
    if values[0] <= 0.0 {
        return Err(AttitudeError::NotPositiveDefinite(values[0]));
    }
    let vectors = idx.map(|i| {
        let v: Vec3 = eig.eigenvectors.column(i).into_owned();
        let lead = v.iter().copied().fold(0.0f64, |m, c| if c.abs() > m.abs() { c } else { m });
        if lead < 0.0 { -v } else { v }
    });
    Ok(Spectrum { values, vectors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynthesisCase {
    /// λ₁ = λ₂
    RepeatedSmallest,
    /// λ₂ ≥ λ₁λ₃/(λ₃ − λ₁)
    LargeMiddle,
    /// λ₁ < λ₂ < λ₁λ₃/(λ₃ − λ₁)
    SmallMiddle,
}

/// Admissible direction `u` and gap constant `Δ*` for a given `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Synthesis {
    pub case: SynthesisCase,
    pub spectrum: Spectrum,
    pub alpha: [f64; 3],
    pub delta_star: f64,
    pub u: Vec3,
}

impl Synthesis {
    /// Upper bound on γ, `4Δ*/π²`.
    pub fn gamma_bound(&self) -> f64 {
        4.0 * self.delta_star / (PI * PI)
    }

    /// Upper bound on δ for a given γ and `ξ_M`.
    pub fn delta_bound(&self, gamma: f64, xi_max: f64) -> f64 {
        (self.gamma_bound() - gamma) * xi_max * xi_max / 2.0
    }
}

/// Picks `u = Σ αᵢ vᵢ` and `Δ*` from the eigenstructure of `A`.
pub fn synthesize_direction(a: &Mat3) -> Result<Synthesis, AttitudeError> {
    let spectrum = spectrum(a)?;
    let [l1, l2, l3] = spectrum.values;
    if approx_eq(l2, l3) {
        return Err(AttitudeError::EigenvalueOrderViolation { values: spectrum.values });
    }
    let (case, alpha_sq, delta_star) = if approx_eq(l1, l2) {
        // The remaining weight sits on the first eigenvector; any split within
        // the repeated eigenspace is admissible.
        let a3 = 1.0 - l2 / l3;
        (SynthesisCase::RepeatedSmallest, [1.0 - a3, 0.0, a3], l1 * (1.0 - l2 / l3))
    } else if l2 >= l1 * l3 / (l3 - l1) * (1.0 - CASE_BOUNDARY_RTOL) {
        let s = l2 + l3;
        (SynthesisCase::LargeMiddle, [0.0, l2 / s, l3 / s], l1)
    } else {
        let pair_sum = 2.0 * (l1 * l2 + l1 * l3 + l2 * l3);
        let alpha_sq = [
            1.0 - 4.0 * l2 * l3 / pair_sum,
            1.0 - 4.0 * l1 * l3 / pair_sum,
            1.0 - 4.0 * l1 * l2 / pair_sum,
        ];
        (SynthesisCase::SmallMiddle, alpha_sq, 4.0 * l1 * l2 * l3 / pair_sum)
    };
    let alpha = alpha_sq.map(|s| s.max(0.0).sqrt());
    let u = (0..3).fold(Vec3::zeros(), |acc, i| acc + spectrum.vectors[i] * alpha[i]);
    Ok(Synthesis { case, spectrum, alpha, delta_star, u })
}

/// Builds a complete parameter set from `A` and `Ξ`, placing γ and δ at the
/// given fractions of their admissible ranges. Gains default to one.
pub fn synthesize_params(a: &Mat3, xi_set: &[f64], gamma_fraction: f64, delta_fraction: f64) -> Result<ObserverParams, AttitudeError> {
    if xi_set.is_empty() {
        return Err(AttitudeError::EmptyXiSet);
    }
    for (name, f) in [("gamma_fraction", gamma_fraction), ("delta_fraction", delta_fraction)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(AttitudeError::BadFraction { name, value: f });
        }
    }
    let syn = synthesize_direction(a)?;
    let gamma = gamma_fraction * syn.gamma_bound();
    let xi_max = xi_set.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let delta = delta_fraction * syn.delta_bound(gamma, xi_max);
    ObserverParams::new(xi_set.to_vec(), *a, syn.u, gamma, delta, 1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of [`check_params`]: every check, passed or not.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub checks: Vec<Check>,
    pub synthesis: Option<Synthesis>,
    /// Smallest `U(R̄,0) − min_Ξ U(R̄,·)` over the sampled undesired critical points.
    pub min_critical_gap: Option<f64>,
}

impl ParamReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check { name, passed, detail });
    }
}

impl fmt::Display for ParamReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {:<20} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        write!(f, "overall: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Undesired critical points `(R_α(π, v), 0)` for eigenvectors `v` of `A`.
/// When an eigenvalue repeats, its eigenspace is sampled as well.
pub fn undesired_critical_rotations(spec: &Spectrum) -> Vec<(Vec3, Rotation)> {
    let mut axes: Vec<Vec3> = spec.vectors.to_vec();
    for (i, j) in [(0usize, 1usize), (1, 2)] {
        if approx_eq(spec.values[i], spec.values[j]) {
            for s in 1..12 {
                let phi = PI * s as f64 / 12.0;
                axes.push(spec.vectors[i] * phi.cos() + spec.vectors[j] * phi.sin());
            }
        }
    }
    axes.into_iter()
        .map(|v| {
            let v = v.normalize();
            (v, angle_axis(PI, &v).expect("normalised axis"))
        })
        .collect()
}

/// Audits a parameter set against the admissibility inequalities and checks
/// the critical-point gap condition directly on the undesired critical points.
pub fn check_params(p: &ObserverParams) -> ParamReport {
    let mut report = ParamReport { checks: Vec::new(), synthesis: None, min_critical_gap: None };

    let gains_ok = p.k_r > 0.0 && p.k_xi > 0.0;
    report.push("gains", gains_ok, format!("k_R = {}, k_xi = {}", p.k_r, p.k_xi));

    match validate_xi_set(&p.xi_set) {
        Ok(()) => report.push("xi set", true, format!("{:?}, xi_M = {:.6}", p.xi_set, p.xi_max())),
        Err(e) => report.push("xi set", false, e.to_string()),
    }

    let unit = (p.u.norm() - 1.0).abs() <= U_NORM_TOL;
    report.push("u unit norm", unit, format!("|u| = {:.6}", p.u.norm()));

    let syn = match synthesize_direction(&p.a) {
        Ok(s) => s,
        Err(e) => {
            report.push("eigenvalue order", false, e.to_string());
            return report;
        }
    };
    let [l1, l2, l3] = syn.spectrum.values;
    report.push("eigenvalue order", true, format!("0 < {l1} <= {l2} < {l3} ({:?})", syn.case));

    let u = p.u.normalize();
    let misfit = (0..3)
        .map(|i| (u.dot(&syn.spectrum.vectors[i]).powi(2) - syn.alpha[i].powi(2)).abs())
        .fold(0.0, f64::max);
    // In the repeated case only the weight inside the eigenspace is constrained.
    let misfit = if syn.case == SynthesisCase::RepeatedSmallest {
        (u.dot(&syn.spectrum.vectors[2]).powi(2) - syn.alpha[2].powi(2)).abs()
    } else {
        misfit
    };
    report.push(
        "u direction",
        misfit <= U_NORM_TOL,
        format!("max |(u.v_i)^2 - alpha_i^2| = {misfit:.2e}, alpha = {:.4?}", syn.alpha),
    );

    let gamma_bound = syn.gamma_bound();
    report.push(
        "gamma bound",
        p.gamma > 0.0 && p.gamma < gamma_bound,
        format!("0 < gamma = {} < 4 Delta*/pi^2 = {:.6} (Delta* = {:.6})", p.gamma, gamma_bound, syn.delta_star),
    );

    let delta_bound = syn.delta_bound(p.gamma, p.xi_max());
    report.push(
        "delta bound",
        p.delta > 0.0 && p.delta < delta_bound,
        format!("0 < delta = {} < {:.6}", p.delta, delta_bound),
    );

    if !p.xi_set.is_empty() {
        let gaps: Vec<f64> = undesired_critical_rotations(&syn.spectrum)
            .iter()
            .map(|(_, r)| {
                let best = xi_star(r, p);
                potential_u(r, 0.0, p) - potential_u(r, best, p)
            })
            .collect();
        let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
        report.min_critical_gap = Some(min_gap);
        report.push(
            "critical gap",
            min_gap > p.delta,
            format!("min over undesired critical points of U(R,0) - min U = {min_gap:.6} > delta = {}", p.delta),
        );
    }
    report.synthesis = Some(syn);
    report
}
