//! Small-matrix toolbox for the rotation group SO(3).
//!
//! Rotations are stored as 3x3 matrices. Everything here is a pure function
//! on stack-allocated `nalgebra` types, so values can be shared freely across
//! threads.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance used when constructing or validating group elements.
pub const VALIDATION_TOL: f64 = 1e-9;
/// Orthonormality drift above which the integrator re-projects onto SO(3).
pub const DRIFT_REPAIR_TOL: f64 = 1e-8;
const SMALL_ANGLE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum So3Error {
    #[error("matrix is not skew-symmetric (asymmetry {0:.3e})")]
    NotSkew(f64),
    #[error("axis is not a unit vector (norm {0})")]
    NotUnit(f64),
    #[error("cannot build a projector from a zero vector")]
    ZeroVector,
    #[error("matrix is degenerate (determinant {0:.3e})")]
    Degenerate(f64),
    #[error("matrix is not a rotation (orthonormality error {orth:.3e}, det {det})")]
    NotRotation { orth: f64, det: f64 },
}

/// Skew-symmetric matrix with `hat(v) * w == v.cross(w)`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Fails if `s` is not skew-symmetric within [`VALIDATION_TOL`].
pub fn vex(s: &Mat3) -> Result<Vec3, So3Error> {
    let asym = (s + s.transpose()).norm();
    if asym > VALIDATION_TOL {
        return Err(So3Error::NotSkew(asym));
    }
    Ok(Vec3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// Antisymmetric projection `(B - Bᵀ)/2`.
pub fn pa(b: &Mat3) -> Mat3 {
    (b - b.transpose()) * 0.5
}

/// `vex(pa(C))`, written out entry-wise so it never fails.
pub fn psi(c: &Mat3) -> Vec3 {
    0.5 * Vec3::new(
        c[(2, 1)] - c[(1, 2)],
        c[(0, 2)] - c[(2, 0)],
        c[(1, 0)] - c[(0, 1)],
    )
}

/// Orthogonal projector `I - x xᵀ / |x|²` onto the plane normal to `x`.
pub fn orthogonal_projector(x: &Vec3) -> Result<Mat3, So3Error> {
    let n2 = x.norm_squared();
    if n2 <= 1e-24 {
        return Err(So3Error::ZeroVector);
    }
    Ok(Mat3::identity() - x * x.transpose() / n2)
}

/// Inverse of the left-trivialised differential of `exp` evaluated at `-theta`.
///
/// If `R = R0 exp(hat(theta))` and `R' = R hat(w)`, then
/// `theta' = dexp_inv_body(theta, w)`.
pub fn dexp_inv_body(theta: &Vec3, w: &Vec3) -> Vec3 {
    let a2 = theta.norm_squared();
    let a = a2.sqrt();
    // (1 - (a/2) cot(a/2)) / a², series below a ~ 1e-4
    let c = if a < 1e-4 {
        1.0 / 12.0 + a2 / 720.0
    } else {
        let half = 0.5 * a;
        (1.0 - half * half.cos() / half.sin()) / a2
    };
    let tw = theta.cross(w);
    w + 0.5 * tw + c * theta.cross(&tw)
}

/// Element of SO(3) backed by a 3x3 matrix.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Mat3", into = "Mat3")]
pub struct Rotation(Mat3);

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rotation{:?}", self.0.as_slice())
    }
}

impl From<Rotation> for Mat3 {
    fn from(r: Rotation) -> Mat3 {
        r.0
    }
}

impl TryFrom<Mat3> for Rotation {
    type Error = So3Error;
    fn try_from(m: Mat3) -> Result<Self, So3Error> {
        Rotation::from_matrix(m)
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates `m` against the group invariants at [`VALIDATION_TOL`].
    pub fn from_matrix(m: Mat3) -> Result<Self, So3Error> {
        let orth = orthonormality_error(&m);
        let det = m.determinant();
        if !m.iter().all(|v| v.is_finite()) || orth > VALIDATION_TOL || (det - 1.0).abs() > VALIDATION_TOL {
            return Err(So3Error::NotRotation { orth, det });
        }
        Ok(Rotation(m))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn inverse(&self) -> Rotation {
        self.transpose()
    }

    /// Frobenius norm of `RᵀR - I`.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<&Rotation> for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

fn orthonormality_error(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

fn rodrigues(sin_t: f64, one_minus_cos: f64, k: &Mat3) -> Mat3 {
    Mat3::identity() + k * sin_t + k * k * one_minus_cos
}

/// Rodrigues rotation by `theta` radians about the unit axis `axis`.
pub fn angle_axis(theta: f64, axis: &Vec3) -> Result<Rotation, So3Error> {
    let n = axis.norm();
    if (n - 1.0).abs() > VALIDATION_TOL {
        return Err(So3Error::NotUnit(n));
    }
    Ok(Rotation(rodrigues(theta.sin(), 1.0 - theta.cos(), &hat(axis))))
}

/// Exponential map from rotation vectors to SO(3).
pub fn exp_so3(w: &Vec3) -> Rotation {
    let theta = w.norm();
    let k = hat(w);
    if theta < SMALL_ANGLE {
        return Rotation(rodrigues(1.0, 0.5, &k));
    }
    Rotation(rodrigues(theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta), &k))
}

/// Normalised distance to the identity, `sqrt(tr(I - R) / 4)`, in `[0, 1]`.
pub fn dist_identity(r: &Rotation) -> f64 {
    (0.25 * (3.0 - r.0.trace())).clamp(0.0, 1.0).sqrt()
}

/// Nearest rotation in the Frobenius norm (orthogonal polar factor of `m`).
pub fn reorthonormalize(m: &Mat3) -> Result<Rotation, So3Error> {
    let det = m.determinant();
    if !(det > VALIDATION_TOL) {
        return Err(So3Error::Degenerate(det));
    }
    if orthonormality_error(m) < 1e-14 && (det - 1.0).abs() < 1e-14 {
        return Ok(Rotation(*m));
    }
    // m (mᵀm)^{-1/2}
    let eig = SymmetricEigen::new(m.transpose() * m);
    let inv_sqrt = Vec3::from_iterator(eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
    let q = eig.eigenvectors;
    let inv_root = q * Mat3::from_diagonal(&inv_sqrt) * q.transpose();
    Ok(Rotation(m * inv_root))
}

/// Random sampling helpers used by the audits and property suites.
pub mod sample {
    use super::*;
    use rand::Rng;

    pub fn random_vec<R: Rng>(rng: &mut R, scale: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    pub fn random_mat<R: Rng>(rng: &mut R) -> Mat3 {
        Mat3::from_fn(|_, _| rng.gen_range(-2.0..2.0))
    }

    pub fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
        loop {
            let v = random_vec(rng, 1.0);
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    }

    /// Uniform axis, angle uniform in `[0, π)`.
    pub fn random_rotation<R: Rng>(rng: &mut R) -> Rotation {
        let axis = random_unit(rng);
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        Rotation(rodrigues(theta.sin(), 1.0 - theta.cos(), &hat(&axis)))
    }
}
