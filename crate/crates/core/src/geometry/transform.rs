use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Proper rigid transform (rotation + translation), no scale, no reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Tolerance on `R^T R = I` and `det R = 1` when validating a rotation.
pub const ROTATION_TOL: f64 = 1e-9;

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, rejecting matrices that are not proper rotations.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if !orth.is_finite() || orth > ROTATION_TOL {
            return Err(Error::DegenerateGeometry(format!(
                "rotation is not orthonormal (|R^T R - I| = {orth:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::DegenerateGeometry(format!(
                "rotation has determinant {det:.12}, expected +1"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateGeometry(
                "translation has non-finite components".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Internal constructor for matrices already known to be valid rotations
    /// (products of validated rotations, analytic axis rotations).
    pub(crate) fn new_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation_x(angle_rad: f64) -> Self {
        Self::new_unchecked(
            Rotation3::from_axis_angle(&Vector3::x_axis(), angle_rad).into_inner(),
            Vector3::zeros(),
        )
    }

    pub fn rotation_y(angle_rad: f64) -> Self {
        Self::new_unchecked(
            Rotation3::from_axis_angle(&Vector3::y_axis(), angle_rad).into_inner(),
            Vector3::zeros(),
        )
    }

    pub fn rotation_z(angle_rad: f64) -> Self {
        Self::new_unchecked(
            Rotation3::from_axis_angle(&Vector3::z_axis(), angle_rad).into_inner(),
            Vector3::zeros(),
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotates a direction vector (no translation).
    pub fn rotate(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `a.compose(&b)` applies `b` first, then `a`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians between the two transforms' orientations.
    pub fn rotation_angle_to(&self, other: &Self) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn translation_distance_to(&self, other: &Self) -> f64 {
        (self.translation - other.translation).norm()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}
