//! Rigid-body pose algebra.
//!
//! Poses are camera-to-world transforms: the translation of a camera pose is
//! its center in world coordinates. Camera frames follow the OpenCV layout
//! (x right, y down, z forward). The world is right-handed and Z-up.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};
use thiserror::Error;

/// Tolerance accepted when validating rotation matrices on construction.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal (deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },
    #[error("rotation has determinant {det:.6}, expected +1")]
    Reflection { det: f64 },
    #[error("pose contains non-finite entries")]
    NonFinite,
    #[error("homogeneous row must be [0, 0, 0, 1]")]
    BadHomogeneousRow,
    #[error("translation scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("camera center coincides with the projection origin")]
    DegenerateRadius,
    #[error("look-at direction is degenerate")]
    DegenerateLookAt,
}

/// A rigid transform in SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, re-orthonormalizing the rotation when it is within
    /// [`ORTHONORMAL_TOLERANCE`] of SO(3).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let deviation = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if deviation > ORTHONORMAL_TOLERANCE {
            return Err(GeometryError::NotOrthonormal { deviation });
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(GeometryError::Reflection { det });
        }
        let rotation = if deviation == 0.0 {
            rotation
        } else {
            polar_rotation(&rotation)
        };
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Wraps an exact rotation produced by nalgebra.
    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: rotation.into_inner(),
            translation,
        }
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeometryError::BadHomogeneousRow);
        }
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Parses 16 row-major entries of a homogeneous matrix.
    pub fn from_row_major(values: &[f64; 16]) -> Result<Self, GeometryError> {
        Self::from_matrix(&Matrix4::from_row_slice(values))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.translation
    }

    /// Viewing direction (camera +z) in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// Camera up direction (camera −y) in world coordinates.
    pub fn up(&self) -> Vector3<f64> {
        -self.rotation.column(1).into_owned()
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// The 16 entries of the homogeneous matrix in row-major order.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_matrix();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Multiplies the translation by `scale`, leaving the rotation alone.
    pub fn scale_translation(&self, scale: f64) -> Result<Pose, GeometryError> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(GeometryError::NonPositiveScale(scale));
        }
        Ok(Pose {
            rotation: self.rotation,
            translation: self.translation * scale,
        })
    }

    /// Angle of the rotation taking this pose's orientation to `other`'s.
    pub fn geodesic_distance(&self, other: &Pose) -> f64 {
        let r = self.rotation.transpose() * other.rotation;
        let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// A camera at `eye` looking at `target`, with image-up as close to
    /// `world_up` as possible.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        world_up: Vector3<f64>,
    ) -> Result<Pose, GeometryError> {
        let forward = target - eye;
        let fnorm = forward.norm();
        if !(fnorm > 0.0) {
            return Err(GeometryError::DegenerateLookAt);
        }
        let forward = forward / fnorm;
        let mut right = forward.cross(&world_up);
        if right.norm() < 1e-12 {
            // Looking along the up axis; any perpendicular works.
            let alt = if world_up.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            right = forward.cross(&alt);
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Ok(Pose {
            rotation,
            translation: eye,
        })
    }

    /// Spherical coordinates of the camera center about `origin`.
    pub fn to_spherical(&self, origin: &Vector3<f64>) -> Result<Spherical, GeometryError> {
        Spherical::from_cartesian(&(self.translation - origin))
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

/// `a⁻¹ · b`: the pose of `b` expressed in the frame of `a`.
pub fn relative_pose(a: &Pose, b: &Pose) -> Pose {
    a.inverse().compose(b)
}

/// Nearest rotation to `m` in the Frobenius sense, via SVD.
fn polar_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Elevation/azimuth/radius of a point relative to an origin.
///
/// Elevation is measured from the XY-plane (positive toward +Z), azimuth is
/// `atan2(y, x)` wrapped to `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spherical {
    pub elevation: f64,
    pub azimuth: f64,
    pub radius: f64,
}

impl Spherical {
    pub fn new(elevation: f64, azimuth: f64, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::DegenerateRadius);
        }
        Ok(Self {
            elevation,
            azimuth: wrap_angle(azimuth),
            radius,
        })
    }

    pub fn from_cartesian(v: &Vector3<f64>) -> Result<Self, GeometryError> {
        let radius = v.norm();
        if !(radius > 0.0) {
            return Err(GeometryError::DegenerateRadius);
        }
        let horizontal = v.x.hypot(v.y);
        Ok(Self {
            elevation: v.z.atan2(horizontal),
            azimuth: wrap_angle(v.y.atan2(v.x)),
            radius,
        })
    }

    pub fn to_cartesian(&self) -> Vector3<f64> {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Vector3::new(ce * ca, ce * sa, se) * self.radius
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can land exactly on 2π after rounding.
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}
