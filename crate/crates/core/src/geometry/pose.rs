use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Rigid transform `x -> R x + t`.
///
/// Object poses map object coordinates into a camera frame; camera poses map
/// camera coordinates into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
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

    /// Builds a pose, checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !is_rotation(&rotation, 1e-6) {
            return Err(Error::InvalidParameter(
                "rotation is not orthonormal with det +1".into(),
            ));
        }
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

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// Quaternion in `[w, x, y, z]` order; normalized before conversion.
    pub fn from_quaternion(wxyz: [f64; 4], translation: Vector3<f64>) -> Result<Self> {
        let q = nalgebra::Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        if q.norm() < 1e-12 {
            return Err(Error::InvalidParameter("zero quaternion".into()));
        }
        let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_matrix(&self.rotation);
        [q.w, q.i, q.j, q.k]
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_arr(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.apply(&Vector3::from(p));
        [v.x, v.y, v.z]
    }

    /// Geodesic angle between the two rotation parts, radians.
    pub fn rotation_distance(&self, other: &Pose) -> f64 {
        rotation_angle(&(self.rotation.transpose() * other.rotation))
    }

    pub fn translation_distance(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Uniformly distributed rotation with translation drawn uniformly from
    /// the ball of radius `max_translation`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_translation: f64) -> Pose {
        let rotation = random_rotation(rng);
        let translation = loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if v.norm() <= 1.0 {
                break v * max_translation;
            }
        };
        Pose {
            rotation,
            translation,
        }
    }
}

/// Uniform random rotation (normalized Gaussian quaternion).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    loop {
        let q = nalgebra::Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if q.norm() > 1e-6 {
            return UnitQuaternion::from_quaternion(q)
                .to_rotation_matrix()
                .into_inner();
        }
    }
}

/// Rotation by `angle` radians about `axis` (normalized internally).
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let n = axis.norm();
    if n < 1e-15 {
        return Matrix3::identity();
    }
    Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(axis / n), angle).into_inner()
}

/// Rotation angle of `r` in `[0, π]`.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    // acos loses precision near 0; use the skew part there.
    if c > 0.99 {
        let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        (0.5 * s.norm()).clamp(-1.0, 1.0).asin()
    } else {
        c.acos()
    }
}

/// Angular distance between two rotations.
pub fn rotation_distance(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    rotation_angle(&(a.transpose() * b))
}

pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    err <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Projects an approximately orthonormal matrix back onto SO(3).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

pub(crate) fn matrix_to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

pub(crate) fn rows_to_matrix(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::new(
        rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
        rows[2][1], rows[2][2],
    )
}

#[derive(Serialize, Deserialize)]
struct PoseJson {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseJson {
            rotation: matrix_to_rows(&self.rotation),
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let json = PoseJson::deserialize(d)?;
        let rotation = rows_to_matrix(&json.rotation);
        if !is_rotation(&rotation, 1e-6) {
            return Err(serde::de::Error::custom("rotation is not a proper rotation"));
        }
        Ok(Pose {
            rotation,
            translation: Vector3::from(json.translation),
        })
    }
}
