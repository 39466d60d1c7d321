use nalgebra::Matrix3;

use crate::geometry::Vec3;

/// Local rigid motion `[z; t]`: Cayley rotation parameters followed by a
/// translation. The zero vector is the identity motion.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Transform6(pub [f64; 6]);

impl Transform6 {
    pub const IDENTITY: Transform6 = Transform6([0.0; 6]);

    pub fn from_parts(z: Vec3, t: Vec3) -> Self {
        Self([z.x, z.y, z.z, t.x, t.y, t.z])
    }

    pub fn z(&self) -> Vec3 {
        Vec3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn t(&self) -> Vec3 {
        Vec3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn add_scaled(&mut self, other: &Transform6, s: f64) {
        for k in 0..6 {
            self.0[k] += s * other.0[k];
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.0.iter_mut().for_each(|v| *v *= s);
        self
    }

    pub fn dot(&self, other: &Transform6) -> f64 {
        (0..6).map(|k| self.0[k] * other.0[k]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn skew(z: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -z.z, z.y, z.z, 0.0, -z.x, -z.y, z.x, 0.0)
}

/// `R(z) = (I + Z)(I - Z)^-1` for the skew matrix `Z` of `z`.
///
/// Evaluated in closed form as `I + 2 (Z + Z^2) / (1 + |z|^2)`, which is
/// valid for every `z` since `(I - Z)` is never singular.
pub fn cayley_rotation(z: &Vec3) -> Matrix3<f64> {
    let zm = skew(z);
    let s = 1.0 + z.norm_squared();
    Matrix3::identity() + (zm + zm * zm) * (2.0 / s)
}

/// `(I - Z)^-1 = I + (Z + Z^2) / (1 + |z|^2)`.
fn cayley_inverse_factor(z: &Vec3) -> Matrix3<f64> {
    let zm = skew(z);
    let s = 1.0 + z.norm_squared();
    Matrix3::identity() + (zm + zm * zm) / s
}

/// Pulls a gradient with respect to the rotation matrix back to `z`.
///
/// With `A = (I - Z)^-1`, `dR = (I + R) dZ A`, hence
/// `dL/dZ = (I + R)^T (dL/dR) A^T`, then collapse onto the skew entries.
pub fn cayley_pullback(z: &Vec3, rotation: &Matrix3<f64>, grad_r: &Matrix3<f64>) -> Vec3 {
    let a = cayley_inverse_factor(z);
    let gz = (Matrix3::identity() + rotation).transpose() * grad_r * a.transpose();
    Vec3::new(
        gz[(2, 1)] - gz[(1, 2)],
        gz[(0, 2)] - gz[(2, 0)],
        gz[(1, 0)] - gz[(0, 1)],
    )
}

/// `R(z) x + t`, rotating about the domain origin.
pub fn apply_transform(tf: &Transform6, x: &Vec3) -> Vec3 {
    cayley_rotation(&tf.z()) * x + tf.t()
}
