use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Rotation stored as a unit quaternion `[w, x, y, z]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation<T> {
    q: [T; 4],
}

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Self { q: [T::one(), T::zero(), T::zero(), T::zero()] }
    }

    /// Normalizes `q`; panics on a zero quaternion.
    pub fn from_quaternion(q: [T; 4]) -> Self {
        let n = q.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        assert!(n > T::zero(), "zero quaternion");
        Self { q: q.map(|v| v / n) }
    }

    pub fn from_axis_angle(axis: [T; 3], angle: T) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (s, c) = (angle * T::of(0.5)).sin_cos();
        Self::from_quaternion([c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n])
    }

    /// Uniform rotation (Haar measure on SO(3)) from three uniforms.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u1 = T::of(rng.random::<f64>());
        let u2 = T::of(rng.random::<f64>());
        let u3 = T::of(rng.random::<f64>());
        let tau = T::TAU();
        let (a, b) = ((T::one() - u1).sqrt(), u1.sqrt());
        let (s2, c2) = (tau * u2).sin_cos();
        let (s3, c3) = (tau * u3).sin_cos();
        Self::from_quaternion([b * c3, a * s2, a * c2, b * s3])
    }

    pub fn quaternion(&self) -> [T; 4] {
        self.q
    }

    pub fn norm(&self) -> T {
        self.q.iter().fold(T::zero(), |a, &v| a + v * v).sqrt()
    }

    pub fn inverse(&self) -> Self {
        let [w, x, y, z] = self.q;
        Self { q: [w, -x, -y, -z] }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let [w1, x1, y1, z1] = self.q;
        let [w2, x2, y2, z2] = other.q;
        Self::from_quaternion([
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ])
    }

    /// Row-major rotation matrix.
    pub fn matrix(&self) -> [[T; 3]; 3] {
        let [w, x, y, z] = self.q;
        let two = T::of(2.0);
        let one = T::one();
        [
            [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
            [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
            [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
        ]
    }

    pub fn apply(&self, v: [T; 3]) -> [T; 3] {
        let m = self.matrix();
        [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
    }
}
