use serde::{Deserialize, Serialize};

use super::elliptic::carlson_rg;
use super::rotation::Rotation;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Convex particle in its local frame, centered at the origin. Lengths are
/// in voxels. Cylinders have their axis along local z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParticleShape<T> {
    Sphere { radius: T },
    Cube { edge: T },
    Cylinder { radius: T, height: T },
    Ellipsoid { semi_axes: [T; 3] },
    Cuboid { edges: [T; 3] },
}

pub const SHAPE_NAMES: [&str; 5] = ["sphere", "cube", "cylinder", "ellipsoid", "cuboid"];

impl<T: Real> ParticleShape<T> {
    /// The five reference particles, all with surface-to-volume ratio close to 0.2.
    pub fn reference_set() -> [Self; 5] {
        let t = T::of;
        [
            Self::Sphere { radius: t(15.0) },
            Self::Cube { edge: t(30.0) },
            Self::Cylinder { radius: t(10.5), height: t(210.0) },
            Self::Ellipsoid { semi_axes: [t(8.46), t(25.39), t(84.63)] },
            Self::Cuboid { edges: [t(14.33), t(43.0), t(143.33)] },
        ]
    }

    pub fn reference(name: &str) -> Option<Self> {
        SHAPE_NAMES.iter().position(|&n| n == name).map(|i| Self::reference_set()[i])
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sphere { .. } => "sphere",
            Self::Cube { .. } => "cube",
            Self::Cylinder { .. } => "cylinder",
            Self::Ellipsoid { .. } => "ellipsoid",
            Self::Cuboid { .. } => "cuboid",
        }
    }

    fn lengths(&self) -> Vec<T> {
        match *self {
            Self::Sphere { radius } => vec![radius],
            Self::Cube { edge } => vec![edge],
            Self::Cylinder { radius, height } => vec![radius, height],
            Self::Ellipsoid { semi_axes } => semi_axes.to_vec(),
            Self::Cuboid { edges } => edges.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengths().iter().all(|&l| l.is_finite() && l > T::zero()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{} lengths must be positive and finite: {:?}", self.name(), self)))
        }
    }

    pub fn volume(&self) -> T {
        let pi = T::PI();
        match *self {
            Self::Sphere { radius } => T::of(4.0 / 3.0) * pi * radius.powi(3),
            Self::Cube { edge } => edge.powi(3),
            Self::Cylinder { radius, height } => pi * radius * radius * height,
            Self::Ellipsoid { semi_axes: [a, b, c] } => T::of(4.0 / 3.0) * pi * a * b * c,
            Self::Cuboid { edges: [a, b, c] } => a * b * c,
        }
    }

    /// Exact surface area; the ellipsoid uses Carlson's symmetric integral
    /// `S = 4 pi abc R_G(a^-2, b^-2, c^-2)`.
    pub fn surface_area(&self) -> T {
        let (pi, two) = (T::PI(), T::of(2.0));
        match *self {
            Self::Sphere { radius } => T::of(4.0) * pi * radius * radius,
            Self::Cube { edge } => T::of(6.0) * edge * edge,
            Self::Cylinder { radius, height } => two * pi * radius * (radius + height),
            Self::Ellipsoid { semi_axes: [a, b, c] } => {
                let inv = |s: T| T::one() / (s * s);
                T::of(4.0) * pi * a * b * c * carlson_rg(inv(a), inv(b), inv(c))
            }
            Self::Cuboid { edges: [a, b, c] } => two * (a * b + a * c + b * c),
        }
    }

    pub fn surface_to_volume(&self) -> T {
        self.surface_area() / self.volume()
    }

    /// Radius of the smallest origin-centered ball containing the particle.
    pub fn circumradius(&self) -> T {
        let half = T::of(0.5);
        match *self {
            Self::Sphere { radius } => radius,
            Self::Cube { edge } => edge * half * T::of(3.0).sqrt(),
            Self::Cylinder { radius, height } => radius.hypot(height * half),
            Self::Ellipsoid { semi_axes: [a, b, c] } => a.max(b).max(c),
            Self::Cuboid { edges: [a, b, c] } => half * (a * a + b * b + c * c).sqrt(),
        }
    }

    /// Point-in-solid test in the local frame; the boundary counts as inside.
    #[inline]
    pub fn contains_local(&self, p: [T; 3]) -> bool {
        let half = T::of(0.5);
        match *self {
            Self::Sphere { radius } => p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= radius * radius,
            Self::Cube { edge } => p.iter().all(|c| c.abs() <= edge * half),
            Self::Cylinder { radius, height } => {
                p[0] * p[0] + p[1] * p[1] <= radius * radius && p[2].abs() <= height * half
            }
            Self::Ellipsoid { semi_axes } => {
                p.iter().zip(semi_axes).map(|(&c, s)| (c / s) * (c / s)).fold(T::zero(), |a, b| a + b) <= T::one()
            }
            Self::Cuboid { edges } => p.iter().zip(edges).all(|(c, e)| c.abs() <= e * half),
        }
    }

    /// Half extents of the world-axis-aligned box around the rotated particle.
    pub fn aabb_half_extents(&self, rot: &Rotation<T>) -> [T; 3] {
        let m = rot.matrix();
        let half = T::of(0.5);
        let mut out = [T::zero(); 3];
        for (i, o) in out.iter_mut().enumerate() {
            let row = m[i];
            *o = match *self {
                Self::Sphere { radius } => radius,
                Self::Cube { edge } => row.iter().map(|r| r.abs()).fold(T::zero(), |a, b| a + b) * edge * half,
                Self::Cuboid { edges } => {
                    row.iter().zip(edges).map(|(r, e)| r.abs() * e * half).fold(T::zero(), |a, b| a + b)
                }
                Self::Ellipsoid { semi_axes } => {
                    row.iter().zip(semi_axes).map(|(&r, s)| (r * s) * (r * s)).fold(T::zero(), |a, b| a + b).sqrt()
                }
                Self::Cylinder { radius, height } => {
                    let axial = row[2].abs();
                    axial * height * half + radius * (T::one() - axial * axial).max(T::zero()).sqrt()
                }
            };
        }
        out
    }

    /// Parameter interval `[t0, t1]` where `o + t u` lies inside (local frame).
    pub(crate) fn chord(&self, o: [T; 3], u: [T; 3]) -> Option<(T, T)> {
        let half = T::of(0.5);
        match *self {
            Self::Sphere { radius } => quadratic_interval(dot(u, u), dot(o, u), dot(o, o) - radius * radius),
            Self::Ellipsoid { semi_axes } => {
                let os = [o[0] / semi_axes[0], o[1] / semi_axes[1], o[2] / semi_axes[2]];
                let us = [u[0] / semi_axes[0], u[1] / semi_axes[1], u[2] / semi_axes[2]];
                quadratic_interval(dot(us, us), dot(os, us), dot(os, os) - T::one())
            }
            Self::Cube { edge } => slabs(o, u, [edge * half; 3], (T::neg_infinity(), T::infinity())),
            Self::Cuboid { edges } => slabs(o, u, edges.map(|e| e * half), (T::neg_infinity(), T::infinity())),
            Self::Cylinder { radius, height } => {
                let a = u[0] * u[0] + u[1] * u[1];
                let b = o[0] * u[0] + o[1] * u[1];
                let c = o[0] * o[0] + o[1] * o[1] - radius * radius;
                let radial = if a <= T::epsilon() {
                    (c <= T::zero()).then(|| (T::neg_infinity(), T::infinity()))?
                } else {
                    quadratic_interval(a, b, c)?
                };
                slab(o[2], u[2], height * half, radial)
            }
        }
    }
}

fn dot<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Solves `a t^2 + 2 b t + c <= 0` for `a > 0`.
fn quadratic_interval<T: Real>(a: T, b: T, c: T) -> Option<(T, T)> {
    let disc = b * b - a * c;
    if disc < T::zero() {
        return None;
    }
    let s = disc.sqrt();
    Some(((-b - s) / a, (-b + s) / a))
}

fn slab<T: Real>(o: T, u: T, half: T, (lo, hi): (T, T)) -> Option<(T, T)> {
    let (lo, hi) = if u.abs() <= T::epsilon() {
        if o.abs() > half {
            return None;
        }
        (lo, hi)
    } else {
        let (t0, t1) = ((-half - o) / u, (half - o) / u);
        (lo.max(t0.min(t1)), hi.min(t0.max(t1)))
    };
    (lo <= hi).then_some((lo, hi))
}

fn slabs<T: Real>(o: [T; 3], u: [T; 3], half: [T; 3], mut range: (T, T)) -> Option<(T, T)> {
    for i in 0..3 {
        range = slab(o[i], u[i], half[i], range)?;
    }
    Some(range)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_analytics() {
        let s = ParticleShape::<f64>::reference("sphere").unwrap();
        assert_relative_eq!(s.volume(), 4.0 / 3.0 * std::f64::consts::PI * 3375.0, max_relative = 1e-15);
        assert_relative_eq!(s.volume(), 14137.17, epsilon = 0.01);
        assert_relative_eq!(s.surface_to_volume(), 0.2, max_relative = 1e-14);
        assert_relative_eq!(ParticleShape::<f64>::reference("cube").unwrap().surface_to_volume(), 0.2);
        let cyl = ParticleShape::<f64>::reference("cylinder").unwrap();
        assert_relative_eq!(cyl.surface_to_volume(), 2.0 / 10.5 + 2.0 / 210.0, max_relative = 1e-14);
        for shape in ParticleShape::<f64>::reference_set() {
            assert!((shape.surface_to_volume() - 0.2).abs() <= 1e-3, "{}: {}", shape.name(), shape.surface_to_volume());
        }
    }

    #[test]
    fn ellipsoid_area_matches_elliptic_integral_values() {
        // Reference values from the Legendre-form formula (scipy ellipkinc/ellipeinc).
        let e = ParticleShape::Ellipsoid { semi_axes: [8.46, 25.39, 84.63] };
        assert_relative_eq!(e.surface_area(), 15183.520105780917, max_relative = 1e-12);
        let e = ParticleShape::Ellipsoid { semi_axes: [3.0, 2.0, 1.0] };
        assert_relative_eq!(e.surface_area(), 48.88214630258206, max_relative = 1e-12);
        let spheroid = ParticleShape::Ellipsoid { semi_axes: [2.0, 2.0, 1.0] };
        assert_relative_eq!(spheroid.surface_area(), 34.68753081338021, max_relative = 1e-12);
        let ball = ParticleShape::Ellipsoid { semi_axes: [4.0f64; 3] };
        assert_relative_eq!(ball.surface_area(), 64.0 * std::f64::consts::PI, max_relative = 1e-13);
        let f32_area = ParticleShape::Ellipsoid { semi_axes: [3.0f32, 2.0, 1.0] }.surface_area();
        assert_relative_eq!(f32_area, 48.882146, max_relative = 1e-5);
    }

    #[test]
    fn validation_rejects_nonpositive_lengths() {
        assert!(ParticleShape::Sphere { radius: 0.0f64 }.validate().is_err());
        assert!(ParticleShape::Cuboid { edges: [1.0f64, -1.0, 2.0] }.validate().is_err());
        assert!(ParticleShape::<f64>::reference("cylinder").unwrap().validate().is_ok());
        assert!(ParticleShape::<f64>::reference("torus").is_none());
    }

    #[test]
    fn serde_tagging() {
        let s: ParticleShape<f64> = toml::from_str("kind = \"cylinder\"\nradius = 10.5\nheight = 210.0").unwrap();
        assert_eq!(s, ParticleShape::reference("cylinder").unwrap());
    }

    #[test]
    fn aabb_contains_circumscribed_points() {
        let rot = Rotation::from_axis_angle([1.0, 2.0, 0.5], 0.7);
        for shape in ParticleShape::<f64>::reference_set() {
            let h = shape.aabb_half_extents(&rot);
            let r = shape.circumradius();
            assert!(h.iter().all(|&v| v <= r + 1e-9));
        }
    }
}
