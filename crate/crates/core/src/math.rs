//! Small vector and rotation helpers on top of `nalgebra`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vector3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
        max: Vector3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Self::EMPTY;
        for p in points {
            b.grow(p);
        }
        b
    }

    #[inline]
    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    #[inline]
    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.extent().norm()
        }
    }

    pub fn surface_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..3).all(|k| other.min[k] >= self.min[k] && other.max[k] <= self.max[k])
    }

    /// Box grown by `fraction` of its extent on every side.
    pub fn inflated(&self, fraction: f64) -> Aabb {
        let pad = self.extent() * fraction;
        Aabb { min: self.min - pad, max: self.max + pad }
    }

    /// Squared distance from `p` to the box (zero inside).
    #[inline]
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = p[k];
            let d = if v < self.min[k] {
                self.min[k] - v
            } else if v > self.max[k] {
                v - self.max[k]
            } else {
                0.0
            };
            d2 += d * d;
        }
        d2
    }

    /// Slab test. Returns the entry parameter if the ray overlaps the box
    /// within `[0, t_max]`.
    #[inline]
    pub fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            if inv_dir[k].is_infinite() {
                // Parallel to this slab: inside it or never.
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return None;
                }
                continue;
            }
            let a = (self.min[k] - origin[k]) * inv_dir[k];
            let b = (self.max[k] - origin[k]) * inv_dir[k];
            let (near, far) = if a < b { (a, b) } else { (b, a) };
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Rotation matrix from an axis-angle vector (Rodrigues).
pub fn rotation_from_axis_angle(w: &Vec3) -> Mat3 {
    Rotation3::from_scaled_axis(*w).into_inner()
}

/// Axis-angle vector of a rotation matrix.
pub fn axis_angle_from_rotation(r: &Mat3) -> Vec3 {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

pub fn quaternion_from_axis_angle(w: &Vec3) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*w)
}

/// Rotation about the +y (up) axis by `angle` radians.
pub fn yaw(angle: f64) -> Mat3 {
    rotation_from_axis_angle(&Vec3::new(0.0, angle, 0.0))
}

/// Geodesic angle between two rotations, in radians.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let rel = a.transpose() * b;
    let c = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    c.acos()
}

/// `|R^T R - I|` max-entry deviation and determinant, used to validate rigs.
pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    let should_be_identity = r.transpose() * r - Mat3::identity();
    should_be_identity.amax() <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
#[inline]
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Unit vector or zero when the input is (numerically) zero.
#[inline]
pub fn normalize_or_zero(v: &Vec3) -> Vec3 {
    let n = v.norm();
    if n > 1e-300 {
        v / n
    } else {
        Vec3::zeros()
    }
}

/// Interior angle at `a` of triangle `a b c`.
#[inline]
pub fn corner_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let u = b - a;
    let v = c - a;
    // atan2 stays accurate for both tiny and near-pi angles.
    u.cross(&v).norm().atan2(u.dot(&v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_entry_parallel_axis() {
        let b = Aabb { min: Vec3::new(-1.0, -1.0, -1.0), max: Vec3::new(1.0, 1.0, 1.0) };
        let dir = Vec3::new(0.0, 0.0, -1.0);
        let inv = dir.map(|d| 1.0 / d);
        assert_eq!(b.ray_entry(&Vec3::new(0.5, 0.5, 5.0), &inv, f64::INFINITY), Some(4.0));
        assert_eq!(b.ray_entry(&Vec3::new(3.0, 0.0, 5.0), &inv, f64::INFINITY), None);
    }

    #[test]
    fn yaw_maps_z_to_x() {
        let r = yaw(core::f64::consts::FRAC_PI_2);
        let p = r * Vec3::new(0.0, 0.0, 1.0);
        assert!((p - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn corner_angle_right() {
        let a = corner_angle(&Vec3::zeros(), &Vec3::x(), &Vec3::y());
        assert!((a - core::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
