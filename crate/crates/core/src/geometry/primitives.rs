//! Point-triangle and ray-triangle kernels.

use crate::math::Vec3;

/// Which part of a triangle the closest point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Vertex(u8),
    /// Edge from corner `k` to corner `(k + 1) % 3`.
    Edge(u8),
    Face,
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5), with the Voronoi feature it lies in.
#[inline]
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

/// Ray prepared for the watertight triangle test of Woop, Benthin and Wald
/// (JCGT 2013).
#[derive(Debug, Clone, Copy)]
pub struct ShearedRay {
    pub origin: Vec3,
    pub dir: Vec3,
    pub inv_dir: Vec3,
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl ShearedRay {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        let abs = dir.abs();
        let kz = if abs.x >= abs.y && abs.x >= abs.z {
            0
        } else if abs.y >= abs.z {
            1
        } else {
            2
        };
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        if dir[kz] < 0.0 {
            core::mem::swap(&mut kx, &mut ky);
        }
        let sz = 1.0 / dir[kz];
        ShearedRay {
            origin,
            dir,
            inv_dir: dir.map(|d| 1.0 / d),
            kx,
            ky,
            kz,
            sx: dir[kx] * sz,
            sy: dir[ky] * sz,
            sz,
        }
    }

    /// Hit parameter `t >= 0` against triangle `abc`; edges count as hits so
    /// no ray slips between triangles sharing an edge.
    #[inline]
    pub fn intersect(&self, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
        let (kx, ky, kz) = (self.kx, self.ky, self.kz);
        let a = a - self.origin;
        let b = b - self.origin;
        let c = c - self.origin;
        let ax = a[kx] - self.sx * a[kz];
        let ay = a[ky] - self.sy * a[kz];
        let bx = b[kx] - self.sx * b[kz];
        let by = b[ky] - self.sy * b[kz];
        let cx = c[kx] - self.sx * c[kz];
        let cy = c[ky] - self.sy * c[kz];
        let u = cx * by - cy * bx;
        let v = ax * cy - ay * cx;
        let w = bx * ay - by * ax;
        if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
            return None;
        }
        let det = u + v + w;
        if det == 0.0 {
            return None;
        }
        let az = self.sz * a[kz];
        let bz = self.sz * b[kz];
        let cz = self.sz * c[kz];
        let t = (u * az + v * bz + w * cz) / det;
        if t >= 0.0 {
            Some(t)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> [Vec3; 3] {
        [Vec3::zeros(), Vec3::x(), Vec3::y()]
    }

    #[test]
    fn closest_regions() {
        let [a, b, c] = tri();
        let (p, f) = closest_point_on_triangle(&Vec3::new(0.2, 0.2, 1.0), &a, &b, &c);
        assert_eq!(f, Feature::Face);
        assert!((p - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        let (p, f) = closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c);
        assert_eq!((p, f), (a, Feature::Vertex(0)));
        let (p, f) = closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert_eq!(f, Feature::Edge(1));
        assert!((p - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
        let (_, f) = closest_point_on_triangle(&Vec3::new(0.5, -1.0, 0.3), &a, &b, &c);
        assert_eq!(f, Feature::Edge(0));
        let (_, f) = closest_point_on_triangle(&Vec3::new(-1.0, 0.5, 0.3), &a, &b, &c);
        assert_eq!(f, Feature::Edge(2));
    }

    #[test]
    fn shared_edge_has_no_crack() {
        // Two triangles sharing the diagonal x = y of the unit square.
        let (a, b, c, d) = (Vec3::zeros(), Vec3::x(), Vec3::new(1.0, 1.0, 0.0), Vec3::y());
        for i in 0..=100 {
            let s = i as f64 / 100.0;
            let ray = ShearedRay::new(Vec3::new(s, s, 1.0), Vec3::new(0.0, 0.0, -1.0));
            let hit = ray.intersect(&a, &b, &c).or(ray.intersect(&a, &c, &d));
            assert_eq!(hit, Some(1.0));
        }
    }

    #[test]
    fn ray_behind_origin_misses() {
        let [a, b, c] = tri();
        let ray = ShearedRay::new(Vec3::new(0.2, 0.2, -1.0), Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(ray.intersect(&a, &b, &c), None);
    }
}
