//! Orthographic view rigs, silhouettes and IoU.

use alloc::vec::Vec;

use crate::geometry::TriangleMesh;
use crate::math::{is_rotation, Mat3, Vec3};

/// Rigid motion into a camera frame plus an orthographic projection:
/// `u = s * X.x + W/2`, `v = s * X.y + H/2`, depth `Z = X.z` with
/// `X = R x + T`. The camera looks along +Z; smaller Z is closer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewRig {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub ortho_scale: f64,
    pub width: usize,
    pub height: usize,
}

impl ViewRig {
    pub fn new(rotation: Mat3, translation: Vec3, ortho_scale: f64, width: usize, height: usize) -> Self {
        ViewRig { rotation, translation, ortho_scale, width, height }
    }

    pub fn is_valid(&self) -> bool {
        is_rotation(&self.rotation, 1e-6) && self.ortho_scale > 0.0 && self.width > 0 && self.height > 0
    }

    #[inline]
    pub fn to_camera(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    #[inline]
    pub fn from_camera(&self, c: &Vec3) -> Vec3 {
        self.rotation.transpose() * (c - self.translation)
    }

    /// Pixel coordinates and depth.
    #[inline]
    pub fn project(&self, x: &Vec3) -> (f64, f64, f64) {
        let c = self.to_camera(x);
        (
            self.ortho_scale * c.x + 0.5 * self.width as f64,
            self.ortho_scale * c.y + 0.5 * self.height as f64,
            c.z,
        )
    }

    /// Viewing direction (+Z of the camera) in model coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation.transpose() * Vec3::z()
    }

    /// Model-space point on the ray through continuous pixel `(u, v)` at
    /// camera depth `z`.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        let c = Vec3::new(
            (u - 0.5 * self.width as f64) / self.ortho_scale,
            (v - 0.5 * self.height as f64) / self.ortho_scale,
            z,
        );
        self.from_camera(&c)
    }

    /// Rig whose pixel `(i, j)` center is this rig's pixel
    /// `(i f + f/2, j f + f/2)` center, for integer `factor = f`. The
    /// low-resolution raster then samples a subset of the same rays.
    pub fn subsampled(&self, factor: usize) -> ViewRig {
        if factor <= 1 {
            return *self;
        }
        let f = factor as f64;
        // u' = u / f - 0.5 / f, absorbed into the translation.
        let shift = Vec3::new(-0.5 / self.ortho_scale, -0.5 / self.ortho_scale, 0.0);
        ViewRig {
            rotation: self.rotation,
            translation: self.translation + shift,
            ortho_scale: self.ortho_scale / f,
            width: self.width / factor,
            height: self.height / factor,
        }
    }
}

/// Binary raster, row-major, `data[v * width + u]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask { width, height, data: alloc::vec![false; width * height] }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// Pixel `(i f + f/2, j f + f/2)` of this mask for every low-res pixel;
    /// pairs with [`ViewRig::subsampled`].
    pub fn subsampled(&self, factor: usize) -> Mask {
        if factor <= 1 {
            return self.clone();
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = Mask::new(w, h);
        for j in 0..h {
            for i in 0..w {
                out.data[j * w + i] = self.get(i * factor + factor / 2, j * factor + factor / 2);
            }
        }
        out
    }

    /// Masks a rectangle of pixels `[u0, u1) x [v0, v1)` out.
    pub fn clear_rect(&mut self, u0: usize, v0: usize, u1: usize, v1: usize) {
        for v in v0.min(self.height)..v1.min(self.height) {
            for u in u0.min(self.width)..u1.min(self.width) {
                self.data[v * self.width + u] = false;
            }
        }
    }
}

/// Pixels whose center lies inside (or on an edge of) a projected triangle:
/// exactly the pixels whose orthographic ray hits the mesh, up to rounding
/// on shared edges.
pub fn rasterize_silhouette(mesh: &TriangleMesh, rig: &ViewRig) -> Mask {
    let mut mask = Mask::new(rig.width, rig.height);
    let projected: Vec<(f64, f64)> = mesh
        .vertices()
        .iter()
        .map(|x| {
            let (u, v, _) = rig.project(x);
            (u, v)
        })
        .collect();
    let (w, h) = (rig.width as f64, rig.height as f64);
    for face in mesh.faces() {
        let [a, b, c] = face.map(|i| projected[i as usize]);
        let area = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if area == 0.0 {
            continue;
        }
        let umin = a.0.min(b.0).min(c.0);
        let umax = a.0.max(b.0).max(c.0);
        let vmin = a.1.min(b.1).min(c.1);
        let vmax = a.1.max(b.1).max(c.1);
        if umax < 0.0 || vmax < 0.0 || umin > w || vmin > h {
            continue;
        }
        let i0 = (umin - 0.5).ceil().max(0.0) as usize;
        let i1 = ((umax - 0.5).floor().min(w - 1.0)).max(-1.0);
        let j0 = (vmin - 0.5).ceil().max(0.0) as usize;
        let j1 = ((vmax - 0.5).floor().min(h - 1.0)).max(-1.0);
        if i1 < 0.0 || j1 < 0.0 {
            continue;
        }
        let (i1, j1) = (i1 as usize, j1 as usize);
        let edge = |p: (f64, f64), q: (f64, f64), x: f64, y: f64| (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
        for j in j0..=j1 {
            let y = j as f64 + 0.5;
            let row = j * rig.width;
            for i in i0..=i1 {
                if mask.data[row + i] {
                    continue;
                }
                let x = i as f64 + 0.5;
                let e0 = edge(a, b, x, y);
                let e1 = edge(b, c, x, y);
                let e2 = edge(c, a, x, y);
                if (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0) {
                    mask.data[row + i] = true;
                }
            }
        }
    }
    mask
}

/// Intersection over union; two empty masks count as identical.
pub fn silhouette_iou(a: &Mask, b: &Mask) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height), "mask sizes differ");
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.data.iter().zip(&b.data) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{icosphere, unit_cube, MeshIndex};
    use crate::math::yaw;

    fn identity(scale: f64) -> ViewRig {
        ViewRig::new(Mat3::identity(), Vec3::zeros(), scale, 512, 512)
    }

    #[test]
    fn projection_examples() {
        assert_eq!(identity(1.0).project(&Vec3::zeros()), (256.0, 256.0, 0.0));
        assert_eq!(identity(100.0).project(&Vec3::x()), (356.0, 256.0, 0.0));
        let r = ViewRig::new(yaw(core::f64::consts::FRAC_PI_2), Vec3::zeros(), 100.0, 512, 512);
        let (u, v, z) = r.project(&Vec3::z());
        assert!((u - 356.0).abs() < 1e-12 && (v - 256.0).abs() < 1e-12 && z.abs() < 1e-12);
    }

    #[test]
    fn cube_square() {
        let m = rasterize_silhouette(&unit_cube(), &identity(100.0));
        assert_eq!(m.count(), 200 * 200);
        assert!(m.get(156, 156) && m.get(355, 355) && !m.get(155, 200) && !m.get(356, 200));
    }

    #[test]
    fn off_screen_is_empty() {
        let rig = ViewRig::new(Mat3::identity(), Vec3::new(50.0, 0.0, 0.0), 100.0, 512, 512);
        assert_eq!(rasterize_silhouette(&unit_cube(), &rig).count(), 0);
    }

    #[test]
    fn sphere_disk_area_and_rays_agree() {
        let sphere = icosphere(1.0, 4);
        let rig = identity(100.0);
        let m = rasterize_silhouette(&sphere, &rig);
        let disk = core::f64::consts::PI * 1e4;
        assert!(((m.count() as f64) - disk).abs() < 0.02 * disk);
        let idx = MeshIndex::new(sphere).unwrap();
        let mut mismatches = 0;
        for v in (0..512).step_by(3) {
            for u in (0..512).step_by(3) {
                let o = rig.unproject(u as f64 + 0.5, v as f64 + 0.5, -10.0);
                let hit = idx.ray_nearest_hit(&o, &rig.forward()).is_some();
                mismatches += (hit != m.get(u, v)) as usize;
            }
        }
        assert!(mismatches <= 2, "{mismatches}");
    }

    #[test]
    fn iou_examples() {
        let a = rasterize_silhouette(&unit_cube(), &identity(100.0));
        assert_eq!(silhouette_iou(&a, &a), 1.0);
        let shifted = ViewRig::new(Mat3::identity(), Vec3::new(1.0, 0.0, 0.0), 100.0, 512, 512);
        let b = rasterize_silhouette(&unit_cube(), &shifted);
        assert!((silhouette_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        let far = ViewRig::new(Mat3::identity(), Vec3::new(3.0, 0.0, 0.0), 100.0, 512, 512);
        assert_eq!(silhouette_iou(&a, &rasterize_silhouette(&unit_cube(), &far)), 0.0);
    }

    #[test]
    fn subsampled_raster_is_subset_of_rays() {
        let sphere = icosphere(1.0, 3);
        let rig = ViewRig::new(yaw(0.3), Vec3::new(0.1, -0.2, 0.0), 100.0, 512, 512);
        let hi = rasterize_silhouette(&sphere, &rig);
        let lo = rasterize_silhouette(&sphere, &rig.subsampled(4));
        let diff = lo.data.iter().zip(&hi.subsampled(4).data).filter(|(a, b)| a != b).count();
        assert!(diff <= 1, "{diff}");
    }
}
