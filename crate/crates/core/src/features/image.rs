//! Rendered per-view channel images and pixel-aligned sampling.

use alloc::vec::Vec;

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;

use crate::calib::{Mask, ViewRig};
use crate::geometry::MeshIndex;
use crate::math::{normalize_or_zero, Vec3};

/// Channels produced by [`render_feature_image`].
pub const RENDER_CHANNELS: usize = 6;
pub const CH_MASK: usize = 0;
/// Orthographic depth of the first hit; +inf off the silhouette.
pub const CH_DEPTH: usize = 1;
/// Camera-frame unit normal at the first hit.
pub const CH_NORMAL: usize = 2;
/// Signed 2D distance to the silhouette boundary in scene units, negative
/// inside; +inf when the mask is empty.
pub const CH_DISTANCE: usize = 5;

/// `channels` planes of `height x width` values, plane-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FeatureImage {
    pub fn new(channels: usize, width: usize, height: usize) -> Self {
        FeatureImage { channels, width, height, data: alloc::vec![0.0; channels * width * height] }
    }

    #[inline]
    pub fn get(&self, c: usize, u: usize, v: usize) -> f32 {
        self.data[(c * self.height + v) * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, c: usize, u: usize, v: usize, x: f32) {
        self.data[(c * self.height + v) * self.width + u] = x;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn mask(&self) -> Mask {
        Mask { width: self.width, height: self.height, data: self.plane(CH_MASK).iter().map(|x| *x > 0.5).collect() }
    }

    /// Channels of `self` followed by those of `other`.
    pub fn stack(&self, other: &FeatureImage) -> FeatureImage {
        assert_eq!((self.width, self.height), (other.width, other.height), "image sizes differ");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        FeatureImage { channels: self.channels + other.channels, width: self.width, height: self.height, data }
    }

    /// Bilinear interpolation of every channel at continuous pixel
    /// coordinates (pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`).
    /// Taps outside the image and non-finite values read as zero.
    pub fn sample(&self, u: f64, v: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.channels);
        out.fill(0.0);
        let x = u - 0.5;
        let y = v - 0.5;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (w, h) = (self.width as i64, self.height as i64);
        let taps = [(0i64, 0i64, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)];
        for (dx, dy, wt) in taps {
            let (i, j) = (x0 as i64 + dx, y0 as i64 + dy);
            if wt == 0.0 || i < 0 || j < 0 || i >= w || j >= h {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                let val = self.get(c, i as usize, j as usize);
                if val.is_finite() {
                    *o += wt * val as f64;
                }
            }
        }
    }
}

/// Casts one orthographic ray per pixel center: mask, first-hit depth,
/// camera-frame normal (interpolated vertex normals), and the signed
/// distance to the silhouette boundary.
pub fn render_feature_image(mesh: &MeshIndex, rig: &ViewRig) -> FeatureImage {
    let (w, h) = (rig.width, rig.height);
    let mut img = FeatureImage::new(RENDER_CHANNELS, w, h);
    let fwd = rig.forward();
    let z_near = mesh.mesh().vertices().iter().map(|x| rig.to_camera(x).z).fold(f64::INFINITY, f64::min) - 1.0;
    let normals = mesh.mesh().vertex_normals();
    let mut mask = Mask::new(w, h);
    for v in 0..h {
        for u in 0..w {
            img.set(CH_DEPTH, u, v, f32::INFINITY);
            if !z_near.is_finite() {
                continue;
            }
            let origin = rig.unproject(u as f64 + 0.5, v as f64 + 0.5, z_near);
            let Some(hit) = mesh.ray_nearest_hit(&origin, &fwd) else { continue };
            mask.data[v * w + u] = true;
            img.set(CH_MASK, u, v, 1.0);
            img.set(CH_DEPTH, u, v, (z_near + hit.t) as f32);
            let face = mesh.mesh().faces()[hit.face];
            let [a, b, c] = mesh.mesh().triangle(hit.face);
            let bary = barycentric(&hit.point, &a, &b, &c);
            let n = normals[face[0] as usize] * bary.x + normals[face[1] as usize] * bary.y + normals[face[2] as usize] * bary.z;
            let n = rig.rotation * normalize_or_zero(&n);
            for k in 0..3 {
                img.set(CH_NORMAL + k, u, v, n[k] as f32);
            }
        }
    }
    let signed = signed_distance_transform(&mask);
    for v in 0..h {
        for u in 0..w {
            img.set(CH_DISTANCE, u, v, (signed[v * w + u] / rig.ortho_scale) as f32);
        }
    }
    img
}

fn barycentric(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let (v0, v1, v2) = (b - a, c - a, p - a);
    let (d00, d01, d11) = (v0.dot(&v0), v0.dot(&v1), v1.dot(&v1));
    let (d20, d21) = (v2.dot(&v0), v2.dot(&v1));
    let den = d00 * d11 - d01 * d01;
    if den == 0.0 {
        return Vec3::new(1.0, 0.0, 0.0);
    }
    let y = (d11 * d20 - d01 * d21) / den;
    let z = (d00 * d21 - d01 * d20) / den;
    Vec3::new(1.0 - y - z, y, z)
}

/// Exact Euclidean distance (pixels) from every pixel to the nearest pixel
/// where `target` is set, by two separable passes of the lower-envelope
/// algorithm of Felzenszwalb and Huttenlocher. +inf if `target` is empty.
pub fn distance_transform(width: usize, height: usize, target: impl Fn(usize, usize) -> bool) -> Vec<f64> {
    let mut grid = alloc::vec![f64::INFINITY; width * height];
    for v in 0..height {
        for u in 0..width {
            if target(u, v) {
                grid[v * width + u] = 0.0;
            }
        }
    }
    let mut f = Vec::new();
    let mut d = Vec::new();
    for u in 0..width {
        f.clear();
        f.extend((0..height).map(|v| grid[v * width + u]));
        edt_1d(&f, &mut d);
        for v in 0..height {
            grid[v * width + u] = d[v];
        }
    }
    for v in 0..height {
        f.clear();
        f.extend_from_slice(&grid[v * width..(v + 1) * width]);
        edt_1d(&f, &mut d);
        grid[v * width..(v + 1) * width].copy_from_slice(&d);
    }
    grid.iter().map(|x| x.sqrt()).collect()
}

/// Distance to the nearest background pixel inside, to the nearest
/// foreground pixel outside; inside values are negated.
pub fn signed_distance_transform(mask: &Mask) -> Vec<f64> {
    let (w, h) = (mask.width, mask.height);
    let outside = distance_transform(w, h, |u, v| mask.get(u, v));
    if mask.count() == w * h {
        return alloc::vec![f64::NEG_INFINITY; w * h];
    }
    let inside = distance_transform(w, h, |u, v| !mask.get(u, v));
    outside.iter().zip(&inside).map(|(o, i)| if *o == 0.0 { -i } else { *o }).collect()
}

/// Squared 1D distance transform of sampled function `f`.
fn edt_1d(f: &[f64], d: &mut Vec<f64>) {
    let n = f.len();
    d.clear();
    d.resize(n, f64::INFINITY);
    let mut v = alloc::vec![0usize; n];
    let mut z = alloc::vec![0.0f64; n + 1];
    let mut k = 0usize;
    let mut first = None;
    for q in 0..n {
        if f[q].is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(q0) = first else { return };
    v[0] = q0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in q0 + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    // Parabola p is dominated everywhere.
                    v[0] = q;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    let mut j = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let p = v[j];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{icosphere, unit_cube};
    use crate::math::Mat3;

    #[test]
    fn edt_matches_brute_force() {
        let (w, h) = (23, 17);
        let set = |u: usize, v: usize| (u * 7 + v * 13) % 29 == 0 || (u == 5 && v > 10);
        let d = distance_transform(w, h, set);
        for v in 0..h {
            for u in 0..w {
                let mut best = f64::INFINITY;
                for y in 0..h {
                    for x in 0..w {
                        if set(x, y) {
                            let dd = ((x as f64 - u as f64).powi(2) + (y as f64 - v as f64).powi(2)).sqrt();
                            best = best.min(dd);
                        }
                    }
                }
                assert!((d[v * w + u] - best).abs() < 1e-12, "({u},{v})");
            }
        }
    }

    #[test]
    fn empty_target_is_infinite() {
        assert!(distance_transform(4, 3, |_, _| false).iter().all(|x| x.is_infinite()));
    }

    #[test]
    fn cube_front_depth() {
        let idx = MeshIndex::new(unit_cube()).unwrap();
        let rig = ViewRig::new(Mat3::identity(), Vec3::zeros(), 100.0, 512, 512);
        let img = render_feature_image(&idx, &rig);
        assert_eq!(img.get(CH_MASK, 256, 256), 1.0);
        assert_eq!(img.get(CH_DEPTH, 256, 256), -1.0);
        assert_eq!(img.get(CH_DEPTH, 300, 200), -1.0);
        assert!(img.get(CH_DEPTH, 10, 10).is_infinite());
        assert!((img.get(CH_NORMAL + 2, 256, 256) + 1.0).abs() < 1e-3);
        assert!(img.get(CH_DISTANCE, 256, 256) < 0.0 && img.get(CH_DISTANCE, 10, 10) > 0.0);
    }

    #[test]
    fn sphere_center_normal_faces_camera() {
        let idx = MeshIndex::new(icosphere(1.0, 3)).unwrap();
        let rig = ViewRig::new(crate::math::yaw(0.7), Vec3::zeros(), 100.0, 256, 256);
        let img = render_feature_image(&idx, &rig);
        let n = Vec3::new(img.get(CH_NORMAL, 128, 128) as f64, img.get(CH_NORMAL + 1, 128, 128) as f64, img.get(CH_NORMAL + 2, 128, 128) as f64);
        assert!((n - Vec3::new(0.0, 0.0, -1.0)).norm() < 0.02);
    }

    #[test]
    fn off_screen_mesh() {
        let idx = MeshIndex::new(unit_cube()).unwrap();
        let rig = ViewRig::new(Mat3::identity(), Vec3::new(100.0, 0.0, 0.0), 100.0, 64, 64);
        let img = render_feature_image(&idx, &rig);
        assert!(img.plane(CH_MASK).iter().all(|x| *x == 0.0));
        assert!(img.plane(CH_DISTANCE).iter().all(|x| x.is_infinite()));
    }

    #[test]
    fn bilinear_sampling() {
        let mut img = FeatureImage::new(1, 4, 4);
        img.set(0, 1, 1, 1.0);
        let mut out = [0.0];
        img.sample(1.5, 1.5, &mut out);
        assert_eq!(out[0], 1.0);
        img.sample(1.0, 1.5, &mut out);
        assert_eq!(out[0], 0.5);
        img.sample(-5.0, 10.0, &mut out);
        assert_eq!(out[0], 0.0);
    }
}
