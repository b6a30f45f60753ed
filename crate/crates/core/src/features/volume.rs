//! Body vertices average-pooled into a regular grid and sampled trilinearly.

use alloc::vec::Vec;

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;

use crate::geometry::TriangleMesh;
use crate::math::{Aabb, Vec3};

pub const DEFAULT_VOLUME_RESOLUTION: usize = 64;
/// Offset from cell center (in cells) and vertex normal.
const GEOMETRIC_CHANNELS: usize = 6;

/// Channel count for `parts` part labels: offset (3), normal (3), part
/// one-hot, hit flag.
pub const fn volume_channels(parts: usize) -> usize {
    GEOMETRIC_CHANNELS + parts + 1
}

/// `resolution³` cells tiling `bounds`, each holding `channels` values;
/// cell `(i, j, k)` at `((k * r + j) * r + i) * channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    pub resolution: usize,
    pub bounds: Aabb,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FeatureVolume {
    pub fn cell_size(&self) -> Vec3 {
        self.bounds.extent() / self.resolution as f64
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let h = self.cell_size();
        self.bounds.min + Vec3::new((i as f64 + 0.5) * h.x, (j as f64 + 0.5) * h.y, (k as f64 + 0.5) * h.z)
    }

    pub fn cell(&self, i: usize, j: usize, k: usize) -> &[f32] {
        let r = self.resolution;
        let o = ((k * r + j) * r + i) * self.channels;
        &self.data[o..o + self.channels]
    }

    /// Trilinear interpolation between cell centers (edge cells extend to
    /// the boundary); zero outside `bounds`.
    pub fn sample(&self, x: &Vec3, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.channels);
        out.fill(0.0);
        if !self.bounds.contains(x) {
            return;
        }
        let r = self.resolution;
        let h = self.cell_size();
        let g = (x - self.bounds.min).component_div(&h) - Vec3::repeat(0.5);
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let c = g[a].clamp(0.0, (r - 1) as f64);
            let b = (c.floor() as usize).min(r.saturating_sub(2));
            base[a] = b;
            frac[a] = if r > 1 { c - b as f64 } else { 0.0 };
        }
        for corner in 0..8 {
            let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let w = (if dx == 1 { frac[0] } else { 1.0 - frac[0] })
                * (if dy == 1 { frac[1] } else { 1.0 - frac[1] })
                * (if dz == 1 { frac[2] } else { 1.0 - frac[2] });
            if w == 0.0 {
                continue;
            }
            let cell = self.cell((base[0] + dx).min(r - 1), (base[1] + dy).min(r - 1), (base[2] + dz).min(r - 1));
            for (o, v) in out.iter_mut().zip(cell) {
                *o += w * *v as f64;
            }
        }
    }
}

/// Averages per-vertex features (offset to the cell center in cell units,
/// vertex normal, one-hot of `labels[v] < parts`) over the vertices falling
/// in each cell; occupied cells get hit flag 1. Vertices outside `bounds`
/// are clamped into the border cells.
pub fn splat_volume(mesh: &TriangleMesh, labels: &[usize], parts: usize, resolution: usize, bounds: Aabb) -> FeatureVolume {
    assert_eq!(labels.len(), mesh.vertices().len(), "one part label per vertex");
    let channels = volume_channels(parts);
    let r = resolution.max(1);
    let mut sums = alloc::vec![0.0f64; r * r * r * channels];
    let mut counts = alloc::vec![0usize; r * r * r];
    let mut vol = FeatureVolume { resolution: r, bounds, channels, data: Vec::new() };
    let h = vol.cell_size();
    let mut clamped = 0usize;
    for (v, (x, n)) in mesh.vertices().iter().zip(mesh.vertex_normals()).enumerate() {
        let g = (x - bounds.min).component_div(&h);
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let c = g[a].floor();
            if !(c >= 0.0 && c < r as f64) {
                clamped += 1;
            }
            idx[a] = c.clamp(0.0, (r - 1) as f64) as usize;
        }
        let cell = (idx[2] * r + idx[1]) * r + idx[0];
        let offset = (x - vol.cell_center(idx[0], idx[1], idx[2])).component_div(&h);
        let s = &mut sums[cell * channels..(cell + 1) * channels];
        for a in 0..3 {
            s[a] += offset[a];
            s[3 + a] += n[a];
        }
        if labels[v] < parts {
            s[GEOMETRIC_CHANNELS + labels[v]] += 1.0;
        }
        counts[cell] += 1;
    }
    if clamped > 0 {
        log::warn!("{clamped} vertex coordinates outside the feature volume were clamped");
    }
    for (cell, &c) in counts.iter().enumerate() {
        if c > 0 {
            let s = &mut sums[cell * channels..(cell + 1) * channels];
            s.iter_mut().for_each(|x| *x /= c as f64);
            s[channels - 1] = 1.0;
        }
    }
    vol.data = sums.into_iter().map(|x| x as f32).collect();
    vol
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_bounds() -> Aabb {
        Aabb { min: Vec3::zeros(), max: Vec3::repeat(4.0) }
    }

    fn points(ps: &[Vec3]) -> TriangleMesh {
        // Vertex-only mesh; normals are zero without faces.
        TriangleMesh::from_parts_unchecked(ps.to_vec(), Vec::new())
    }

    #[test]
    fn single_vertex_cell() {
        let m = points(&[Vec3::new(1.5, 2.5, 0.5)]);
        let vol = splat_volume(&m, &[2], 4, 4, cube_bounds());
        let c = vol.cell(1, 2, 0);
        assert_eq!(&c[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(c[GEOMETRIC_CHANNELS + 2], 1.0);
        assert_eq!(c[vol.channels - 1], 1.0);
        assert!(vol.cell(0, 0, 0).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn opposite_normals_average_to_zero() {
        let m = TriangleMesh::from_parts_unchecked(
            alloc::vec![
                Vec3::new(0.1, 0.1, 0.2),
                Vec3::new(0.9, 0.1, 0.2),
                Vec3::new(0.1, 0.9, 0.2),
                Vec3::new(0.1, 0.1, 0.8),
                Vec3::new(0.1, 0.9, 0.8),
                Vec3::new(0.9, 0.1, 0.8),
            ],
            alloc::vec![[0, 2, 1], [3, 5, 4]],
        );
        let vol = splat_volume(&m, &[0; 6], 1, 4, cube_bounds());
        let c = vol.cell(0, 0, 0);
        assert!(c[3..6].iter().all(|x| x.abs() < 1e-7), "{:?}", &c[3..6]);
    }

    #[test]
    fn trilinear_center_midpoint_outside() {
        let m = points(&[Vec3::new(0.5, 0.5, 0.5), Vec3::new(1.5, 0.5, 0.5)]);
        let vol = splat_volume(&m, &[0, 1], 2, 4, cube_bounds());
        let mut out = alloc::vec![0.0; vol.channels];
        vol.sample(&Vec3::new(0.5, 0.5, 0.5), &mut out);
        assert_eq!(out[GEOMETRIC_CHANNELS], 1.0);
        assert_eq!(out[GEOMETRIC_CHANNELS + 1], 0.0);
        vol.sample(&Vec3::new(1.0, 0.5, 0.5), &mut out);
        assert_eq!(out[GEOMETRIC_CHANNELS], 0.5);
        assert_eq!(out[GEOMETRIC_CHANNELS + 1], 0.5);
        vol.sample(&Vec3::new(-0.1, 0.5, 0.5), &mut out);
        assert!(out.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn weights_partition_unity() {
        let ps: Vec<Vec3> = (0..64).map(|i| Vec3::new((i % 4) as f64 + 0.5, ((i / 4) % 4) as f64 + 0.5, (i / 16) as f64 + 0.5)).collect();
        let vol = splat_volume(&points(&ps), &[0; 64], 1, 4, cube_bounds());
        let mut out = alloc::vec![0.0; vol.channels];
        for q in [Vec3::new(0.7, 1.3, 2.9), Vec3::new(3.9, 0.01, 2.0), Vec3::new(2.0, 2.0, 2.0)] {
            vol.sample(&q, &mut out);
            assert!((out[vol.channels - 1] - 1.0).abs() < 1e-12);
        }
    }
}
