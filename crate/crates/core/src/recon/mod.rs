//! Lattice evaluation and marching-cubes extraction.

mod mc_tables;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::geometry::{GeometryError, TriangleMesh};
use crate::math::{Aabb, Vec3};
use mc_tables::{EDGE_TABLE, TRI_TABLE};

/// Points per evaluation chunk.
pub const CHUNK: usize = 65_536;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReconError {
    #[error("grid resolution {0} is below 2")]
    ResolutionTooSmall(usize),
    #[error("non-finite value at ({x}, {y}, {z})")]
    NonFinite { x: f64, y: f64, z: f64 },
    #[error("extraction produced no surface; value histogram {histogram:?}")]
    EmptyExtraction { histogram: [usize; 10] },
    #[error("{0}")]
    Geometry(#[from] GeometryError),
    #[error("{0}")]
    Evaluation(String),
}

/// Which side of the iso level counts as inside.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// Occupancy: inside where the value exceeds the level.
    InsideAbove,
    /// Signed distance: inside where the value is below the level.
    InsideBelow,
}

/// Scalar samples on a `res³` lattice spanning `bounds` corner to corner.
/// Index order is x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub resolution: usize,
    pub bounds: Aabb,
    pub values: Vec<f64>,
}

/// Occupancy probabilities in [0, 1].
pub type OccupancyGrid = ScalarGrid;

impl ScalarGrid {
    pub fn len(&self) -> usize {
        self.resolution * self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> Vec3 {
        self.bounds.extent() / (self.resolution - 1) as f64
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let h = self.spacing();
        self.bounds.min + Vec3::new(i as f64 * h.x, j as f64 * h.y, k as f64 * h.z)
    }

    pub fn points(&self) -> Vec<Vec3> {
        lattice_points(self.resolution, &self.bounds)
    }

    /// Ten-bin histogram of the values clamped to [0, 1].
    pub fn histogram(&self) -> [usize; 10] {
        let mut h = [0; 10];
        for &v in &self.values {
            let b = ((v.clamp(0.0, 1.0) * 10.0) as usize).min(9);
            h[b] += 1;
        }
        h
    }
}

pub fn lattice_points(resolution: usize, bounds: &Aabb) -> Vec<Vec3> {
    let h = bounds.extent() / (resolution.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(resolution * resolution * resolution);
    for k in 0..resolution {
        for j in 0..resolution {
            for i in 0..resolution {
                out.push(bounds.min + Vec3::new(i as f64 * h.x, j as f64 * h.y, k as f64 * h.z));
            }
        }
    }
    out
}

/// Evaluates `f` over the lattice in chunks of [`CHUNK`] points. `f` fills
/// one output value per input point.
pub fn evaluate_grid<F>(resolution: usize, bounds: Aabb, mut f: F) -> Result<ScalarGrid, ReconError>
where
    F: FnMut(&[Vec3], &mut [f64]) -> Result<(), ReconError>,
{
    if resolution < 2 {
        return Err(ReconError::ResolutionTooSmall(resolution));
    }
    let points = lattice_points(resolution, &bounds);
    let mut values = alloc::vec![0.0; points.len()];
    for (pts, out) in points.chunks(CHUNK).zip(values.chunks_mut(CHUNK)) {
        f(pts, out)?;
        if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
            let p = pts[bad];
            return Err(ReconError::NonFinite { x: p.x, y: p.y, z: p.z });
        }
    }
    Ok(ScalarGrid { resolution, bounds, values })
}

// Corner offsets and edge endpoints in the table's layout.
const CORNERS: [[usize; 3]; 8] =
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];
const EDGES: [[usize; 2]; 12] =
    [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4], [0, 4], [1, 5], [2, 6], [3, 7]];

/// Keeps interpolated vertices off the lattice corners so that no triangle
/// collapses when a corner value sits exactly on the level.
const T_CLAMP: f64 = 1e-3;

/// Marching cubes on an occupancy grid at `iso` (inside above).
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Result<TriangleMesh, ReconError> {
    extract_surface(grid, iso, Polarity::InsideAbove)
}

/// Marching cubes with linear edge interpolation. Vertices on shared lattice
/// edges are welded, so a surface that stays inside the grid comes out
/// closed. Faces wind counter-clockwise seen from outside.
pub fn extract_surface(grid: &ScalarGrid, iso: f64, polarity: Polarity) -> Result<TriangleMesh, ReconError> {
    let n = grid.resolution;
    if n < 2 {
        return Err(ReconError::ResolutionTooSmall(n));
    }
    let (lo, hi) = grid.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(lo <= iso && iso <= hi) {
        log::warn!("iso level {iso} outside value range [{lo}, {hi}]; empty mesh");
        return Ok(TriangleMesh::empty());
    }
    // Table convention: a corner's bit is set when it is outside.
    let outside = |v: f64| match polarity {
        Polarity::InsideAbove => v <= iso,
        Polarity::InsideBelow => v >= iso,
    };

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut welded: BTreeMap<(usize, usize), u32> = BTreeMap::new();

    for k in 0..n - 1 {
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let mut ids = [0usize; 8];
                let mut vals = [0.0; 8];
                let mut case = 0usize;
                for c in 0..8 {
                    let [di, dj, dk] = CORNERS[c];
                    ids[c] = grid.index(i + di, j + dj, k + dk);
                    vals[c] = grid.values[ids[c]];
                    if outside(vals[c]) {
                        case |= 1 << c;
                    }
                }
                let mask = EDGE_TABLE[case];
                if mask == 0 {
                    continue;
                }
                let mut edge_vert = [u32::MAX; 12];
                for (e, &[a, b]) in EDGES.iter().enumerate() {
                    if mask & (1 << e) == 0 {
                        continue;
                    }
                    let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                    edge_vert[e] = *welded.entry(key).or_insert_with(|| {
                        let t = ((iso - vals[a]) / (vals[b] - vals[a])).clamp(T_CLAMP, 1.0 - T_CLAMP);
                        let pa = corner_point(grid, i, j, k, a);
                        let pb = corner_point(grid, i, j, k, b);
                        vertices.push(pa + (pb - pa) * t);
                        (vertices.len() - 1) as u32
                    });
                }
                let tris = &TRI_TABLE[case];
                let mut t = 0;
                while t < 16 && tris[t] >= 0 {
                    let (a, b, c) = (tris[t] as usize, tris[t + 1] as usize, tris[t + 2] as usize);
                    faces.push([edge_vert[a], edge_vert[b], edge_vert[c]]);
                    t += 3;
                }
            }
        }
    }
    if faces.is_empty() {
        return Ok(TriangleMesh::empty());
    }
    Ok(TriangleMesh::new(vertices, faces)?)
}

fn corner_point(grid: &ScalarGrid, i: usize, j: usize, k: usize, c: usize) -> Vec3 {
    let [di, dj, dk] = CORNERS[c];
    grid.point(i + di, j + dj, k + dk)
}

/// Extraction followed by the largest-connected-component filter.
pub fn extract_largest(grid: &ScalarGrid, iso: f64, polarity: Polarity) -> Result<TriangleMesh, ReconError> {
    let mesh = extract_surface(grid, iso, polarity)?;
    if mesh.is_empty() {
        return Err(ReconError::EmptyExtraction { histogram: grid.histogram() });
    }
    Ok(mesh.largest_component()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_grid(res: usize, r: f64) -> ScalarGrid {
        let b = Aabb { min: Vec3::repeat(-1.0), max: Vec3::repeat(1.0) };
        evaluate_grid(res, b, |pts, out| {
            for (p, o) in pts.iter().zip(out) {
                *o = if p.norm() < r { 1.0 } else { 0.0 };
            }
            Ok(())
        })
        .unwrap()
    }

    #[test]
    fn sphere_is_closed_and_outward() {
        let g = sphere_grid(32, 0.5);
        let m = marching_cubes(&g, 0.5).unwrap();
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.signed_volume() > 0.0);
        let cell = g.spacing().norm();
        for v in m.vertices() {
            assert!((v.norm() - 0.5).abs() < cell);
        }
    }

    #[test]
    fn sdf_polarity_matches_occupancy() {
        let b = Aabb { min: Vec3::repeat(-1.0), max: Vec3::repeat(1.0) };
        let g = evaluate_grid(24, b, |pts, out| {
            for (p, o) in pts.iter().zip(out) {
                *o = p.norm() - 0.6;
            }
            Ok(())
        })
        .unwrap();
        let m = extract_surface(&g, 0.0, Polarity::InsideBelow).unwrap();
        assert!(m.is_watertight());
        assert!(m.signed_volume() > 0.0);
        for v in m.vertices() {
            assert!((v.norm() - 0.6).abs() < 0.01);
        }
    }

    #[test]
    fn all_zero_grid_is_empty() {
        let g = ScalarGrid { resolution: 4, bounds: Aabb { min: Vec3::zeros(), max: Vec3::repeat(1.0) }, values: alloc::vec![0.0; 64] };
        assert!(marching_cubes(&g, 0.5).unwrap().is_empty());
        assert!(matches!(extract_largest(&g, 0.5, Polarity::InsideAbove), Err(ReconError::EmptyExtraction { .. })));
    }

    #[test]
    fn half_space_gives_plane() {
        let b = Aabb { min: Vec3::repeat(-1.0), max: Vec3::repeat(1.0) };
        let g = evaluate_grid(9, b, |pts, out| {
            for (p, o) in pts.iter().zip(out) {
                *o = if p.x < 0.0 { 1.0 } else { 0.0 };
            }
            Ok(())
        })
        .unwrap();
        let m = marching_cubes(&g, 0.5).unwrap();
        assert!(!m.is_empty());
        for v in m.vertices() {
            assert!(v.x.abs() <= g.spacing().x);
        }
        // Inside is x < 0, so the sheet faces +x.
        for f in 0..m.faces().len() {
            assert!(m.face_normal(f).x > 0.99);
        }
    }

    #[test]
    fn tiny_grid_evaluates_each_point_once() {
        let mut calls = 0;
        let b = Aabb { min: Vec3::zeros(), max: Vec3::repeat(1.0) };
        let g = evaluate_grid(2, b, |pts, out| {
            calls += pts.len();
            out.fill(0.25);
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 8);
        assert_eq!(g.values.len(), 8);
    }

    #[test]
    fn non_finite_value_reports_point() {
        let b = Aabb { min: Vec3::zeros(), max: Vec3::repeat(1.0) };
        let r = evaluate_grid(2, b, |_, out| {
            out.fill(0.0);
            out[7] = f64::NAN;
            Ok(())
        });
        assert_eq!(r, Err(ReconError::NonFinite { x: 1.0, y: 1.0, z: 1.0 }));
    }
}
