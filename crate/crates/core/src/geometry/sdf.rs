//! Signed distance, inside tests and ray casts against a prepared mesh.

use alloc::vec::Vec;

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;
use super::bvh::{Bvh, ClosestHit, RayHit};
use super::primitives::Feature;
use super::{GeometryError, TriangleMesh};
use crate::math::{corner_angle, normalize_or_zero, Vec3};

/// Pseudonormal dot products below this are too close to tangent to sign.
const SIGN_EPS: f64 = 1e-6;

/// Directions for the ray-parity vote; deliberately off-axis.
const PARITY_DIRS: [[f64; 3]; 3] = [
    [0.5773502691896258, 0.5773502691896258, 0.5773502691896258],
    [-0.2672612419124244, 0.5345224838248488, -0.8017837257372732],
    [0.8164965809277261, -0.4082482904638631, -0.4082482904638631],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfQuery {
    /// Negative inside.
    pub distance: f64,
    pub closest_point: Vec3,
    pub closest_face: usize,
    /// Pseudonormal at the closest feature.
    pub normal: Vec3,
    /// False when the sign came from ray parity on a mesh that is not closed.
    pub sign_reliable: bool,
}

/// Mesh plus everything needed for exact signed-distance queries: a BVH and
/// angle-weighted pseudonormals for faces, edges and vertices.
#[derive(Debug, Clone)]
pub struct MeshIndex {
    mesh: TriangleMesh,
    bvh: Bvh,
    face_normals: Vec<Vec3>,
    /// Per face, per edge `k -> k+1`: sum of the adjacent face normals.
    edge_normals: Vec<[Vec3; 3]>,
    vertex_normals: Vec<Vec3>,
    watertight: bool,
}

impl MeshIndex {
    pub fn new(mesh: TriangleMesh) -> Result<Self, GeometryError> {
        let bvh = Bvh::build(&mesh)?;
        let face_normals: Vec<Vec3> = (0..mesh.faces().len()).map(|f| mesh.face_normal(f)).collect();

        let mut vertex_normals = alloc::vec![Vec3::zeros(); mesh.vertices().len()];
        for (f, face) in mesh.faces().iter().enumerate() {
            let [a, b, c] = mesh.triangle(f);
            let n = face_normals[f];
            vertex_normals[face[0] as usize] += n * corner_angle(&a, &b, &c);
            vertex_normals[face[1] as usize] += n * corner_angle(&b, &c, &a);
            vertex_normals[face[2] as usize] += n * corner_angle(&c, &a, &b);
        }

        let mut edge_normals: Vec<[Vec3; 3]> = face_normals.iter().map(|n| [*n; 3]).collect();
        for (_, faces) in mesh.edge_faces() {
            if faces.len() != 2 {
                continue;
            }
            let (f0, f1) = (faces[0] as usize, faces[1] as usize);
            let sum = face_normals[f0] + face_normals[f1];
            for &f in &[f0, f1] {
                let other = if f == f0 { f1 } else { f0 };
                let face = mesh.faces()[f];
                for k in 0..3 {
                    let e = [face[k], face[(k + 1) % 3]];
                    let of = mesh.faces()[other];
                    if of.contains(&e[0]) && of.contains(&e[1]) {
                        edge_normals[f][k] = sum;
                    }
                }
            }
        }
        let watertight = mesh.is_watertight();
        if !watertight {
            log::warn!("mesh is not watertight; inside tests fall back to ray parity");
        }
        Ok(MeshIndex { mesh, bvh, face_normals, edge_normals, vertex_normals, watertight })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn closest_point(&self, x: &Vec3) -> ClosestHit {
        self.bvh.closest_point(&self.mesh, x)
    }

    pub fn ray_nearest_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<RayHit> {
        self.bvh.ray_nearest_hit(&self.mesh, origin, dir)
    }

    fn pseudonormal(&self, hit: &ClosestHit) -> Vec3 {
        let face = self.mesh.faces()[hit.face];
        match hit.feature {
            Feature::Face => self.face_normals[hit.face],
            Feature::Edge(k) => self.edge_normals[hit.face][k as usize],
            Feature::Vertex(k) => self.vertex_normals[face[k as usize] as usize],
        }
    }

    /// Inside test by majority vote of ray-parity counts along fixed
    /// directions.
    pub fn inside_by_parity(&self, x: &Vec3) -> bool {
        let votes = PARITY_DIRS
            .iter()
            .filter(|d| {
                let dir = Vec3::new(d[0], d[1], d[2]);
                let mut hits = self.bvh.ray_all_hits(&self.mesh, x, &dir);
                // A ray through a shared edge reports the same crossing twice.
                hits.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
                hits.len() % 2 == 1
            })
            .count();
        votes >= 2
    }

    pub fn signed_distance(&self, x: &Vec3) -> SdfQuery {
        let hit = self.closest_point(x);
        let distance = hit.distance_squared.sqrt();
        let pn = normalize_or_zero(&self.pseudonormal(&hit));
        let mut query = SdfQuery { distance, closest_point: hit.point, closest_face: hit.face, normal: pn, sign_reliable: true };
        if distance == 0.0 {
            return query;
        }
        let inside = if self.watertight {
            let dot = (x - hit.point).dot(&pn) / distance;
            if dot.abs() >= SIGN_EPS {
                dot < 0.0
            } else {
                self.inside_by_parity(x)
            }
        } else {
            query.sign_reliable = false;
            self.inside_by_parity(x)
        };
        if inside {
            query.distance = -distance;
        }
        query
    }

    /// Vertex of the closest face that is nearest to `x`.
    pub fn nearest_vertex(&self, x: &Vec3) -> usize {
        let hit = self.closest_point(x);
        let face = self.mesh.faces()[hit.face];
        let verts = self.mesh.vertices();
        *face
            .iter()
            .min_by(|&&a, &&b| (verts[a as usize] - x).norm_squared().total_cmp(&(verts[b as usize] - x).norm_squared()))
            .unwrap() as usize
    }
}

/// Linear-scan reference for closest-point queries. Same tie rule as the BVH.
pub fn closest_point_brute_force(mesh: &TriangleMesh, x: &Vec3) -> ClosestHit {
    let mut best = ClosestHit { face: usize::MAX, point: Vec3::zeros(), distance_squared: f64::INFINITY, feature: Feature::Face };
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(f);
        let (q, feature) = super::primitives::closest_point_on_triangle(x, &a, &b, &c);
        let d2 = (q - x).norm_squared();
        if d2 < best.distance_squared {
            best = ClosestHit { face: f, point: q, distance_squared: d2, feature };
        }
    }
    best
}

/// Linear-scan reference for nearest ray hits.
pub fn ray_nearest_hit_brute_force(mesh: &TriangleMesh, origin: &Vec3, dir: &Vec3) -> Option<RayHit> {
    let ray = super::primitives::ShearedRay::new(*origin, *dir);
    let mut best: Option<(f64, usize)> = None;
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(f);
        if let Some(t) = ray.intersect(&a, &b, &c) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, f));
            }
        }
    }
    best.map(|(t, face)| RayHit { t, face, point: origin + dir * t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::{icosphere, unit_cube};

    #[test]
    fn cube_distances() {
        let idx = MeshIndex::new(unit_cube()).unwrap();
        let q = idx.signed_distance(&Vec3::zeros());
        assert_eq!(q.distance, -1.0);
        assert_eq!(idx.signed_distance(&Vec3::new(2.0, 0.0, 0.0)).distance, 1.0);
        let q = idx.signed_distance(&Vec3::new(1.5, 1.5, 0.0));
        assert!((q.distance - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((q.closest_point - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
        // Corner region: vertex pseudonormal.
        let q = idx.signed_distance(&Vec3::new(1.2, 1.3, 1.1));
        assert!(q.distance > 0.0);
        let q = idx.signed_distance(&Vec3::new(0.99, 0.98, 0.97));
        assert!(q.distance < 0.0);
    }

    #[test]
    fn surface_point_has_zero_distance() {
        let idx = MeshIndex::new(unit_cube()).unwrap();
        assert_eq!(idx.signed_distance(&Vec3::new(1.0, 0.0, 0.0)).distance, 0.0);
    }

    #[test]
    fn parity_agrees_on_sphere() {
        let idx = MeshIndex::new(icosphere(1.0, 2)).unwrap();
        assert!(idx.inside_by_parity(&Vec3::new(0.1, 0.2, 0.3)));
        assert!(!idx.inside_by_parity(&Vec3::new(1.1, 0.2, 0.3)));
    }

    #[test]
    fn open_mesh_sign_flagged() {
        let m = TriangleMesh::new(alloc::vec![Vec3::zeros(), Vec3::x(), Vec3::y()], alloc::vec![[0, 1, 2]]).unwrap();
        let idx = MeshIndex::new(m).unwrap();
        let q = idx.signed_distance(&Vec3::new(0.2, 0.2, 1.0));
        assert!(!q.sign_reliable);
        assert_eq!(q.distance, 1.0);
    }
}
