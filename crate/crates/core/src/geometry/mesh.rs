use alloc::vec::Vec;

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;
use super::GeometryError;
use crate::math::{corner_angle, normalize_or_zero, Aabb, Vec3};

/// Indexed triangle surface.
///
/// Faces are counter-clockwise seen from outside, so face normals point out
/// of closed meshes.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    vertex_normals: Vec<Vec3>,
}

/// Angle-weighted vertex normals plus the vertices that belong to no face.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexNormals {
    pub normals: Vec<Vec3>,
    pub isolated: Vec<usize>,
}

impl TriangleMesh {
    /// Validates indices, drops degenerate faces and computes vertex normals.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        for (f, face) in faces.iter().enumerate() {
            for &i in face {
                if i as usize >= n {
                    return Err(GeometryError::FaceIndexOutOfRange { face: f, index: i as usize, vertices: n });
                }
            }
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFiniteVertex(i));
        }
        let diag = Aabb::from_points(&vertices).diagonal();
        let min_area = 1e-12 * diag * diag;
        let before = faces.len();
        let faces: Vec<[u32; 3]> = faces
            .into_iter()
            .filter(|f| {
                let [a, b, c] = f.map(|i| vertices[i as usize]);
                f[0] != f[1] && f[1] != f[2] && f[0] != f[2] && 0.5 * (b - a).cross(&(c - a)).norm() >= min_area
            })
            .collect();
        if faces.len() != before {
            log::warn!("dropped {} degenerate faces", before - faces.len());
        }
        let mut mesh = TriangleMesh { vertices, faces, vertex_normals: Vec::new() };
        mesh.vertex_normals = compute_vertex_normals(&mesh).normals;
        Ok(mesh)
    }

    /// Builds a mesh without cleaning, keeping every face. Used when the
    /// topology is known good and must be preserved (posed body meshes).
    pub fn from_parts_unchecked(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Self {
        debug_assert!(faces.iter().flatten().all(|&i| (i as usize) < vertices.len()));
        let mut mesh = TriangleMesh { vertices, faces, vertex_normals: Vec::new() };
        mesh.vertex_normals = compute_vertex_normals(&mesh).normals;
        mesh
    }

    pub fn empty() -> Self {
        TriangleMesh { vertices: Vec::new(), faces: Vec::new(), vertex_normals: Vec::new() }
    }

    #[inline]
    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    #[inline]
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    #[inline]
    pub fn vertex_normals(&self) -> &[Vec3] {
        &self.vertex_normals
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    #[inline]
    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].map(|i| self.vertices[i as usize])
    }

    /// Unit normal of face `f`.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        normalize_or_zero(&(b - a).cross(&(c - a)))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Applies `map` to every vertex; topology is unchanged.
    pub fn map_vertices(&self, map: impl Fn(&Vec3) -> Vec3) -> Result<Self, GeometryError> {
        TriangleMesh::new(self.vertices.iter().map(map).collect(), self.faces.clone())
    }

    /// Undirected edges with the faces that use them.
    pub fn edge_faces(&self) -> Vec<([u32; 2], Vec<u32>)> {
        let mut half: Vec<([u32; 2], u32)> = Vec::with_capacity(self.faces.len() * 3);
        for (f, face) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (face[k], face[(k + 1) % 3]);
                half.push(([a.min(b), a.max(b)], f as u32));
            }
        }
        half.sort_unstable();
        let mut out: Vec<([u32; 2], Vec<u32>)> = Vec::new();
        for (e, f) in half {
            match out.last_mut() {
                Some((last, fs)) if *last == e => fs.push(f),
                _ => out.push((e, alloc::vec![f])),
            }
        }
        out
    }

    /// Closed, consistently oriented 2-manifold: every edge is used by exactly
    /// two faces, once in each direction.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut directed: Vec<(u32, u32)> = Vec::with_capacity(self.faces.len() * 3);
        for face in &self.faces {
            for k in 0..3 {
                directed.push((face[k], face[(k + 1) % 3]));
            }
        }
        directed.sort_unstable();
        if directed.windows(2).any(|w| w[0] == w[1]) {
            return false;
        }
        directed.iter().all(|&(a, b)| directed.binary_search(&(b, a)).is_ok())
    }

    /// V - E + F over the vertices referenced by faces.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = alloc::vec![false; self.vertices.len()];
        for f in &self.faces {
            for &i in f {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_faces().len() as i64 + self.faces.len() as i64
    }

    /// Signed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Connected components over shared vertices, as lists of face indices.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for f in &self.faces {
            for k in 1..3 {
                let a = find(&mut parent, f[0] as usize);
                let b = find(&mut parent, f[k] as usize);
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut label = alloc::vec![usize::MAX; n];
        let mut comps: Vec<Vec<usize>> = Vec::new();
        for (fi, f) in self.faces.iter().enumerate() {
            let root = find(&mut parent, f[0] as usize);
            if label[root] == usize::MAX {
                label[root] = comps.len();
                comps.push(Vec::new());
            }
            comps[label[root]].push(fi);
        }
        comps
    }

    /// Sub-mesh made of the listed faces, with unused vertices removed.
    pub fn select_faces(&self, faces: &[usize]) -> Result<Self, GeometryError> {
        let mut remap = alloc::vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut out = Vec::with_capacity(faces.len());
        for &f in faces {
            let tri = self.faces[f].map(|i| {
                let slot = &mut remap[i as usize];
                if *slot == u32::MAX {
                    *slot = vertices.len() as u32;
                    vertices.push(self.vertices[i as usize]);
                }
                *slot
            });
            out.push(tri);
        }
        TriangleMesh::new(vertices, out)
    }

    /// Largest connected component by face count (ties: first found).
    pub fn largest_component(&self) -> Result<Self, GeometryError> {
        let comps = self.connected_components();
        match comps.iter().enumerate().max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0))) {
            Some((_, faces)) if comps.len() > 1 => self.select_faces(faces),
            _ => Ok(self.clone()),
        }
    }
}

/// Angle-weighted average of incident face normals, normalized.
pub fn compute_vertex_normals(mesh: &TriangleMesh) -> VertexNormals {
    let verts = mesh.vertices();
    let mut acc = alloc::vec![Vec3::zeros(); verts.len()];
    for face in mesh.faces() {
        let [a, b, c] = face.map(|i| verts[i as usize]);
        let n = normalize_or_zero(&(b - a).cross(&(c - a)));
        acc[face[0] as usize] += n * corner_angle(&a, &b, &c);
        acc[face[1] as usize] += n * corner_angle(&b, &c, &a);
        acc[face[2] as usize] += n * corner_angle(&c, &a, &b);
    }
    let mut isolated = Vec::new();
    let normals = acc
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let n = normalize_or_zero(v);
            if n == Vec3::zeros() {
                isolated.push(i);
            }
            n
        })
        .collect();
    if !isolated.is_empty() {
        log::warn!("{} vertices have no incident face; their normals are zero", isolated.len());
    }
    VertexNormals { normals, isolated }
}

/// Axis-aligned box `[min, max]` as 12 outward-facing triangles.
pub fn make_box(min: Vec3, max: Vec3) -> TriangleMesh {
    let v = |x: usize, y: usize, z: usize| {
        Vec3::new(if x == 0 { min.x } else { max.x }, if y == 0 { min.y } else { max.y }, if z == 0 { min.z } else { max.z })
    };
    let vertices = alloc::vec![v(0, 0, 0), v(1, 0, 0), v(1, 1, 0), v(0, 1, 0), v(0, 0, 1), v(1, 0, 1), v(1, 1, 1), v(0, 1, 1)];
    let faces = alloc::vec![
        [0, 3, 2], [0, 2, 1], // -z
        [4, 5, 6], [4, 6, 7], // +z
        [0, 1, 5], [0, 5, 4], // -y
        [3, 7, 6], [3, 6, 2], // +y
        [0, 4, 7], [0, 7, 3], // -x
        [1, 2, 6], [1, 6, 5], // +x
    ];
    TriangleMesh::new(vertices, faces).expect("box topology is valid")
}

/// Cube `[-1, 1]^3`.
pub fn unit_cube() -> TriangleMesh {
    make_box(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0))
}

/// Icosphere with `subdivisions` rounds of 4-way splitting (20 * 4^s faces).
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = alloc::vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: Vec<((u32, u32), u32)> = Vec::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            if let Some(&(_, i)) = midpoints.iter().find(|(k, _)| *k == key) {
                return i;
            }
            let m = ((vertices[a as usize] + vertices[b as usize]) * 0.5).normalize();
            vertices.push(m);
            let i = (vertices.len() - 1) as u32;
            midpoints.push((key, i));
            i
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    TriangleMesh::new(vertices, faces).expect("icosphere topology is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_is_closed_and_outward() {
        let m = unit_cube();
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.signed_volume() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn cube_corner_normal() {
        let m = unit_cube();
        let s = 1.0 / 3.0f64.sqrt();
        for (v, n) in m.vertices().iter().zip(m.vertex_normals()) {
            let expect = v.map(|c| c.signum() * s);
            assert!((n - expect).norm() < 1e-12, "{n:?} vs {expect:?}");
        }
    }

    #[test]
    fn flat_plane_normals_point_up() {
        let mut verts = Vec::new();
        let mut faces = Vec::new();
        for j in 0..4 {
            for i in 0..4 {
                verts.push(Vec3::new(i as f64, j as f64, 0.0));
            }
        }
        for j in 0..3u32 {
            for i in 0..3u32 {
                let a = j * 4 + i;
                faces.push([a, a + 1, a + 5]);
                faces.push([a, a + 5, a + 4]);
            }
        }
        let m = TriangleMesh::new(verts, faces).unwrap();
        for n in m.vertex_normals() {
            assert!((n - Vec3::z()).norm() < 1e-12);
        }
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let m = icosphere(1.0, 3);
        assert_eq!(m.faces().len(), 1280);
        assert!(m.is_watertight());
        for (v, n) in m.vertices().iter().zip(m.vertex_normals()) {
            assert!(n.dot(&v.normalize()) > 0.999);
        }
    }

    #[test]
    fn isolated_vertex_flagged() {
        let m = TriangleMesh::new(
            alloc::vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(5.0, 5.0, 5.0)],
            alloc::vec![[0, 1, 2]],
        )
        .unwrap();
        let vn = compute_vertex_normals(&m);
        assert_eq!(vn.isolated, alloc::vec![3]);
        assert_eq!(vn.normals[3], Vec3::zeros());
    }

    #[test]
    fn degenerate_face_dropped_and_bad_index_rejected() {
        let verts = alloc::vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(2.0, 0.0, 0.0)];
        let m = TriangleMesh::new(verts.clone(), alloc::vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(m.faces().len(), 1);
        assert!(matches!(
            TriangleMesh::new(verts, alloc::vec![[0, 1, 9]]),
            Err(GeometryError::FaceIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn largest_component_filter() {
        let a = unit_cube();
        let b = icosphere(0.2, 1);
        let mut verts = a.vertices().to_vec();
        let off = verts.len() as u32;
        verts.extend(b.vertices().iter().map(|v| v + Vec3::new(5.0, 0.0, 0.0)));
        let mut faces = a.faces().to_vec();
        faces.extend(b.faces().iter().map(|f| f.map(|i| i + off)));
        let m = TriangleMesh::new(verts, faces).unwrap();
        assert_eq!(m.connected_components().len(), 2);
        let big = m.largest_component().unwrap();
        assert_eq!(big.faces().len(), 80);
    }
}
