//! Triangle meshes and exact distance, sign, normal and ray queries.

mod bvh;
mod mesh;
mod primitives;
mod sdf;

pub use bvh::{build_bvh, Bvh, BvhNode, ClosestHit, RayHit, MAX_LEAF};
pub use mesh::{compute_vertex_normals, icosphere, make_box, unit_cube, TriangleMesh, VertexNormals};
pub use primitives::{closest_point_on_triangle, Feature, ShearedRay};
pub use sdf::{closest_point_brute_force, ray_nearest_hit_brute_force, MeshIndex, SdfQuery};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("face {face} references vertex {index} but the mesh has {vertices} vertices")]
    FaceIndexOutOfRange { face: usize, index: usize, vertices: usize },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
}
