//! Bounding-volume hierarchy over mesh faces.
//!
//! Built top-down with binned surface-area-heuristic splits; leaves hold at
//! most [`MAX_LEAF`] faces. Nodes live in one flat array with the two
//! children of an interior node stored next to each other.

use alloc::vec::Vec;

use super::primitives::{closest_point_on_triangle, Feature, ShearedRay};
use super::{GeometryError, TriangleMesh};
use crate::math::{Aabb, Vec3};

pub const MAX_LEAF: usize = 4;
const BINS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhNode {
    pub bounds: Aabb,
    /// Leaf: first entry in `order`. Interior: index of the left child (the
    /// right child follows it).
    pub start: u32,
    /// Number of faces for a leaf, zero for interior nodes.
    pub count: u32,
}

impl BvhNode {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
}

/// Nearest surface point found by a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub face: usize,
    pub point: Vec3,
    pub distance_squared: f64,
    pub feature: Feature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: usize,
    pub point: Vec3,
}

struct Build<'a> {
    boxes: Vec<Aabb>,
    centroids: Vec<Vec3>,
    order: &'a mut [u32],
}

pub fn build_bvh(mesh: &TriangleMesh) -> Result<Bvh, GeometryError> {
    Bvh::build(mesh)
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Result<Self, GeometryError> {
        let n = mesh.faces().len();
        if n == 0 {
            return Err(GeometryError::EmptyMesh);
        }
        let boxes: Vec<Aabb> = (0..n).map(|f| Aabb::from_points(&mesh.triangle(f))).collect();
        let centroids = boxes.iter().map(Aabb::center).collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n);
        nodes.push(BvhNode { bounds: Aabb::EMPTY, start: 0, count: 0 });
        let mut b = Build { boxes, centroids, order: &mut order };
        b.split(&mut nodes, 0, 0, n, 0);
        Ok(Bvh { nodes, order })
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    /// Faces in leaf order.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Closest surface point to `p`. Ties in distance go to the lower face
    /// index, so the answer matches a linear scan exactly.
    pub fn closest_point(&self, mesh: &TriangleMesh, p: &Vec3) -> ClosestHit {
        let mut best = ClosestHit { face: usize::MAX, point: Vec3::zeros(), distance_squared: f64::INFINITY, feature: Feature::Face };
        let mut stack: [u32; 64] = [0; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.bounds.distance_squared(p) > best.distance_squared {
                continue;
            }
            if node.is_leaf() {
                for &f in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let f = f as usize;
                    let [a, b, c] = mesh.triangle(f);
                    let (q, feature) = closest_point_on_triangle(p, &a, &b, &c);
                    let d2 = (q - p).norm_squared();
                    if d2 < best.distance_squared || (d2 == best.distance_squared && f < best.face) {
                        best = ClosestHit { face: f, point: q, distance_squared: d2, feature };
                    }
                }
            } else {
                let l = node.start as usize;
                let (dl, dr) = (self.nodes[l].bounds.distance_squared(p), self.nodes[l + 1].bounds.distance_squared(p));
                // Visit the nearer child first.
                let (first, second) = if dl <= dr { (l, l + 1) } else { (l + 1, l) };
                stack[sp] = second as u32;
                stack[sp + 1] = first as u32;
                sp += 2;
            }
        }
        best
    }

    /// Smallest `t >= 0` intersection along `origin + t * dir`.
    pub fn ray_nearest_hit(&self, mesh: &TriangleMesh, origin: &Vec3, dir: &Vec3) -> Option<RayHit> {
        let ray = ShearedRay::new(*origin, *dir);
        let mut best: Option<(f64, usize)> = None;
        let mut t_max = f64::INFINITY;
        let mut stack: [u32; 64] = [0; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.bounds.ray_entry(origin, &ray.inv_dir, t_max).is_none() {
                continue;
            }
            if node.is_leaf() {
                for &f in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let f = f as usize;
                    let [a, b, c] = mesh.triangle(f);
                    if let Some(t) = ray.intersect(&a, &b, &c) {
                        let better = match best {
                            None => true,
                            Some((bt, bf)) => t < bt || (t == bt && f < bf),
                        };
                        if better {
                            best = Some((t, f));
                            t_max = t;
                        }
                    }
                }
            } else {
                let l = node.start as usize;
                stack[sp] = l as u32 + 1;
                stack[sp + 1] = l as u32;
                sp += 2;
            }
        }
        best.map(|(t, face)| RayHit { t, face, point: origin + dir * t })
    }

    /// Every intersection along the ray, as sorted `t` values.
    pub fn ray_all_hits(&self, mesh: &TriangleMesh, origin: &Vec3, dir: &Vec3) -> Vec<f64> {
        let ray = ShearedRay::new(*origin, *dir);
        let mut hits = Vec::new();
        let mut stack: Vec<u32> = alloc::vec![0];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i as usize];
            if node.bounds.ray_entry(origin, &ray.inv_dir, f64::INFINITY).is_none() {
                continue;
            }
            if node.is_leaf() {
                for &f in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = mesh.triangle(f as usize);
                    if let Some(t) = ray.intersect(&a, &b, &c) {
                        hits.push(t);
                    }
                }
            } else {
                stack.push(node.start);
                stack.push(node.start + 1);
            }
        }
        hits.sort_by(|a, b| a.total_cmp(b));
        hits
    }
}

impl Build<'_> {
    fn split(&mut self, nodes: &mut Vec<BvhNode>, node: usize, start: usize, end: usize, depth: usize) {
        let bounds = self.order[start..end].iter().fold(Aabb::EMPTY, |b, &f| b.union(&self.boxes[f as usize]));
        let count = end - start;
        nodes[node].bounds = bounds;
        if count <= MAX_LEAF {
            nodes[node].start = start as u32;
            nodes[node].count = count as u32;
            return;
        }
        // Deep chains fall back to median splits so traversal stacks stay bounded.
        let mid = self.choose_split(start, end, depth < 40);
        let left = nodes.len();
        nodes.push(BvhNode { bounds: Aabb::EMPTY, start: 0, count: 0 });
        nodes.push(BvhNode { bounds: Aabb::EMPTY, start: 0, count: 0 });
        nodes[node].start = left as u32;
        nodes[node].count = 0;
        self.split(nodes, left, start, mid, depth + 1);
        self.split(nodes, left + 1, mid, end, depth + 1);
    }

    /// Partitions `order[start..end]` and returns the split position.
    fn choose_split(&mut self, start: usize, end: usize, use_sah: bool) -> usize {
        let cb = self.order[start..end].iter().fold(Aabb::EMPTY, |mut b, &f| {
            b.grow(&self.centroids[f as usize]);
            b
        });
        let ext = cb.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let lo = cb.min[axis];
        let span = ext[axis];
        if span > 0.0 && use_sah {
            let bin_of = |c: f64| (((c - lo) / span * BINS as f64) as usize).min(BINS - 1);
            let mut bin_box = [Aabb::EMPTY; BINS];
            let mut bin_count = [0usize; BINS];
            for &f in &self.order[start..end] {
                let b = bin_of(self.centroids[f as usize][axis]);
                bin_count[b] += 1;
                bin_box[b] = bin_box[b].union(&self.boxes[f as usize]);
            }
            // Sweep from the right to get suffix areas, then from the left.
            let mut right_area = [0.0; BINS];
            let mut right_count = [0usize; BINS];
            let (mut acc, mut n) = (Aabb::EMPTY, 0);
            for i in (1..BINS).rev() {
                acc = acc.union(&bin_box[i]);
                n += bin_count[i];
                right_area[i] = acc.surface_area();
                right_count[i] = n;
            }
            let (mut acc, mut n) = (Aabb::EMPTY, 0);
            let mut best = (f64::INFINITY, 0usize);
            for i in 0..BINS - 1 {
                acc = acc.union(&bin_box[i]);
                n += bin_count[i];
                if n == 0 || right_count[i + 1] == 0 {
                    continue;
                }
                let cost = acc.surface_area() * n as f64 + right_area[i + 1] * right_count[i + 1] as f64;
                if cost < best.0 {
                    best = (cost, i + 1);
                }
            }
            if best.0.is_finite() {
                let centroids = &self.centroids;
                let slice = &mut self.order[start..end];
                let mut i = 0;
                for j in 0..slice.len() {
                    if bin_of(centroids[slice[j] as usize][axis]) < best.1 {
                        slice.swap(i, j);
                        i += 1;
                    }
                }
                if i > 0 && i < slice.len() {
                    return start + i;
                }
            }
        }
        // Coincident centroids: split by count.
        let centroids = &self.centroids;
        self.order[start..end].sort_by(|&a, &b| {
            centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis]).then(a.cmp(&b))
        });
        start + (end - start) / 2
    }
}
