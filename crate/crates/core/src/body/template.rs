//! Procedural low-poly humanoid: capsule limbs blended into one closed
//! surface, polygonized with marching cubes.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{BodyModel, BodyModelParts};
use crate::math::{Aabb, Vec3};
use crate::recon::{evaluate_grid, extract_surface, Polarity};

pub const JOINT_NAMES: [&str; 16] = [
    "pelvis",
    "spine",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_hip",
    "right_knee",
    "right_ankle",
];

const PARENTS: [Option<usize>; 16] = [
    None,
    Some(0),
    Some(1),
    Some(2),
    Some(1),
    Some(4),
    Some(5),
    Some(1),
    Some(7),
    Some(8),
    Some(0),
    Some(10),
    Some(11),
    Some(0),
    Some(13),
    Some(14),
];

/// Segments around the thinnest limb.
pub const MIN_TEMPLATE_RESOLUTION: usize = 8;

// Smallest limb radius (forearm); sets the lattice spacing.
const THIN_RADIUS: f64 = 0.045;
const BLEND: f64 = 0.03;
const SKIN_TEMPERATURE: f64 = 0.2;
const MIN_SKIN_WEIGHT: f64 = 1e-3;
const CORRECTIVE_SCALE: f64 = 0.01;

/// The subject faces -z with +y up, so their left side is at -x. The
/// pelvis joint sits at the origin.
fn p(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y - 0.95, z)
}

#[derive(Clone, Copy)]
struct Part {
    owner: usize,
    a: Vec3,
    b: Vec3,
    radius: f64,
    /// Scale along z (body depth) relative to the radius.
    depth: f64,
    /// Scale along y, for the head.
    height: f64,
}

impl Part {
    fn capsule(owner: usize, a: Vec3, b: Vec3, radius: f64) -> Part {
        Part { owner, a, b, radius, depth: 1.0, height: 1.0 }
    }

    /// Distance to the axis in the part's stretched frame, in units of the
    /// radius.
    fn normalized_distance(&self, x: &Vec3) -> f64 {
        let s = Vec3::new(1.0, 1.0 / self.height, 1.0 / self.depth);
        let (x, a, b) = (x.component_mul(&s), self.a.component_mul(&s), self.b.component_mul(&s));
        let ab = b - a;
        let t = if ab.norm_squared() > 0.0 { ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
        (x - (a + ab * t)).norm() / self.radius
    }

    fn sdf(&self, x: &Vec3) -> f64 {
        (self.normalized_distance(x) - 1.0) * self.radius * self.depth.min(self.height)
    }

    fn axis_point(&self, x: &Vec3) -> Vec3 {
        let ab = self.b - self.a;
        let t = if ab.norm_squared() > 0.0 { ((x - self.a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
        self.a + ab * t
    }
}

struct Skeleton {
    joints: [Vec3; 16],
    hands: [Vec3; 2],
    toes: [Vec3; 2],
    parts: Vec<Part>,
}

fn skeleton() -> Skeleton {
    let joints = [
        p(0.0, 0.95, 0.0),
        p(0.0, 1.15, 0.0),
        p(0.0, 1.45, 0.0),
        p(0.0, 1.62, 0.0),
        p(-0.18, 1.40, 0.0),
        p(-0.38, 1.20, 0.0),
        p(-0.55, 1.02, 0.0),
        p(0.18, 1.40, 0.0),
        p(0.38, 1.20, 0.0),
        p(0.55, 1.02, 0.0),
        p(-0.09, 0.90, 0.0),
        p(-0.12, 0.50, 0.0),
        p(-0.14, 0.10, 0.0),
        p(0.09, 0.90, 0.0),
        p(0.12, 0.50, 0.0),
        p(0.14, 0.10, 0.0),
    ];
    let hands = [p(-0.62, 0.94, 0.0), p(0.62, 0.94, 0.0)];
    let toes = [p(-0.15, 0.03, -0.13), p(0.15, 0.03, -0.13)];
    let j = &joints;
    let torso = |owner, a, b| Part { owner, a, b, radius: 0.15, depth: 0.7, height: 1.0 };
    let parts = alloc::vec![
        torso(0, p(0.0, 0.88, 0.0), j[1]),
        Part::capsule(0, j[10], j[13], 0.1),
        torso(1, j[1], p(0.0, 1.36, 0.0)),
        Part::capsule(1, j[4], j[7], 0.065),
        Part::capsule(2, p(0.0, 1.36, 0.0), p(0.0, 1.52, 0.0), 0.055),
        Part { owner: 3, a: j[3], b: j[3], radius: 0.095, depth: 1.05, height: 1.2 },
        Part::capsule(4, j[4], j[5], 0.055),
        Part::capsule(5, j[5], j[6], THIN_RADIUS),
        Part::capsule(6, j[6], hands[0], 0.04),
        Part::capsule(7, j[7], j[8], 0.055),
        Part::capsule(8, j[8], j[9], THIN_RADIUS),
        Part::capsule(9, j[9], hands[1], 0.04),
        Part::capsule(10, j[10], j[11], 0.085),
        Part::capsule(11, j[11], j[12], 0.06),
        Part::capsule(12, j[12], toes[0], 0.045),
        Part::capsule(13, j[13], j[14], 0.085),
        Part::capsule(14, j[14], j[15], 0.06),
        Part::capsule(15, j[15], toes[1], 0.045),
    ];
    Skeleton { joints, hands, toes, parts }
}

fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

fn body_sdf(parts: &[Part], x: &Vec3) -> f64 {
    parts.iter().fold(f64::INFINITY, |acc, part| {
        let d = part.sdf(x);
        if acc.is_finite() {
            smooth_min(acc, d, BLEND)
        } else {
            d
        }
    })
}

/// Builds the 16-joint procedural body. `resolution` is the number of
/// lattice cells around the thinnest limb (clamped to at least
/// [`MIN_TEMPLATE_RESOLUTION`]); the default of 10 gives roughly two
/// thousand vertices. `seed` drives the pose-corrective fields.
pub fn make_procedural_template(seed: u64, resolution: usize) -> BodyModel {
    let resolution = if resolution < MIN_TEMPLATE_RESOLUTION {
        log::warn!("template resolution {resolution} raised to {MIN_TEMPLATE_RESOLUTION}");
        MIN_TEMPLATE_RESOLUTION
    } else {
        resolution
    };
    let sk = skeleton();
    let cell = 2.0 * core::f64::consts::PI * THIN_RADIUS / resolution as f64;
    let center = p(0.0, 0.86, -0.02);
    let half = 0.92;
    let cells = (2.0 * half / cell).ceil() as usize;
    let bounds = Aabb { min: center - Vec3::repeat(half), max: center - Vec3::repeat(half) + Vec3::repeat(cells as f64 * cell) };
    let grid = evaluate_grid(cells + 1, bounds, |pts, out| {
        for (x, o) in pts.iter().zip(out) {
            *o = body_sdf(&sk.parts, x);
        }
        Ok(())
    })
    .expect("lattice evaluation of an analytic field");
    let template = extract_surface(&grid, 0.0, Polarity::InsideBelow)
        .and_then(|m| Ok(m.largest_component()?))
        .expect("procedural body surface");
    let verts = template.vertices();
    let normals = template.vertex_normals();
    let nv = verts.len();

    let skin_weights: Vec<Vec<f64>> = verts.iter().map(|v| skin_row(&sk.parts, v)).collect();

    // Uniform weights over the vertices around each joint.
    let reg_radius = [0.2, 0.2, 0.1, 0.15, 0.1, 0.08, 0.07, 0.1, 0.08, 0.07, 0.14, 0.1, 0.09, 0.14, 0.1, 0.09];
    let mut joint_regressor = Vec::new();
    for (j, joint) in sk.joints.iter().enumerate() {
        let mut r = reg_radius[j];
        let members = loop {
            let m: Vec<usize> = (0..nv).filter(|&v| (verts[v] - joint).norm() <= r).collect();
            if m.len() >= 8 {
                break m;
            }
            r *= 1.25;
        };
        let w = 1.0 / members.len() as f64;
        joint_regressor.extend(members.into_iter().map(|v| (j, v, w)));
    }

    let shape_basis = shape_fields(&sk, verts, &skin_weights);
    let expr_basis = expression_fields(&sk, verts, &skin_weights);

    // Pose correctives: small normal offsets on the vertices driven by the
    // rotating joint, with seeded per-feature gains.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pose_basis = Vec::with_capacity(9 * 15);
    for j in 1..16 {
        for _ in 0..9 {
            let c: f64 = rng.sample(StandardNormal);
            pose_basis.push((0..nv).map(|v| normals[v] * (CORRECTIVE_SCALE * c * skin_weights[v][j])).collect());
        }
    }

    BodyModel::new(BodyModelParts {
        template,
        shape_basis,
        expr_basis,
        pose_basis,
        joint_regressor,
        skin_weights,
        parents: PARENTS.to_vec(),
        joint_names: JOINT_NAMES.iter().map(|s| s.to_string()).collect::<Vec<String>>(),
    })
    .expect("procedural body model is valid")
}

fn skin_row(parts: &[Part], v: &Vec3) -> Vec<f64> {
    let mut score = [f64::INFINITY; 16];
    for part in parts {
        let d = part.normalized_distance(v);
        score[part.owner] = score[part.owner].min(d);
    }
    let best = score.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = score.iter().map(|s| (-(s - best) / SKIN_TEMPERATURE).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w.iter_mut().for_each(|x| {
        if *x < MIN_SKIN_WEIGHT {
            *x = 0.0
        }
    });
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

fn weight_of(w: &[f64], joints: &[usize]) -> f64 {
    joints.iter().map(|&j| w[j]).sum()
}

const LEFT_ARM: [usize; 3] = [4, 5, 6];
const RIGHT_ARM: [usize; 3] = [7, 8, 9];
const LEFT_LEG: [usize; 3] = [10, 11, 12];
const RIGHT_LEG: [usize; 3] = [13, 14, 15];

/// Height, girth, arm length, leg length, shoulder width, torso depth, head
/// size, belly.
fn shape_fields(sk: &Skeleton, verts: &[Vec3], weights: &[Vec<f64>]) -> Vec<Vec<Vec3>> {
    let j = &sk.joints;
    let feet = verts.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
    let limb = |v: &Vec3, w: &[f64], joints: [usize; 3], start: Vec3, end: Vec3| {
        let dir = (end - start).normalize();
        dir * ((v - start).dot(&dir).max(0.0) * 0.1 * weight_of(w, &joints))
    };
    let nearest_axis = |v: &Vec3| {
        sk.parts
            .iter()
            .min_by(|a, b| a.normalized_distance(v).total_cmp(&b.normalized_distance(v)))
            .map(|part| part.axis_point(v))
            .unwrap()
    };
    let fields: [&dyn Fn(&Vec3, &[f64]) -> Vec3; 8] = [
        &|v, _| Vec3::new(0.0, 0.08 * (v.y - feet), 0.0),
        &|v, _| (v - nearest_axis(v)) * 0.12,
        &|v, w| limb(v, w, LEFT_ARM, j[4], sk.hands[0]) + limb(v, w, RIGHT_ARM, j[7], sk.hands[1]),
        &|v, w| {
            // Lengthen the legs downward, keeping the hips in place.
            let l = limb(v, w, LEFT_LEG, j[10], sk.toes[0]) + limb(v, w, RIGHT_LEG, j[13], sk.toes[1]);
            Vec3::new(l.x, l.y, 0.0)
        },
        &|v, w| {
            let arms = weight_of(w, &LEFT_ARM) + weight_of(w, &RIGHT_ARM);
            Vec3::new(0.04 * v.x.signum() * arms + 0.15 * v.x * w[1], 0.0, 0.0)
        },
        &|v, w| Vec3::new(0.0, 0.0, 0.15 * v.z * (w[0] + w[1])),
        &|v, w| (v - j[3]) * (0.12 * w[3]),
        &|v, w| {
            let around = (-((v.y - 0.1) / 0.12).powi(2) - (v.x / 0.12).powi(2)).exp();
            Vec3::new(0.0, 0.0, -0.05 * around * (-v.z / 0.1).clamp(0.0, 1.0) * (w[0] + w[1]))
        },
    ];
    fields.iter().map(|f| verts.iter().zip(weights).map(|(v, w)| f(v, w)).collect()).collect()
}

/// Jaw drop and cheek width.
fn expression_fields(sk: &Skeleton, verts: &[Vec3], weights: &[Vec<f64>]) -> Vec<Vec<Vec3>> {
    let head = sk.joints[3];
    let jaw = |v: &Vec3, w: &[f64]| {
        let below = ((head.y - v.y) / 0.08).clamp(0.0, 1.0);
        let front = (-(v.z - head.z) / 0.08).clamp(0.0, 1.0);
        Vec3::new(0.0, -0.02 * below * front * w[3], 0.0)
    };
    let cheeks = |v: &Vec3, w: &[f64]| {
        let level = (-((v.y - head.y + 0.02) / 0.04).powi(2)).exp();
        Vec3::new(0.015 * (v.x - head.x) / 0.1 * level * w[3], 0.0, 0.0)
    };
    alloc::vec![
        verts.iter().zip(weights).map(|(v, w)| jaw(v, w)).collect(),
        verts.iter().zip(weights).map(|(v, w)| cheeks(v, w)).collect(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_is_closed_genus_zero() {
        let m = make_procedural_template(0, 10);
        let t = m.template();
        assert!(t.is_watertight());
        assert_eq!(t.euler_characteristic(), 2);
        assert_eq!(t.connected_components().len(), 1);
        assert!(t.signed_volume() > 0.0);
        let n = t.vertices().len();
        assert!((1000..=3500).contains(&n), "{n} vertices");
    }

    #[test]
    fn joints_regress_near_skeleton() {
        let m = make_procedural_template(0, 10);
        let sk = skeleton();
        let joints = m.joints_rest(&[0.0; 8], &[0.0; 2]);
        for (j, (a, b)) in joints.iter().zip(&sk.joints).enumerate() {
            assert!((a - b).norm() < 0.05, "joint {j}: {a:?} vs {b:?}");
        }
        // Mirror symmetry of the left/right pairs.
        assert!((joints[4].x + joints[7].x).abs() < 1e-3);
    }
}
