//! Synthetic scenes: posed template bodies with procedural "cloth"
//! displacement, orthographic views around the up axis, silhouettes and
//! projected joints.

use alloc::vec::Vec;

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::body::{BodyModel, BodyParams};
use crate::calib::{rasterize_silhouette, Observation, ViewRig};
use crate::geometry::{MeshIndex, TriangleMesh};
use crate::math::{rotation_from_axis_angle, yaw, Vec3};
use crate::Error;

/// Largest accepted cloth amplitude (fraction of the body diagonal).
pub const MAX_CLOTH_AMP: f64 = 0.06;
/// Displacement never exceeds this fraction of the free distance along the
/// vertex normal, so facing surfaces cannot cross.
const CLEARANCE: f64 = 0.45;
const NOISE_FREQUENCY: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub views: usize,
    pub image_size: usize,
    pub ortho_scale: f64,
    /// Cloth displacement amplitude as a fraction of the body diagonal.
    pub cloth_amp: f64,
    pub shape_sigma: f64,
    pub pose_sigma: f64,
    /// Standard deviation of the per-view rig rotation jitter.
    pub rotation_jitter_deg: f64,
    /// Standard deviation of the per-view rig x/y translation jitter, as a
    /// fraction of the body diagonal.
    pub translation_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            views: 3,
            image_size: 512,
            ortho_scale: 220.0,
            cloth_amp: 0.03,
            shape_sigma: 1.0,
            pose_sigma: 0.2,
            rotation_jitter_deg: 0.0,
            translation_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub seed: u64,
    pub params: BodyParams,
    /// Posed ground-truth body.
    pub body: TriangleMesh,
    /// Posed joints; projected to give keypoints.
    pub joints: Vec<Vec3>,
    /// Clothed ground-truth surface.
    pub gt: TriangleMesh,
    pub rigs: Vec<ViewRig>,
    pub observations: Vec<Observation>,
}

// Per-joint scale of the pose deviation, indexed like the template joints.
const POSE_SCALE: [f64; 16] = [0.0, 0.3, 0.3, 0.3, 0.8, 1.0, 0.3, 0.8, 1.0, 0.3, 0.6, 0.6, 0.2, 0.6, 0.6, 0.2];

/// Gaussian shape, expression and joint rotations; root rotation and
/// translation stay zero.
pub fn sample_body_params<R: Rng + ?Sized>(model: &BodyModel, shape_sigma: f64, pose_sigma: f64, rng: &mut R) -> BodyParams {
    let mut p = BodyParams::zeros(model);
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    p.beta.iter_mut().for_each(|b| *b = shape_sigma * normal());
    p.phi.iter_mut().for_each(|b| *b = shape_sigma * normal());
    for (j, t) in p.theta.iter_mut().enumerate().skip(1) {
        let s = pose_sigma * POSE_SCALE.get(j).copied().unwrap_or(0.5);
        *t = Vec3::new(normal(), normal(), normal()) * s;
    }
    p
}

fn hash(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn lattice_value(seed: u64, octave: u64, i: i64, j: i64, k: i64) -> f64 {
    let h = hash(seed ^ hash(octave ^ hash(i as u64 ^ hash(j as u64 ^ hash(k as u64)))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Three octaves of smoothly interpolated lattice noise, in `[0, 1]`.
pub fn value_noise(seed: u64, x: &Vec3) -> f64 {
    let mut total = 0.0;
    let mut amp = 1.0;
    let mut norm = 0.0;
    for octave in 0..3u64 {
        let f = NOISE_FREQUENCY * (1u64 << octave) as f64;
        let q = x * f;
        let base = q.map(|c| c.floor());
        let t = (q - base).map(|c| c * c * (3.0 - 2.0 * c));
        let (i, j, k) = (base.x as i64, base.y as i64, base.z as i64);
        let mut v = 0.0;
        for corner in 0..8 {
            let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let w = (if dx == 1 { t.x } else { 1.0 - t.x }) * (if dy == 1 { t.y } else { 1.0 - t.y }) * (if dz == 1 { t.z } else { 1.0 - t.z });
            v += w * lattice_value(seed, octave, i + dx, j + dy, k + dz);
        }
        total += amp * v;
        norm += amp;
        amp *= 0.5;
    }
    total / norm
}

/// Posed body displaced outward along its vertex normals by
/// `cloth_amp * diagonal * noise`, capped per vertex to a fraction of the
/// free space along the normal.
pub fn generate_clothed_mesh(model: &BodyModel, params: &BodyParams, cloth_amp: f64, noise_seed: u64) -> Result<TriangleMesh, Error> {
    if !(0.0..=MAX_CLOTH_AMP).contains(&cloth_amp) {
        return Err(Error::InvalidArgument(alloc::format!("cloth amplitude {cloth_amp} outside [0, {MAX_CLOTH_AMP}]")));
    }
    let body = model.lbs(params)?.mesh;
    if cloth_amp == 0.0 {
        return Ok(body);
    }
    let scale = cloth_amp * body.bounds().diagonal();
    let index = MeshIndex::new(body.clone())?;
    let nudge = 1e-6 * body.bounds().diagonal();
    let verts: Vec<Vec3> = body
        .vertices()
        .iter()
        .zip(body.vertex_normals())
        .map(|(x, n)| {
            let mut d = scale * value_noise(noise_seed, x);
            if let Some(hit) = index.ray_nearest_hit(&(x + n * nudge), n) {
                d = d.min(CLEARANCE * hit.t);
            }
            x + n * d
        })
        .collect();
    Ok(TriangleMesh::from_parts_unchecked(verts, body.faces().to_vec()))
}

/// `n` rigs at yaw `2 pi i / n` looking at the origin.
pub fn nominal_rigs(n: usize, image_size: usize, ortho_scale: f64) -> Vec<ViewRig> {
    (0..n)
        .map(|i| ViewRig::new(yaw(2.0 * core::f64::consts::PI * i as f64 / n as f64), Vec3::zeros(), ortho_scale, image_size, image_size))
        .collect()
}

/// Observation of `mesh` (silhouette) and `joints` (keypoints) under `rig`.
pub fn observe(mesh: &TriangleMesh, joints: &[Vec3], rig: &ViewRig) -> Observation {
    Observation {
        keypoints: joints
            .iter()
            .map(|x| {
                let (u, v, _) = rig.project(x);
                Some((u, v))
            })
            .collect(),
        mask: rasterize_silhouette(mesh, rig),
    }
}

/// Nominal rigs with Gaussian rotation and x/y translation jitter, and the
/// observations of `mesh` under them.
pub fn generate_views(mesh: &TriangleMesh, joints: &[Vec3], config: &SynthConfig, jitter_seed: u64) -> (Vec<ViewRig>, Vec<Observation>) {
    let mut rng = ChaCha8Rng::seed_from_u64(jitter_seed);
    let diag = mesh.bounds().diagonal();
    let rigs: Vec<ViewRig> = nominal_rigs(config.views, config.image_size, config.ortho_scale)
        .into_iter()
        .map(|mut r| {
            if config.rotation_jitter_deg > 0.0 {
                let w = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)) * config.rotation_jitter_deg.to_radians();
                r.rotation = rotation_from_axis_angle(&w) * r.rotation;
            }
            if config.translation_jitter > 0.0 {
                let s = config.translation_jitter * diag;
                r.translation.x += s * rng.sample::<f64, _>(StandardNormal);
                r.translation.y += s * rng.sample::<f64, _>(StandardNormal);
            }
            r
        })
        .collect();
    let obs = rigs.iter().map(|r| observe(mesh, joints, r)).collect();
    (rigs, obs)
}

/// One scene from `seed`: body parameters, clothed surface (noise seeded
/// from `seed`) and jittered views.
pub fn generate_scene(model: &BodyModel, config: &SynthConfig, seed: u64) -> Result<Scene, Error> {
    if config.views == 0 {
        return Err(Error::InvalidArgument("a scene needs at least one view".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = sample_body_params(model, config.shape_sigma, config.pose_sigma, &mut rng);
    let out = model.lbs(&params)?;
    let gt = generate_clothed_mesh(model, &params, config.cloth_amp, hash(seed))?;
    let (rigs, observations) = generate_views(&gt, &out.skeleton.joints, config, hash(seed ^ 0x5eed));
    Ok(Scene { seed, params, body: out.mesh, joints: out.skeleton.joints, gt, rigs, observations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::make_procedural_template;
    use crate::calib::silhouette_iou;

    #[test]
    fn zero_amplitude_is_the_body() {
        let model = make_procedural_template(0, 8);
        let p = sample_body_params(&model, 1.0, 0.2, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(generate_clothed_mesh(&model, &p, 0.0, 3).unwrap(), model.lbs(&p).unwrap().mesh);
        assert!(generate_clothed_mesh(&model, &p, 0.5, 3).is_err());
    }

    #[test]
    fn noise_range_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let vals: Vec<f64> = (0..10_000).map(|_| value_noise(7, &Vec3::new(rng.random(), rng.random(), rng.random()))).collect();
        assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((mean - 0.5).abs() < 0.05, "{mean}");
    }

    #[test]
    fn scene_is_reproducible_and_consistent() {
        let model = make_procedural_template(0, 8);
        let cfg = SynthConfig { rotation_jitter_deg: 5.0, translation_jitter: 0.02, ..Default::default() };
        let a = generate_scene(&model, &cfg, 11).unwrap();
        assert_eq!(a, generate_scene(&model, &cfg, 11).unwrap());
        assert!(a.gt.is_watertight());
        for (r, o) in a.rigs.iter().zip(&a.observations) {
            assert_eq!(silhouette_iou(&rasterize_silhouette(&a.gt, r), &o.mask), 1.0);
            let (u, v, _) = r.project(&a.joints[3]);
            assert_eq!(o.keypoints[3], Some((u, v)));
        }
        // Cloth stays within its amplitude of the body.
        let gt = MeshIndex::new(a.gt.clone()).unwrap();
        let bound = cfg.cloth_amp * a.body.bounds().diagonal();
        for x in a.body.vertices().iter().step_by(7) {
            assert!(gt.signed_distance(x).distance.abs() <= bound + 1e-9);
        }
    }

    #[test]
    fn unjittered_yaws() {
        let rigs = nominal_rigs(3, 512, 220.0);
        for (i, r) in rigs.iter().enumerate() {
            let expect = yaw((120.0 * i as f64).to_radians());
            assert!((r.rotation - expect).norm() < 1e-12);
        }
    }
}
