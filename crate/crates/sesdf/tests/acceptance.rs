//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Run with `cargo test --release --test acceptance`.
//!
//! Set `SESDF_ACCEPT_ONLY=1,4,6` to run a subset.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sesdf::experiment::{self, default_body_model, fusion_csv, ExperimentConfig, TestScene};
use sesdf::oracle::gradcheck_suite;
use sesdf_core::calib::{refine_joint, FitConfig, ViewRig};
use sesdf_core::fusion::{fuse, occlusion_weight, Fusion, FusionWeights};
use sesdf_core::geometry::{closest_point_brute_force, icosphere, ray_nearest_hit_brute_force, MeshIndex, TriangleMesh};
use sesdf_core::math::{rotation_angle_between, yaw, Aabb};
use sesdf_core::metrics::chamfer;
use sesdf_core::nn::{ModelConfig, TrainConfig, Variant};
use sesdf_core::pipeline::SampleConfig;
use sesdf_core::recon::{evaluate_grid, marching_cubes};
use sesdf_core::sampling::{distance_encode, sample_surface};
use sesdf_core::synth::{generate_scene, nominal_rigs, SynthConfig};
use sesdf_core::Vec3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---- 1. geometry oracle ----

/// Star-shaped blob: an icosphere with smooth radial bumps (watertight,
/// 1,280 faces).
fn blob(rng: &mut ChaCha8Rng) -> TriangleMesh {
    let dirs: Vec<(Vec3, f64)> = (0..4)
        .map(|_| (Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)).normalize(), rng.random_range(-0.25..0.25)))
        .collect();
    let scale = Vec3::new(rng.random_range(0.6..1.4), rng.random_range(0.6..1.4), rng.random_range(0.6..1.4));
    let shift = Vec3::from_fn(|_, _| rng.random_range(-0.5..0.5));
    icosphere(1.0, 3)
        .map_vertices(|p| {
            let u = p.normalize();
            let r = 1.0 + dirs.iter().map(|(d, a)| a * (-4.0 * (1.0 - u.dot(d))).exp()).sum::<f64>();
            (u * r).component_mul(&scale) + shift
        })
        .unwrap()
}

/// Generalized winding number by summed solid angles (van Oosterom and
/// Strackee); about 1 inside a closed outward-wound mesh, 0 outside.
fn winding_number(mesh: &TriangleMesh, x: &Vec3) -> f64 {
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(f).map(|v| v - x);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(&b.cross(&c));
        let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * std::f64::consts::PI)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut sign_errors = 0;
    let mut ray_mismatch = 0;
    let mut faces = 0;
    for _ in 0..5 {
        let mesh = blob(&mut rng);
        faces = faces.max(mesh.faces().len());
        let index = MeshIndex::new(mesh.clone()).unwrap();
        let b = mesh.bounds().inflated(0.3);
        for _ in 0..1000 {
            let x = Vec3::new(rng.random_range(b.min.x..b.max.x), rng.random_range(b.min.y..b.max.y), rng.random_range(b.min.z..b.max.z));
            let fast = index.closest_point(&x);
            let slow = closest_point_brute_force(&mesh, &x);
            worst = worst.max((fast.distance_squared.sqrt() - slow.distance_squared.sqrt()).abs());
            worst = worst.max((fast.point - slow.point).norm());
            let sd = index.signed_distance(&x);
            worst = worst.max((sd.distance.abs() - slow.distance_squared.sqrt()).abs());
            if (sd.distance < 0.0) != (winding_number(&mesh, &x) > 0.5) {
                sign_errors += 1;
            }
            let dir = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
            match (index.ray_nearest_hit(&x, &dir), ray_nearest_hit_brute_force(&mesh, &x, &dir)) {
                (Some(a), Some(b)) => worst = worst.max((a.t - b.t).abs()),
                (None, None) => {}
                _ => ray_mismatch += 1,
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst < 1e-9 && sign_errors == 0 && ray_mismatch == 0 && secs < 10.0 && faces <= 2000;
    outcome(pass, format!("max |delta| {worst:.2e}, sign errors {sign_errors}, ray hit/miss mismatches {ray_mismatch}, {faces} faces, {secs:.1}s"))
}

// ---- 2. gradient oracle ----

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let results = gradcheck_suite(3, 5).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let worst = results.iter().filter(|r| r.is_network()).map(|r| r.report.max_relative_error).fold(0.0, f64::max);
    let detail: Vec<String> = results
        .iter()
        .map(|r| format!("{} {:.1e} ({} params, {} straddled)", r.name, r.report.max_relative_error, r.report.checked, r.report.straddled))
        .collect();
    let pass = results.iter().all(|r| r.passed()) && worst < 1e-4 && secs < 30.0;
    outcome(pass, format!("{}; {secs:.1}s", detail.join(", ")))
}

// ---- 3. distance encoding ----

fn criterion_3() -> Outcome {
    let e0 = distance_encode(0.0, 5);
    let want = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
    let exact = e0 == want;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut parity_ok = true;
    for _ in 0..1000 {
        let d: f64 = rng.random_range(-2.0..2.0);
        let (p, n) = (distance_encode(d, 5), distance_encode(-d, 5));
        // Identity and sines are odd, cosines even.
        for (k, (a, b)) in p.iter().zip(&n).enumerate() {
            let even = k >= 2 && k % 2 == 0;
            let ok = if even { (a - b).abs() <= 1e-12 } else { (a + b).abs() <= 1e-12 };
            parity_ok &= ok;
        }
    }
    outcome(exact && e0.len() == 13 && parity_ok, format!("D(0) exact: {exact}, width {}, parity on 1000 draws: {parity_ok}", e0.len()))
}

// ---- 4. fusion invariants ----

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sum_err: f64 = 0.0;
    let mut perm_err: f64 = 0.0;
    let mut single_err: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..6);
        let gaps: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
        let eps = 1e-3;
        let w = FusionWeights::normalize(&gaps.iter().map(|g| 1.0 / g.max(eps)).collect::<Vec<_>>()).unwrap();
        sum_err = sum_err.max((w.weights.iter().sum::<f64>() - 1.0).abs());
        let tuples: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = tuples.iter().map(|t| t.as_slice()).collect();
        let fused = fuse(&refs, &w).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        let pw = FusionWeights::normalize(&order.iter().map(|&i| 1.0 / gaps[i].max(eps)).collect::<Vec<_>>()).unwrap();
        let prefs: Vec<&[f64]> = order.iter().map(|&i| tuples[i].as_slice()).collect();
        let pf = fuse(&prefs, &pw).unwrap();
        perm_err = perm_err.max(fused.iter().zip(&pf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        if n == 1 {
            single_err = single_err.max(fused.iter().zip(&tuples[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    // Dominance: the view whose gap shrinks to eps takes nearly all weight.
    let eps = 1e-3;
    let dom = FusionWeights::normalize(&[1.0 / 1e-9f64.max(eps), 1.0 / 0.3, 1.0 / 0.5]).unwrap().weights[0];
    // Worked example through the full weight path: a flat body slab seen by
    // two views, with the query point 0.1 and 0.3 behind the first hit.
    let slab = sesdf_core::geometry::make_box(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0));
    let body = MeshIndex::new(slab).unwrap();
    let r0 = ViewRig::new(yaw(0.0), Vec3::zeros(), 100.0, 64, 64);
    let r1 = ViewRig::new(yaw(std::f64::consts::FRAC_PI_2), Vec3::zeros(), 100.0, 64, 64);
    // Depth gaps: along +z from the z=-1 face, along yaw(90) from its face.
    let x = Vec3::new(0.7, 0.0, -0.9);
    let (w0, w1) = (occlusion_weight(&x, &r0, &body, eps), occlusion_weight(&x, &r1, &body, eps));
    let worked = FusionWeights::normalize(&[w0, w1]).unwrap().weights;
    let direct = FusionWeights::normalize(&[1.0 / 0.1, 1.0 / 0.3]).unwrap().weights;
    let worked_ok = direct == vec![0.75, 0.25] && (worked[0] - 0.75).abs() < 1e-9 && (worked[1] - 0.25).abs() < 1e-9;
    let pass = sum_err < 1e-9 && perm_err < 1e-12 && single_err == 0.0 && dom > 0.99 && worked_ok;
    outcome(
        pass,
        format!(
            "sum err {sum_err:.1e}, permutation err {perm_err:.1e}, single-view err {single_err:.1e}, dominant weight {dom:.5}, worked example {direct:?} (via body rays {:.12}, {:.12})",
            worked[0], worked[1]
        ),
    )
}

// ---- 5. calibration ----

fn criterion_5() -> Outcome {
    let model = default_body_model();
    let synth = SynthConfig { cloth_amp: 0.0, rotation_jitter_deg: 5.0, translation_jitter: 0.05, ..Default::default() };
    let mut worst_rot: f64 = 0.0;
    let mut worst_trans: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut ious = Vec::new();
    let mut slowest: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 500..508u64 {
        let scene = generate_scene(&model, &synth, seed).unwrap();
        let diag = scene.gt.bounds().diagonal();
        // Start from the nominal rigs (the jitter is the unknown) and a
        // perturbed copy of the true body.
        let init_rigs = nominal_rigs(synth.views, synth.image_size, synth.ortho_scale);
        let mut init = scene.params.clone();
        for t in init.theta.iter_mut().skip(1) {
            *t += Vec3::from_fn(|_, _| 0.02 * rng.sample::<f64, _>(StandardNormal));
        }
        init.beta.iter_mut().for_each(|b| *b += 0.1 * rng.sample::<f64, _>(StandardNormal));
        let t = Instant::now();
        let (_, fit, report) = refine_joint(&model, &init, &init_rigs, &scene.observations, &FitConfig::default()).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let rel = |r: &[ViewRig], i: usize| r[i].rotation * r[0].rotation.transpose();
        for i in 1..fit.len() {
            worst_rot = worst_rot.max(rotation_angle_between(&rel(&fit, i), &rel(&scene.rigs, i)).to_degrees());
        }
        // Relative translations T_i - R_i R_0^T T_0 do not depend on the
        // world frame, which the fit only fixes up to the body's root
        // rotation about the pelvis. Only their image-plane part is
        // observable under orthography.
        let rel_t = |r: &[ViewRig], i: usize| r[i].translation - rel(r, i) * r[0].translation;
        for i in 1..fit.len() {
            worst_trans = worst_trans.max((rel_t(&fit, i) - rel_t(&scene.rigs, i)).xy().norm() / diag);
        }
        for (f, r) in fit.iter().zip(&scene.rigs) {
            worst_abs = worst_abs.max((f.translation - r.translation).xy().norm() / diag);
        }
        ious.push(report.mean_iou());
    }
    let mean_iou = ious.iter().sum::<f64>() / ious.len() as f64;
    let pass = worst_rot < 0.5 && worst_trans < 0.005 && mean_iou > 0.98 && slowest < 120.0;
    outcome(
        pass,
        format!("max relative rotation error {worst_rot:.3} deg, max relative translation error {:.3}% of diagonal (absolute, gauge-dependent: {:.3}%), mean IoU {mean_iou:.4}, slowest scene {slowest:.1}s", worst_trans * 100.0, worst_abs * 100.0),
    )
}

// ---- 6. marching cubes ----

fn criterion_6() -> Outcome {
    let bounds = Aabb { min: Vec3::repeat(-1.0), max: Vec3::repeat(1.0) };
    let grid = evaluate_grid(64, bounds, |pts, out| {
        for (p, o) in pts.iter().zip(out) {
            *o = if p.norm() < 0.5 { 1.0 } else { 0.0 };
        }
        Ok(())
    })
    .unwrap();
    let mesh = marching_cubes(&grid, 0.5).unwrap();
    let cell = grid.spacing().x;
    let radial = mesh.vertices().iter().map(|v| (v.norm() - 0.5).abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let to_sphere: f64 = sample_surface(&mesh, 10_000, &mut rng).unwrap().iter().map(|s| (s.x.norm() - 0.5).abs()).sum::<f64>() / 10_000.0;
    let index = MeshIndex::new(mesh.clone()).unwrap();
    let from_sphere: f64 = (0..10_000)
        .map(|_| {
            let p = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)).normalize() * 0.5;
            index.closest_point(&p).distance_squared.sqrt()
        })
        .sum::<f64>()
        / 10_000.0;
    let ch = 0.5 * (to_sphere + from_sphere);
    let closed = mesh.is_watertight();
    outcome(radial <= 0.05 && ch < cell && closed, format!("max radial error {radial:.4}, Chamfer {ch:.5} vs cell {cell:.5}, closed: {closed}"))
}

// ---- 7-9. end to end ----

struct EndToEnd {
    full: Vec<f64>,
    bypass: Vec<f64>,
    raw: Vec<f64>,
    single: Vec<f64>,
    fusion: Vec<experiment::FusionRow>,
    train_seconds: f64,
    total_seconds: f64,
}

fn e2e_config() -> ExperimentConfig {
    ExperimentConfig {
        synth: SynthConfig::default(),
        train_seeds: 0..24,
        test_seeds: 1000..1008,
        samples: SampleConfig::default(),
        model: ModelConfig { sd_hidden: vec![128, 64, 32], o_hidden: vec![128, 64, 32], ..Default::default() },
        train: TrainConfig::default(),
        recon_resolution: 48,
        metric_samples: 10_000,
        seed: 7,
        ..Default::default()
    }
}

fn run_end_to_end(only: &dyn Fn(usize) -> bool) -> EndToEnd {
    let t0 = Instant::now();
    let cfg = e2e_config();
    let model = default_body_model();
    let train_scenes = experiment::generate_scenes(&model, &cfg.synth, cfg.train_seeds.clone()).unwrap();
    let samples = experiment::prepare_samples(&model, &train_scenes, &cfg).unwrap();
    drop(train_scenes);
    let tests: Vec<TestScene> = experiment::generate_scenes(&model, &cfg.synth, cfg.test_seeds.clone())
        .unwrap()
        .into_iter()
        .map(|s| TestScene::new(s).unwrap())
        .collect();
    let all: Vec<usize> = (0..cfg.synth.views).collect();
    let mut train_seconds = 0.0;
    let mut run = |variant: Variant| {
        let t = Instant::now();
        let (net, curve) = experiment::train_variant(variant, &samples, &cfg, |_| {}).unwrap();
        train_seconds += t.elapsed().as_secs_f64();
        eprintln!("  trained {} (final loss {:.4}) in {:.0}s", variant.name(), curve.last().unwrap().losses.total, t.elapsed().as_secs_f64());
        net
    };
    let full = run(Variant::Full);
    let score = |net: &sesdf_core::nn::SesdfModel, views: &[usize], fusion: Fusion| -> Vec<f64> {
        experiment::evaluate(net, &model, &tests, views, fusion, &cfg).unwrap().iter().map(|s| s.chamfer).collect()
    };
    let full_scores = score(&full, &all, Fusion::Occlusion);
    let (bypass, raw) = if only(7) {
        let b = run(Variant::Bypass);
        let r = run(Variant::RawDistance);
        (score(&b, &all, Fusion::Occlusion), score(&r, &all, Fusion::Occlusion))
    } else {
        (Vec::new(), Vec::new())
    };
    let single = if only(8) { score(&full, &[0], Fusion::Occlusion) } else { Vec::new() };
    let fusion = if only(9) { experiment::fusion_ablation(&full, &model, &tests, 0, &cfg).unwrap() } else { Vec::new() };
    EndToEnd { full: full_scores, bypass, raw, single, fusion, train_seconds, total_seconds: t0.elapsed().as_secs_f64() }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn criterion_7(e: &EndToEnd) -> Outcome {
    let (f, b, r) = (mean(&e.full), mean(&e.bypass), mean(&e.raw));
    let (gb, gr) = ((b - f) / b, (r - f) / r);
    let pass = gb >= 0.05 && gr >= 0.05 && e.total_seconds < 7200.0;
    outcome(
        pass,
        format!(
            "mean Chamfer full {f:.5}, bypass {b:.5} ({:+.1}%), raw distance {r:.5} ({:+.1}%); training {:.0}s, run {:.0}s",
            gb * 100.0,
            gr * 100.0,
            e.train_seconds,
            e.total_seconds
        ),
    )
}

fn criterion_8(e: &EndToEnd) -> Outcome {
    let (m, s) = (mean(&e.full), mean(&e.single));
    outcome(m < s, format!("mean Chamfer 3 views {m:.5}, 1 view {s:.5}"))
}

fn criterion_9(e: &EndToEnd) -> Outcome {
    let occ = e.fusion.iter().find(|r| r.fusion == Fusion::Occlusion).map(|r| r.chamfer).unwrap_or(f64::NAN);
    let pass = !e.fusion.is_empty() && e.fusion.iter().all(|r| occ <= r.chamfer);
    let csv = fusion_csv(&e.fusion);
    let path = std::env::temp_dir().join("sesdf_fusion_ablation.csv");
    let _ = std::fs::write(&path, &csv);
    let rows: Vec<String> = e.fusion.iter().map(|r| format!("{} {:.5}", r.fusion.name(), r.chamfer)).collect();
    outcome(pass, format!("{} (CSV at {})", rows.join(", "), path.display()))
}

// ---- 10. metric sanity ----

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let model = default_body_model();
    let body = model.lbs(&sesdf_core::body::BodyParams::zeros(&model)).unwrap().mesh;
    let mut self_worst: f64 = 0.0;
    for m in [icosphere(1.0, 3), body] {
        let i = MeshIndex::new(m).unwrap();
        let c = chamfer(&i, &i, 10_000, &mut rng).unwrap();
        self_worst = self_worst.max(c.chamfer).max(c.pred_to_gt);
    }
    let a = MeshIndex::new(icosphere(1.0, 4)).unwrap();
    let b = MeshIndex::new(icosphere(1.1, 4)).unwrap();
    let c = chamfer(&a, &b, 10_000, &mut rng).unwrap();
    let pass = self_worst < 1e-9 && (c.chamfer - 0.1).abs() <= 0.01;
    outcome(pass, format!("self distance {self_worst:.1e}, concentric spheres {:.5}", c.chamfer))
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("SESDF_ACCEPT_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let want = |k: usize| only.as_ref().is_none_or(|o| o.contains(&k));
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |k: usize, name: &'static str, o: Outcome| {
        println!("criterion {k:>2} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((k, name, o));
    };
    if want(1) {
        report(1, "geometry oracle", criterion_1());
    }
    if want(2) {
        report(2, "gradient oracle", criterion_2());
    }
    if want(3) {
        report(3, "distance encoding", criterion_3());
    }
    if want(4) {
        report(4, "fusion invariants", criterion_4());
    }
    if want(5) {
        report(5, "calibration recovery", criterion_5());
    }
    if want(6) {
        report(6, "marching cubes", criterion_6());
    }
    if want(7) || want(8) || want(9) {
        let e = run_end_to_end(&want);
        if want(7) {
            report(7, "end-to-end ablation", criterion_7(&e));
        }
        if want(8) {
            report(8, "multi-view vs single-view", criterion_8(&e));
        }
        if want(9) {
            report(9, "fusion ablation", criterion_9(&e));
        }
    }
    if want(10) {
        report(10, "metric sanity", criterion_10());
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
