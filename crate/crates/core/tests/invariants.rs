//! Property tests over random inputs.

use proptest::prelude::*;
use sesdf_core::body::{lbs_forward, make_procedural_template, BodyParams};
use sesdf_core::calib::ViewRig;
use sesdf_core::fusion::{fuse, FusionWeights};
use sesdf_core::geometry::{closest_point_brute_force, icosphere, MeshIndex};
use sesdf_core::math::{axis_angle_from_rotation, is_rotation, rotation_from_axis_angle, Aabb};
use sesdf_core::recon::{evaluate_grid, marching_cubes};
use sesdf_core::sampling::{distance_encode, distance_encode_derivative};
use sesdf_core::Vec3;
use std::sync::OnceLock;

fn sphere() -> &'static MeshIndex {
    static S: OnceLock<MeshIndex> = OnceLock::new();
    S.get_or_init(|| MeshIndex::new(icosphere(1.0, 3)).unwrap())
}

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closest_point_matches_brute_force(p in vec3(2.0)) {
        let s = sphere();
        let fast = s.closest_point(&p);
        let slow = closest_point_brute_force(s.mesh(), &p);
        prop_assert!((fast.distance_squared - slow.distance_squared).abs() < 1e-12);
        for v in s.mesh().vertices() {
            prop_assert!(fast.distance_squared <= (v - p).norm_squared() + 1e-12);
        }
    }

    #[test]
    fn sphere_sdf_tracks_radius(p in vec3(1.8)) {
        let r = p.norm();
        prop_assume!((r - 1.0).abs() > 0.03);
        let q = sphere().signed_distance(&p);
        prop_assert_eq!(q.distance < 0.0, r < 1.0);
        // Facets of a level-3 icosphere sag less than 0.01 below the sphere.
        prop_assert!((q.distance - (r - 1.0)).abs() < 0.012, "{} vs {}", q.distance, r - 1.0);
    }

    #[test]
    fn axis_angle_round_trip(w in vec3(1.7)) {
        prop_assume!(w.norm() < 3.0);
        let r = rotation_from_axis_angle(&w);
        prop_assert!(is_rotation(&r, 1e-12));
        prop_assert!((axis_angle_from_rotation(&r) - w).norm() < 1e-9);
    }

    #[test]
    fn rig_projection_round_trip(w in vec3(1.5), t in vec3(0.5), x in vec3(1.0), scale in 10.0..200.0f64) {
        let rig = ViewRig::new(rotation_from_axis_angle(&w), t, scale, 128, 96);
        let (u, v, z) = rig.project(&x);
        prop_assert!((rig.unproject(u, v, z) - x).norm() < 1e-9);
    }

    #[test]
    fn fusion_weights_are_a_distribution(raw in prop::collection::vec(0.0..5.0f64, 1..6)) {
        let w = FusionWeights::normalize(&raw).unwrap();
        prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.weights.iter().all(|x| *x >= 0.0));
        // Fusing identical tuples returns the tuple.
        let t = [0.3, -1.2, 4.0];
        let tuples = vec![&t[..]; raw.len()];
        let f = fuse(&tuples, &w).unwrap();
        for (a, b) in f.iter().zip(&t) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fused_tuple_is_within_view_range(vals in prop::collection::vec(-3.0..3.0f64, 2..6), raw in prop::collection::vec(0.01..5.0f64, 6)) {
        let w = FusionWeights::normalize(&raw[..vals.len()]).unwrap();
        let tuples: Vec<[f64; 1]> = vals.iter().map(|v| [*v]).collect();
        let refs: Vec<&[f64]> = tuples.iter().map(|t| &t[..]).collect();
        let f = fuse(&refs, &w).unwrap()[0];
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(f >= lo - 1e-12 && f <= hi + 1e-12);
    }

    #[test]
    fn encoding_parity_range_and_derivative(d in -2.0..2.0f64) {
        let (p, n) = (distance_encode(d, 5), distance_encode(-d, 5));
        prop_assert_eq!(p.len(), 13);
        prop_assert_eq!(p[0], d);
        for k in 0..6 {
            prop_assert!((p[1 + 2 * k] + n[1 + 2 * k]).abs() < 1e-12);
            prop_assert!((p[2 + 2 * k] - n[2 + 2 * k]).abs() < 1e-12);
            prop_assert!(p[1 + 2 * k].abs() <= 1.0 && p[2 + 2 * k].abs() <= 1.0);
        }
        let h = 1e-6;
        let (up, down) = (distance_encode(d + h, 5), distance_encode(d - h, 5));
        for (i, g) in distance_encode_derivative(d, 5).iter().enumerate() {
            let numeric = (up[i] - down[i]) / (2.0 * h);
            prop_assert!((g - numeric).abs() < 1e-5 * g.abs().max(1.0), "{i}: {g} vs {numeric}");
        }
    }

    #[test]
    fn marching_cubes_closes_spheres(c in vec3(0.2), r in 0.3..0.7f64) {
        let bounds = Aabb { min: Vec3::repeat(-1.0), max: Vec3::repeat(1.0) };
        let grid = evaluate_grid(20, bounds, |xs, out| {
            for (x, o) in xs.iter().zip(out.iter_mut()) {
                *o = (x - c).norm() - r;
            }
            Ok(())
        })
        .unwrap();
        let mesh = marching_cubes(&grid, 0.0).unwrap();
        prop_assert!(mesh.is_watertight());
        prop_assert_eq!(mesh.euler_characteristic(), 2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn translation_moves_the_body_rigidly(t in vec3(1.0), beta in prop::collection::vec(-0.5..0.5f64, 32), pose in vec3(0.4)) {
        let model = make_procedural_template(0, 8);
        let mut params = BodyParams::zeros(&model);
        for (b, x) in params.beta.iter_mut().zip(&beta) {
            *b = *x;
        }
        params.theta[1] = pose;
        let base = lbs_forward(&model, &params).unwrap();
        params.translation = t;
        let moved = lbs_forward(&model, &params).unwrap();
        for (a, b) in base.vertices().iter().zip(moved.vertices()) {
            prop_assert!((b - a - t).norm() < 1e-12);
        }
    }
}
