//! Signed-distance refinement and occupancy networks, reverse-mode tape,
//! losses, optimizer and training loop.

mod data;
mod loss;
mod mlp;
mod model;
mod tape;
mod tensor;
mod train;

use alloc::string::String;

pub use data::{Batch, PointSet, SceneSamples, RAW_WIDTH};
pub use loss::{loss_eikonal, loss_occupancy, loss_surface, total_loss, LossWeights, BCE_CLAMP};
pub use mlp::{Linear, Mlp};
pub use model::{ForwardNodes, ModelConfig, Prediction, SesdfModel, Variant};
pub use tape::{sigmoid, NodeId, ParamSet, Tape, LEAKY_SLOPE};
pub use tensor::Matrix;
pub use train::{
    batch_loss, gradient_check, gradient_check_with, model_gradient_check, relative_error, train, Adam, EpochLoss, GradCheckReport, Losses, Stencil, TrainConfig,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("input width {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss { epoch: usize, batch: usize, detail: String },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ViewTuple, RAW_2D, RAW_3D};
    use crate::math::{yaw, Mat3, Vec3};
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Loss `Σ c ⊙ f(x)` of a bare network and its gradient.
    fn mlp_check(widths: &[usize], skip: Option<usize>, linear: bool) -> GradCheckReport {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = ParamSet::default();
        let mlp = Mlp::new(&mut params, widths, skip, &mut rng).unwrap();
        let x = random_matrix(4, widths[0], &mut rng);
        let c = random_matrix(4, *widths.last().unwrap(), &mut rng);
        let all: Vec<usize> = (0..params.count()).collect();
        gradient_check(&mut params, &all, 1e-4, |p, g| {
            let mut tape = Tape::new(p);
            let xi = tape.constant(x.clone());
            let out = if linear { mlp.layers[0].forward(&mut tape, xi) } else { mlp.forward(&mut tape, xi)? };
            let v = tape.value(out).data.iter().zip(&c.data).map(|(a, b)| a * b).sum();
            if let Some(g) = g {
                tape.backward(alloc::vec![(out, c.clone())], g);
            }
            Ok((v, tape.kink_pattern()))
        })
        .unwrap()
    }

    #[test]
    fn mlp_gradients_match_differences() {
        let r = mlp_check(&[13, 32, 1], None, false);
        assert!(r.max_relative_error < 1e-4, "{r:?}");
        let r = mlp_check(&[7, 9, 8, 6, 2], Some(2), false);
        assert!(r.max_relative_error < 1e-4, "{r:?}");
        let r = mlp_check(&[5, 3], None, true);
        assert!(r.max_relative_error < 1e-10, "{r:?}");
        assert!(r.worst_index < 18 && r.checked == 18);
    }

    pub(crate) fn toy_batch(points: usize, views: usize, rng: &mut ChaCha8Rng) -> Batch {
        let mut set = PointSet::new(views);
        for _ in 0..points {
            let d = rng.random_range(-0.3..0.3);
            let n = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
            let tuples: Vec<ViewTuple> = (0..views)
                .map(|_| ViewTuple {
                    f2d: core::array::from_fn(|_| rng.random_range(-1.0..1.0)),
                    f3d: core::array::from_fn(|_| rng.random_range(-1.0..1.0)),
                    d,
                    n,
                    z: rng.random_range(-0.5..0.5),
                })
                .collect();
            let scores: Vec<f64> = (0..views).map(|_| rng.random_range(0.1..10.0)).collect();
            set.push(&tuples, &scores);
            set.n_gt.push(Vec3::new(rng.random_range(-1.0..1.0), 1.0, 0.0).normalize());
            set.labels.push(rng.random_bool(0.5));
        }
        let rotations: Vec<Mat3> = (0..views).map(|v| yaw(0.4 + v as f64)).collect();
        let all: Vec<usize> = (0..points).collect();
        let views: Vec<usize> = (0..views).collect();
        set.batch(&all, &views, &rotations)
    }

    fn small(variant: Variant) -> ModelConfig {
        ModelConfig { variant, sd_hidden: alloc::vec![16, 12, 8], o_hidden: alloc::vec![16, 12, 8], ..Default::default() }
    }

    #[test]
    fn model_gradients_match_differences() {
        for variant in [Variant::Full, Variant::Bypass, Variant::RawDistance] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut model = SesdfModel::new(small(variant), 3).unwrap();
            let sb = toy_batch(3, 2, &mut rng);
            let ob = toy_batch(3, 2, &mut rng);
            let n = model.params.count();
            let idx: Vec<usize> = (0..n).step_by(7).collect();
            let r = model_gradient_check(&mut model, &sb, &ob, &LossWeights::default(), Stencil::Central(1e-4), &idx).unwrap();
            assert!(r.max_relative_error < 1e-4, "{variant:?}: {r:?}");
            assert!(r.straddled * 50 < r.checked, "{variant:?}: {r:?}");
        }
    }

    #[test]
    fn zero_output_layers() {
        let mut model = SesdfModel::new(small(Variant::Full), 1).unwrap();
        model.zero_output_layers();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = toy_batch(5, 3, &mut rng);
        let p = model.predict(&b).unwrap();
        assert!(p.d.iter().all(|d| *d == 0.0));
        assert!(p.occupancy.iter().all(|o| *o == 0.5));
    }

    #[test]
    fn logistic_output() {
        assert!((sigmoid(0.6931) - 0.666_65).abs() < 1e-4);
        assert!(sigmoid(1.0) > sigmoid(0.5));
    }

    #[test]
    fn input_width_checked() {
        let model = SesdfModel::new(ModelConfig::default(), 1).unwrap();
        assert_eq!(model.config.sd_widths()[0], RAW_2D * 0 + 256 + 128 + 13 + 3);
        assert_eq!(model.config.o_widths()[0], 401);
        let mut tape = Tape::new(&model.params);
        let x = tape.constant(Matrix::zeros(1, 399));
        assert!(matches!(model.sesdf_forward(&mut tape, x), Err(NnError::DimensionMismatch { expected: 400, got: 399 })));
        let _ = RAW_3D;
    }

    #[test]
    fn adam_examples() {
        let mut p = ParamSet::default();
        p.push(Matrix::from_vec(1, 1, alloc::vec![1.0]));
        let mut adam = Adam::new(&p);
        let zero = p.zeros_like();
        adam.step(&mut p, &zero, 0.1);
        assert_eq!(p.tensors[0].data[0], 1.0);
        let mut g = p.zeros_like();
        g.tensors[0].data[0] = 2.0; // d/dx of x^2 at 1
        adam.step(&mut p, &g, 0.1);
        assert!(p.tensors[0].data[0].abs() < 1.0);
    }

    #[test]
    fn surface_loss_reaches_signed_distance_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = SesdfModel::new(small(Variant::Full), 9).unwrap();
        let sb = toy_batch(4, 2, &mut rng);
        let ob = toy_batch(4, 2, &mut rng);
        let w = LossWeights { surface: 0.0, eikonal: 0.0, ..Default::default() };
        let mut g = model.params.zeros_like();
        batch_loss(&model, Some(&sb), &ob, &w, Some(&mut g)).unwrap();
        // Occupancy alone must move the signed-distance network's weights.
        let sd = model.f_sd.as_ref().unwrap();
        let moved = sd.layers.iter().any(|l| g.tensors[l.w].data.iter().any(|x| *x != 0.0));
        assert!(moved);
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut set_s = PointSet::new(2);
        let mut set_o = PointSet::new(2);
        let b = toy_batch(1, 2, &mut rng);
        let _ = b;
        for _ in 0..20 {
            let tuples: Vec<ViewTuple> = (0..2)
                .map(|_| ViewTuple { f2d: [0.1; RAW_2D], f3d: [0.2; RAW_3D], d: rng.random_range(-0.2..0.2), n: Vec3::y(), z: 0.1 })
                .collect();
            set_s.push(&tuples, &[1.0, 2.0]);
            set_s.n_gt.push(Vec3::y());
            set_o.push(&tuples, &[1.0, 2.0]);
            set_o.labels.push(tuples[0].d < 0.0);
        }
        let scene = SceneSamples { rotations: alloc::vec![Mat3::identity(), yaw(1.0)], surface: set_s, occupancy: set_o };
        let cfg = TrainConfig { epochs: 2, batch_size: 8, view_subsets: true, ..Default::default() };
        let run = || {
            let mut m = SesdfModel::new(small(Variant::Full), 4).unwrap();
            let curve = train(&mut m, core::slice::from_ref(&scene), &cfg, |_| {}).unwrap();
            (m.params, curve)
        };
        assert_eq!(run(), run());
    }
}
