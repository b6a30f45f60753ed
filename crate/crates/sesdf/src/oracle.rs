//! Gradient oracle: analytic gradients against central differences, on real
//! features of a small synthetic scene.
//!
//! Each network (`f_sd`, and `f_o` of every variant) is checked on its own,
//! fed the exact rows the model builds for it, with a random linear readout
//! as the loss. The composed training loss is checked as well, with a
//! Richardson stencil: it routes `f_sd`'s output through the sinusoidal
//! distance encoding, whose curvature makes the O(eps^2) truncation of a
//! plain 1e-4 stencil visible on tiny gradients, while a smaller step loses
//! them to round-off.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sesdf_core::nn::{
    gradient_check, model_gradient_check, Batch, GradCheckReport, LossWeights, Matrix, Mlp, ModelConfig, NnError, ParamSet, SesdfModel, Stencil, Tape, Variant,
};
use sesdf_core::pipeline::SampleConfig;
use sesdf_core::synth::{generate_scene, SynthConfig};

use crate::experiment::{default_body_model, prepare_samples, ExperimentConfig};

pub const GRADCHECK_EPS: f64 = 1e-4;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Stencil of the composed-loss check.
pub const COMPOSED_STENCIL: Stencil = Stencil::Richardson(1e-4);
/// The composed loss has gradients down to 1e-8, where round-off alone
/// reaches a few 1e-5 relative; its bound is looser than the networks'.
pub const COMPOSED_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub name: String,
    pub stencil: Stencil,
    pub report: GradCheckReport,
}

impl OracleResult {
    pub fn tolerance(&self) -> f64 {
        if self.is_network() {
            GRADCHECK_TOLERANCE
        } else {
            COMPOSED_TOLERANCE
        }
    }

    /// Within tolerance, with kink-straddling stencils under 2% of checks.
    pub fn passed(&self) -> bool {
        self.report.max_relative_error < self.tolerance() && self.report.straddled * 50 < self.report.checked
    }

    /// One of the two networks, as opposed to the composed loss.
    pub fn is_network(&self) -> bool {
        self.name.starts_with("f_")
    }
}

/// Flat parameter indices of every `stride`-th scalar of `mlp`.
fn mlp_indices(params: &ParamSet, mlp: &Mlp, stride: usize) -> Vec<usize> {
    let offsets: Vec<usize> = params.tensors.iter().scan(0, |acc, t| {
        let o = *acc;
        *acc += t.len();
        Some(o)
    })
    .collect();
    let mut all = Vec::new();
    for l in &mlp.layers {
        for t in [l.w, l.b] {
            all.extend(offsets[t]..offsets[t] + params.tensors[t].len());
        }
    }
    all.into_iter().step_by(stride.max(1)).collect()
}

/// Checks `Σ c ⊙ net(x)` for one network of `model`.
fn network_check(model: &SesdfModel, occupancy: bool, x: &Matrix, stride: usize, seed: u64) -> Result<GradCheckReport, NnError> {
    let mlp = if occupancy { &model.f_o } else { model.f_sd.as_ref().ok_or_else(|| NnError::InvalidConfig("no f_sd".into()))? };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = Matrix::from_vec(x.rows, mlp.output_width(), (0..x.rows * mlp.output_width()).map(|_| rng.random_range(-1.0..1.0)).collect());
    let mut params = model.params.clone();
    let idx = mlp_indices(&params, mlp, stride);
    gradient_check(&mut params, &idx, GRADCHECK_EPS, |p, g| {
        let mut tape = Tape::new(p);
        let xi = tape.constant(x.clone());
        let out = if occupancy { model.f_o.forward(&mut tape, xi)? } else { mlp.forward(&mut tape, xi)? };
        let out = if occupancy { tape.sigmoid(out) } else { out };
        let v = tape.value(out).data.iter().zip(&c.data).map(|(a, b)| a * b).sum();
        if let Some(g) = g {
            tape.backward(vec![(out, c.clone())], g);
        }
        Ok((v, tape.kink_pattern()))
    })
}

/// The rows `model` feeds to `f_sd` and `f_o` for a batch.
fn network_inputs(model: &SesdfModel, surface: &Batch) -> Result<(Option<Matrix>, Matrix), NnError> {
    let mut tape = Tape::new(&model.params);
    let nodes = model.forward(&mut tape, surface, true)?;
    let sd = nodes.sd_input.map(|n| tape.value(n).clone());
    Ok((sd, tape.value(nodes.o_input.expect("occupancy stage ran")).clone()))
}

/// Checks every `stride`-th parameter of small networks of each variant.
pub fn gradcheck_suite(seed: u64, stride: usize) -> Result<Vec<OracleResult>, sesdf_core::Error> {
    let model = default_body_model();
    let synth = SynthConfig { image_size: 96, ortho_scale: 40.0, ..Default::default() };
    let scene = generate_scene(&model, &synth, seed)?;
    let cfg = ExperimentConfig {
        samples: SampleConfig { surface_samples: 4, occupancy_samples: 4, ..Default::default() },
        volume_resolution: 16,
        seed,
        ..Default::default()
    };
    let samples = prepare_samples(&model, std::slice::from_ref(&scene), &cfg)?.remove(0);
    let views: Vec<usize> = (0..synth.views).collect();
    let sb = samples.surface.batch(&[0, 1, 2, 3], &views, &samples.rotations);
    let ob = samples.occupancy.batch(&[0, 1, 2, 3], &views, &samples.rotations);
    let mut out = Vec::new();
    for variant in [Variant::Full, Variant::Bypass, Variant::RawDistance] {
        let mc = ModelConfig { variant, sd_hidden: vec![16, 12, 8], o_hidden: vec![16, 12, 8], ..Default::default() };
        let mut net = SesdfModel::new(mc, seed)?;
        let (x_sd, x_o) = network_inputs(&net, &sb)?;
        if let (Variant::Full, Some(x)) = (variant, &x_sd) {
            let report = network_check(&net, false, x, stride, seed)?;
            out.push(OracleResult { name: "f_sd".into(), stencil: Stencil::Central(GRADCHECK_EPS), report });
        }
        let report = network_check(&net, true, &x_o, stride, seed + 1)?;
        out.push(OracleResult { name: format!("f_o ({})", variant.name()), stencil: Stencil::Central(GRADCHECK_EPS), report });
        let idx: Vec<usize> = (0..net.params.count()).step_by(stride.max(1) * 2).collect();
        let report = model_gradient_check(&mut net, &sb, &ob, &LossWeights::default(), COMPOSED_STENCIL, &idx)?;
        out.push(OracleResult { name: format!("loss ({})", variant.name()), stencil: COMPOSED_STENCIL, report });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_scene_features() {
        let results = gradcheck_suite(3, 13).unwrap();
        assert_eq!(results.iter().filter(|r| r.is_network()).count(), 4);
        for r in results {
            assert!(r.passed(), "{r:?}");
        }
    }
}
