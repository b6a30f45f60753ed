use alloc::vec::Vec;

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;
use rand::Rng;
use rand_distr::StandardNormal;

use super::tape::{NodeId, ParamSet, Tape};
use super::tensor::Matrix;
use super::NnError;

/// Affine map whose weight (`input x output`) and bias (`1 x output`) live in
/// a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    /// Weights drawn from `N(0, gain / input)`, zero bias.
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, input: usize, output: usize, gain: f64, rng: &mut R) -> Self {
        let std = (gain / input.max(1) as f64).sqrt();
        let data = (0..input * output).map(|_| rng.sample::<f64, _>(StandardNormal) * std).collect();
        let w = params.push(Matrix::from_vec(input, output, data));
        let b = params.push(Matrix::zeros(1, output));
        Linear { w, b, input, output }
    }

    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        tape.linear(x, self.w, self.b)
    }
}

/// Fully connected network with leaky-rectifier hidden layers and a linear
/// output. With `skip = Some(k)`, layer `k` also receives the raw input.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub skip: Option<usize>,
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, widths: &[usize], skip: Option<usize>, rng: &mut R) -> Result<Self, NnError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NnError::InvalidConfig("network needs at least two non-zero widths".into()));
        }
        let n = widths.len() - 1;
        if let Some(k) = skip {
            if k == 0 || k >= n {
                return Err(NnError::InvalidConfig("skip layer must be a hidden or output layer".into()));
            }
        }
        let layers = (0..n)
            .map(|k| {
                let input = widths[k] + if skip == Some(k) { widths[0] } else { 0 };
                let gain = if k + 1 == n { 1.0 } else { 2.0 };
                Linear::new(params, input, widths[k + 1], gain, rng)
            })
            .collect();
        Ok(Mlp { widths: widths.to_vec(), skip, layers })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn last(&self) -> &Linear {
        self.layers.last().unwrap()
    }

    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, NnError> {
        let got = tape.value(x).cols;
        if got != self.input_width() {
            return Err(NnError::DimensionMismatch { expected: self.input_width(), got });
        }
        let mut h = x;
        for (k, layer) in self.layers.iter().enumerate() {
            let input = if self.skip == Some(k) { tape.concat(&[h, x]) } else { h };
            h = layer.forward(tape, input);
            if k + 1 < self.layers.len() {
                h = tape.leaky_relu(h);
            }
        }
        Ok(h)
    }
}
