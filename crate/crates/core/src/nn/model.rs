use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{Batch, RAW_WIDTH};
use super::mlp::{Linear, Mlp};
use super::tape::{NodeId, ParamSet, Tape};
use super::tensor::Matrix;
use super::NnError;
use crate::features::{F2D_DIM, F3D_DIM, RAW_2D, RAW_3D};
use crate::sampling::{distance_encode, DEFAULT_L};

/// Which inputs reach the occupancy network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Refined distance and normal from the signed-distance network,
    /// distance-encoded.
    Full,
    /// No signed-distance network: the body distance and normal go straight
    /// to the occupancy network.
    Bypass,
    /// Like `Full`, but every distance enters as a single raw value instead
    /// of its encoding.
    RawDistance,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Bypass => "bypass",
            Variant::RawDistance => "raw-distance",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        [Variant::Full, Variant::Bypass, Variant::RawDistance].into_iter().find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub encoding_octaves: usize,
    /// Hidden widths of the signed-distance network.
    pub sd_hidden: Vec<usize>,
    /// Hidden widths of the occupancy network.
    pub o_hidden: Vec<usize>,
    /// Feed the raw input into the third layer as well.
    pub skip: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Full,
            encoding_octaves: DEFAULT_L,
            sd_hidden: alloc::vec![512, 256, 128],
            o_hidden: alloc::vec![512, 256, 128],
            skip: true,
        }
    }
}

impl ModelConfig {
    pub fn encoding_width(&self) -> usize {
        match self.variant {
            Variant::RawDistance => 1,
            _ => 2 * self.encoding_octaves + 3,
        }
    }

    /// `F_2D + F_3D + encoded distance + normal`.
    pub fn sd_input(&self) -> usize {
        F2D_DIM + F3D_DIM + self.encoding_width() + 3
    }

    /// The signed-distance input plus depth.
    pub fn o_input(&self) -> usize {
        self.sd_input() + 1
    }

    fn skip_layer(&self, hidden: usize) -> Option<usize> {
        (self.skip && hidden >= 2).then_some(2)
    }

    pub fn sd_widths(&self) -> Vec<usize> {
        let mut w = alloc::vec![self.sd_input()];
        w.extend_from_slice(&self.sd_hidden);
        w.push(4);
        w
    }

    pub fn o_widths(&self) -> Vec<usize> {
        let mut w = alloc::vec![self.o_input()];
        w.extend_from_slice(&self.o_hidden);
        w.push(1);
        w
    }
}

/// Embeddings, signed-distance network `f_sd` (absent in the bypass variant)
/// and occupancy network `f_o`, with all parameters in one [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct SesdfModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub embed2d: Linear,
    pub embed3d: Linear,
    pub f_sd: Option<Mlp>,
    pub f_o: Mlp,
}

/// Graph handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    /// Refined distance per (point, view) row.
    pub d: NodeId,
    /// Refined normal in model coordinates per row.
    pub n: NodeId,
    /// Occupancy per point.
    pub occupancy: Option<NodeId>,
    /// Inputs of `f_sd` and `f_o` as fed to the networks.
    pub sd_input: Option<NodeId>,
    pub o_input: Option<NodeId>,
}

/// Inference outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub d: Vec<f64>,
    pub occupancy: Vec<f64>,
    /// Fusion-weighted refined distance per point.
    pub fused_d: Vec<f64>,
}

impl SesdfModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        let embed2d = Linear::new(&mut params, RAW_2D, F2D_DIM, 1.0, &mut rng);
        let embed3d = Linear::new(&mut params, RAW_3D, F3D_DIM, 1.0, &mut rng);
        let f_sd = match config.variant {
            Variant::Bypass => None,
            _ => Some(Mlp::new(&mut params, &config.sd_widths(), config.skip_layer(config.sd_hidden.len()), &mut rng)?),
        };
        let f_o = Mlp::new(&mut params, &config.o_widths(), config.skip_layer(config.o_hidden.len()), &mut rng)?;
        Ok(SesdfModel { config, params, embed2d, embed3d, f_sd, f_o })
    }

    /// Rebuilds the layout of `config` around stored parameters.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self, NnError> {
        let mut model = SesdfModel::new(config, 0)?;
        if model.params.tensors.len() != params.tensors.len() {
            return Err(NnError::DimensionMismatch { expected: model.params.tensors.len(), got: params.tensors.len() });
        }
        for (a, b) in model.params.tensors.iter().zip(&params.tensors) {
            if (a.rows, a.cols) != (b.rows, b.cols) {
                return Err(NnError::DimensionMismatch { expected: a.len(), got: b.len() });
            }
        }
        if !params.all_finite() {
            return Err(NnError::InvalidConfig("non-finite parameter".into()));
        }
        model.params = params;
        Ok(model)
    }

    /// Sets the output layers of both networks to zero.
    pub fn zero_output_layers(&mut self) {
        let mut last = alloc::vec![*self.f_o.last()];
        if let Some(sd) = &self.f_sd {
            last.push(*sd.last());
        }
        for l in last {
            self.params.tensors[l.w].data.fill(0.0);
            self.params.tensors[l.b].data.fill(0.0);
        }
    }

    /// `f_sd` on already embedded inputs (`F_2D | F_3D | encoded d' | n'`).
    pub fn sesdf_forward(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId, NnError> {
        match &self.f_sd {
            Some(f) => f.forward(tape, input),
            None => Err(NnError::InvalidConfig("the bypass variant has no signed-distance network".into())),
        }
    }

    /// `f_o` on already embedded inputs (`F_2D | F_3D | encoded d | n | Z`);
    /// returns the logistic output.
    pub fn occupancy_forward(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId, NnError> {
        let logit = self.f_o.forward(tape, input)?;
        Ok(tape.sigmoid(logit))
    }

    fn encode(&self, tape: &mut Tape, d: NodeId) -> NodeId {
        match self.config.variant {
            Variant::RawDistance => d,
            _ => tape.encode(d, self.config.encoding_octaves),
        }
    }

    /// Records the full pipeline for `batch` on `tape`. With
    /// `occupancy = false` only the signed-distance stage runs.
    pub fn forward(&self, tape: &mut Tape, batch: &Batch, occupancy: bool) -> Result<ForwardNodes, NnError> {
        if batch.raw.cols != RAW_WIDTH || batch.raw.rows != batch.points * batch.views {
            return Err(NnError::DimensionMismatch { expected: RAW_WIDTH, got: batch.raw.cols });
        }
        let rows = batch.points * batch.views;
        let v = batch.views;
        let d_rows: Vec<f64> = (0..rows).map(|r| batch.d_body[r / v]).collect();
        // Camera-to-model rotations for the predicted normals.
        let to_model: Vec<_> = batch.rotations.iter().map(|r| r.transpose()).collect();
        let n_cam = tape.constant(batch.n_cam.clone());
        let mut sd_input = None;
        let (d, n) = match &self.f_sd {
            Some(f_sd) => {
                let raw = tape.constant(batch.raw.clone());
                let f2 = tape.slice(raw, 0, RAW_2D);
                let f3 = tape.slice(raw, RAW_2D, RAW_3D);
                let e2 = self.embed2d.forward(tape, f2);
                let e3 = self.embed3d.forward(tape, f3);
                let enc = self.encoded_constant(&d_rows);
                let enc = tape.constant(enc);
                let input = tape.concat(&[e2, e3, enc, n_cam]);
                sd_input = Some(input);
                let out = f_sd.forward(tape, input)?;
                let d = tape.slice(out, 0, 1);
                let n = tape.slice(out, 1, 3);
                (d, tape.row_transform(n, to_model))
            }
            None => {
                let d = tape.constant(Matrix::from_vec(rows, 1, d_rows));
                (d, tape.row_transform(n_cam, to_model))
            }
        };
        if !occupancy {
            return Ok(ForwardNodes { d, n, occupancy: None, sd_input, o_input: None });
        }
        let fused_raw = group_sum(&batch.raw, &batch.weights, v);
        let fused_raw = tape.constant(fused_raw);
        let f2 = tape.slice(fused_raw, 0, RAW_2D);
        let f3 = tape.slice(fused_raw, RAW_2D, RAW_3D);
        let e2 = self.embed2d.forward(tape, f2);
        let e3 = self.embed3d.forward(tape, f3);
        let enc = self.encode(tape, d);
        let enc = tape.group_sum(enc, batch.weights.clone(), v);
        let nf = tape.group_sum(n, batch.weights.clone(), v);
        let z = group_sum(&Matrix::from_vec(rows, 1, batch.z.clone()), &batch.weights, v);
        let z = tape.constant(z);
        let input = tape.concat(&[e2, e3, enc, nf, z]);
        let o = self.occupancy_forward(tape, input)?;
        Ok(ForwardNodes { d, n, occupancy: Some(o), sd_input, o_input: Some(input) })
    }

    fn encoded_constant(&self, d: &[f64]) -> Matrix {
        match self.config.variant {
            Variant::RawDistance => Matrix::from_vec(d.len(), 1, d.to_vec()),
            _ => {
                let w = self.config.encoding_width();
                let mut m = Matrix::zeros(d.len(), w);
                for (r, x) in d.iter().enumerate() {
                    m.row_mut(r).copy_from_slice(&distance_encode(*x, self.config.encoding_octaves));
                }
                m
            }
        }
    }

    pub fn predict(&self, batch: &Batch) -> Result<Prediction, NnError> {
        let mut tape = Tape::new(&self.params);
        let nodes = self.forward(&mut tape, batch, true)?;
        let d = tape.value(nodes.d).data.clone();
        let occupancy = tape.value(nodes.occupancy.unwrap()).data.clone();
        let fused_d = (0..batch.points).map(|p| (0..batch.views).map(|v| batch.weights[p * batch.views + v] * d[p * batch.views + v]).sum()).collect();
        Ok(Prediction { d, occupancy, fused_d })
    }
}

/// Weighted sum of each group of `group` consecutive rows.
fn group_sum(m: &Matrix, weights: &[f64], group: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows / group, m.cols);
    for r in 0..m.rows {
        let w = weights[r];
        let dst = (r / group) * m.cols;
        for (c, x) in m.row(r).iter().enumerate() {
            out.data[dst + c] += w * x;
        }
    }
    out
}
