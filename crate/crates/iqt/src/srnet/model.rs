//! Network definition: configuration, flat parameter vector with per-layer
//! segments, forward pass, reverse-mode gradient, and checkpointing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::*;
use super::tensor::Tensor5;
use crate::error::{IqtError, Result};
use crate::rng::SplitMix64;

/// Architecture parameters.
///
/// The network is U-Net shaped: `levels` encoder blocks with (2, 2, 1)
/// max-pooling between them (in-plane only), a bottleneck, a mirrored
/// decoder with skip concatenations, then a transposed convolution with
/// stride (1, 1, k) expanding the slice axis and a linear 3x3x3 output
/// convolution. All convolutions are 3x3x3 with same padding and leaky
/// rectifier activations.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SrModelConfig {
    /// Slice-axis upsampling factor.
    pub k: usize,
    /// Encoder depth (number of poolings).
    pub levels: usize,
    /// Channels of the first encoder block; doubles per level.
    pub base_channels: usize,
    /// Negative-side slope of the leaky rectifier.
    pub leaky_slope: f64,
    /// When set, the network output is added to a nearest-neighbour
    /// z-repeat of the input instead of predicting the target directly.
    pub residual: bool,
}

impl SrModelConfig {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(IqtError::Parameter(format!(
                "upsampling factor must be >= 2, got {k}"
            )));
        }
        Ok(Self {
            k,
            levels: 3,
            base_channels: 16,
            leaky_slope: 0.01,
            residual: false,
        })
    }

    /// Smallest useful instantiation (one level, two channels); used by the
    /// gradient checks.
    pub fn tiny(k: usize) -> Result<Self> {
        let mut c = Self::new(k)?;
        c.levels = 1;
        c.base_channels = 2;
        Ok(c)
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.levels = levels;
        self
    }

    pub fn with_base_channels(mut self, c: usize) -> Self {
        self.base_channels = c;
        self
    }

    pub fn with_residual(mut self, on: bool) -> Self {
        self.residual = on;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(IqtError::Parameter("k must be >= 2".into()));
        }
        if self.levels < 1 {
            return Err(IqtError::Parameter("levels must be >= 1".into()));
        }
        if self.base_channels < 1 {
            return Err(IqtError::Parameter("base_channels must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SegKind {
    Conv,
    UpConv2,
    UpConvZ,
}

/// One parameterised layer's slice of the flat vector.
#[derive(Debug, Clone)]
struct ParamSeg {
    kind: SegKind,
    offset: usize,
    w_len: usize,
    b_len: usize,
    c_in: usize,
    c_out: usize,
}

impl ParamSeg {
    fn len(&self) -> usize {
        self.w_len + self.b_len
    }
}

#[derive(Debug, Clone)]
enum Node {
    Conv(usize),
    Leaky,
    Pool,
    SaveSkip(usize),
    ConcatSkip(usize),
    UpConv2(usize),
    UpConvZ(usize),
}

const KERNEL: (usize, usize, usize) = (3, 3, 3);

fn build_plan(cfg: &SrModelConfig) -> (Vec<Node>, Vec<ParamSeg>) {
    let mut nodes = Vec::new();
    let mut segs: Vec<ParamSeg> = Vec::new();
    let mut offset = 0usize;
    let mut push_seg = |kind: SegKind, c_in: usize, c_out: usize, offset: &mut usize| -> usize {
        let w_len = match kind {
            SegKind::Conv => c_out * c_in * KERNEL.0 * KERNEL.1 * KERNEL.2,
            SegKind::UpConv2 => c_in * c_out * 4,
            SegKind::UpConvZ => c_in * c_out * cfg.k,
        };
        let seg = ParamSeg {
            kind,
            offset: *offset,
            w_len,
            b_len: c_out,
            c_in,
            c_out,
        };
        *offset += seg.len();
        segs.push(seg);
        segs.len() - 1
    };

    let ch = |level: usize| cfg.base_channels << level;
    let mut prev = 1usize;
    for level in 0..cfg.levels {
        let c = ch(level);
        nodes.push(Node::Conv(push_seg(SegKind::Conv, prev, c, &mut offset)));
        nodes.push(Node::Leaky);
        nodes.push(Node::Conv(push_seg(SegKind::Conv, c, c, &mut offset)));
        nodes.push(Node::Leaky);
        nodes.push(Node::SaveSkip(level));
        nodes.push(Node::Pool);
        prev = c;
    }
    let cb = ch(cfg.levels);
    nodes.push(Node::Conv(push_seg(SegKind::Conv, prev, cb, &mut offset)));
    nodes.push(Node::Leaky);
    nodes.push(Node::Conv(push_seg(SegKind::Conv, cb, cb, &mut offset)));
    nodes.push(Node::Leaky);
    prev = cb;
    for level in (0..cfg.levels).rev() {
        let c = ch(level);
        nodes.push(Node::UpConv2(push_seg(
            SegKind::UpConv2,
            prev,
            c,
            &mut offset,
        )));
        nodes.push(Node::Leaky);
        nodes.push(Node::ConcatSkip(level));
        nodes.push(Node::Conv(push_seg(SegKind::Conv, 2 * c, c, &mut offset)));
        nodes.push(Node::Leaky);
        nodes.push(Node::Conv(push_seg(SegKind::Conv, c, c, &mut offset)));
        nodes.push(Node::Leaky);
        prev = c;
    }
    nodes.push(Node::UpConvZ(push_seg(
        SegKind::UpConvZ,
        prev,
        prev,
        &mut offset,
    )));
    nodes.push(Node::Leaky);
    // Final layer: linear (no activation follows).
    nodes.push(Node::Conv(push_seg(SegKind::Conv, prev, 1, &mut offset)));
    (nodes, segs)
}

/// The super-resolution model: a configuration plus a flat parameter
/// vector, with per-layer views derived from the configuration.
#[derive(Debug, Clone)]
pub struct SrModel {
    config: SrModelConfig,
    params: Vec<f64>,
    plan: Vec<Node>,
    segs: Vec<ParamSeg>,
}

impl SrModel {
    /// Fresh model with fan-in-scaled uniform weights and zero biases,
    /// deterministic in `seed`.
    pub fn init(config: SrModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (plan, segs) = build_plan(&config);
        let total: usize = segs.iter().map(|s| s.len()).sum();
        let mut params = vec![0.0; total];
        let mut rng = SplitMix64::new(seed);
        for seg in &segs {
            let fan_in = match seg.kind {
                SegKind::Conv => seg.c_in * KERNEL.0 * KERNEL.1 * KERNEL.2,
                // Non-overlapping transposed convs contribute c_in terms
                // per output element.
                SegKind::UpConv2 | SegKind::UpConvZ => seg.c_in,
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            for i in 0..seg.w_len {
                params[seg.offset + i] = rng.range(-bound, bound);
            }
            // Biases stay zero.
        }
        Ok(Self {
            config,
            params,
            plan,
            segs,
        })
    }

    /// Model with every parameter zero (useful for contract tests).
    pub fn zeros(config: SrModelConfig) -> Result<Self> {
        config.validate()?;
        let (plan, segs) = build_plan(&config);
        let total: usize = segs.iter().map(|s| s.len()).sum();
        Ok(Self {
            config,
            params: vec![0.0; total],
            plan,
            segs,
        })
    }

    pub fn config(&self) -> &SrModelConfig {
        &self.config
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Replace the parameter vector (length must match).
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(IqtError::Shape(format!(
                "parameter vector length {} does not match model {}",
                params.len(),
                self.params.len()
            )));
        }
        if let Some(pos) = params.iter().position(|p| !p.is_finite()) {
            return Err(IqtError::Numeric(format!(
                "non-finite parameter at index {pos}"
            )));
        }
        self.params = params;
        Ok(())
    }

    fn seg_slices(&self, seg: &ParamSeg) -> (&[f64], &[f64]) {
        let w = &self.params[seg.offset..seg.offset + seg.w_len];
        let b = &self.params[seg.offset + seg.w_len..seg.offset + seg.len()];
        (w, b)
    }

    fn check_input(&self, x: &Tensor5) -> Result<()> {
        let [_, c, nx, ny, _] = x.shape;
        if c != 1 {
            return Err(IqtError::Shape(format!(
                "expected a single input channel, got {c}"
            )));
        }
        let div = 1usize << self.config.levels;
        if nx % div != 0 || ny % div != 0 {
            return Err(IqtError::Shape(format!(
                "in-plane dims ({nx}, {ny}) must be divisible by 2^levels = {div}"
            )));
        }
        Ok(())
    }
}

/// Nearest-neighbour repeat of the (single-channel) input along z by k.
fn repeat_z(x: &Tensor5, k: usize) -> Tensor5 {
    let [nb, nc, nx, ny, nz] = x.shape;
    let mut out = Tensor5::zeros([nb, nc, nx, ny, nz * k]);
    for (i, &v) in x.data.iter().enumerate() {
        let base = i * k;
        out.data[base..base + k].fill(v);
    }
    out
}

enum Tape {
    Conv { seg: usize, input: Tensor5 },
    Leaky { input: Tensor5 },
    Pool { in_shape: [usize; 5], argmax: Vec<usize> },
    SaveSkip { slot: usize },
    ConcatSkip { slot: usize, c_main: usize },
    UpConv2 { seg: usize, input: Tensor5 },
    UpConvZ { seg: usize, input: Tensor5 },
}

fn run_forward(model: &SrModel, x: &Tensor5, mut tape: Option<&mut Vec<Tape>>) -> Result<Tensor5> {
    model.check_input(x)?;
    let slope = model.config.leaky_slope;
    let mut skips: Vec<Option<Tensor5>> = vec![None; model.config.levels];
    let mut cur = x.clone();
    for (li, node) in model.plan.iter().enumerate() {
        cur = match node {
            Node::Conv(si) | Node::UpConv2(si) | Node::UpConvZ(si) => {
                let seg = &model.segs[*si];
                let (w, b) = model.seg_slices(seg);
                let out = match seg.kind {
                    SegKind::Conv => conv3d_forward(&cur, w, b, seg.c_out, KERNEL),
                    SegKind::UpConv2 => upconv2_forward(&cur, w, b, seg.c_out),
                    SegKind::UpConvZ => upconvz_forward(&cur, w, b, seg.c_out, model.config.k),
                };
                if let Some(t) = tape.as_deref_mut() {
                    t.push(match seg.kind {
                        SegKind::Conv => Tape::Conv { seg: *si, input: cur },
                        SegKind::UpConv2 => Tape::UpConv2 { seg: *si, input: cur },
                        SegKind::UpConvZ => Tape::UpConvZ { seg: *si, input: cur },
                    });
                }
                out
            }
            Node::Leaky => {
                let out = leaky_forward(&cur, slope);
                if let Some(t) = tape.as_deref_mut() {
                    t.push(Tape::Leaky { input: cur });
                }
                out
            }
            Node::Pool => {
                let (out, argmax) = maxpool21_forward(&cur);
                if let Some(t) = tape.as_deref_mut() {
                    t.push(Tape::Pool {
                        in_shape: cur.shape,
                        argmax,
                    });
                }
                out
            }
            Node::SaveSkip(slot) => {
                skips[*slot] = Some(cur.clone());
                if let Some(t) = tape.as_deref_mut() {
                    t.push(Tape::SaveSkip { slot: *slot });
                }
                cur
            }
            Node::ConcatSkip(slot) => {
                let skip = skips[*slot]
                    .as_ref()
                    .ok_or_else(|| IqtError::Numeric(format!("skip slot {slot} empty")))?;
                let c_main = cur.shape[1];
                let out = cur.concat_channels(skip)?;
                if let Some(t) = tape.as_deref_mut() {
                    t.push(Tape::ConcatSkip {
                        slot: *slot,
                        c_main,
                    });
                }
                out
            }
        };
        if let Some(pos) = cur.data.iter().position(|v| !v.is_finite()) {
            return Err(IqtError::Numeric(format!(
                "non-finite activation after layer {li} (element {pos})"
            )));
        }
    }
    if model.config.residual {
        let base = repeat_z(x, model.config.k);
        for (c, b) in cur.data.iter_mut().zip(&base.data) {
            *c += b;
        }
    }
    Ok(cur)
}

/// Run the network. Output shape is (batch, 1, x, y, k*z).
pub fn forward(model: &SrModel, x: &Tensor5) -> Result<Tensor5> {
    run_forward(model, x, None)
}

/// Exact reverse-mode gradient of `loss_mse(forward(model, x), target)`
/// with respect to every parameter, as a flat vector aligned with
/// [`SrModel::params`].
pub fn gradient(model: &SrModel, x: &Tensor5, target: &Tensor5) -> Result<Vec<f64>> {
    let mut tape = Vec::new();
    let y = run_forward(model, x, Some(&mut tape))?;
    if y.shape != target.shape {
        return Err(IqtError::Shape(format!(
            "prediction shape {:?} does not match target {:?}",
            y.shape, target.shape
        )));
    }
    let n = y.len() as f64;
    // d(MSE)/d(pred) = 2 (pred - target) / N.
    let mut d_cur = Tensor5 {
        data: y
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| 2.0 * (p - t) / n)
            .collect(),
        shape: y.shape,
    };
    // The residual path adds a parameter-free term; parameter gradients are
    // unaffected, so backpropagation through the main path proceeds as-is.

    let mut grads = vec![0.0; model.params.len()];
    let mut skip_grads: Vec<Option<Tensor5>> = vec![None; model.config.levels];
    let slope = model.config.leaky_slope;
    for (li, entry) in tape.iter().enumerate().rev() {
        match entry {
            Tape::Conv { seg, input } | Tape::UpConv2 { seg, input } | Tape::UpConvZ { seg, input } => {
                let s = &model.segs[*seg];
                let (w, _) = model.seg_slices(s);
                let (d_in, d_w, d_b) = match s.kind {
                    SegKind::Conv => conv3d_backward(input, w, &d_cur, s.c_out, KERNEL),
                    SegKind::UpConv2 => upconv2_backward(input, w, &d_cur, s.c_out),
                    SegKind::UpConvZ => upconvz_backward(input, w, &d_cur, s.c_out, model.config.k),
                };
                grads[s.offset..s.offset + s.w_len].copy_from_slice(&d_w);
                grads[s.offset + s.w_len..s.offset + s.len()].copy_from_slice(&d_b);
                d_cur = d_in;
            }
            Tape::Leaky { input } => {
                d_cur = leaky_backward(input, &d_cur, slope);
            }
            Tape::Pool { in_shape, argmax } => {
                d_cur = maxpool21_backward(&d_cur, argmax, *in_shape);
            }
            Tape::SaveSkip { slot } => {
                if let Some(extra) = skip_grads[*slot].take() {
                    for (d, e) in d_cur.data.iter_mut().zip(&extra.data) {
                        *d += e;
                    }
                }
            }
            Tape::ConcatSkip { slot, c_main } => {
                let (d_main, d_skip) = d_cur.split_channels(*c_main);
                skip_grads[*slot] = Some(d_skip);
                d_cur = d_main;
            }
        }
        if let Some(pos) = d_cur.data.iter().position(|v| !v.is_finite()) {
            return Err(IqtError::Numeric(format!(
                "non-finite gradient flowing out of layer {li} (element {pos})"
            )));
        }
    }
    Ok(grads)
}

/// On-disk checkpoint header; the parameter vector lives in a sibling
/// little-endian float32 binary file.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    config: SrModelConfig,
    parameter_count: usize,
    /// Free-form training provenance (seed, epochs, data description).
    provenance: serde_json::Value,
}

const CHECKPOINT_VERSION: u32 = 1;

impl SrModel {
    /// Write `<path>` (JSON header) and `<path with .bin extension>`
    /// (parameters as little-endian f32).
    pub fn save(&self, path: impl AsRef<Path>, provenance: serde_json::Value) -> Result<()> {
        let path = path.as_ref();
        let header = CheckpointHeader {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            parameter_count: self.params.len(),
            provenance,
        };
        let json = serde_json::to_string_pretty(&header)
            .map_err(|e| IqtError::Format(format!("checkpoint header encode: {e}")))?;
        std::fs::write(path, json)?;
        let mut bytes = Vec::with_capacity(4 * self.params.len());
        for &p in &self.params {
            bytes.extend_from_slice(&(p as f32).to_le_bytes());
        }
        std::fs::write(path.with_extension("bin"), bytes)?;
        Ok(())
    }

    /// Load a checkpoint written by [`SrModel::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)?;
        let header: CheckpointHeader = serde_json::from_str(&json)
            .map_err(|e| IqtError::Format(format!("checkpoint header decode: {e}")))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(IqtError::Unsupported(format!(
                "checkpoint format version {}",
                header.format_version
            )));
        }
        let bytes = std::fs::read(path.with_extension("bin"))?;
        if bytes.len() != 4 * header.parameter_count {
            return Err(IqtError::Format(format!(
                "parameter file holds {} bytes, expected {}",
                bytes.len(),
                4 * header.parameter_count
            )));
        }
        let params: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let mut model = SrModel::zeros(header.config)?;
        model.set_params(params)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn rand_tensor(seed: u64, shape: [usize; 5]) -> Tensor5 {
        let mut rng = SplitMix64::new(seed);
        Tensor5 {
            data: (0..shape.iter().product::<usize>())
                .map(|_| rng.range(-1.0, 1.0))
                .collect(),
            shape,
        }
    }

    #[test]
    fn forward_shape_contract() {
        let cfg = SrModelConfig::tiny(8).unwrap();
        let model = SrModel::init(cfg, 1).unwrap();
        let x = rand_tensor(2, [1, 1, 16, 16, 4]);
        let y = forward(&model, &x).unwrap();
        assert_eq!(y.shape, [1, 1, 16, 16, 32]);
    }

    #[test]
    fn forward_shape_contract_random_sweep() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..6 {
            let levels = 1 + rng.below(2);
            let k = 2 + rng.below(5);
            let cfg = SrModelConfig::new(k)
                .unwrap()
                .with_levels(levels)
                .with_base_channels(2);
            let model = SrModel::init(cfg, 7).unwrap();
            let div = 1 << levels;
            let nx = div * (1 + rng.below(3));
            let ny = div * (1 + rng.below(3));
            let nz = 1 + rng.below(4);
            let nb = 1 + rng.below(2);
            let x = rand_tensor(rng.next_u64(), [nb, 1, nx, ny, nz]);
            let y = forward(&model, &x).unwrap();
            assert_eq!(y.shape, [nb, 1, nx, ny, k * nz]);
        }
    }

    #[test]
    fn indivisible_in_plane_dims_error() {
        let cfg = SrModelConfig::tiny(2).unwrap();
        let model = SrModel::init(cfg, 0).unwrap();
        let x = rand_tensor(1, [1, 1, 7, 8, 2]);
        assert!(matches!(forward(&model, &x), Err(IqtError::Shape(_))));
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let cfg = SrModelConfig::tiny(2).unwrap();
        let model = SrModel::zeros(cfg).unwrap();
        let x = rand_tensor(4, [2, 1, 8, 8, 2]);
        let y = forward(&model, &x).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_mode_passes_the_repeated_input_through_zero_params() {
        let cfg = SrModelConfig::tiny(2).unwrap().with_residual(true);
        let model = SrModel::zeros(cfg).unwrap();
        let x = rand_tensor(5, [1, 1, 8, 8, 3]);
        let y = forward(&model, &x).unwrap();
        for xi in 0..8 {
            for yi in 0..8 {
                for z in 0..3 {
                    for dz in 0..2 {
                        assert_eq!(y.at(0, 0, xi, yi, 2 * z + dz), x.at(0, 0, xi, yi, z));
                    }
                }
            }
        }
    }

    #[test]
    fn batch_elements_do_not_interact() {
        let cfg = SrModelConfig::tiny(4).unwrap();
        let model = SrModel::init(cfg, 9).unwrap();
        let a = rand_tensor(10, [1, 1, 8, 8, 2]);
        let b = rand_tensor(11, [1, 1, 8, 8, 2]);
        let batch = Tensor5::stack(&[&a, &b]).unwrap();
        let y_batch = forward(&model, &batch).unwrap();
        let y_a = forward(&model, &a).unwrap();
        let y_b = forward(&model, &b).unwrap();
        assert_eq!(y_batch.batch_slice(0), y_a);
        assert_eq!(y_batch.batch_slice(1), y_b);
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = SrModelConfig::tiny(2).unwrap();
        let model = SrModel::init(cfg.clone(), 3).unwrap();
        let x = rand_tensor(6, [1, 1, 8, 8, 2]);
        let y1 = forward(&model, &x).unwrap();
        let y2 = forward(&model, &x).unwrap();
        assert_eq!(y1, y2);
        let model2 = SrModel::init(cfg, 3).unwrap();
        assert_eq!(model.params(), model2.params());
    }

    #[test]
    fn zero_input_zero_target_gives_zero_gradient() {
        let cfg = SrModelConfig::tiny(2).unwrap();
        let model = SrModel::init(cfg, 5).unwrap();
        let x = Tensor5::zeros([1, 1, 8, 8, 2]);
        let t = Tensor5::zeros([1, 1, 8, 8, 4]);
        let g = gradient(&model, &x, &t).unwrap();
        // With zero input and zero biases every activation is zero, so the
        // prediction and all weight gradients vanish.
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn final_layer_gradient_scales_linearly_with_residuals() {
        let cfg = SrModelConfig::tiny(2).unwrap();
        let model = SrModel::init(cfg, 6).unwrap();
        let x = rand_tensor(12, [1, 1, 8, 8, 2]);
        let y = forward(&model, &x).unwrap();
        // Targets shifted so residuals scale by 1 and 2.
        let t1 = Tensor5 {
            data: y.data.iter().map(|v| v - 1.0).collect(),
            shape: y.shape,
        };
        let t2 = Tensor5 {
            data: y.data.iter().map(|v| v - 2.0).collect(),
            shape: y.shape,
        };
        let g1 = gradient(&model, &x, &t1).unwrap();
        let g2 = gradient(&model, &x, &t2).unwrap();
        // Final layer is the last segment in the flat layout.
        let final_seg_offset = {
            let n = model.parameter_count();
            let last = model.segs.last().unwrap();
            assert_eq!(last.offset + last.len(), n);
            last.offset
        };
        for i in final_seg_offset..model.parameter_count() {
            assert!(
                (g2[i] - 2.0 * g1[i]).abs() <= 1e-9 * g1[i].abs().max(1e-12),
                "index {i}: {} vs 2*{}",
                g2[i],
                g1[i]
            );
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let cfg = SrModelConfig::tiny(2).unwrap();
        let model = SrModel::init(cfg, 8).unwrap();
        model
            .save(&path, serde_json::json!({"seed": 8}))
            .unwrap();
        let loaded = SrModel::load(&path).unwrap();
        assert_eq!(loaded.config(), model.config());
        assert_eq!(loaded.parameter_count(), model.parameter_count());
        // Parameters survive the f32 round trip within f32 precision.
        for (a, b) in model.params().iter().zip(loaded.params()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-6));
        }
        // Saving the loaded model reproduces the same bytes.
        let path2 = dir.path().join("model2.json");
        loaded.save(&path2, serde_json::json!({"seed": 8})).unwrap();
        assert_eq!(
            std::fs::read(path.with_extension("bin")).unwrap(),
            std::fs::read(path2.with_extension("bin")).unwrap()
        );
    }
}
