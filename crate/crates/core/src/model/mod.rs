//! The spotting network: a per-frame graph convolution over the 12 ROI nodes,
//! flattened and fed through a dilated temporal convolution stack that emits
//! ten logit channels per frame.
//!
//! Head layout, per expression kind (macro uses channels 0-4, micro 5-9):
//!
//! | offset | meaning                                   |
//! |--------|-------------------------------------------|
//! | 0      | expression-frame logit (sigmoid)          |
//! | 1..=4  | onset / apex / offset / background (softmax) |

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use thiserror::Error;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError,
};

use crate::feature_io::{ExpressionKind, NUM_CHANNELS, NUM_ROIS};
use crate::numerics::ops::{self, Conv1dSpec};
use crate::numerics::{NumericsError, Parameter, Real, Tensor};

/// Logit channels per expression kind.
pub const CHANNELS_PER_KIND: usize = 5;
pub const HEAD_CHANNELS: usize = 2 * CHANNELS_PER_KIND;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("tape does not match parameters: {0}")]
    Tape(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    /// Hidden width of each GCN layer; the length is the layer count.
    pub gcn_hidden: Vec<usize>,
    pub neck_channels: [usize; 2],
    pub head_channels: usize,
    pub kernel: usize,
    pub dilations: [usize; 3],
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            gcn_hidden: vec![16],
            neck_channels: [64, 64],
            head_channels: HEAD_CHANNELS,
            kernel: 3,
            dilations: [1, 2, 2],
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_gcn(layers: usize, hidden: usize) -> Self {
        Self {
            gcn_hidden: vec![hidden; layers],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.gcn_hidden.is_empty() || self.gcn_hidden.contains(&0) {
            return Err(ModelError::Config(
                "need at least one GCN layer with nonzero width".into(),
            ));
        }
        if self.head_channels != HEAD_CHANNELS {
            return Err(ModelError::Config(format!("head must have {HEAD_CHANNELS} channels")));
        }
        if self.neck_channels.contains(&0) {
            return Err(ModelError::Config("neck channels must be nonzero".into()));
        }
        for spec in self.conv_specs_unchecked() {
            Conv1dSpec::new(spec.0, spec.1, self.kernel, spec.2)?;
        }
        Ok(())
    }

    /// Width of the flattened per-frame embedding (12 · last hidden).
    pub fn flatten_dim(&self) -> usize {
        NUM_ROIS * self.gcn_hidden.last().copied().unwrap_or(0)
    }

    fn conv_specs_unchecked(&self) -> [(usize, usize, usize); 3] {
        [
            (self.flatten_dim(), self.neck_channels[0], self.dilations[0]),
            (self.neck_channels[0], self.neck_channels[1], self.dilations[1]),
            (self.neck_channels[1], self.head_channels, self.dilations[2]),
        ]
    }

    pub fn conv_specs(&self) -> Result<[Conv1dSpec; 3], ModelError> {
        let [a, b, c] = self.conv_specs_unchecked();
        Ok([
            Conv1dSpec::new(a.0, a.1, self.kernel, a.2)?,
            Conv1dSpec::new(b.0, b.1, self.kernel, b.2)?,
            Conv1dSpec::new(c.0, c.1, self.kernel, c.2)?,
        ])
    }

    /// Half-width of the temporal receptive field of the conv stack.
    pub fn receptive_radius(&self) -> usize {
        self.dilations.iter().map(|d| (self.kernel - 1) / 2 * d).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T = f32> {
    pub spec: Conv1dSpec,
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: ModelConfig,
    /// `W^l`, shaped `d_in × d_out`; the first is `2 × hidden`.
    pub gcn: Vec<Parameter<T>>,
    pub convs: Vec<ConvLayer<T>>,
}

fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Xavier-uniform weights and zero biases, deterministic in `init_seed`.
pub fn init_params<T: Real>(cfg: &ModelConfig) -> Result<ModelParams<T>, ModelError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let mut uniform = |shape: &[usize], bound: f64| {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Tensor::from_fn(shape, |_| T::from_f64_lossy(dist.sample(&mut rng)))
    };
    let mut gcn = Vec::new();
    let mut d_in = NUM_CHANNELS;
    for &h in &cfg.gcn_hidden {
        gcn.push(Parameter::new(uniform(&[d_in, h], xavier_bound(d_in, h))));
        d_in = h;
    }
    let mut convs = Vec::new();
    for spec in cfg.conv_specs()? {
        let bound = xavier_bound(spec.c_in * spec.kernel, spec.c_out * spec.kernel);
        convs.push(ConvLayer {
            spec,
            weight: Parameter::new(uniform(&[spec.c_out, spec.c_in, spec.kernel], bound)),
            bias: Parameter::new(Tensor::zeros(&[spec.c_out])),
        });
    }
    Ok(ModelParams {
        config: cfg.clone(),
        gcn,
        convs,
    })
}

impl<T: Real> ModelParams<T> {
    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out: Vec<&Parameter<T>> = self.gcn.iter().collect();
        for c in &self.convs {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        out
    }

    /// Parameters in declaration order: GCN weights, then each conv's weight and bias.
    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out: Vec<&mut Parameter<T>> = self.gcn.iter_mut().collect();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(Parameter::zero_grad);
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let cast_p = |p: &Parameter<T>| Parameter {
            value: p.value.cast(),
            grad: p.grad.cast(),
        };
        ModelParams {
            config: self.config.clone(),
            gcn: self.gcn.iter().map(cast_p).collect(),
            convs: self
                .convs
                .iter()
                .map(|c| ConvLayer {
                    spec: c.spec,
                    weight: cast_p(&c.weight),
                    bias: cast_p(&c.bias),
                })
                .collect(),
        }
    }
}

/// Intermediate activations recorded by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct Tape<T = f32> {
    frames: usize,
    /// Per GCN layer: input `X` and `A·X`, both stacked `(T·12) × d`.
    gcn_in: Vec<Tensor<T>>,
    gcn_ax: Vec<Tensor<T>>,
    /// Per GCN layer: `A·X·W` before relu.
    gcn_pre: Vec<Tensor<T>>,
    /// Per conv layer: input and pre-activation output.
    conv_in: Vec<Tensor<T>>,
    conv_pre: Vec<Tensor<T>>,
}

impl<T> Tape<T> {
    pub fn frames(&self) -> usize {
        self.frames
    }
}

/// Multiplies each frame's `12 × d` block of a stacked `(T·12) × d` tensor by `adj`.
fn apply_adjacency<T: Real>(adj: &Tensor<T>, x: &Tensor<T>, transpose: bool) -> Tensor<T> {
    let d = x.shape()[1];
    let frames = x.shape()[0] / NUM_ROIS;
    let a = adj.data();
    let xd = x.data();
    let mut out = vec![T::zero(); xd.len()];
    let mut acc = vec![0f64; NUM_ROIS * d];
    for t in 0..frames {
        let block = &xd[t * NUM_ROIS * d..(t + 1) * NUM_ROIS * d];
        acc.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..NUM_ROIS {
            for j in 0..NUM_ROIS {
                let aij = if transpose {
                    a[j * NUM_ROIS + i]
                } else {
                    a[i * NUM_ROIS + j]
                }
                .as_f64();
                if aij == 0.0 {
                    continue;
                }
                for k in 0..d {
                    acc[i * d + k] += aij * block[j * d + k].as_f64();
                }
            }
        }
        for (o, &v) in out[t * NUM_ROIS * d..(t + 1) * NUM_ROIS * d].iter_mut().zip(&acc) {
            *o = T::from_f64_lossy(v);
        }
    }
    Tensor::from_vec(x.shape(), out).expect("same shape")
}

fn transpose<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (r, c) = (x.shape()[0], x.shape()[1]);
    let d = x.data();
    Tensor::from_fn(&[c, r], |i| d[(i % r) * c + i / r])
}

/// Runs the network on `feats` (`T × 12 × 2`) with normalized adjacency `adj`
/// (`12 × 12`), returning `10 × T` logits and the tape for [`backward`].
pub fn forward<T: Real>(
    params: &ModelParams<T>,
    adj: &Tensor<T>,
    feats: &Tensor<T>,
) -> Result<(Tensor<T>, Tape<T>), ModelError> {
    if adj.shape() != [NUM_ROIS, NUM_ROIS] {
        return Err(NumericsError::ShapeMismatch {
            op: "forward",
            detail: format!("adjacency {:?}", adj.shape()),
        }
        .into());
    }
    let frames = match feats.shape() {
        [t, n, c] if *n == NUM_ROIS && *c == NUM_CHANNELS && *t > 0 => *t,
        other => {
            return Err(NumericsError::ShapeMismatch {
                op: "forward",
                detail: format!("features {other:?}, expected [T, {NUM_ROIS}, {NUM_CHANNELS}]"),
            }
            .into())
        }
    };
    let mut tape = Tape {
        frames,
        gcn_in: Vec::new(),
        gcn_ax: Vec::new(),
        gcn_pre: Vec::new(),
        conv_in: Vec::new(),
        conv_pre: Vec::new(),
    };
    let mut x = feats.clone().reshape(&[frames * NUM_ROIS, NUM_CHANNELS])?;
    for w in &params.gcn {
        let ax = apply_adjacency(adj, &x, false);
        let pre = ops::matmul(&ax, &w.value)?;
        let next = ops::relu(&pre);
        tape.gcn_in.push(x);
        tape.gcn_ax.push(ax);
        tape.gcn_pre.push(pre);
        x = next;
    }
    let flat = x.reshape(&[frames, params.config.flatten_dim()])?;
    let mut h = transpose(&flat);
    let last = params.convs.len().saturating_sub(1);
    for (li, layer) in params.convs.iter().enumerate() {
        let pre = ops::conv1d(&layer.spec, &h, &layer.weight.value, &layer.bias.value)?;
        let next = if li < last { ops::relu(&pre) } else { pre.clone() };
        tape.conv_in.push(h);
        tape.conv_pre.push(pre);
        h = next;
    }
    Ok((h, tape))
}

/// Back-propagates `upstream` (`10 × T`) through the recorded tape, adding
/// into every parameter's gradient.
pub fn backward<T: Real>(
    params: &mut ModelParams<T>,
    adj: &Tensor<T>,
    tape: &Tape<T>,
    upstream: &Tensor<T>,
) -> Result<(), ModelError> {
    if tape.conv_in.len() != params.convs.len() || tape.gcn_in.len() != params.gcn.len() {
        return Err(ModelError::Tape("layer count differs".into()));
    }
    if upstream.shape() != [params.config.head_channels, tape.frames] {
        return Err(ModelError::Tape(format!(
            "upstream {:?}, expected [{}, {}]",
            upstream.shape(),
            params.config.head_channels,
            tape.frames
        )));
    }
    let mut g = upstream.clone();
    let last = params.convs.len() - 1;
    for li in (0..params.convs.len()).rev() {
        if li < last {
            g = ops::relu_backward(&tape.conv_pre[li], &g);
        }
        let layer = &mut params.convs[li];
        let grads = ops::conv1d_backward(&layer.spec, &tape.conv_in[li], &layer.weight.value, &g)?;
        layer.weight.grad.add_assign(&grads.weight);
        layer.bias.grad.add_assign(&grads.bias);
        g = grads.input;
    }
    let hidden = *params.config.gcn_hidden.last().expect("validated config");
    let mut g = transpose(&g).reshape(&[tape.frames * NUM_ROIS, hidden])?;
    for li in (0..params.gcn.len()).rev() {
        g = ops::relu_backward(&tape.gcn_pre[li], &g);
        let (d_ax, d_w) = ops::matmul_backward(&tape.gcn_ax[li], &params.gcn[li].value, &g)?;
        params.gcn[li].grad.add_assign(&d_w);
        if li > 0 {
            g = apply_adjacency(adj, &d_ax, true);
        }
    }
    Ok(())
}

/// Per-frame probability sequences for one expression kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KindMaps {
    pub expression: Vec<f32>,
    pub onset: Vec<f32>,
    pub apex: Vec<f32>,
    pub offset: Vec<f32>,
    pub background: Vec<f32>,
}

impl KindMaps {
    pub fn zeros(len: usize) -> Self {
        Self {
            expression: vec![0.0; len],
            onset: vec![0.0; len],
            apex: vec![0.0; len],
            offset: vec![0.0; len],
            background: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.apex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apex.is_empty()
    }

    fn sequences(&self) -> [&Vec<f32>; 5] {
        [
            &self.expression,
            &self.onset,
            &self.apex,
            &self.offset,
            &self.background,
        ]
    }

    fn sequences_mut(&mut self) -> [&mut Vec<f32>; 5] {
        [
            &mut self.expression,
            &mut self.onset,
            &mut self.apex,
            &mut self.offset,
            &mut self.background,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbabilityMaps {
    pub macro_maps: KindMaps,
    pub micro_maps: KindMaps,
}

impl ProbabilityMaps {
    pub fn zeros(len: usize) -> Self {
        Self {
            macro_maps: KindMaps::zeros(len),
            micro_maps: KindMaps::zeros(len),
        }
    }

    pub fn kind(&self, kind: ExpressionKind) -> &KindMaps {
        match kind {
            ExpressionKind::Macro => &self.macro_maps,
            ExpressionKind::Micro => &self.micro_maps,
        }
    }

    pub fn kind_mut(&mut self, kind: ExpressionKind) -> &mut KindMaps {
        match kind {
            ExpressionKind::Macro => &mut self.macro_maps,
            ExpressionKind::Micro => &mut self.micro_maps,
        }
    }

    pub fn len(&self) -> usize {
        self.macro_maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.macro_maps.is_empty()
    }

    /// Adds `other`'s frames `[0, n)` into this map starting at `start`, and
    /// bumps `counts` for the same frames.
    pub fn accumulate(&mut self, other: &ProbabilityMaps, start: usize, n: usize, counts: &mut [u32]) {
        for kind in ExpressionKind::ALL {
            let src = other.kind(kind);
            let dst = self.kind_mut(kind);
            for (d, s) in dst.sequences_mut().into_iter().zip(src.sequences()) {
                for t in 0..n {
                    d[start + t] += s[t];
                }
            }
        }
        for c in &mut counts[start..start + n] {
            *c += 1;
        }
    }

    /// Divides every frame by its count (frames with zero count are left as is).
    pub fn divide(&mut self, counts: &[u32]) {
        for kind in ExpressionKind::ALL {
            for seq in self.kind_mut(kind).sequences_mut() {
                for (v, &c) in seq.iter_mut().zip(counts) {
                    if c > 0 {
                        *v /= c as f32;
                    }
                }
            }
        }
    }
}

/// Turns `10 × T` logits into probability maps: sigmoid on each kind's
/// expression channel, 4-way softmax over its onset/apex/offset/background.
pub fn decode_probabilities(logits: &Tensor<f32>) -> Result<ProbabilityMaps, ModelError> {
    let (c, t) = logits.dims2("decode_probabilities")?;
    if c != HEAD_CHANNELS {
        return Err(NumericsError::ShapeMismatch {
            op: "decode_probabilities",
            detail: format!("{c} channels, expected {HEAD_CHANNELS}"),
        }
        .into());
    }
    let mut maps = ProbabilityMaps::zeros(t);
    let d = logits.data();
    for kind in ExpressionKind::ALL {
        let base = kind.index() * CHANNELS_PER_KIND;
        let exp_row = Tensor::from_vec(&[1, t], d[base * t..(base + 1) * t].to_vec())?;
        let cls = Tensor::from_vec(&[4, t], d[(base + 1) * t..(base + 5) * t].to_vec())?;
        let p_exp = ops::sigmoid(&exp_row);
        let p_cls = ops::softmax_channels(&cls)?;
        let km = maps.kind_mut(kind);
        km.expression = p_exp.into_data();
        let pc = p_cls.data();
        km.onset = pc[0..t].to_vec();
        km.apex = pc[t..2 * t].to_vec();
        km.offset = pc[2 * t..3 * t].to_vec();
        km.background = pc[3 * t..4 * t].to_vec();
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(t: usize, seed: u64) -> Tensor<f64> {
        let mut s = seed;
        Tensor::from_fn(&[t, NUM_ROIS, NUM_CHANNELS], |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn default_shapes_and_count() {
        let p: ModelParams = init_params(&ModelConfig::default()).unwrap();
        assert_eq!(p.gcn[0].value.shape(), &[2, 16]);
        assert_eq!(p.convs[0].weight.value.shape(), &[64, 192, 3]);
        assert_eq!(p.convs[1].weight.value.shape(), &[64, 64, 3]);
        assert_eq!(p.convs[2].weight.value.shape(), &[10, 64, 3]);
        // 2·16 + (64·192·3 + 64) + (64·64·3 + 64) + (10·64·3 + 10)
        assert_eq!(p.num_parameters(), 51_242);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig {
            init_seed: 9,
            ..ModelConfig::default()
        };
        let a: ModelParams = init_params(&cfg).unwrap();
        assert_eq!(a, init_params(&cfg).unwrap());
        let bound = xavier_bound(2, 16) as f32;
        assert!(a.gcn[0].value.data().iter().all(|v| v.abs() <= bound));
        for c in &a.convs {
            let b = xavier_bound(c.spec.c_in * 3, c.spec.c_out * 3) as f32;
            assert!(c.weight.value.data().iter().all(|v| v.abs() <= b));
            assert!(c.bias.value.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn receptive_radius_is_five() {
        assert_eq!(ModelConfig::default().receptive_radius(), 5);
    }

    #[test]
    fn zero_input_yields_head_bias() {
        let mut p: ModelParams<f64> = init_params(&ModelConfig::default()).unwrap();
        for (i, v) in p.convs[2].bias.value.data_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.1;
        }
        let (logits, _) = forward(&p, &Tensor::identity(12), &Tensor::zeros(&[1, 12, 2])).unwrap();
        for c in 0..10 {
            assert!((logits.at2(c, 0) - c as f64 * 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_gcn_passes_relu_features() {
        let mut p: ModelParams<f64> = init_params(&ModelConfig::default()).unwrap();
        let mut w = Tensor::zeros(&[2, 16]);
        w.data_mut()[0] = 1.0;
        w.data_mut()[17] = 1.0;
        p.gcn[0].value = w;
        let x = feats(4, 3);
        let (_, tape) = forward(&p, &Tensor::identity(12), &x).unwrap();
        let h = ops::relu(&tape.gcn_pre[0]);
        for t in 0..4 {
            for n in 0..12 {
                for ch in 0..2 {
                    let expected = x.data()[(t * 12 + n) * 2 + ch].max(0.0);
                    assert_eq!(h.data()[(t * 12 + n) * 16 + ch], expected);
                }
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut p: ModelParams<f64> = init_params(&ModelConfig::default()).unwrap();
        let adj = Tensor::identity(12);
        let (_, tape) = forward(&p, &adj, &feats(6, 1)).unwrap();
        backward(&mut p, &adj, &tape, &Tensor::zeros(&[10, 6])).unwrap();
        assert!(p.parameters().iter().all(|q| q.grad.data().iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn backward_is_additive() {
        let cfg = ModelConfig::default();
        let adj = Tensor::identity(12);
        let x = feats(7, 5);
        let u1 = Tensor::from_fn(&[10, 7], |i| (i as f64 * 0.31).sin());
        let u2 = Tensor::from_fn(&[10, 7], |i| (i as f64 * 0.17).cos());
        let mut sum = u1.clone();
        sum.add_assign(&u2);

        let mut a: ModelParams<f64> = init_params(&cfg).unwrap();
        let (_, tape) = forward(&a, &adj, &x).unwrap();
        backward(&mut a, &adj, &tape, &u1).unwrap();
        backward(&mut a, &adj, &tape, &u2).unwrap();
        let mut b: ModelParams<f64> = init_params(&cfg).unwrap();
        backward(&mut b, &adj, &tape, &sum).unwrap();
        for (pa, pb) in a.parameters().iter().zip(b.parameters()) {
            assert!(pa.grad.max_abs_diff(&pb.grad) < 1e-9);
        }
    }

    #[test]
    fn backward_rejects_wrong_upstream() {
        let mut p: ModelParams<f64> = init_params(&ModelConfig::default()).unwrap();
        let adj = Tensor::identity(12);
        let (_, tape) = forward(&p, &adj, &feats(3, 1)).unwrap();
        assert!(matches!(
            backward(&mut p, &adj, &tape, &Tensor::zeros(&[10, 4])),
            Err(ModelError::Tape(_))
        ));
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let p: ModelParams<f64> = init_params(&ModelConfig::default()).unwrap();
        assert!(forward(&p, &Tensor::identity(11), &feats(3, 1)).is_err());
        assert!(forward(&p, &Tensor::identity(12), &Tensor::zeros(&[3, 11, 2])).is_err());
    }

    #[test]
    fn decode_zero_logits() {
        let m = decode_probabilities(&Tensor::zeros(&[10, 3])).unwrap();
        for kind in ExpressionKind::ALL {
            let k = m.kind(kind);
            assert!(k.expression.iter().all(|&v| v == 0.5));
            for seq in [&k.onset, &k.apex, &k.offset, &k.background] {
                assert!(seq.iter().all(|&v| v == 0.25));
            }
        }
    }

    #[test]
    fn decode_peaked_onset() {
        let mut logits = Tensor::zeros(&[10, 2]);
        logits.data_mut()[2] = 10.0; // channel 1 (macro onset), frame 0
        let m = decode_probabilities(&logits).unwrap();
        // e^10 / (e^10 + 3)
        assert!(m.macro_maps.onset[0] > 0.999);
        assert!((m.macro_maps.onset[0] as f64 - 1.0 / (1.0 + 3.0 * (-10f64).exp())).abs() < 1e-6);
    }

    #[test]
    fn decode_columns_sum_to_one() {
        let logits = Tensor::from_fn(&[10, 40], |i| ((i * 37) % 23) as f32 - 11.0);
        let m = decode_probabilities(&logits).unwrap();
        for kind in ExpressionKind::ALL {
            let k = m.kind(kind);
            for t in 0..40 {
                let s = k.onset[t] + k.apex[t] + k.offset[t] + k.background[t];
                assert!((s - 1.0).abs() <= 1e-5);
            }
        }
    }
}
