//! Gesture recognizer: per-frame CNN encoder with gaze attention and a
//! concatenation fusion layer, an LSTM over frames, and a softmax head at
//! every timestep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{
    conv1d_backward_kernel, conv1d_kernel, cross_entropy_kernel, dense_backward_kernel, dense_kernel,
    dropout_backward_inplace, dropout_inplace, maxpool_backward_kernel, maxpool_kernel,
    relu_backward_inplace, relu_inplace, softmax_inplace, DropoutMask,
};
use crate::nn::lstm::{lstm_step, lstm_step_backward, LstmCache, GATE_FORGET};
use crate::nn::{gradient_check_with_floor, DropoutSpec, GradCheckReport, LstmParams, LstmState, Tensor};
use crate::rng::{derive_seed, SplitMix64};
use crate::skeleton::{frame_features, GestureFrame, HandSkeleton, FEATURE_CHANNELS, JOINT_COUNT};
use crate::synth::{GestureClass, GestureSequence, CLASS_COUNT};

pub const FORMAT_VERSION: u32 = 1;
/// Gaze offset x, offset y, presence flag.
pub const GAZE_AUX_LEN: usize = 3;

/// Central-difference step for whole-model gradient checks.
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Gradient components below this are compared absolutely; see
/// [`gradient_check_with_floor`].
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;
/// Reject check points whose relu/pool decisions sit closer than this to a kink.
pub const GRAD_CHECK_MIN_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    #[serde(rename = "in")]
    pub in_channels: usize,
    #[serde(rename = "out")]
    pub out_channels: usize,
    #[serde(rename = "k")]
    pub kernel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub class_count: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub dense_feature: usize,
    pub lstm_hidden: usize,
    pub dropout_keep: f64,
    pub gaze_sigma: f64,
    pub gaze_enabled: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            class_count: CLASS_COUNT,
            conv1: ConvSpec {
                in_channels: FEATURE_CHANNELS,
                out_channels: 16,
                kernel: 3,
            },
            conv2: ConvSpec {
                in_channels: 16,
                out_channels: 32,
                kernel: 3,
            },
            dense_feature: 64,
            lstm_hidden: 64,
            dropout_keep: 0.8,
            gaze_sigma: 0.5,
            gaze_enabled: true,
        }
    }
}

/// Length of the joint axis after the single max-pool.
const POOLED_LEN: usize = JOINT_COUNT / 2;

impl ModelConfig {
    /// Small configuration used by gradient checks.
    pub fn toy(lstm_hidden: usize) -> Self {
        Self {
            conv1: ConvSpec {
                in_channels: FEATURE_CHANNELS,
                out_channels: 4,
                kernel: 3,
            },
            conv2: ConvSpec {
                in_channels: 4,
                out_channels: 4,
                kernel: 3,
            },
            dense_feature: 8,
            lstm_hidden,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::domain("model config", d));
        if self.class_count == 0 || self.dense_feature == 0 || self.lstm_hidden == 0 {
            return bad("class_count, dense_feature and lstm_hidden must be positive".into());
        }
        if self.conv1.in_channels != FEATURE_CHANNELS {
            return bad(format!("conv1 must take {FEATURE_CHANNELS} input channels"));
        }
        if self.conv2.in_channels != self.conv1.out_channels {
            return bad("conv2 input channels must equal conv1 output channels".into());
        }
        for c in [self.conv1, self.conv2] {
            if c.out_channels == 0 || c.kernel % 2 == 0 {
                return bad(format!("conv {c:?}: need positive channels and an odd kernel"));
            }
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return bad(format!("dropout_keep {} not in (0, 1]", self.dropout_keep));
        }
        if !(self.gaze_sigma > 0.0 && self.gaze_sigma.is_finite()) {
            return bad(format!("gaze_sigma {} must be positive", self.gaze_sigma));
        }
        Ok(())
    }

    pub fn flatten_len(&self) -> usize {
        self.conv2.out_channels * POOLED_LEN
    }

    /// Canonical parameter names and shapes.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (c1, c2) = (self.conv1, self.conv2);
        let d = self.dense_feature;
        let h = self.lstm_hidden;
        let gate = vec![h, d + h];
        vec![
            ("conv1.kernels", vec![c1.out_channels, c1.in_channels, c1.kernel]),
            ("conv1.bias", vec![c1.out_channels]),
            ("conv2.kernels", vec![c2.out_channels, c2.in_channels, c2.kernel]),
            ("conv2.bias", vec![c2.out_channels]),
            ("dense.weights", vec![d, self.flatten_len()]),
            ("dense.bias", vec![d]),
            ("fusion.weights", vec![d, d + GAZE_AUX_LEN]),
            ("fusion.bias", vec![d]),
            ("lstm.W_i", gate.clone()),
            ("lstm.b_i", vec![h]),
            ("lstm.W_f", gate.clone()),
            ("lstm.b_f", vec![h]),
            ("lstm.W_g", gate.clone()),
            ("lstm.b_g", vec![h]),
            ("lstm.W_o", gate),
            ("lstm.b_o", vec![h]),
            ("head.weights", vec![self.class_count, h]),
            ("head.bias", vec![self.class_count]),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// Every learned tensor. Also used as the gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub conv1_kernels: Tensor,
    pub conv1_bias: Tensor,
    pub conv2_kernels: Tensor,
    pub conv2_bias: Tensor,
    pub dense_weights: Tensor,
    pub dense_bias: Tensor,
    pub fusion_weights: Tensor,
    pub fusion_bias: Tensor,
    pub lstm: LstmParams,
    pub head_weights: Tensor,
    pub head_bias: Tensor,
}

impl Params {
    pub fn zeros(config: &ModelConfig) -> Self {
        let shapes = config.param_shapes();
        let t = |i: usize| Tensor::zeros(&shapes[i].1);
        Self {
            conv1_kernels: t(0),
            conv1_bias: t(1),
            conv2_kernels: t(2),
            conv2_bias: t(3),
            dense_weights: t(4),
            dense_bias: t(5),
            fusion_weights: t(6),
            fusion_bias: t(7),
            lstm: LstmParams::zeros(config.dense_feature, config.lstm_hidden),
            head_weights: t(16),
            head_bias: t(17),
        }
    }

    /// Tensors in canonical order.
    pub fn tensors(&self) -> [&Tensor; 18] {
        let l = &self.lstm;
        [
            &self.conv1_kernels,
            &self.conv1_bias,
            &self.conv2_kernels,
            &self.conv2_bias,
            &self.dense_weights,
            &self.dense_bias,
            &self.fusion_weights,
            &self.fusion_bias,
            &l.weights[0],
            &l.biases[0],
            &l.weights[1],
            &l.biases[1],
            &l.weights[2],
            &l.biases[2],
            &l.weights[3],
            &l.biases[3],
            &self.head_weights,
            &self.head_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 18] {
        let [w0, w1, w2, w3] = &mut self.lstm.weights;
        let [b0, b1, b2, b3] = &mut self.lstm.biases;
        [
            &mut self.conv1_kernels,
            &mut self.conv1_bias,
            &mut self.conv2_kernels,
            &mut self.conv2_bias,
            &mut self.dense_weights,
            &mut self.dense_bias,
            &mut self.fusion_weights,
            &mut self.fusion_bias,
            w0,
            b0,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            &mut self.head_weights,
            &mut self.head_bias,
        ]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter vector length");
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimestepOutput {
    pub t_ms: u64,
    pub probs: Tensor,
    pub top_class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: GestureClass,
    pub class_id: usize,
    pub confidence: f64,
    /// Mean probabilities over the aggregation window.
    pub probs: Vec<f64>,
    pub per_timestep: Vec<TimestepOutput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerModel {
    pub config: ModelConfig,
    pub params: Params,
    pub version: u32,
}

/// Number of trailing timesteps that are supervised and aggregated.
pub fn window_len(frames: usize) -> usize {
    frames.div_ceil(2)
}

/// Per-joint gaze attention. Without gaze, weights are uniform and the
/// features come back unchanged; otherwise joint column `j` is scaled by
/// `21 * w_j` with `w = softmax(-|gaze - xy_j|^2 / (2 sigma^2))`.
pub fn gaze_attention(
    features: &Tensor,
    skeleton: &HandSkeleton,
    gaze: Option<[f64; 2]>,
    sigma: f64,
) -> Result<(Tensor, Tensor)> {
    features.expect_shape("gaze_attention", &[FEATURE_CHANNELS, JOINT_COUNT])?;
    if !(sigma > 0.0) {
        return Err(Error::domain("gaze sigma", format!("{sigma} must be positive")));
    }
    let mut out = features.clone();
    let weights = match gaze {
        None => vec![1.0 / JOINT_COUNT as f64; JOINT_COUNT],
        Some(g) => {
            let w = attention_weights(skeleton, g, sigma);
            apply_attention(out.data_mut(), &w);
            w
        }
    };
    Ok((out, Tensor::vector(weights)))
}

fn attention_weights(skeleton: &HandSkeleton, gaze: [f64; 2], sigma: f64) -> Vec<f64> {
    let denom = 2.0 * sigma * sigma;
    let mut w: Vec<f64> = skeleton
        .joints
        .iter()
        .map(|p| {
            let (dx, dy) = (gaze[0] - p[0], gaze[1] - p[1]);
            -(dx * dx + dy * dy) / denom
        })
        .collect();
    softmax_inplace(&mut w);
    w
}

fn apply_attention(grid: &mut [f64], weights: &[f64]) {
    for row in grid.chunks_exact_mut(JOINT_COUNT) {
        for (v, w) in row.iter_mut().zip(weights) {
            *v *= JOINT_COUNT as f64 * w;
        }
    }
}

/// Everything one frame's encoder pass needs for backward.
#[derive(Debug, Clone)]
struct FrameTrace {
    grid: Vec<f64>,
    conv1: Vec<f64>,
    pool_argmax: Vec<usize>,
    pooled: Vec<f64>,
    conv2: Vec<f64>,
    dense: Vec<f64>,
    mask: DropoutMask,
    fusion_in: Vec<f64>,
    fusion: Vec<f64>,
    /// Smallest distance of any relu input or pool comparison from its kink.
    kink_margin: f64,
}

fn min_abs(v: &[f64]) -> f64 {
    v.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()))
}

struct SequenceTrace {
    frames: Vec<FrameTrace>,
    lstm: Vec<LstmCache>,
    states: Vec<LstmState>,
    probs: Vec<Vec<f64>>,
}

impl SequenceTrace {
    fn kink_margin(&self) -> f64 {
        self.frames.iter().fold(f64::INFINITY, |m, f| m.min(f.kink_margin))
    }
}

impl RecognizerModel {
    /// Xavier-uniform initialisation in canonical parameter order from one
    /// SplitMix64 stream; biases start at zero except the LSTM forget gate (1.0).
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::new(seed);
        let mut params = Params::zeros(&config);
        let xavier = |t: &mut Tensor, fan_in: usize, fan_out: usize, rng: &mut SplitMix64| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.uniform(-limit, limit);
            }
        };
        let (c1, c2) = (config.conv1, config.conv2);
        let (d, h) = (config.dense_feature, config.lstm_hidden);
        xavier(&mut params.conv1_kernels, c1.in_channels * c1.kernel, c1.out_channels * c1.kernel, &mut rng);
        xavier(&mut params.conv2_kernels, c2.in_channels * c2.kernel, c2.out_channels * c2.kernel, &mut rng);
        xavier(&mut params.dense_weights, config.flatten_len(), d, &mut rng);
        xavier(&mut params.fusion_weights, d + GAZE_AUX_LEN, d, &mut rng);
        params.lstm = LstmParams::xavier(d, h, &mut rng);
        xavier(&mut params.head_weights, h, config.class_count, &mut rng);
        Ok(Self {
            config,
            params,
            version: FORMAT_VERSION,
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            params: Params::zeros(&config),
            config,
            version: FORMAT_VERSION,
        })
    }

    pub fn class_count(&self) -> usize {
        self.config.class_count
    }

    fn fused_dim(&self) -> usize {
        self.config.dense_feature
    }

    fn encode_traced(
        &self,
        prev: Option<&GestureFrame>,
        cur: &GestureFrame,
        training: bool,
        seed: u64,
    ) -> Result<FrameTrace> {
        let cfg = &self.config;
        let p = &self.params;
        cur.ensure_valid()?;
        let mut grid = frame_features(prev, cur)?.into_vec();
        let gaze = cur.gaze.filter(|_| cfg.gaze_enabled);
        if let Some(g) = gaze {
            let w = attention_weights(&cur.skeleton, g, cfg.gaze_sigma);
            apply_attention(&mut grid, &w);
        }

        let (c1, c2) = (cfg.conv1, cfg.conv2);
        let mut conv1 = vec![0.0; c1.out_channels * JOINT_COUNT];
        conv1d_kernel(&grid, c1.in_channels, p.conv1_kernels.data(), p.conv1_bias.data(), c1.kernel, &mut conv1);
        let mut margin = min_abs(&conv1);
        relu_inplace(&mut conv1);

        let mut pooled = vec![0.0; c1.out_channels * POOLED_LEN];
        let mut pool_argmax = vec![0; pooled.len()];
        maxpool_kernel(&conv1, c1.out_channels, &mut pooled, &mut pool_argmax);
        for (c, row) in conv1.chunks_exact(JOINT_COUNT).enumerate() {
            for i in 0..POOLED_LEN {
                let (a, b) = (row[2 * i], row[2 * i + 1]);
                // Both zero means both sides saw a dead relu; no kink there.
                if a > 0.0 || b > 0.0 {
                    margin = margin.min((a - b).abs());
                }
            }
            let _ = c;
        }

        let mut conv2 = vec![0.0; c2.out_channels * POOLED_LEN];
        conv1d_kernel(&pooled, c2.in_channels, p.conv2_kernels.data(), p.conv2_bias.data(), c2.kernel, &mut conv2);
        margin = margin.min(min_abs(&conv2));
        relu_inplace(&mut conv2);

        let d = cfg.dense_feature;
        let mut dense = vec![0.0; d];
        dense_kernel(p.dense_weights.data(), p.dense_bias.data(), &conv2, &mut dense);
        margin = margin.min(min_abs(&dense));
        relu_inplace(&mut dense);

        let mut dropped = dense.clone();
        let spec = DropoutSpec {
            keep_prob: cfg.dropout_keep,
            training,
        };
        let mask = dropout_inplace(&mut dropped, spec, seed);

        let mut fusion_in = dropped;
        match gaze {
            Some(g) => {
                let w = cur.skeleton.wrist();
                let palm = cur.skeleton.mean_palm_length();
                fusion_in.extend_from_slice(&[(g[0] - w[0]) / palm, (g[1] - w[1]) / palm, 1.0]);
            }
            None => fusion_in.extend_from_slice(&[0.0; GAZE_AUX_LEN]),
        }
        let mut fusion = vec![0.0; d];
        dense_kernel(p.fusion_weights.data(), p.fusion_bias.data(), &fusion_in, &mut fusion);
        margin = margin.min(min_abs(&fusion));
        relu_inplace(&mut fusion);

        Ok(FrameTrace {
            grid,
            conv1,
            pool_argmax,
            pooled,
            conv2,
            dense,
            mask,
            fusion_in,
            fusion,
            kink_margin: margin,
        })
    }

    /// Fused per-frame feature vector fed to the LSTM.
    pub fn encode_frame(
        &self,
        prev: Option<&GestureFrame>,
        cur: &GestureFrame,
        training: bool,
        seed: u64,
    ) -> Result<Tensor> {
        Ok(Tensor::vector(self.encode_traced(prev, cur, training, seed)?.fusion))
    }

    fn head(&self, h: &[f64]) -> Vec<f64> {
        let mut logits = vec![0.0; self.config.class_count];
        dense_kernel(self.params.head_weights.data(), self.params.head_bias.data(), h, &mut logits);
        softmax_inplace(&mut logits);
        logits
    }

    /// One streaming step in inference mode: encoder, one LSTM cell update and
    /// the head. Returns the new state and class probabilities.
    pub fn step(
        &self,
        prev: Option<&GestureFrame>,
        cur: &GestureFrame,
        state: &LstmState,
    ) -> Result<(LstmState, Vec<f64>)> {
        if state.h.len() != self.config.lstm_hidden || state.c.len() != self.config.lstm_hidden {
            return Err(Error::shape("step", "state size does not match the model"));
        }
        let trace = self.encode_traced(prev, cur, false, 0)?;
        let (next, _) = lstm_step(&trace.fusion, state, &self.params.lstm);
        let probs = self.head(&next.h);
        Ok((next, probs))
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState::zeros(self.config.lstm_hidden)
    }

    fn trace_sequence(&self, frames: &[GestureFrame], training: bool, seed: u64) -> Result<SequenceTrace> {
        if frames.len() < 2 {
            return Err(Error::domain("sequence", format!("{} frames; need at least 2", frames.len())));
        }
        let mut trace = SequenceTrace {
            frames: Vec::with_capacity(frames.len()),
            lstm: Vec::with_capacity(frames.len()),
            states: Vec::with_capacity(frames.len()),
            probs: Vec::with_capacity(frames.len()),
        };
        let mut state = self.initial_state();
        for (t, cur) in frames.iter().enumerate() {
            let prev = t.checked_sub(1).map(|p| &frames[p]);
            let ft = self.encode_traced(prev, cur, training, derive_seed(seed, &[t as u64]))?;
            let (next, cache) = lstm_step(&ft.fusion, &state, &self.params.lstm);
            trace.probs.push(self.head(&next.h));
            trace.frames.push(ft);
            trace.lstm.push(cache);
            trace.states.push(next.clone());
            state = next;
        }
        Ok(trace)
    }

    pub fn forward_sequence(&self, seq: &GestureSequence, training: bool, seed: u64) -> Result<Vec<TimestepOutput>> {
        let trace = self.trace_sequence(&seq.frames, training, seed)?;
        Ok(seq
            .frames
            .iter()
            .zip(trace.probs)
            .map(|(f, p)| {
                let probs = Tensor::vector(p);
                TimestepOutput {
                    t_ms: f.t_ms,
                    top_class: probs.argmax(),
                    probs,
                }
            })
            .collect())
    }

    /// Mean probabilities over the final `ceil(T/2)` steps; argmax with ties
    /// to the lower class id.
    pub fn predict(&self, seq: &GestureSequence) -> Result<Prediction> {
        let per_timestep = self.forward_sequence(seq, false, 0)?;
        let probs = aggregate_window(&per_timestep, self.config.class_count);
        let class_id = Tensor::vector(probs.clone()).argmax();
        let label = GestureClass::from_id(class_id).ok_or_else(|| {
            Error::domain("prediction", format!("class {class_id} has no gesture name"))
        })?;
        Ok(Prediction {
            label,
            class_id,
            confidence: probs[class_id],
            probs,
            per_timestep,
        })
    }

    /// Adds `scale * dL/dtheta` into `grads`, where `L` is the mean
    /// cross-entropy over the final `ceil(T/2)` timesteps. Returns `L` and
    /// the class this pass would predict.
    pub fn accumulate_gradients(
        &self,
        seq: &GestureSequence,
        training: bool,
        seed: u64,
        scale: f64,
        grads: &mut Params,
    ) -> Result<(f64, usize)> {
        let target = seq.label.id();
        if target >= self.config.class_count {
            return Err(Error::domain("label", format!("class {target} outside model head")));
        }
        let trace = self.trace_sequence(&seq.frames, training, seed)?;
        let n = seq.frames.len();
        let window = window_len(n);
        let mut loss = 0.0;
        let mut dlogits = vec![None; n];
        for t in n - window..n {
            let mut g = vec![0.0; self.config.class_count];
            loss += cross_entropy_kernel(&trace.probs[t], target, &mut g);
            for v in g.iter_mut() {
                *v *= scale / window as f64;
            }
            dlogits[t] = Some(g);
        }
        self.backward(&trace, &dlogits, grads);
        let mut mean = vec![0.0; self.config.class_count];
        for p in &trace.probs[n - window..] {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        Ok((loss / window as f64, Tensor::vector(mean).argmax()))
    }

    /// Loss and gradient in one call; convenience over
    /// [`accumulate_gradients`](Self::accumulate_gradients).
    pub fn loss_and_gradients(&self, seq: &GestureSequence, training: bool, seed: u64) -> Result<(f64, Params)> {
        let mut grads = Params::zeros(&self.config);
        let (loss, _) = self.accumulate_gradients(seq, training, seed, 1.0, &mut grads)?;
        Ok((loss, grads))
    }

    pub fn sequence_loss(&self, seq: &GestureSequence, training: bool, seed: u64) -> Result<f64> {
        let trace = self.trace_sequence(&seq.frames, training, seed)?;
        let n = seq.frames.len();
        let window = window_len(n);
        let target = seq.label.id();
        let mut scratch = vec![0.0; self.config.class_count];
        let loss: f64 = (n - window..n)
            .map(|t| cross_entropy_kernel(&trace.probs[t], target, &mut scratch))
            .sum();
        Ok(loss / window as f64)
    }

    /// Finite-difference check of [`accumulate_gradients`](Self::accumulate_gradients)
    /// over every parameter. Only meaningful when
    /// [`kink_margin`](Self::kink_margin) is well above [`GRAD_CHECK_STEP`].
    pub fn gradient_check(&self, seq: &GestureSequence, training: bool, seed: u64) -> Result<GradCheckReport> {
        let (_, grads) = self.loss_and_gradients(seq, training, seed)?;
        let mut probe = self.clone();
        let loss = |flat: &[f64]| {
            probe.params.load_flat(flat);
            probe.sequence_loss(seq, training, seed)
        };
        gradient_check_with_floor(loss, &self.params.to_flat(), &grads.to_flat(), GRAD_CHECK_STEP, GRAD_CHECK_FLOOR)
    }

    /// Minimum distance of any relu/pool decision from its kink over a pass.
    pub fn kink_margin(&self, seq: &GestureSequence, training: bool, seed: u64) -> Result<f64> {
        Ok(self.trace_sequence(&seq.frames, training, seed)?.kink_margin())
    }

    fn backward(&self, trace: &SequenceTrace, dlogits: &[Option<Vec<f64>>], grads: &mut Params) {
        let cfg = &self.config;
        let p = &self.params;
        let hidden = cfg.lstm_hidden;
        let n = trace.frames.len();
        let mut dh_next = vec![0.0; hidden];
        let mut dc_next = vec![0.0; hidden];
        let mut dh_head = vec![0.0; hidden];
        for t in (0..n).rev() {
            let mut dh = dh_next.clone();
            if let Some(g) = &dlogits[t] {
                dense_backward_kernel(
                    p.head_weights.data(),
                    &trace.states[t].h,
                    g,
                    grads.head_weights.data_mut(),
                    grads.head_bias.data_mut(),
                    Some(&mut dh_head),
                );
                for (a, b) in dh.iter_mut().zip(&dh_head) {
                    *a += b;
                }
            }
            let (dx, dhp, dcp) = lstm_step_backward(&trace.lstm[t], &p.lstm, &dh, &dc_next, &mut grads.lstm);
            dh_next = dhp;
            dc_next = dcp;
            self.encoder_backward(&trace.frames[t], dx, grads);
        }
    }

    fn encoder_backward(&self, ft: &FrameTrace, mut d_fusion: Vec<f64>, grads: &mut Params) {
        let cfg = &self.config;
        let p = &self.params;
        let d = self.fused_dim();
        relu_backward_inplace(&ft.fusion, &mut d_fusion);
        let mut d_fusion_in = vec![0.0; d + GAZE_AUX_LEN];
        dense_backward_kernel(
            p.fusion_weights.data(),
            &ft.fusion_in,
            &d_fusion,
            grads.fusion_weights.data_mut(),
            grads.fusion_bias.data_mut(),
            Some(&mut d_fusion_in),
        );
        d_fusion_in.truncate(d);
        let mut d_dense = d_fusion_in;
        dropout_backward_inplace(&ft.mask, &mut d_dense);
        relu_backward_inplace(&ft.dense, &mut d_dense);

        let mut d_conv2 = vec![0.0; ft.conv2.len()];
        dense_backward_kernel(
            p.dense_weights.data(),
            &ft.conv2,
            &d_dense,
            grads.dense_weights.data_mut(),
            grads.dense_bias.data_mut(),
            Some(&mut d_conv2),
        );
        relu_backward_inplace(&ft.conv2, &mut d_conv2);

        let (c1, c2) = (cfg.conv1, cfg.conv2);
        let mut d_pooled = vec![0.0; ft.pooled.len()];
        conv1d_backward_kernel(
            &ft.pooled,
            c2.in_channels,
            p.conv2_kernels.data(),
            c2.kernel,
            &d_conv2,
            grads.conv2_kernels.data_mut(),
            grads.conv2_bias.data_mut(),
            Some(&mut d_pooled),
        );
        let mut d_conv1 = vec![0.0; ft.conv1.len()];
        maxpool_backward_kernel(&d_pooled, &ft.pool_argmax, &mut d_conv1);
        relu_backward_inplace(&ft.conv1, &mut d_conv1);
        conv1d_backward_kernel(
            &ft.grid,
            c1.in_channels,
            p.conv1_kernels.data(),
            c1.kernel,
            &d_conv1,
            grads.conv1_kernels.data_mut(),
            grads.conv1_bias.data_mut(),
            None,
        );
    }

    /// Parameters keyed by canonical name, in canonical order.
    pub fn named_parameters(&self) -> Vec<(&'static str, &Tensor)> {
        self.config
            .param_shapes()
            .into_iter()
            .map(|(n, _)| n)
            .zip(self.params.tensors())
            .collect()
    }

    pub fn forget_bias(&self) -> &Tensor {
        &self.params.lstm.biases[GATE_FORGET]
    }
}

/// Mean of per-step probabilities over the final `ceil(T/2)` steps.
pub fn aggregate_window(steps: &[TimestepOutput], class_count: usize) -> Vec<f64> {
    let window = window_len(steps.len());
    let mut mean = vec![0.0; class_count];
    for s in &steps[steps.len() - window..] {
        for (m, p) in mean.iter_mut().zip(s.probs.data()) {
            *m += p;
        }
    }
    for m in mean.iter_mut() {
        *m /= window as f64;
    }
    mean
}
