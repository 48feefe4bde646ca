//! Dense, 1-D convolution, max-pool, relu, dropout, softmax and cross-entropy.
//!
//! The `*_kernel` functions work on raw slices and accumulate parameter
//! gradients in place; the recognizer calls them directly. The tensor-level
//! wrappers check shapes and allocate.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::Tensor;

pub(crate) fn dense_kernel(weights: &[f64], bias: &[f64], input: &[f64], out: &mut [f64]) {
    let n_in = input.len();
    for ((o, row), b) in out.iter_mut().zip(weights.chunks_exact(n_in)).zip(bias) {
        *o = b + dot(row, input);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators let the compiler vectorise the reduction;
    // the summation order is fixed, so results stay bitwise reproducible.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Accumulates `d out / d weights` and `d out / d bias` and, when requested,
/// overwrites `grad_input`.
pub(crate) fn dense_backward_kernel(
    weights: &[f64],
    input: &[f64],
    grad_out: &[f64],
    grad_weights: &mut [f64],
    grad_bias: &mut [f64],
    grad_input: Option<&mut [f64]>,
) {
    let n_in = input.len();
    for ((g, gw_row), gb) in grad_out
        .iter()
        .zip(grad_weights.chunks_exact_mut(n_in))
        .zip(grad_bias.iter_mut())
    {
        *gb += g;
        if *g != 0.0 {
            for (w, x) in gw_row.iter_mut().zip(input) {
                *w += g * x;
            }
        }
    }
    if let Some(gin) = grad_input {
        gin.fill(0.0);
        for (g, row) in grad_out.iter().zip(weights.chunks_exact(n_in)) {
            if *g != 0.0 {
                for (gi, w) in gin.iter_mut().zip(row) {
                    *gi += g * w;
                }
            }
        }
    }
}

/// `weights · input + bias`, with `weights` of shape (n_out, n_in).
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let n_in = input.len();
    let n_out = bias.len();
    if input.rank() != 1 || bias.rank() != 1 {
        return Err(Error::shape("dense_forward", "input and bias must be vectors"));
    }
    weights.expect_shape("dense_forward", &[n_out, n_in])?;
    let mut out = vec![0.0; n_out];
    dense_kernel(weights.data(), bias.data(), input.data(), &mut out);
    Ok(Tensor::vector(out))
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let n_in = input.len();
    let n_out = grad_out.len();
    weights.expect_shape("dense_backward", &[n_out, n_in])?;
    let mut gw = Tensor::zeros(&[n_out, n_in]);
    let mut gb = Tensor::zeros(&[n_out]);
    let mut gin = vec![0.0; n_in];
    dense_backward_kernel(
        weights.data(),
        input.data(),
        grad_out.data(),
        gw.data_mut(),
        gb.data_mut(),
        Some(&mut gin),
    );
    Ok((Tensor::vector(gin), gw, gb))
}

/// Same-padded cross-correlation. `input` is (c_in, len), `kernels` is
/// (c_out, c_in, k), `out` is (c_out, len).
pub(crate) fn conv1d_kernel(
    input: &[f64],
    c_in: usize,
    kernels: &[f64],
    bias: &[f64],
    k: usize,
    out: &mut [f64],
) {
    let len = input.len() / c_in;
    let pad = (k - 1) / 2;
    for (o, (out_row, b)) in out.chunks_exact_mut(len).zip(bias).enumerate() {
        out_row.fill(*b);
        for c in 0..c_in {
            let x = &input[c * len..(c + 1) * len];
            let w = &kernels[(o * c_in + c) * k..(o * c_in + c + 1) * k];
            for (tap, &wk) in w.iter().enumerate() {
                // Output position l reads input position l + tap - pad.
                let lo = pad.saturating_sub(tap);
                let hi = (len + pad).saturating_sub(tap).min(len);
                for l in lo..hi {
                    out_row[l] += wk * x[l + tap - pad];
                }
            }
        }
    }
}

pub(crate) fn conv1d_backward_kernel(
    input: &[f64],
    c_in: usize,
    kernels: &[f64],
    k: usize,
    grad_out: &[f64],
    grad_kernels: &mut [f64],
    grad_bias: &mut [f64],
    grad_input: Option<&mut [f64]>,
) {
    let len = input.len() / c_in;
    let pad = (k - 1) / 2;
    for (o, g_row) in grad_out.chunks_exact(len).enumerate() {
        grad_bias[o] += g_row.iter().sum::<f64>();
        for c in 0..c_in {
            let x = &input[c * len..(c + 1) * len];
            let gk = &mut grad_kernels[(o * c_in + c) * k..(o * c_in + c + 1) * k];
            for (tap, g_tap) in gk.iter_mut().enumerate() {
                let lo = pad.saturating_sub(tap);
                let hi = (len + pad).saturating_sub(tap).min(len);
                let mut acc = 0.0;
                for l in lo..hi {
                    acc += g_row[l] * x[l + tap - pad];
                }
                *g_tap += acc;
            }
        }
    }
    if let Some(gin) = grad_input {
        gin.fill(0.0);
        for (o, g_row) in grad_out.chunks_exact(len).enumerate() {
            for c in 0..c_in {
                let gx = &mut gin[c * len..(c + 1) * len];
                let w = &kernels[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                for (tap, &wk) in w.iter().enumerate() {
                    let lo = pad.saturating_sub(tap);
                    let hi = (len + pad).saturating_sub(tap).min(len);
                    for l in lo..hi {
                        gx[l + tap - pad] += wk * g_row[l];
                    }
                }
            }
        }
    }
}

fn conv_dims(input: &Tensor, kernels: &Tensor, op: &'static str) -> Result<(usize, usize, usize, usize)> {
    if input.rank() != 2 || kernels.rank() != 3 {
        return Err(Error::shape(op, "input must be (C_in, L), kernels (C_out, C_in, K)"));
    }
    let (c_in, len) = (input.shape()[0], input.shape()[1]);
    let (c_out, kc_in, k) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    if kc_in != c_in {
        return Err(Error::shape(op, format!("kernel expects {kc_in} input channels, input has {c_in}")));
    }
    if k % 2 == 0 {
        return Err(Error::domain("kernel size", format!("{k} is even; same padding needs an odd size")));
    }
    Ok((c_in, len, c_out, k))
}

pub fn conv1d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c_in, len, c_out, k) = conv_dims(input, kernels, "conv1d_forward")?;
    bias.expect_shape("conv1d_forward", &[c_out])?;
    let mut out = vec![0.0; c_out * len];
    conv1d_kernel(input.data(), c_in, kernels.data(), bias.data(), k, &mut out);
    Tensor::from_vec(vec![c_out, len], out)
}

/// Returns `(grad_input, grad_kernels, grad_bias)`.
pub fn conv1d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (c_in, len, c_out, k) = conv_dims(input, kernels, "conv1d_backward")?;
    grad_out.expect_shape("conv1d_backward", &[c_out, len])?;
    let mut gk = Tensor::zeros(kernels.shape());
    let mut gb = Tensor::zeros(&[c_out]);
    let mut gin = Tensor::zeros(input.shape());
    conv1d_backward_kernel(
        input.data(),
        c_in,
        kernels.data(),
        k,
        grad_out.data(),
        gk.data_mut(),
        gb.data_mut(),
        Some(gin.data_mut()),
    );
    Ok((gin, gk, gb))
}

/// Window-2, stride-2 max pool. `argmax` holds, per output cell, the flat input
/// index that won; ties go to the lower index.
pub(crate) fn maxpool_kernel(input: &[f64], channels: usize, out: &mut [f64], argmax: &mut [usize]) {
    let len = input.len() / channels;
    let out_len = len / 2;
    for c in 0..channels {
        for i in 0..out_len {
            let a = c * len + 2 * i;
            let win = if input[a + 1] > input[a] { a + 1 } else { a };
            out[c * out_len + i] = input[win];
            argmax[c * out_len + i] = win;
        }
    }
}

pub(crate) fn maxpool_backward_kernel(grad_out: &[f64], argmax: &[usize], grad_input: &mut [f64]) {
    grad_input.fill(0.0);
    for (g, &idx) in grad_out.iter().zip(argmax) {
        grad_input[idx] += g;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolOutput {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

pub fn maxpool1d_forward(input: &Tensor) -> Result<PoolOutput> {
    if input.rank() != 2 {
        return Err(Error::shape("maxpool1d_forward", "input must be (C, L)"));
    }
    let (channels, len) = (input.shape()[0], input.shape()[1]);
    if len < 2 {
        return Err(Error::domain("pool input", format!("length {len} < 2")));
    }
    let n = channels * (len / 2);
    let mut out = vec![0.0; n];
    let mut argmax = vec![0; n];
    maxpool_kernel(input.data(), channels, &mut out, &mut argmax);
    Ok(PoolOutput {
        output: Tensor::from_vec(vec![channels, len / 2], out)?,
        argmax,
    })
}

pub fn maxpool1d_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::shape("maxpool1d_backward", "gradient and argmax lengths differ"));
    }
    let mut gin = Tensor::zeros(input_shape);
    maxpool_backward_kernel(grad_out.data(), argmax, gin.data_mut());
    Ok(gin)
}

pub(crate) fn relu_inplace(v: &mut [f64]) {
    for x in v.iter_mut() {
        if !(*x > 0.0) {
            *x = 0.0;
        }
    }
}

/// Zeroes gradient entries whose forward output was not positive.
pub(crate) fn relu_backward_inplace(output: &[f64], grad: &mut [f64]) {
    for (g, y) in grad.iter_mut().zip(output) {
        if !(*y > 0.0) {
            *g = 0.0;
        }
    }
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    relu_inplace(out.data_mut());
    out
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape("relu_backward", "input and gradient shapes differ"));
    }
    let mut g = grad_out.clone();
    relu_backward_inplace(input.data(), g.data_mut());
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub keep_prob: f64,
    pub training: bool,
}

impl DropoutSpec {
    pub fn new(keep_prob: f64, training: bool) -> Result<Self> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(Error::domain("keep probability", format!("{keep_prob} not in (0, 1]")));
        }
        Ok(Self { keep_prob, training })
    }
}

/// Which units survived and the scale applied to them.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub kept: Vec<bool>,
    /// Divisor applied to kept units: `keep_prob` in training, 1 in inference.
    pub keep_prob: f64,
}

pub(crate) fn dropout_inplace(values: &mut [f64], spec: DropoutSpec, seed: u64) -> DropoutMask {
    if !spec.training {
        return DropoutMask {
            kept: vec![true; values.len()],
            keep_prob: 1.0,
        };
    }
    let mut rng = SplitMix64::new(seed);
    let p = spec.keep_prob;
    let kept: Vec<bool> = values
        .iter_mut()
        .map(|v| {
            let keep = rng.next_f64() < p;
            *v = if keep { *v / p } else { 0.0 };
            keep
        })
        .collect();
    DropoutMask { kept, keep_prob: p }
}

pub(crate) fn dropout_backward_inplace(mask: &DropoutMask, grad: &mut [f64]) {
    if mask.keep_prob == 1.0 {
        for (g, k) in grad.iter_mut().zip(&mask.kept) {
            if !k {
                *g = 0.0;
            }
        }
        return;
    }
    for (g, k) in grad.iter_mut().zip(&mask.kept) {
        *g = if *k { *g / mask.keep_prob } else { 0.0 };
    }
}

/// Inverted dropout: in training each unit is kept with probability
/// `keep_prob` (one SplitMix64 uniform per element, kept iff `u < p`) and
/// scaled by `1/p`; in inference the input is returned unchanged.
pub fn dropout(input: &Tensor, spec: DropoutSpec, seed: u64) -> (Tensor, DropoutMask) {
    let mut out = input.clone();
    let mask = dropout_inplace(out.data_mut(), spec, seed);
    (out, mask)
}

pub fn dropout_backward(mask: &DropoutMask, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    dropout_backward_inplace(mask, g.data_mut());
    g
}

pub(crate) fn softmax_inplace(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if !logits.is_finite() {
        return Err(Error::domain("logits", "non-finite value"));
    }
    let mut out = logits.clone();
    softmax_inplace(out.data_mut());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassTarget {
    pub class_count: usize,
    pub true_class: usize,
}

impl ClassTarget {
    pub fn new(class_count: usize, true_class: usize) -> Result<Self> {
        if class_count == 0 || true_class >= class_count {
            return Err(Error::domain(
                "class target",
                format!("class {true_class} outside [0, {class_count})"),
            ));
        }
        Ok(Self {
            class_count,
            true_class,
        })
    }
}

const LOG_FLOOR: f64 = 1e-300;

pub(crate) fn cross_entropy_kernel(pred: &[f64], true_class: usize, grad: &mut [f64]) -> f64 {
    grad.copy_from_slice(pred);
    grad[true_class] -= 1.0;
    -pred[true_class].max(LOG_FLOOR).ln()
}

/// `-log pred[true]` and the fused gradient with respect to the pre-softmax
/// logits, `pred - onehot`.
pub fn cross_entropy(pred: &Tensor, target: ClassTarget) -> Result<(f64, Tensor)> {
    if pred.rank() != 1 || pred.len() != target.class_count {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} probabilities for {} classes", pred.len(), target.class_count),
        ));
    }
    let total: f64 = pred.data().iter().sum();
    if (total - 1.0).abs() > 1e-6 || pred.data().iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::domain("prediction", format!("not a probability vector (sum {total})")));
    }
    let mut grad = vec![0.0; pred.len()];
    let loss = cross_entropy_kernel(pred.data(), target.true_class, &mut grad);
    Ok((loss, Tensor::vector(grad)))
}
