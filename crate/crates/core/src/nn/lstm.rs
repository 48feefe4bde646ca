//! LSTM cell with input, forget and output gates, plus backpropagation
//! through time.
//!
//! Gate layout: each gate owns a `(hidden, n_in + hidden)` weight matrix that
//! acts on `concat(x, h_prev)`, and a bias. Gates are stored in the order
//! input, forget, candidate, output.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::layers::{dense_backward_kernel, dot};
use super::Tensor;

pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_CANDIDATE: usize = 2;
pub const GATE_OUTPUT: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub n_in: usize,
    pub hidden: usize,
    /// Gate weights indexed by the `GATE_*` constants.
    pub weights: [Tensor; 4],
    pub biases: [Tensor; 4],
}

/// Gradient accumulator with the same layout as the parameters.
pub type LstmGrads = LstmParams;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmParams {
    pub fn zeros(n_in: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[hidden, n_in + hidden]);
        let b = || Tensor::zeros(&[hidden]);
        Self {
            n_in,
            hidden,
            weights: [w(), w(), w(), w()],
            biases: [b(), b(), b(), b()],
        }
    }

    /// Xavier-uniform gate weights drawn gate by gate (input, forget,
    /// candidate, output), zero biases except the forget gate at 1.0.
    pub fn xavier(n_in: usize, hidden: usize, rng: &mut SplitMix64) -> Self {
        let mut p = Self::zeros(n_in, hidden);
        let limit = (6.0 / ((n_in + hidden + hidden) as f64)).sqrt();
        for w in p.weights.iter_mut() {
            for v in w.data_mut() {
                *v = rng.uniform(-limit, limit);
            }
        }
        p.biases[GATE_FORGET].data_mut().fill(1.0);
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_in, self.hidden)
    }

    fn check(&self, input_len: usize, state: &LstmState) -> Result<()> {
        if input_len != self.n_in {
            return Err(Error::shape(
                "lstm_cell",
                format!("input length {input_len}, expected {}", self.n_in),
            ));
        }
        if state.h.len() != self.hidden || state.c.len() != self.hidden {
            return Err(Error::shape(
                "lstm_cell",
                format!("state lengths ({}, {}), expected {}", state.h.len(), state.c.len(), self.hidden),
            ));
        }
        let wshape = [self.hidden, self.n_in + self.hidden];
        for (w, b) in self.weights.iter().zip(&self.biases) {
            w.expect_shape("lstm_cell", &wshape)?;
            b.expect_shape("lstm_cell", &[self.hidden])?;
        }
        Ok(())
    }
}

/// Activations kept from one step for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    xh: Vec<f64>,
    gates: [Vec<f64>; 4],
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// One step without shape checks.
pub(crate) fn lstm_step(input: &[f64], state: &LstmState, params: &LstmParams) -> (LstmState, LstmCache) {
    let hidden = params.hidden;
    let mut xh = Vec::with_capacity(input.len() + hidden);
    xh.extend_from_slice(input);
    xh.extend_from_slice(&state.h);
    let n = xh.len();
    let gate = |g: usize, act: fn(f64) -> f64| -> Vec<f64> {
        params.weights[g]
            .data()
            .chunks_exact(n)
            .zip(params.biases[g].data())
            .map(|(row, b)| act(b + dot(row, &xh)))
            .collect()
    };
    let i = gate(GATE_INPUT, sigmoid);
    let f = gate(GATE_FORGET, sigmoid);
    let g = gate(GATE_CANDIDATE, f64::tanh);
    let o = gate(GATE_OUTPUT, sigmoid);
    let mut c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    let mut tanh_c = vec![0.0; hidden];
    for k in 0..hidden {
        c[k] = f[k] * state.c[k] + i[k] * g[k];
        tanh_c[k] = c[k].tanh();
        h[k] = o[k] * tanh_c[k];
    }
    let cache = LstmCache {
        xh,
        gates: [i, f, g, o],
        c_prev: state.c.clone(),
        tanh_c,
    };
    (LstmState { h, c }, cache)
}

/// Backward through one step. `dh` and `dc` are the gradients flowing into
/// this step's outputs; returns `(d input, d h_prev, d c_prev)` and accumulates
/// parameter gradients into `grads`.
pub(crate) fn lstm_step_backward(
    cache: &LstmCache,
    params: &LstmParams,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmGrads,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = params.hidden;
    let [i, f, g, o] = &cache.gates;
    let mut d_pre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hidden]);
    let mut dc_prev = vec![0.0; hidden];
    for k in 0..hidden {
        let tc = cache.tanh_c[k];
        let dct = dc[k] + dh[k] * o[k] * (1.0 - tc * tc);
        d_pre[GATE_INPUT][k] = dct * g[k] * i[k] * (1.0 - i[k]);
        d_pre[GATE_FORGET][k] = dct * cache.c_prev[k] * f[k] * (1.0 - f[k]);
        d_pre[GATE_CANDIDATE][k] = dct * i[k] * (1.0 - g[k] * g[k]);
        d_pre[GATE_OUTPUT][k] = dh[k] * tc * o[k] * (1.0 - o[k]);
        dc_prev[k] = dct * f[k];
    }
    let n = cache.xh.len();
    let mut dxh = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    for gate in 0..4 {
        let (gw, gb) = (&mut grads.weights[gate], &mut grads.biases[gate]);
        dense_backward_kernel(
            params.weights[gate].data(),
            &cache.xh,
            &d_pre[gate],
            gw.data_mut(),
            gb.data_mut(),
            Some(&mut scratch),
        );
        for (a, s) in dxh.iter_mut().zip(&scratch) {
            *a += s;
        }
    }
    let dh_prev = dxh.split_off(params.n_in);
    (dxh, dh_prev, dc_prev)
}

/// `c' = f*c + i*g`, `h' = o*tanh(c')` on `concat(input, h)`.
pub fn lstm_cell(input: &Tensor, state: &LstmState, params: &LstmParams) -> Result<LstmState> {
    params.check(input.len(), state)?;
    Ok(lstm_step(input.data(), state, params).0)
}

/// Folds the cell over `inputs`, returning every intermediate state.
pub fn lstm_forward(inputs: &[Tensor], initial: &LstmState, params: &LstmParams) -> Result<Vec<LstmState>> {
    Ok(lstm_forward_cached(inputs, initial, params)?.0)
}

pub fn lstm_forward_cached(
    inputs: &[Tensor],
    initial: &LstmState,
    params: &LstmParams,
) -> Result<(Vec<LstmState>, Vec<LstmCache>)> {
    if inputs.is_empty() {
        return Err(Error::domain("sequence", "empty input list"));
    }
    let mut states = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    let mut state = initial.clone();
    for x in inputs {
        params.check(x.len(), &state)?;
        let (next, cache) = lstm_step(x.data(), &state, params);
        states.push(next.clone());
        caches.push(cache);
        state = next;
    }
    Ok((states, caches))
}

/// Backpropagation through time. `dh_out[t]` is the external gradient on
/// `h_t`. Returns the input gradients per step; parameter gradients accumulate
/// into `grads`.
pub fn lstm_backward(
    params: &LstmParams,
    caches: &[LstmCache],
    dh_out: &[Vec<f64>],
    grads: &mut LstmGrads,
) -> Result<Vec<Vec<f64>>> {
    if caches.len() != dh_out.len() {
        return Err(Error::shape("lstm_backward", "one output gradient per step required"));
    }
    let hidden = params.hidden;
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let mut dx = vec![Vec::new(); caches.len()];
    for t in (0..caches.len()).rev() {
        let dh: Vec<f64> = dh_out[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let (dxt, dhp, dcp) = lstm_step_backward(&caches[t], params, &dh, &dc_next, grads);
        dx[t] = dxt;
        dh_next = dhp;
        dc_next = dcp;
    }
    Ok(dx)
}
