//! Stacked LSTM sequence regressor with hand-written BPTT.
//!
//! Gate weights are stored stacked in the order forget, input, candidate,
//! output: rows `[0, H)` belong to the forget gate, `[H, 2H)` to the input
//! gate and so on. Every gate carries a bias.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::invalid;
use crate::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 2] = [100, 300];

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += w * x` for row-major `w` of shape `[out.len() x x.len()]`.
#[inline]
fn gemv_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += w^T * v`.
#[inline]
fn gemv_t_acc(w: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (&s, row) in v.iter().zip(w.chunks_exact(cols)) {
        if s == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * s;
        }
    }
}

/// `w += v (x) x`.
#[inline]
fn outer_acc(w: &mut [f64], v: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&s, row) in v.iter().zip(w.chunks_exact_mut(cols)) {
        if s == 0.0 {
            continue;
        }
        for (a, b) in row.iter_mut().zip(x) {
            *a += s * b;
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, len: usize, bound: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden_size: usize,
    /// `[4H x input_size]`.
    pub w_x: Vec<f64>,
    /// `[4H x H]`.
    pub w_h: Vec<f64>,
    /// `[4H]`.
    pub bias: Vec<f64>,
}

impl LstmLayer {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let g = 4 * hidden_size;
        Self {
            input_size,
            hidden_size,
            w_x: vec![0.0; g * input_size],
            w_h: vec![0.0; g * hidden_size],
            bias: vec![0.0; g],
        }
    }

    fn random(input_size: usize, hidden_size: usize, rng: &mut ChaCha8Rng) -> Self {
        let g = 4 * hidden_size;
        let bound = 1.0 / ((input_size + hidden_size) as f64).sqrt();
        Self {
            input_size,
            hidden_size,
            w_x: uniform(rng, g * input_size, bound),
            w_h: uniform(rng, g * hidden_size, bound),
            bias: uniform(rng, g, bound),
        }
    }
}

/// Activations kept from one forward step for backpropagation.
#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-activation gates `[f, i, g, o]`, each of length H.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn step_cached(layer: &LstmLayer, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, StepCache) {
    let h = layer.hidden_size;
    let mut z = layer.bias.clone();
    gemv_acc(&layer.w_x, x, &mut z);
    gemv_acc(&layer.w_h, h_prev, &mut z);
    for (k, v) in z.iter_mut().enumerate() {
        *v = if (2 * h..3 * h).contains(&k) { v.tanh() } else { sigmoid(*v) };
    }
    let (f, rest) = z.split_at(h);
    let (i, rest) = rest.split_at(h);
    let (g, o) = rest.split_at(h);
    let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h_t: Vec<f64> = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: z,
        tanh_c,
    };
    (h_t, c, cache)
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_step(layer: &LstmLayer, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != layer.input_size || h_prev.len() != layer.hidden_size || c_prev.len() != layer.hidden_size {
        return Err(invalid!(
            "LSTM step expects input {} and state {}, got {} / {} / {}",
            layer.input_size,
            layer.hidden_size,
            x.len(),
            h_prev.len(),
            c_prev.len()
        ));
    }
    let (h, c, _) = step_cached(layer, x, h_prev, c_prev);
    Ok((h, c))
}

/// Gate activations `(f, i, candidate, o)` for inspection.
pub fn lstm_gates(layer: &LstmLayer, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<[Vec<f64>; 4]> {
    lstm_step(layer, x, h_prev, c_prev)?;
    let (_, _, cache) = step_cached(layer, x, h_prev, c_prev);
    let h = layer.hidden_size;
    let g = cache.gates;
    Ok([g[..h].to_vec(), g[h..2 * h].to_vec(), g[2 * h..3 * h].to_vec(), g[3 * h..].to_vec()])
}

/// Elman cell `h_t = sigmoid(W x_t + U h_{t-1} + b)`, used as a baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnLayer {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub bias: Vec<f64>,
}

impl RnnLayer {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            w: vec![0.0; hidden_size * input_size],
            u: vec![0.0; hidden_size * hidden_size],
            bias: vec![0.0; hidden_size],
        }
    }

    pub fn random(input_size: usize, hidden_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / ((input_size + hidden_size) as f64).sqrt();
        Self {
            input_size,
            hidden_size,
            w: uniform(&mut rng, hidden_size * input_size, bound),
            u: uniform(&mut rng, hidden_size * hidden_size, bound),
            bias: uniform(&mut rng, hidden_size, bound),
        }
    }
}

pub fn rnn_step(layer: &RnnLayer, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    if x.len() != layer.input_size || h_prev.len() != layer.hidden_size {
        return Err(invalid!(
            "RNN step expects input {} and state {}, got {} / {}",
            layer.input_size,
            layer.hidden_size,
            x.len(),
            h_prev.len()
        ));
    }
    let mut z = layer.bias.clone();
    gemv_acc(&layer.w, x, &mut z);
    gemv_acc(&layer.u, h_prev, &mut z);
    Ok(z.into_iter().map(sigmoid).collect())
}

/// Runs the cell over a sequence from a zero state.
pub fn rnn_forward(layer: &RnnLayer, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut h = vec![0.0; layer.hidden_size];
    inputs
        .iter()
        .map(|x| {
            h = rnn_step(layer, x, &h)?;
            Ok(h.clone())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepLstmModel {
    pub input_size: usize,
    pub layers: Vec<LstmLayer>,
    /// `[output x last_hidden]`.
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl DeepLstmModel {
    /// Weights uniform in `+-1/sqrt(fan_in)` from a seeded ChaCha8 stream.
    pub fn new(input_size: usize, hidden: &[usize], output_size: usize, seed: u64) -> Result<Self> {
        if input_size == 0 || output_size == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(invalid!("LSTM sizes must be positive and at least one layer is required"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len());
        let mut fan_in = input_size;
        for &h in hidden {
            layers.push(LstmLayer::random(fan_in, h, &mut rng));
            fan_in = h;
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        Ok(Self {
            input_size,
            layers,
            head_w: uniform(&mut rng, output_size * fan_in, bound),
            head_b: uniform(&mut rng, output_size, bound),
        })
    }

    pub fn output_size(&self) -> usize {
        self.head_b.len()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden_size).collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            input_size: self.input_size,
            layers: self.layers.iter().map(|l| LstmLayer::zeros(l.input_size, l.hidden_size)).collect(),
            head_w: vec![0.0; self.head_w.len()],
            head_b: vec![0.0; self.head_b.len()],
        }
    }

    /// Every parameter tensor with its name, in a fixed order.
    pub fn named_params(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{}.w_x", k + 1), &l.w_x));
            out.push((format!("layer{}.w_h", k + 1), &l.w_h));
            out.push((format!("layer{}.bias", k + 1), &l.bias));
        }
        out.push(("head.w".into(), &self.head_w));
        out.push(("head.b".into(), &self.head_b));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.w_x);
            out.push(&mut l.w_h);
            out.push(&mut l.bias);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    fn check_inputs(&self, inputs: &[Vec<f64>]) -> Result<()> {
        if inputs.is_empty() {
            return Err(invalid!("input sequence is empty"));
        }
        if let Some(t) = inputs.iter().position(|x| x.len() != self.input_size) {
            return Err(invalid!("step {t} has {} features, model takes {}", inputs[t].len(), self.input_size));
        }
        Ok(())
    }

    fn forward_cached(&self, inputs: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<StepCache>>) {
        let mut seq: Vec<Vec<f64>> = inputs.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut h = vec![0.0; layer.hidden_size];
            let mut c = vec![0.0; layer.hidden_size];
            let mut layer_cache = Vec::with_capacity(seq.len());
            let mut outs = Vec::with_capacity(seq.len());
            for x in &seq {
                let (h_t, c_t, cache) = step_cached(layer, x, &h, &c);
                h = h_t;
                c = c_t;
                outs.push(h.clone());
                layer_cache.push(cache);
            }
            caches.push(layer_cache);
            seq = outs;
        }
        let outputs = seq.iter().map(|h| self.project(h)).collect();
        (outputs, caches)
    }

    fn project(&self, h: &[f64]) -> Vec<f64> {
        let mut y = self.head_b.clone();
        gemv_acc(&self.head_w, h, &mut y);
        y
    }
}

/// Runs the stack from zero states and projects every step.
pub fn forward(model: &DeepLstmModel, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    model.check_inputs(inputs)?;
    Ok(model.forward_cached(inputs).0)
}

/// Mean squared error over all steps and output dimensions.
pub fn sequence_loss(model: &DeepLstmModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    check_pair(model, inputs, targets)?;
    let outputs = model.forward_cached(inputs).0;
    Ok(mse(&outputs, targets))
}

fn mse(outputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    let count = (outputs.len() * outputs[0].len()) as f64;
    outputs
        .iter()
        .zip(targets)
        .flat_map(|(y, t)| y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)))
        .sum::<f64>()
        / count
}

fn check_pair(model: &DeepLstmModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
    model.check_inputs(inputs)?;
    if inputs.len() != targets.len() {
        return Err(invalid!("{} input steps but {} target steps", inputs.len(), targets.len()));
    }
    if let Some(t) = targets.iter().position(|y| y.len() != model.output_size()) {
        return Err(invalid!("target step {t} has {} values, model emits {}", targets[t].len(), model.output_size()));
    }
    Ok(())
}

/// Loss and analytic gradient for one sequence.
pub fn loss_and_gradient(model: &DeepLstmModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, DeepLstmModel)> {
    check_pair(model, inputs, targets)?;
    let (outputs, caches) = model.forward_cached(inputs);
    let loss = mse(&outputs, targets);
    let mut grad = model.zeros_like();
    let steps = inputs.len();
    let scale = 2.0 / (steps * model.output_size()) as f64;

    let top = model.layers.last().expect("at least one layer").hidden_size;
    let mut d_above: Vec<Vec<f64>> = Vec::with_capacity(steps);
    for t in 0..steps {
        let dy: Vec<f64> = outputs[t].iter().zip(&targets[t]).map(|(y, tg)| scale * (y - tg)).collect();
        let h_top = &caches.last().unwrap()[t];
        let h_t: Vec<f64> = {
            let hsz = top;
            (0..hsz).map(|k| h_top.gates[3 * hsz + k] * h_top.tanh_c[k]).collect()
        };
        outer_acc(&mut grad.head_w, &dy, &h_t);
        for (g, d) in grad.head_b.iter_mut().zip(&dy) {
            *g += d;
        }
        let mut dh = vec![0.0; top];
        gemv_t_acc(&model.head_w, &dy, &mut dh);
        d_above.push(dh);
    }

    for (li, layer) in model.layers.iter().enumerate().rev() {
        d_above = layer_backward(layer, &caches[li], &d_above, &mut grad.layers[li]);
    }
    Ok((loss, grad))
}

/// BPTT through one layer; returns the gradient with respect to its inputs.
fn layer_backward(layer: &LstmLayer, caches: &[StepCache], d_above: &[Vec<f64>], grad: &mut LstmLayer) -> Vec<Vec<f64>> {
    let h = layer.hidden_size;
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dx_all = vec![Vec::new(); caches.len()];
    let mut dz = vec![0.0; 4 * h];
    for t in (0..caches.len()).rev() {
        let cache = &caches[t];
        let g = &cache.gates;
        for k in 0..h {
            let (f, i, cand, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
            let dh = d_above[t][k] + dh_next[k];
            let tc = cache.tanh_c[k];
            let d_o = dh * tc;
            let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
            dz[k] = dc * cache.c_prev[k] * f * (1.0 - f);
            dz[h + k] = dc * cand * i * (1.0 - i);
            dz[2 * h + k] = dc * i * (1.0 - cand * cand);
            dz[3 * h + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        outer_acc(&mut grad.w_x, &dz, &cache.x);
        outer_acc(&mut grad.w_h, &dz, &cache.h_prev);
        for (b, d) in grad.bias.iter_mut().zip(&dz) {
            *b += d;
        }
        let mut dx = vec![0.0; layer.input_size];
        gemv_t_acc(&layer.w_x, &dz, &mut dx);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        gemv_t_acc(&layer.w_h, &dz, &mut dh_next);
        dx_all[t] = dx;
    }
    dx_all
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub grad_clip_norm: f64,
    /// Drives the per-epoch sequence order.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 300, learning_rate: 1e-3, grad_clip_norm: 5.0, seed: 0 }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean sequence loss per epoch, measured before each update.
    pub loss_trace: Vec<f64>,
    pub updates: usize,
    /// Largest gradient norm seen after clipping.
    pub max_clipped_norm: f64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_trace.last().copied()
    }
}

/// Scales `grad` so its global L2 norm is at most `max_norm`; returns the
/// resulting norm.
pub fn clip_global_norm(grad: &mut DeepLstmModel, max_norm: f64) -> f64 {
    let norm = grad
        .named_params()
        .iter()
        .flat_map(|(_, p)| p.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for p in grad.params_mut() {
            p.iter_mut().for_each(|v| *v *= s);
        }
        return norm * s;
    }
    norm
}

/// Full-sequence BPTT with Adam, one update per sequence; sequences are
/// visited in a seeded shuffled order each epoch.
pub fn bptt_train(
    model: &DeepLstmModel,
    sequences: &[(Vec<Vec<f64>>, Vec<Vec<f64>>)],
    cfg: &TrainConfig,
) -> Result<(DeepLstmModel, TrainReport)> {
    if !(cfg.learning_rate > 0.0) || !(cfg.grad_clip_norm > 0.0) {
        return Err(invalid!("learning rate and clip norm must be positive"));
    }
    if cfg.epochs > 0 && sequences.is_empty() {
        return Err(invalid!("no training sequences"));
    }
    for (k, (x, y)) in sequences.iter().enumerate() {
        check_pair(model, x, y).map_err(|e| invalid!("sequence {k}: {e}"))?;
    }
    let mut model = model.clone();
    let mut m_state = model.zeros_like();
    let mut v_state = model.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut report = TrainReport { loss_trace: Vec::with_capacity(cfg.epochs), updates: 0, max_clipped_norm: 0.0 };

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &k in &order {
            let (x, y) = &sequences[k];
            let (loss, mut grad) = loss_and_gradient(&model, x, y)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss of sequence {k}")));
            }
            epoch_loss += loss;
            let norm = clip_global_norm(&mut grad, cfg.grad_clip_norm);
            report.max_clipped_norm = report.max_clipped_norm.max(norm);
            report.updates += 1;
            let t = report.updates as i32;
            let c1 = 1.0 - BETA1.powi(t);
            let c2 = 1.0 - BETA2.powi(t);
            let lr = cfg.learning_rate;
            let params = model.params_mut();
            let ms = m_state.params_mut();
            let vs = v_state.params_mut();
            let gs: Vec<&[f64]> = grad.named_params().into_iter().map(|(_, p)| p).collect();
            for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(gs) {
                for j in 0..p.len() {
                    m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
                    v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
                    let m_hat = m[j] / c1;
                    let v_hat = v[j] / c2;
                    p[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        report.loss_trace.push(epoch_loss / sequences.len() as f64);
    }
    Ok((model, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSelection {
    All,
    HeadOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter with the largest error, e.g. `layer2.w_h[7]`.
    pub worst_param: String,
    pub checked: usize,
}

/// Relative error denominator floor; gradients smaller than this are
/// compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares analytic gradients with central differences of step
/// `epsilon` on every selected parameter.
pub fn gradient_check(
    model: &DeepLstmModel,
    sample: (&[Vec<f64>], &[Vec<f64>]),
    epsilon: f64,
    selection: ParamSelection,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0) {
        return Err(invalid!("epsilon must be positive"));
    }
    let (inputs, targets) = sample;
    let (_, analytic) = loss_and_gradient(model, inputs, targets)?;
    let analytic: Vec<(String, Vec<f64>)> = analytic.named_params().into_iter().map(|(n, p)| (n, p.to_vec())).collect();
    let head_start = analytic.len() - 2;

    let mut probe = model.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_param: String::new(), checked: 0 };
    for (tensor, (name, grad)) in analytic.iter().enumerate() {
        if selection == ParamSelection::HeadOnly && tensor < head_start {
            continue;
        }
        for j in 0..grad.len() {
            let original = probe.params_mut()[tensor][j];
            probe.params_mut()[tensor][j] = original + epsilon;
            let plus = sequence_loss(&probe, inputs, targets)?;
            probe.params_mut()[tensor][j] = original - epsilon;
            let minus = sequence_loss(&probe, inputs, targets)?;
            probe.params_mut()[tensor][j] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let denom = grad[j].abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            let rel = (grad[j] - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst_param = format!("{name}[{j}]");
            }
        }
    }
    Ok(report)
}
