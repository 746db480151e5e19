//! Minimal trainable neural kernel: dense layer, stacked LSTM, MSE loss,
//! exact backpropagation through time (including output-to-input feedback
//! edges), and Adam. Everything is 64-bit and hand-derived for exactly this
//! topology; correctness is pinned by finite-difference tests.
//!
//! Parameter layout per LSTM layer follows the two-bias convention
//! (input-side and recurrent-side bias per gate), gates ordered
//! input, forget, candidate, output inside each `4H` block:
//!
//! ```text
//! z = W_ih x + b_ih + W_hh h_prev + b_hh
//! i = sigmoid(z[0..H])   f = sigmoid(z[H..2H])
//! g = tanh(z[2H..3H])    o = sigmoid(z[3H..4H])
//! c = f * c_prev + i * g
//! h = o * tanh(c)
//! ```

use crate::error::{Error, Result};
use crate::math::SeededRng;

/// Fully connected layer with linear activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub out_dim: usize,
    pub in_dim: usize,
    /// Row-major `[out_dim x in_dim]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self { out_dim, in_dim, weights: vec![0.0; out_dim * in_dim], bias: vec![0.0; out_dim] }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// W x + b.
pub fn dense_forward(layer: &DenseLayer, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != layer.in_dim {
        return Err(Error::Shape(format!(
            "dense input {} vs expected {}",
            x.len(),
            layer.in_dim
        )));
    }
    let mut out = layer.bias.clone();
    for (row, o) in out.iter_mut().enumerate() {
        let w = &layer.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
        *o += dot(w, x);
    }
    Ok(out)
}

/// One stacked-LSTM layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// `[4H x in]` row-major.
    pub w_ih: Vec<f64>,
    /// `[4H x H]` row-major.
    pub w_hh: Vec<f64>,
    pub b_ih: Vec<f64>,
    pub b_hh: Vec<f64>,
}

/// A stack of LSTM layers; layer k's hidden sequence is layer k+1's input.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub layers: Vec<LstmLayer>,
}

/// Running hidden/cell state, one pair per layer.
#[derive(Debug, Clone)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmCell {
    pub fn zeros(input_size: usize, hidden_size: usize, num_layers: usize) -> Self {
        let layers = (0..num_layers)
            .map(|l| {
                let in_dim = if l == 0 { input_size } else { hidden_size };
                LstmLayer {
                    w_ih: vec![0.0; 4 * hidden_size * in_dim],
                    w_hh: vec![0.0; 4 * hidden_size * hidden_size],
                    b_ih: vec![0.0; 4 * hidden_size],
                    b_hh: vec![0.0; 4 * hidden_size],
                }
            })
            .collect();
        Self { input_size, hidden_size, layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn zero_state(&self) -> LstmState {
        LstmState {
            h: vec![vec![0.0; self.hidden_size]; self.layers.len()],
            c: vec![vec![0.0; self.hidden_size]; self.layers.len()],
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w_ih.len() + l.w_hh.len() + l.b_ih.len() + l.b_hh.len())
            .sum()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Independent accumulators let the reduction vectorize.
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for (ca, cb) in a.chunks_exact(4).zip(b.chunks_exact(4)) {
        s0 += ca[0] * cb[0];
        s1 += ca[1] * cb[1];
        s2 += ca[2] * cb[2];
        s3 += ca[3] * cb[3];
    }
    let mut s = (s0 + s2) + (s1 + s3);
    for (x, y) in a.chunks_exact(4).remainder().iter().zip(b.chunks_exact(4).remainder()) {
        s += x * y;
    }
    s
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pre-activations z = W_ih x + b_ih + W_hh h_prev + b_hh for one layer.
fn gate_preacts(layer: &LstmLayer, hidden: usize, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
    let in_dim = x.len();
    let mut z = vec![0.0; 4 * hidden];
    for (r, zr) in z.iter_mut().enumerate() {
        *zr = layer.b_ih[r]
            + layer.b_hh[r]
            + dot(&layer.w_ih[r * in_dim..(r + 1) * in_dim], x)
            + dot(&layer.w_hh[r * hidden..(r + 1) * hidden], h_prev);
    }
    z
}

/// Advances the stacked LSTM one time step. Returns the top layer's hidden
/// vector; `state` is updated in place.
pub fn lstm_forward(cell: &LstmCell, x_t: &[f64], state: &mut LstmState) -> Result<Vec<f64>> {
    if x_t.len() != cell.input_size {
        return Err(Error::Shape(format!(
            "lstm input {} vs expected {}",
            x_t.len(),
            cell.input_size
        )));
    }
    if state.h.len() != cell.layers.len() {
        return Err(Error::Shape("state layer count mismatch".into()));
    }
    let hsz = cell.hidden_size;
    let mut input = x_t.to_vec();
    for (l, layer) in cell.layers.iter().enumerate() {
        let z = gate_preacts(layer, hsz, &input, &state.h[l]);
        let mut h_new = vec![0.0; hsz];
        for j in 0..hsz {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[hsz + j]);
            let g = z[2 * hsz + j].tanh();
            let o = sigmoid(z[3 * hsz + j]);
            let c = f * state.c[l][j] + i * g;
            state.c[l][j] = c;
            h_new[j] = o * c.tanh();
        }
        state.h[l] = h_new.clone();
        input = h_new;
    }
    Ok(input)
}

/// Mean squared error and its gradient with respect to the prediction.
pub fn mse_loss(x_hat: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>)> {
    if x_hat.len() != x.len() {
        return Err(Error::Shape(format!("mse lengths {} vs {}", x_hat.len(), x.len())));
    }
    if x_hat.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = x_hat.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; x_hat.len()];
    for i in 0..x_hat.len() {
        let d = x_hat[i] - x[i];
        loss += d * d;
        grad[i] = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

/// A scalar-sequence prediction network: stacked LSTM feeding a dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub lstm: LstmCell,
    pub head: DenseLayer,
}

impl Network {
    /// Fresh network with all weights and biases drawn uniformly from
    /// [-1/sqrt(hidden), +1/sqrt(hidden)].
    pub fn init(input_size: usize, hidden_size: usize, num_layers: usize, rng: &mut SeededRng) -> Self {
        let mut net = Self {
            lstm: LstmCell::zeros(input_size, hidden_size, num_layers),
            head: DenseLayer::zeros(1, hidden_size),
        };
        let bound = 1.0 / (hidden_size as f64).sqrt();
        net.for_each_param_mut(|p| *p = rng.uniform_in(-bound, bound));
        net
    }

    pub fn param_count(&self) -> usize {
        self.lstm.param_count() + self.head.param_count()
    }

    /// Visits every parameter in the documented flat order: per layer
    /// w_ih, w_hh, b_ih, b_hh; then head weights, head bias.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.lstm.layers {
            layer.w_ih.iter_mut().for_each(&mut f);
            layer.w_hh.iter_mut().for_each(&mut f);
            layer.b_ih.iter_mut().for_each(&mut f);
            layer.b_hh.iter_mut().for_each(&mut f);
        }
        self.head.weights.iter_mut().for_each(&mut f);
        self.head.bias.iter_mut().for_each(&mut f);
    }

    /// Parameters in the documented flat order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.lstm.layers {
            out.extend_from_slice(&layer.w_ih);
            out.extend_from_slice(&layer.w_hh);
            out.extend_from_slice(&layer.b_ih);
            out.extend_from_slice(&layer.b_hh);
        }
        out.extend_from_slice(&self.head.weights);
        out.extend_from_slice(&self.head.bias);
        out
    }

    /// Writes back parameters from the flat order produced by `flatten`.
    pub fn assign(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "flat parameter count {} vs expected {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut it = flat.iter();
        self.for_each_param_mut(|p| *p = *it.next().expect("length checked"));
        Ok(())
    }

    /// Free-running rollout: consume `window` chronologically, then feed
    /// each output back as the next input until `n_preds` outputs are
    /// produced.
    pub fn rollout(&self, window: &[f64], n_preds: usize) -> Result<Vec<f64>> {
        if window.is_empty() || n_preds == 0 {
            return Err(Error::Domain("rollout needs a window and n_preds >= 1".into()));
        }
        let mut state = self.lstm.zero_state();
        let mut top = Vec::new();
        for &x in window {
            top = lstm_forward(&self.lstm, &[x], &mut state)?;
        }
        let mut out = Vec::with_capacity(n_preds);
        let mut y = dense_forward(&self.head, &top)?[0];
        out.push(y);
        for _ in 1..n_preds {
            let top = lstm_forward(&self.lstm, &[y], &mut state)?;
            y = dense_forward(&self.head, &top)?[0];
            out.push(y);
        }
        Ok(out)
    }
}

/// Per-parameter gradients, mirroring `Network`'s flat order.
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub flat: Vec<f64>,
}

impl NetGrads {
    pub fn zeros(net: &Network) -> Self {
        Self { flat: vec![0.0; net.param_count()] }
    }

    pub fn add_scaled(&mut self, other: &NetGrads, scale: f64) {
        for (a, b) in self.flat.iter_mut().zip(&other.flat) {
            *a += b * scale;
        }
    }
}

// Offsets of each parameter block inside the flat gradient vector.
struct FlatOffsets {
    layers: Vec<[usize; 4]>, // w_ih, w_hh, b_ih, b_hh
    head_w: usize,
    head_b: usize,
}

fn flat_offsets(net: &Network) -> FlatOffsets {
    let mut off = 0usize;
    let mut layers = Vec::with_capacity(net.lstm.layers.len());
    for layer in &net.lstm.layers {
        let o = [
            off,
            off + layer.w_ih.len(),
            off + layer.w_ih.len() + layer.w_hh.len(),
            off + layer.w_ih.len() + layer.w_hh.len() + layer.b_ih.len(),
        ];
        off += layer.w_ih.len() + layer.w_hh.len() + layer.b_ih.len() + layer.b_hh.len();
        layers.push(o);
    }
    let head_w = off;
    let head_b = off + net.head.weights.len();
    FlatOffsets { layers, head_w, head_b }
}

// Per-step, per-layer forward cache used by the backward pass.
#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

/// Exact gradients of the mean-squared rollout loss over the unrolled
/// window + feedback graph.
///
/// `window` is consumed first; `horizon` outputs are produced, the first
/// right after the last window input. For feedback step `j + 1`
/// (`j` in `0..horizon-1`), the input is `targets[j]` when
/// `teacher_mask[j]` is set, otherwise the network's own output `j` — in
/// which case gradients flow through that feedback edge.
///
/// Hot path: caches live in flat arenas indexed by (step, layer), and the
/// backward accumulations are plain fused multiply-add sweeps.
pub fn bptt(
    net: &Network,
    window: &[f64],
    targets: &[f64],
    teacher_mask: &[bool],
) -> Result<(f64, NetGrads)> {
    let w = window.len();
    let horizon = targets.len();
    if w == 0 {
        return Err(Error::Shape("empty input window".into()));
    }
    if horizon == 0 {
        // Zero-length prediction phase: no loss, no gradients.
        return Ok((0.0, NetGrads::zeros(net)));
    }
    if teacher_mask.len() != horizon.saturating_sub(1) {
        return Err(Error::Shape(format!(
            "teacher mask length {} vs horizon-1 = {}",
            teacher_mask.len(),
            horizon - 1
        )));
    }
    if net.lstm.input_size != 1 {
        return Err(Error::Shape("rollout training requires scalar inputs".into()));
    }

    let hsz = net.lstm.hidden_size;
    let n_layers = net.lstm.layers.len();
    let total_steps = w + horizon - 1;
    let cell = |s: usize, l: usize| (s * n_layers + l) * hsz;

    // ---- forward with caching ----
    // Upper-layer inputs are the lower layer's hidden at the same step, so
    // only the scalar bottom inputs need their own cache.
    let mut a_gates = vec![0.0; total_steps * n_layers * 4 * hsz];
    let mut a_c = vec![0.0; total_steps * n_layers * hsz];
    let mut a_tanh = vec![0.0; total_steps * n_layers * hsz];
    let mut a_h = vec![0.0; total_steps * n_layers * hsz];
    let mut x_scalars = vec![0.0; total_steps];
    let mut outputs = vec![0.0; horizon];
    let mut z = vec![0.0; 4 * hsz];

    for s in 0..total_steps {
        let x_scalar = if s < w {
            window[s]
        } else {
            let j = s - w; // feedback into prediction step j+1
            if teacher_mask[j] {
                targets[j]
            } else {
                outputs[j]
            }
        };
        x_scalars[s] = x_scalar;
        for l in 0..n_layers {
            let layer = &net.lstm.layers[l];
            let in_dim = if l == 0 { 1 } else { hsz };
            // z = b_ih + b_hh + W_ih x + W_hh h_prev
            for (r, zr) in z.iter_mut().enumerate() {
                *zr = layer.b_ih[r] + layer.b_hh[r];
            }
            if l == 0 {
                axpy(&mut z, x_scalar, &layer.w_ih);
            } else {
                let x_lower = cell(s, l - 1);
                let x_in = &a_h[x_lower..x_lower + hsz];
                for r in 0..4 * hsz {
                    z[r] += dot(&layer.w_ih[r * in_dim..(r + 1) * in_dim], x_in);
                }
            }
            if s > 0 {
                let hp = cell(s - 1, l);
                let h_prev = &a_h[hp..hp + hsz];
                for r in 0..4 * hsz {
                    z[r] += dot(&layer.w_hh[r * hsz..(r + 1) * hsz], h_prev);
                }
            }
            let base = cell(s, l);
            let gbase = base * 4;
            for j in 0..hsz {
                let ig = sigmoid(z[j]);
                let fg = sigmoid(z[hsz + j]);
                let gg = z[2 * hsz + j].tanh();
                let og = sigmoid(z[3 * hsz + j]);
                a_gates[gbase + j] = ig;
                a_gates[gbase + hsz + j] = fg;
                a_gates[gbase + 2 * hsz + j] = gg;
                a_gates[gbase + 3 * hsz + j] = og;
                let cp = if s > 0 { a_c[cell(s - 1, l) + j] } else { 0.0 };
                let c = fg * cp + ig * gg;
                a_c[base + j] = c;
                let tc = c.tanh();
                a_tanh[base + j] = tc;
                a_h[base + j] = og * tc;
            }
        }
        if s >= w - 1 {
            let top = cell(s, n_layers - 1);
            outputs[s - (w - 1)] =
                dot(&net.head.weights, &a_h[top..top + hsz]) + net.head.bias[0];
        }
    }

    let (loss, loss_grad) = mse_loss(&outputs, targets)?;

    // ---- backward ----
    let offs = flat_offsets(net);
    let mut grads = NetGrads::zeros(net);
    let g = &mut grads.flat;

    let mut dh_next = vec![0.0; n_layers * hsz];
    let mut dc_next = vec![0.0; n_layers * hsz];
    // Extra gradient flowing into output j from its use as a later input.
    let mut dy_feedback = vec![0.0; horizon];
    let mut dz = vec![0.0; 4 * hsz];
    let mut dh = vec![0.0; hsz];

    for s in (0..total_steps).rev() {
        for l in (0..n_layers).rev() {
            let layer = &net.lstm.layers[l];
            let in_dim = if l == 0 { 1 } else { hsz };
            let base = cell(s, l);
            let gbase = base * 4;

            dh.copy_from_slice(&dh_next[l * hsz..(l + 1) * hsz]);
            if l == n_layers - 1 && s >= w - 1 {
                let j = s - (w - 1);
                let dy = loss_grad[j] + dy_feedback[j];
                axpy(&mut dh, dy, &net.head.weights);
                axpy(&mut g[offs.head_w..offs.head_w + hsz], dy, &a_h[base..base + hsz]);
                g[offs.head_b] += dy;
            }

            // Pre-activation gradients for the four gates; dc_prev and
            // dh_prev replace the dc_next/dh_next slots in place.
            {
                let dcn = &mut dc_next[l * hsz..(l + 1) * hsz];
                for j in 0..hsz {
                    let ig = a_gates[gbase + j];
                    let fg = a_gates[gbase + hsz + j];
                    let gg = a_gates[gbase + 2 * hsz + j];
                    let og = a_gates[gbase + 3 * hsz + j];
                    let tc = a_tanh[base + j];
                    let dout = dh[j];
                    let dc = dcn[j] + dout * og * (1.0 - tc * tc);
                    let cp = if s > 0 { a_c[cell(s - 1, l) + j] } else { 0.0 };
                    dz[j] = dc * gg * ig * (1.0 - ig);
                    dz[hsz + j] = dc * cp * fg * (1.0 - fg);
                    dz[2 * hsz + j] = dc * ig * (1.0 - gg * gg);
                    dz[3 * hsz + j] = dout * tc * og * (1.0 - og);
                    dcn[j] = dc * fg;
                }
            }

            let [o_wih, o_whh, o_bih, o_bhh] = offs.layers[l];

            // Bias gradients.
            axpy(&mut g[o_bih..o_bih + 4 * hsz], 1.0, &dz);
            axpy(&mut g[o_bhh..o_bhh + 4 * hsz], 1.0, &dz);

            // Input-weight gradients and gradient into the layer input.
            if l == 0 {
                let x = x_scalars[s];
                axpy(&mut g[o_wih..o_wih + 4 * hsz], x, &dz);
                if s >= w {
                    let j = s - w;
                    if !teacher_mask[j] {
                        dy_feedback[j] += dot(&dz, &layer.w_ih);
                    }
                }
            } else {
                let xb = cell(s, l - 1);
                let dh_lower = &mut dh_next[(l - 1) * hsz..l * hsz];
                for r in 0..4 * hsz {
                    let dzr = dz[r];
                    axpy(
                        &mut g[o_wih + r * in_dim..o_wih + (r + 1) * in_dim],
                        dzr,
                        &a_h[xb..xb + hsz],
                    );
                    // Same-step flow into the lower layer, consumed later
                    // in this reverse iteration (layers run top-down).
                    axpy(dh_lower, dzr, &layer.w_ih[r * in_dim..(r + 1) * in_dim]);
                }
            }

            // Recurrent-weight gradients and gradient into h_prev.
            {
                let dh_slot = &mut dh_next[l * hsz..(l + 1) * hsz];
                dh_slot.fill(0.0);
                if s > 0 {
                    let hp = cell(s - 1, l);
                    for r in 0..4 * hsz {
                        let dzr = dz[r];
                        axpy(&mut g[o_whh + r * hsz..o_whh + (r + 1) * hsz], dzr, &a_h[hp..hp + hsz]);
                        axpy(dh_slot, dzr, &layer.w_hh[r * hsz..(r + 1) * hsz]);
                    }
                }
            }
        }
    }

    Ok((loss, grads))
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update with bias correction. Errors on non-finite gradients.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam sizes: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if lr <= 0.0 {
        return Err(Error::Domain(format!("learning rate must be positive, got {lr}")));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence("non-finite gradient in Adam step".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for k in 0..params.len() {
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grads[k];
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grads[k] * grads[k];
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        params[k] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Parameter count of the standard predictor topology: `layers` stacked
/// LSTM layers (scalar input, `hidden` units) plus a `hidden -> 1` dense
/// head with the two-bias-per-gate convention.
pub fn predictor_param_count(layers: usize, input: usize, hidden: usize) -> usize {
    let mut total = 0;
    for l in 0..layers {
        let in_dim = if l == 0 { input } else { hidden };
        total += 4 * hidden * in_dim + 4 * hidden * hidden + 8 * hidden;
    }
    total + hidden + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_identity_and_bias() {
        let mut layer = DenseLayer::zeros(3, 3);
        for i in 0..3 {
            layer.weights[i * 3 + i] = 1.0;
        }
        let x = [0.5, -1.5, 2.0];
        assert_eq!(dense_forward(&layer, &x).unwrap(), x.to_vec());

        let layer = DenseLayer {
            out_dim: 2,
            in_dim: 3,
            weights: vec![0.0; 6],
            bias: vec![3.0, -1.0],
        };
        assert_eq!(dense_forward(&layer, &x).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn dense_hand_computed() {
        let layer = DenseLayer {
            out_dim: 3,
            in_dim: 4,
            weights: vec![
                0.1, -0.2, 0.3, 0.4, //
                -0.5, 0.6, 0.7, -0.8, //
                0.9, 1.0, -1.1, 1.2,
            ],
            bias: vec![0.01, 0.02, 0.03],
        };
        let x = [1.0, 2.0, -1.0, 0.5];
        let want = [
            0.01 + 0.1 - 0.4 - 0.3 + 0.2,
            0.02 - 0.5 + 1.2 - 0.7 - 0.4,
            0.03 + 0.9 + 2.0 + 1.1 + 0.6,
        ];
        let got = dense_forward(&layer, &x).unwrap();
        for i in 0..3 {
            assert!((got[i] - want[i]).abs() < 1e-12, "{} vs {}", got[i], want[i]);
        }
        assert!(dense_forward(&layer, &x[..3]).is_err());
    }

    #[test]
    fn lstm_zero_parameters_forced_values() {
        // gates = sigmoid(0) = 0.5, candidate = tanh(0) = 0, so
        // c_t = 0.5 c_prev and h_t = 0.5 tanh(0.5 c_prev).
        let cell = LstmCell::zeros(1, 4, 1);
        let mut state = cell.zero_state();
        state.c[0] = vec![1.0, -2.0, 0.5, 0.0];
        let h = lstm_forward(&cell, &[0.7], &mut state).unwrap();
        for j in 0..4 {
            let c_want = 0.5 * [1.0, -2.0, 0.5, 0.0][j];
            assert!((state.c[0][j] - c_want).abs() < 1e-15);
            assert!((h[j] - 0.5 * c_want.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_saturated_forget_carries_memory() {
        let mut cell = LstmCell::zeros(1, 3, 1);
        // Large positive forget bias, large negative input-gate bias.
        for j in 0..3 {
            cell.layers[0].b_ih[3 + j] = 30.0; // forget gate block
            cell.layers[0].b_ih[j] = -30.0; // input gate block
        }
        let mut state = cell.zero_state();
        state.c[0] = vec![0.3, -0.9, 1.7];
        let before = state.c[0].clone();
        lstm_forward(&cell, &[1.0], &mut state).unwrap();
        for j in 0..3 {
            assert!((state.c[0][j] - before[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn lstm_small_cell_hand_computed() {
        // hidden = 2, scalar input, every parameter distinct.
        let mut cell = LstmCell::zeros(1, 2, 1);
        let l = &mut cell.layers[0];
        for (k, v) in l.w_ih.iter_mut().enumerate() {
            *v = 0.05 * (k as f64 + 1.0);
        }
        for (k, v) in l.w_hh.iter_mut().enumerate() {
            *v = -0.03 * (k as f64 + 1.0);
        }
        for (k, v) in l.b_ih.iter_mut().enumerate() {
            *v = 0.01 * (k as f64 + 1.0);
        }
        for (k, v) in l.b_hh.iter_mut().enumerate() {
            *v = -0.02 * (k as f64 + 1.0);
        }
        let mut state = cell.zero_state();
        state.h[0] = vec![0.3, -0.2];
        state.c[0] = vec![0.1, 0.4];
        let x = 0.9;
        let h = lstm_forward(&cell, &[x], &mut state).unwrap();

        // scalar-by-scalar reference
        let hsz = 2;
        let l = &cell.layers[0];
        for j in 0..hsz {
            let zi = l.b_ih[j] + l.b_hh[j] + l.w_ih[j] * x + l.w_hh[j * 2] * 0.3
                + l.w_hh[j * 2 + 1] * -0.2;
            let zf = l.b_ih[2 + j] + l.b_hh[2 + j] + l.w_ih[2 + j] * x
                + l.w_hh[(2 + j) * 2] * 0.3
                + l.w_hh[(2 + j) * 2 + 1] * -0.2;
            let zg = l.b_ih[4 + j] + l.b_hh[4 + j] + l.w_ih[4 + j] * x
                + l.w_hh[(4 + j) * 2] * 0.3
                + l.w_hh[(4 + j) * 2 + 1] * -0.2;
            let zo = l.b_ih[6 + j] + l.b_hh[6 + j] + l.w_ih[6 + j] * x
                + l.w_hh[(6 + j) * 2] * 0.3
                + l.w_hh[(6 + j) * 2 + 1] * -0.2;
            let (i, f, gg, o) = (sigmoid(zi), sigmoid(zf), zg.tanh(), sigmoid(zo));
            let c = f * [0.1, 0.4][j] + i * gg;
            assert!((state.c[0][j] - c).abs() < 1e-12);
            assert!((h[j] - o * c.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_loss_values() {
        let (l, g) = mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);

        let (l, g) = mse_loss(&[3.0], &[1.0]).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g, vec![4.0]);
    }

    #[test]
    fn mse_loss_gradient_finite_difference() {
        let mut rng = SeededRng::new(5);
        let x_hat: Vec<f64> = (0..10).map(|_| rng.gaussian()).collect();
        let x: Vec<f64> = (0..10).map(|_| rng.gaussian()).collect();
        let (_, grad) = mse_loss(&x_hat, &x).unwrap();
        let h = 1e-6;
        for k in 0..10 {
            let mut plus = x_hat.clone();
            plus[k] += h;
            let mut minus = x_hat.clone();
            minus[k] -= h;
            let fd = (mse_loss(&plus, &x).unwrap().0 - mse_loss(&minus, &x).unwrap().0) / (2.0 * h);
            assert!(
                (grad[k] - fd).abs() / fd.abs().max(1e-8) < 1e-8,
                "k={k}: {} vs {}",
                grad[k],
                fd
            );
        }
    }

    fn rollout_loss(net: &Network, window: &[f64], targets: &[f64], mask: &[bool]) -> f64 {
        // Forward-only reference used by the finite-difference check;
        // mirrors the bptt unroll without any gradient machinery.
        let mut state = net.lstm.zero_state();
        let mut top = Vec::new();
        for &x in window {
            top = lstm_forward(&net.lstm, &[x], &mut state).unwrap();
        }
        let horizon = targets.len();
        let mut outputs = Vec::with_capacity(horizon);
        let mut y = dense_forward(&net.head, &top).unwrap()[0];
        outputs.push(y);
        for j in 0..horizon - 1 {
            let input = if mask[j] { targets[j] } else { y };
            let top = lstm_forward(&net.lstm, &[input], &mut state).unwrap();
            y = dense_forward(&net.head, &top).unwrap()[0];
            outputs.push(y);
        }
        mse_loss(&outputs, targets).unwrap().0
    }

    #[test]
    fn bptt_zero_horizon() {
        let mut rng = SeededRng::new(1);
        let net = Network::init(1, 4, 1, &mut rng);
        let (loss, grads) = bptt(&net, &[0.1, 0.2], &[], &[]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.flat.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn bptt_matches_finite_differences() {
        // The mandatory gradient gate: 20 random small nets, mixed teacher
        // masks, 1- and 2-layer stacks; max relative error <= 1e-4.
        let mut worst = 0.0f64;
        for seed in 0..20u64 {
            let mut rng = SeededRng::new(seed);
            let hidden = 2 + (seed % 7) as usize; // 2..=8
            let layers = 1 + (seed % 2) as usize;
            let horizon = 2 + (seed % 7) as usize; // 2..=8
            let window = 4;
            let net = Network::init(1, hidden, layers, &mut rng);
            let win: Vec<f64> = (0..window).map(|_| rng.gaussian() * 0.5).collect();
            let targets: Vec<f64> = (0..horizon).map(|_| rng.gaussian() * 0.5).collect();
            let mask: Vec<bool> = (0..horizon - 1).map(|_| rng.gen_bool(0.3)).collect();

            let (_, grads) = bptt(&net, &win, &targets, &mask).unwrap();
            let flat = net.flatten();
            let h = 1e-5;
            for k in 0..flat.len() {
                let mut n_plus = net.clone();
                let mut f = flat.clone();
                f[k] += h;
                n_plus.assign(&f).unwrap();
                let mut n_minus = net.clone();
                f[k] -= 2.0 * h;
                n_minus.assign(&f).unwrap();
                let fd = (rollout_loss(&n_plus, &win, &targets, &mask)
                    - rollout_loss(&n_minus, &win, &targets, &mask))
                    / (2.0 * h);
                let got = grads.flat[k];
                let rel = (got - fd).abs() / (got.abs() + fd.abs()).max(1e-6);
                worst = worst.max(rel);
                assert!(
                    rel <= 1e-4,
                    "seed {seed} param {k}: bptt {got} vs fd {fd} (rel {rel})"
                );
            }
        }
        eprintln!("bptt gradient check worst relative error: {worst:.2e}");
    }

    #[test]
    fn bptt_all_teacher_forced_cuts_feedback() {
        // With every step teacher-forced the loss is a sum of independent
        // per-step regressions; perturbing a *target* changes inputs but
        // the gradient must still match finite differences (sanity that the
        // mask plumbing is honored). Here we just check gradients exist and
        // match FD under the all-true mask.
        let mut rng = SeededRng::new(99);
        let net = Network::init(1, 3, 1, &mut rng);
        let win = [0.2, -0.1, 0.4];
        let targets = [0.3, 0.1, -0.2, 0.25];
        let mask = [true, true, true];
        let (_, grads) = bptt(&net, &win, &targets, &mask).unwrap();
        let flat = net.flatten();
        let h = 1e-5;
        for k in (0..flat.len()).step_by(7) {
            let mut f = flat.clone();
            f[k] += h;
            let mut np = net.clone();
            np.assign(&f).unwrap();
            f[k] -= 2.0 * h;
            let mut nm = net.clone();
            nm.assign(&f).unwrap();
            let fd = (rollout_loss(&np, &win, &targets, &mask)
                - rollout_loss(&nm, &win, &targets, &mask))
                / (2.0 * h);
            let rel = (grads.flat[k] - fd).abs() / (grads.flat[k].abs() + fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {k}: {} vs {}", grads.flat[k], fd);
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut params = vec![1.0, -2.0, 3.0];
        let before = params.clone();
        let mut state = AdamState::new(3);
        adam_step(&mut params, &[0.0, 0.0, 0.0], &mut state, 0.1).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // After bias correction the first update is lr * g / (|g| + eps).
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        adam_step(&mut params, &[0.37], &mut state, 0.01).unwrap();
        assert!((params[0] + 0.01).abs() < 1e-6, "got {}", params[0]);
    }

    #[test]
    fn adam_minimizes_scalar_quadratic() {
        let mut w = vec![0.0f64];
        let mut state = AdamState::new(1);
        for _ in 0..100 {
            let grad = 2.0 * (w[0] - 3.0);
            adam_step(&mut w, &[grad], &mut state, 0.1).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 0.05, "w = {}", w[0]);
    }

    #[test]
    fn adam_rejects_nonfinite() {
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        assert!(adam_step(&mut params, &[f64::NAN], &mut state, 0.1).is_err());
    }

    #[test]
    fn parameter_counts_match_reference() {
        assert_eq!(predictor_param_count(1, 1, 100), 41_301);
        assert_eq!(predictor_param_count(2, 1, 100), 122_101);
        assert_eq!(predictor_param_count(3, 1, 100), 202_901);
        let mut rng = SeededRng::new(0);
        for layers in 1..=3 {
            let net = Network::init(1, 100, layers, &mut rng);
            assert_eq!(net.param_count(), predictor_param_count(layers, 1, 100));
        }
    }

    #[test]
    fn flatten_assign_roundtrip() {
        let mut rng = SeededRng::new(10);
        let net = Network::init(1, 5, 2, &mut rng);
        let flat = net.flatten();
        let mut other = Network::init(1, 5, 2, &mut rng);
        other.assign(&flat).unwrap();
        assert_eq!(net, other);
    }

    #[test]
    fn rollout_deterministic_and_sized() {
        let mut rng = SeededRng::new(11);
        let net = Network::init(1, 6, 1, &mut rng);
        let window = [0.1, 0.2, 0.3, 0.2];
        for n in [1usize, 2, 17] {
            let a = net.rollout(&window, n).unwrap();
            let b = net.rollout(&window, n).unwrap();
            assert_eq!(a.len(), n);
            assert_eq!(a, b);
        }
    }
}
