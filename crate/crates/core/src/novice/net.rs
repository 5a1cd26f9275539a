//! Fully connected noise-prediction network.
//!
//! Input is the noisy chunk, the observation vector and a sinusoidal
//! embedding of the diffusion step; output is the predicted noise with the
//! chunk's shape. Hidden layers use SiLU. Parameters live in one flat
//! vector, layer by layer, each layer a row-major weight matrix followed by
//! its bias.

use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetDims {
    pub chunk_dim: usize,
    pub obs_dim: usize,
    pub emb_dim: usize,
    pub hidden: Vec<usize>,
}

impl NetDims {
    pub fn input_dim(&self) -> usize {
        self.chunk_dim + self.obs_dim + self.emb_dim
    }

    fn layer_sizes(&self) -> Vec<(usize, usize)> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim();
        for &h in &self.hidden {
            sizes.push((prev, h));
            prev = h;
        }
        sizes.push((prev, self.chunk_dim));
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// `[sin(n f_0), …, sin(n f_{h-1}), cos(n f_0), …]` with geometric
/// frequencies from 1 down to 1/10000.
pub fn step_embedding(n: usize, dim: usize, out: &mut [f64]) {
    let half = dim / 2;
    for i in 0..half {
        let f = if half > 1 {
            math::exp(-math::ln(10_000.0) * i as f64 / (half - 1) as f64)
        } else {
            1.0
        };
        out[i] = math::sin(n as f64 * f);
        out[half + i] = math::cos(n as f64 * f);
    }
    if dim % 2 == 1 {
        out[dim - 1] = 0.0;
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + math::exp(-x))
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpsNet {
    pub dims: NetDims,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    /// `inputs[l]` feeds layer `l`; the last entry is the network output.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("forward pass ran")
    }
}

impl EpsNet {
    /// Uniform `±1/√fan_in` initialization.
    pub fn init<R: Rng + ?Sized>(dims: NetDims, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(dims.param_count());
        for (i, o) in dims.layer_sizes() {
            let bound = 1.0 / math::sqrt(i as f64);
            for _ in 0..(i * o + o) {
                params.push((2.0 * rng::uniform(rng) - 1.0) * bound);
            }
        }
        Self { dims, params }
    }

    pub fn input(&self, chunk: &[f64], obs: &[f64], n: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(chunk);
        out.extend_from_slice(obs);
        let start = out.len();
        out.resize(start + self.dims.emb_dim, 0.0);
        step_embedding(n, self.dims.emb_dim, &mut out[start..]);
    }

    /// Forward pass recording what backpropagation needs.
    pub fn forward_tape(&self, x: &[f64], tape: &mut Tape) {
        let sizes = self.dims.layer_sizes();
        let layers = sizes.len();
        tape.inputs.resize_with(layers + 1, Vec::new);
        tape.pre.resize_with(layers - 1, Vec::new);
        tape.inputs[0].clear();
        tape.inputs[0].extend_from_slice(x);
        let mut off = 0;
        for (l, &(ni, no)) in sizes.iter().enumerate() {
            let (w, rest) = self.params[off..].split_at(ni * no);
            let b = &rest[..no];
            off += ni * no + no;
            let (before, after) = tape.inputs.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            out.clear();
            out.extend((0..no).map(|r| {
                let row = &w[r * ni..(r + 1) * ni];
                b[r] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
            }));
            if l + 1 < layers {
                let pre = &mut tape.pre[l];
                pre.clear();
                pre.extend_from_slice(out);
                for v in out.iter_mut() {
                    *v *= sigmoid(*v);
                }
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut tape = Tape::default();
        self.forward_tape(x, &mut tape);
        tape.inputs.pop().expect("output")
    }

    /// Accumulate `∂L/∂θ` into `grad` given `∂L/∂output`.
    pub fn backward(&self, tape: &mut Tape, d_out: &[f64], grad: &mut [f64]) {
        let sizes = self.dims.layer_sizes();
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut off = 0;
        for &(ni, no) in &sizes {
            offsets.push(off);
            off += ni * no + no;
        }
        let Tape {
            inputs,
            pre,
            grad_a,
            grad_b,
        } = tape;
        grad_a.clear();
        grad_a.extend_from_slice(d_out);
        for l in (0..sizes.len()).rev() {
            let (ni, no) = sizes[l];
            let o = offsets[l];
            let w = &self.params[o..o + ni * no];
            let (gw, gb) = grad[o..o + ni * no + no].split_at_mut(ni * no);
            let input = &inputs[l];
            for r in 0..no {
                let d = grad_a[r];
                gb[r] += d;
                if d != 0.0 {
                    for (g, &x) in gw[r * ni..(r + 1) * ni].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            if l == 0 {
                break;
            }
            grad_b.clear();
            grad_b.resize(ni, 0.0);
            for r in 0..no {
                let d = grad_a[r];
                if d != 0.0 {
                    for (g, &wv) in grad_b.iter_mut().zip(&w[r * ni..(r + 1) * ni]) {
                        *g += d * wv;
                    }
                }
            }
            // Through the SiLU of layer l-1.
            for (g, &z) in grad_b.iter_mut().zip(&pre[l - 1]) {
                let s = sigmoid(z);
                *g *= s * (1.0 + z * (1.0 - s));
            }
            core::mem::swap(grad_a, grad_b);
        }
    }
}

/// Row-major activations of a whole minibatch, kept for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct BatchTape {
    rows: usize,
    /// `inputs[l]` is `rows × fan_in(l)`; the last entry is the output.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    /// Sigmoids of `pre`.
    sig: Vec<Vec<f64>>,
    /// Transposed weights, `fan_in × fan_out`, for the forward sweep.
    wt: Vec<Vec<f64>>,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
}

impl BatchTape {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("forward pass ran")
    }

    /// The input matrix to fill before [`EpsNet::forward_batch`].
    pub fn input_buffer(&mut self) -> &mut Vec<f64> {
        if self.inputs.is_empty() {
            self.inputs.push(Vec::new());
        }
        &mut self.inputs[0]
    }
}

/// Columns per register tile.
const TILE: usize = 16;

/// `y[k, :] += Σ_i x[k, i] · m[i, :]` over `i` ascending, for the rows `k`
/// of `y` (`ny` wide) and `x` (`nx` wide); `m` is `nx × ny`. Works on
/// 4 × `TILE` blocks of `y` held in locals across the whole `i` sweep.
fn axpy_rows(y: &mut [f64], ny: usize, x: &[f64], nx: usize, m: &[f64]) {
    let rows = y.len() / ny;
    let mut k = 0;
    while k + 4 <= rows {
        let mut j = 0;
        while j + TILE <= ny {
            let mut acc = [[0.0f64; TILE]; 4];
            for (r, a) in acc.iter_mut().enumerate() {
                a.copy_from_slice(&y[(k + r) * ny + j..(k + r) * ny + j + TILE]);
            }
            for i in 0..nx {
                let w: &[f64; TILE] = m[i * ny + j..i * ny + j + TILE].try_into().expect("tile");
                for (r, a) in acc.iter_mut().enumerate() {
                    let xv = x[(k + r) * nx + i];
                    for t in 0..TILE {
                        a[t] += xv * w[t];
                    }
                }
            }
            for (r, a) in acc.iter().enumerate() {
                y[(k + r) * ny + j..(k + r) * ny + j + TILE].copy_from_slice(a);
            }
            j += TILE;
        }
        for r in k..k + 4 {
            for i in 0..nx {
                let xv = x[r * nx + i];
                for jj in j..ny {
                    y[r * ny + jj] += xv * m[i * ny + jj];
                }
            }
        }
        k += 4;
    }
    for r in k..rows {
        for i in 0..nx {
            let xv = x[r * nx + i];
            for jj in 0..ny {
                y[r * ny + jj] += xv * m[i * ny + jj];
            }
        }
    }
}

/// `g[r, :] += Σ_b d[b, r] · x[b, :]` over `b` ascending; `g` is
/// `nr × nx`, `d` is `rows × nr`, `x` is `rows × nx`.
fn outer_accumulate(g: &mut [f64], nx: usize, d: &[f64], nr: usize, x: &[f64]) {
    let rows = x.len() / nx;
    let mut r = 0;
    while r + 4 <= nr {
        let mut j = 0;
        while j + TILE <= nx {
            let mut acc = [[0.0f64; TILE]; 4];
            for (q, a) in acc.iter_mut().enumerate() {
                a.copy_from_slice(&g[(r + q) * nx + j..(r + q) * nx + j + TILE]);
            }
            for b in 0..rows {
                let xv: &[f64; TILE] = x[b * nx + j..b * nx + j + TILE].try_into().expect("tile");
                for (q, a) in acc.iter_mut().enumerate() {
                    let dv = d[b * nr + r + q];
                    for t in 0..TILE {
                        a[t] += dv * xv[t];
                    }
                }
            }
            for (q, a) in acc.iter().enumerate() {
                g[(r + q) * nx + j..(r + q) * nx + j + TILE].copy_from_slice(a);
            }
            j += TILE;
        }
        for b in 0..rows {
            for q in r..r + 4 {
                let dv = d[b * nr + q];
                for jj in j..nx {
                    g[q * nx + jj] += dv * x[b * nx + jj];
                }
            }
        }
        r += 4;
    }
    for b in 0..rows {
        for q in r..nr {
            let dv = d[b * nr + q];
            for jj in 0..nx {
                g[q * nx + jj] += dv * x[b * nx + jj];
            }
        }
    }
}

impl EpsNet {
    /// Forward pass over the `rows` inputs already placed in
    /// [`BatchTape::input_buffer`].
    pub fn forward_batch(&self, rows: usize, tape: &mut BatchTape) {
        let sizes = self.dims.layer_sizes();
        let layers = sizes.len();
        tape.rows = rows;
        tape.inputs.resize_with(layers + 1, Vec::new);
        tape.pre.resize_with(layers - 1, Vec::new);
        tape.sig.resize_with(layers - 1, Vec::new);
        tape.wt.resize_with(layers, Vec::new);
        debug_assert_eq!(tape.inputs[0].len(), rows * self.dims.input_dim());
        let mut off = 0;
        for (l, &(ni, no)) in sizes.iter().enumerate() {
            let (w, rest) = self.params[off..].split_at(ni * no);
            let b = &rest[..no];
            off += ni * no + no;
            let wt = &mut tape.wt[l];
            wt.clear();
            wt.resize(ni * no, 0.0);
            for r in 0..no {
                for c in 0..ni {
                    wt[c * no + r] = w[r * ni + c];
                }
            }
            let (before, after) = tape.inputs.split_at_mut(l + 1);
            let out = &mut after[0];
            out.clear();
            for _ in 0..rows {
                out.extend_from_slice(b);
            }
            axpy_rows(out, no, &before[l], ni, wt);
            if l + 1 < layers {
                let (pre, sig) = (&mut tape.pre[l], &mut tape.sig[l]);
                pre.clear();
                pre.extend_from_slice(out);
                sig.clear();
                for v in out.iter_mut() {
                    let s = sigmoid(*v);
                    sig.push(s);
                    *v *= s;
                }
            }
        }
    }

    /// Accumulate `∂L/∂θ` into `grad` from the `rows × chunk_dim` output
    /// gradient. Each parameter receives its per-sample terms in row order.
    pub fn backward_batch(&self, tape: &mut BatchTape, d_out: &[f64], grad: &mut [f64]) {
        let sizes = self.dims.layer_sizes();
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut off = 0;
        for &(ni, no) in &sizes {
            offsets.push(off);
            off += ni * no + no;
        }
        let BatchTape {
            rows,
            inputs,
            pre,
            sig,
            grad_a,
            grad_b,
            ..
        } = tape;
        let rows = *rows;
        grad_a.clear();
        grad_a.extend_from_slice(d_out);
        for l in (0..sizes.len()).rev() {
            let (ni, no) = sizes[l];
            let o = offsets[l];
            let w = &self.params[o..o + ni * no];
            let (gw, gb) = grad[o..o + ni * no + no].split_at_mut(ni * no);
            for d in grad_a.chunks_exact(no) {
                for (g, &dr) in gb.iter_mut().zip(d) {
                    *g += dr;
                }
            }
            outer_accumulate(gw, ni, grad_a, no, &inputs[l]);
            if l == 0 {
                break;
            }
            grad_b.clear();
            grad_b.resize(rows * ni, 0.0);
            axpy_rows(grad_b, ni, grad_a, no, w);
            for ((g, &z), &s) in grad_b.iter_mut().zip(&pre[l - 1]).zip(&sig[l - 1]) {
                *g *= s * (1.0 + z * (1.0 - s));
            }
            core::mem::swap(grad_a, grad_b);
        }
    }
}
