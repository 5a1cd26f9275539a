//! Weighted denoising loss and AdamW training.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::data::{Sample, ACTION_DIM};
use super::net::{BatchTape, EpsNet};
use super::schedule::NoiseSchedule;
use crate::error::NoviceError;
use crate::math;
use crate::rng::{self, Stream};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Continue from the previous round's parameters instead of a fresh
    /// initialization.
    pub warm_start: bool,
    /// Epochs when continuing from a previous round; `epochs` if unset.
    pub warm_epochs: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 64,
            learning_rate: 1e-4,
            weight_decay: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            warm_start: true,
            warm_epochs: None,
        }
    }
}

/// The `(n, ε)` draw for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDraw {
    pub n: usize,
    pub eps: Vec<f64>,
}

pub fn draw_noise<R: Rng + ?Sized>(sched: &NoiseSchedule, dim: usize, rng: &mut R) -> NoiseDraw {
    let n = rng.random_range(1..=sched.steps());
    let eps = (0..dim).map(|_| rng::standard_normal(rng)).collect();
    NoiseDraw { n, eps }
}

/// Reusable buffers for loss evaluation.
#[derive(Default)]
pub struct LossScratch {
    tape: BatchTape,
    input: Vec<f64>,
    d_out: Vec<f64>,
    kept: Vec<usize>,
}

/// Mean over batch and entries of `(W ⊙ (ε − ε_θ(aⁿ, o, n)))²`, with its
/// gradient accumulated into `grad` when given. `weighted = false` gives
/// the plain loss on the same draws.
fn loss_impl(
    net: &EpsNet,
    sched: &NoiseSchedule,
    batch: &[&Sample],
    draws: &[NoiseDraw],
    weighted: bool,
    grad: Option<&mut [f64]>,
    scratch: &mut LossScratch,
) -> f64 {
    debug_assert_eq!(batch.len(), draws.len());
    let dim = net.dims.chunk_dim;
    let scale = 1.0 / (batch.len() * dim) as f64;
    let LossScratch {
        tape,
        input,
        d_out,
        kept,
    } = scratch;
    kept.clear();
    let xs = tape.input_buffer();
    xs.clear();
    for (i, (s, d)) in batch.iter().zip(draws).enumerate() {
        // A sample whose weights are all zero contributes nothing.
        if weighted && s.weights.is_all_zero() {
            continue;
        }
        kept.push(i);
        let noisy = sched.add_noise(&s.chunk, d.n, &d.eps);
        net.input(&noisy, &s.obs, d.n, input);
        xs.extend_from_slice(input);
    }
    if kept.is_empty() {
        return 0.0;
    }
    net.forward_batch(kept.len(), tape);
    let pred = tape.output();
    d_out.clear();
    let mut total = 0.0;
    for (row, &i) in kept.iter().enumerate() {
        let (s, d) = (batch[i], &draws[i]);
        let p = &pred[row * dim..(row + 1) * dim];
        let mut sample_loss = 0.0;
        for j in 0..dim {
            let wj = if weighted { s.weights.row(j / ACTION_DIM) } else { 1.0 };
            let r = wj * (d.eps[j] - p[j]);
            sample_loss += r * r;
            // ∂/∂p of (w(ε − p))² is −2w²(ε − p) = −2 w r.
            d_out.push(-2.0 * wj * r * scale);
        }
        total += sample_loss;
    }
    if let Some(g) = grad {
        net.backward_batch(tape, d_out, g);
    }
    total * scale
}

pub fn weighted_loss(
    net: &EpsNet,
    sched: &NoiseSchedule,
    batch: &[&Sample],
    draws: &[NoiseDraw],
    grad: Option<&mut [f64]>,
    scratch: &mut LossScratch,
) -> f64 {
    loss_impl(net, sched, batch, draws, true, grad, scratch)
}

/// Plain denoising loss, ignoring the weights.
pub fn unweighted_loss(
    net: &EpsNet,
    sched: &NoiseSchedule,
    batch: &[&Sample],
    draws: &[NoiseDraw],
    grad: Option<&mut [f64]>,
    scratch: &mut LossScratch,
) -> f64 {
    loss_impl(net, sched, batch, draws, false, grad, scratch)
}

/// One fresh `(n, ε)` draw per sample, then [`weighted_loss`].
pub fn loss<R: Rng + ?Sized>(
    net: &EpsNet,
    sched: &NoiseSchedule,
    batch: &[&Sample],
    rng: &mut R,
    grad: Option<&mut [f64]>,
) -> f64 {
    let draws: Vec<_> = batch.iter().map(|_| draw_noise(sched, net.dims.chunk_dim, rng)).collect();
    weighted_loss(net, sched, batch, &draws, grad, &mut LossScratch::default())
}

/// AdamW with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    wd: f64,
    b1: f64,
    b2: f64,
    eps: f64,
}

impl AdamW {
    pub fn new(n_params: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: alloc::vec![0.0; n_params],
            v: alloc::vec![0.0; n_params],
            t: 0,
            lr: cfg.learning_rate,
            wd: cfg.weight_decay,
            b1: cfg.beta1,
            b2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - math::powi(self.b1, self.t);
        let c2 = 1.0 - math::powi(self.b2, self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *p -= self.lr * self.wd * *p;
            *m = self.b1 * *m + (1.0 - self.b1) * g;
            *v = self.b2 * *v + (1.0 - self.b2) * g * g;
            let (mh, vh) = (*m / c1, *v / c2);
            *p -= self.lr * mh / (math::sqrt(vh) + self.eps);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    /// Mean minibatch loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
    pub samples: usize,
}

/// Minibatch AdamW over `samples` for `cfg.epochs` epochs, starting from
/// `init`. Per-sample gradients are summed in index order so a run is
/// reproducible.
pub fn train(
    samples: &[Sample],
    init: EpsNet,
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(EpsNet, TrainReport), NoviceError> {
    if samples.is_empty() {
        return Err(NoviceError::EmptyDataset);
    }
    let dims = &init.dims;
    for s in samples {
        if s.chunk.len() != dims.chunk_dim {
            return Err(NoviceError::ShapeMismatch {
                expected: dims.chunk_dim,
                got: s.chunk.len(),
            });
        }
        if s.obs.len() != dims.obs_dim {
            return Err(NoviceError::ShapeMismatch {
                expected: dims.obs_dim,
                got: s.obs.len(),
            });
        }
    }
    let mut net = init;
    let mut rng = rng::stream(seed, Stream::Training);
    let mut opt = AdamW::new(net.params.len(), cfg);
    let mut grad = alloc::vec![0.0; net.params.len()];
    let mut scratch = LossScratch::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let bs = cfg.batch_size.max(1);
    let mut report = TrainReport {
        samples: samples.len(),
        ..TrainReport::default()
    };
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0);
        for idx in order.chunks(bs) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
            let draws: Vec<_> = batch.iter().map(|_| draw_noise(sched, net.dims.chunk_dim, &mut rng)).collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            sum += weighted_loss(&net, sched, &batch, &draws, Some(&mut grad), &mut scratch);
            opt.step(&mut net.params, &grad);
            batches += 1;
            report.steps += 1;
        }
        report.epoch_loss.push(sum / batches as f64);
    }
    Ok((net, report))
}
