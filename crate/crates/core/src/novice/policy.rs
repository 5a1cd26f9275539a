//! Chunked rollout of a trained noise-prediction network.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;

use super::data::{featurize, ACTION_DIM, OBS_FEATURES};
use super::net::{EpsNet, NetDims};
use super::schedule::NoiseSchedule;
use crate::env::{Action, Observation, SourceLabel};
use crate::error::NoviceError;
use crate::math;
use crate::rng::{self, Stream, StreamRng};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct NoviceConfig {
    /// Prediction horizon `H^p`.
    pub h_pred: usize,
    /// Executed prefix of each chunk `H^exec`.
    pub h_exec: usize,
    /// Observation history `H^obs`.
    pub h_obs: usize,
    pub hidden: Vec<usize>,
    pub emb_dim: usize,
    pub diffusion_steps: usize,
}

impl Default for NoviceConfig {
    fn default() -> Self {
        Self {
            h_pred: 8,
            h_exec: 4,
            h_obs: 2,
            hidden: alloc::vec![128, 128],
            emb_dim: 64,
            diffusion_steps: 16,
        }
    }
}

impl NoviceConfig {
    pub fn dims(&self) -> NetDims {
        NetDims {
            chunk_dim: self.h_pred * ACTION_DIM,
            obs_dim: self.h_obs * OBS_FEATURES,
            emb_dim: self.emb_dim,
            hidden: self.hidden.clone(),
        }
    }

    pub fn schedule(&self) -> NoiseSchedule {
        NoiseSchedule::cosine(self.diffusion_steps)
    }
}

/// Ancestral DDPM sampling from pure noise. The clean estimate is clipped
/// to `[-1, 1]` at every step and the final chunk is clamped.
pub fn sample_chunk<R: Rng + ?Sized>(net: &EpsNet, sched: &NoiseSchedule, obs: &[f64], rng: &mut R) -> Vec<f64> {
    let dim = net.dims.chunk_dim;
    let mut x: Vec<f64> = (0..dim).map(|_| rng::standard_normal(rng)).collect();
    let mut input = Vec::new();
    for n in (1..=sched.steps()).rev() {
        net.input(&x, obs, n, &mut input);
        let eps = net.forward(&input);
        let x0: Vec<f64> = sched
            .predict_x0(&x, n, &eps)
            .into_iter()
            .map(|v| math::clamp(v, -1.0, 1.0))
            .collect();
        let (mean, var) = sched.posterior(&x0, &x, n);
        x = if n > 1 {
            let sd = math::sqrt(var);
            mean.into_iter().map(|m| m + sd * rng::standard_normal(rng)).collect()
        } else {
            mean
        };
    }
    x.into_iter().map(|v| math::clamp(v, -1.0, 1.0)).collect()
}

/// The novice at rollout time: keeps the observation history and executes
/// the first `H^exec` actions of each sampled chunk.
#[derive(Clone, Debug)]
pub struct NovicePolicy {
    net: EpsNet,
    sched: NoiseSchedule,
    cfg: NoviceConfig,
    history: VecDeque<[f64; OBS_FEATURES]>,
    queue: VecDeque<[f64; ACTION_DIM]>,
    rng: StreamRng,
}

impl NovicePolicy {
    pub fn new(net: EpsNet, cfg: NoviceConfig) -> Result<Self, NoviceError> {
        let dims = cfg.dims();
        if net.dims != dims {
            return Err(NoviceError::ShapeMismatch {
                expected: dims.param_count(),
                got: net.dims.param_count(),
            });
        }
        if net.params.len() != dims.param_count() {
            return Err(NoviceError::ShapeMismatch {
                expected: dims.param_count(),
                got: net.params.len(),
            });
        }
        Ok(Self {
            sched: cfg.schedule(),
            net,
            cfg,
            history: VecDeque::new(),
            queue: VecDeque::new(),
            rng: rng::stream(0, Stream::NoviceSampling),
        })
    }

    pub fn net(&self) -> &EpsNet {
        &self.net
    }

    pub fn config(&self) -> &NoviceConfig {
        &self.cfg
    }

    /// Forget history and pending actions; reseed the sampling stream.
    pub fn reset(&mut self, seed: u64) {
        self.history.clear();
        self.queue.clear();
        self.rng = rng::stream(seed, Stream::NoviceSampling);
    }

    /// Record the latest observation. Call once per step, whoever acts.
    pub fn observe(&mut self, obs: &Observation) {
        let f = featurize(obs);
        if self.history.is_empty() {
            for _ in 0..self.cfg.h_obs {
                self.history.push_back(f);
            }
        } else {
            self.history.push_back(f);
        }
        while self.history.len() > self.cfg.h_obs {
            self.history.pop_front();
        }
    }

    /// Drop the rest of the current chunk, e.g. after another policy acted.
    pub fn interrupt(&mut self) {
        self.queue.clear();
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn obs_vector(&self) -> Vec<f64> {
        self.history.iter().flat_map(|f| f.iter().copied()).collect()
    }

    /// Next action of the current chunk, sampling a new one when the
    /// executed prefix is used up.
    pub fn next_action(&mut self) -> Action {
        if self.queue.is_empty() {
            let chunk = sample_chunk(&self.net, &self.sched, &self.obs_vector(), &mut self.rng);
            for row in chunk.chunks(ACTION_DIM).take(self.cfg.h_exec.max(1)) {
                self.queue.push_back([row[0], row[1], row[2], row[3]]);
            }
        }
        let a = self.queue.pop_front().expect("chunk has rows");
        Action::from_components(a, SourceLabel::Novice)
    }

    pub fn act(&mut self, obs: &Observation) -> Action {
        self.observe(obs);
        self.next_action()
    }
}
