//! Observation features and training samples.

use alloc::vec::Vec;

use crate::dataset::{Episode, WeightedDataset};
use crate::env::{Action, Observation, SourceLabel};
use crate::math;

pub const ACTION_DIM: usize = 4;

/// Object points sampled from the ordered outline.
pub const KEYPOINTS: usize = 8;

const FINE_GAIN: f64 = 25.0;

/// Features per observation.
pub const OBS_FEATURES: usize = 13 + 2 * KEYPOINTS;

/// EE pose and gripper in absolute terms; goal and `KEYPOINTS` evenly
/// spaced outline points as offsets from the EE, scaled to order one.
/// The outline keeps its template order, so point 0 is always the same
/// corner of the object.
pub fn featurize(obs: &Observation) -> [f64; OBS_FEATURES] {
    let ee = obs.ee;
    let mut f = [0.0; OBS_FEATURES];
    f[..9].copy_from_slice(&[
        (ee.x - 0.5) * 2.0,
        (ee.y - 0.5) * 2.0,
        math::cos(ee.theta),
        math::sin(ee.theta),
        obs.gripper,
        (obs.goal.x - ee.x) * 5.0,
        (obs.goal.y - ee.y) * 5.0,
        math::cos(obs.goal.theta),
        math::sin(obs.goal.theta),
    ]);
    let pts = obs.object_points.as_slice();
    if !pts.is_empty() {
        for i in 0..KEYPOINTS {
            let p = pts[i * pts.len() / KEYPOINTS];
            f[13 + 2 * i] = (p.x - ee.x) * 5.0;
            f[14 + 2 * i] = (p.y - ee.y) * 5.0;
        }
        // Fine-scale offsets resolve the last few steps before contact.
        let fine = |d: f64| math::clamp(d * FINE_GAIN, -1.0, 1.0);
        f[9] = fine(obs.goal.x - ee.x);
        f[10] = fine(obs.goal.y - ee.y);
        f[11] = fine(pts[0].x - ee.x);
        f[12] = fine(pts[0].y - ee.y);
    }
    f
}

/// Concatenated features of the `h_obs` observations ending at `k`, oldest
/// first, padding before the episode start with observation 0.
pub fn stacked_features(features: &[[f64; OBS_FEATURES]], k: usize, h_obs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h_obs * OBS_FEATURES);
    for back in (0..h_obs).rev() {
        out.extend_from_slice(&features[k.saturating_sub(back)]);
    }
    out
}

/// Row-structured loss weights: row `i` is all ones for expert actions and
/// all zeros for novice actions.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    rows: Vec<bool>,
}

impl WeightMatrix {
    pub fn from_sources(sources: &[SourceLabel]) -> Self {
        Self {
            rows: sources.iter().map(|s| s.is_expert()).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> f64 {
        if self.rows[i] {
            1.0
        } else {
            0.0
        }
    }

    pub fn is_all_zero(&self) -> bool {
        !self.rows.iter().any(|&r| r)
    }

    /// Row-major `rows × ACTION_DIM` entries.
    pub fn to_flat(&self) -> Vec<f64> {
        self.rows
            .iter()
            .flat_map(|&r| [if r { 1.0 } else { 0.0 }; ACTION_DIM])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub obs: Vec<f64>,
    /// Row-major `H^p × ACTION_DIM` clean chunk.
    pub chunk: Vec<f64>,
    pub weights: WeightMatrix,
}

/// Indices whose own action came from an expert.
pub fn qualifying_indices(sources: &[SourceLabel]) -> Vec<usize> {
    sources
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_expert())
        .map(|(k, _)| k)
        .collect()
}

/// Sources of the chunk starting at `k`, padded by repeating the last one.
pub fn chunk_sources(sources: &[SourceLabel], k: usize, h_pred: usize) -> Vec<SourceLabel> {
    let last = sources.len() - 1;
    (0..h_pred).map(|i| sources[(k + i).min(last)]).collect()
}

pub fn episode_samples(episode: &Episode, h_pred: usize, h_obs: usize) -> Vec<Sample> {
    if episode.steps.is_empty() {
        return Vec::new();
    }
    let features: Vec<_> = episode.steps.iter().map(|s| featurize(&s.obs)).collect();
    let actions: Vec<Action> = episode.steps.iter().map(|s| s.action).collect();
    let sources: Vec<SourceLabel> = actions.iter().map(|a| a.source).collect();
    let last = actions.len() - 1;
    qualifying_indices(&sources)
        .into_iter()
        .map(|k| {
            let chunk = (0..h_pred)
                .flat_map(|i| actions[(k + i).min(last)].components())
                .collect();
            Sample {
                obs: stacked_features(&features, k, h_obs),
                chunk,
                weights: WeightMatrix::from_sources(&chunk_sources(&sources, k, h_pred)),
            }
        })
        .collect()
}

/// One sample per step whose action came from the human or the assistant.
pub fn filter_samples(dataset: &WeightedDataset, h_pred: usize, h_obs: usize) -> Vec<Sample> {
    dataset
        .episodes()
        .iter()
        .flat_map(|e| episode_samples(e, h_pred, h_obs))
        .collect()
}
