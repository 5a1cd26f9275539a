//! Logged interaction data: per-step gating trace plus the weighted
//! `(observation, action)` pairs the novice trains on.

use alloc::vec::Vec;

use crate::env::{Action, EnvState, Observation, RegionLabel, SourceLabel};

/// Which branch of the data-collection procedure produced an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum DeployLabel {
    OneDemo,
    RestDemo,
    Correction,
}

impl DeployLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            DeployLabel::OneDemo => "ONE_DEMO",
            DeployLabel::RestDemo => "REST_DEMO",
            DeployLabel::Correction => "CORRECTION",
        }
    }
}

/// Dataset partition: the single seed demo, the remaining offline demos, or
/// the corrections of online round `i` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Partition {
    One,
    Rest,
    Correction(u32),
}

impl Partition {
    pub fn is_offline(self) -> bool {
        matches!(self, Partition::One | Partition::Rest)
    }

    /// 0 for offline data, `i` for online round `i`.
    pub fn round(self) -> u32 {
        match self {
            Partition::One | Partition::Rest => 0,
            Partition::Correction(i) => i,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub k: u64,
    pub j: u64,
    pub x: f64,
    pub h: bool,
    /// Assistant gate; `None` when no threshold applies (offline labels).
    pub g: Option<bool>,
    pub region: RegionLabel,
    pub state: EnvState,
    pub obs: Observation,
    pub action: Action,
    pub weight: f64,
}

impl StepRecord {
    pub fn source(&self) -> SourceLabel {
        self.action.source
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceCounts {
    pub human: usize,
    pub assistant: usize,
    pub novice: usize,
}

impl SourceCounts {
    pub fn total(&self) -> usize {
        self.human + self.assistant + self.novice
    }

    pub fn add(&mut self, source: SourceLabel) {
        match source {
            SourceLabel::Human => self.human += 1,
            SourceLabel::Assistant => self.assistant += 1,
            SourceLabel::Novice => self.novice += 1,
        }
    }
}

impl core::ops::AddAssign for SourceCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.human += rhs.human;
        self.assistant += rhs.assistant;
        self.novice += rhs.novice;
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Episode {
    pub id: u32,
    pub partition: Partition,
    pub label: DeployLabel,
    pub env_seed: u64,
    pub beta: Option<f64>,
    pub steps: Vec<StepRecord>,
    pub final_state: EnvState,
    pub success: bool,
    /// Ended because the assistant ran out of waypoints.
    pub exhausted: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn source_counts(&self) -> SourceCounts {
        let mut c = SourceCounts::default();
        for s in &self.steps {
            c.add(s.source());
        }
        c
    }

    pub fn sources(&self) -> impl Iterator<Item = SourceLabel> + '_ {
        self.steps.iter().map(StepRecord::source)
    }
}

/// `D = D^off ∪ D^on` with its weights carried per step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedDataset {
    episodes: Vec<Episode>,
}

impl WeightedDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_episodes(episodes: Vec<Episode>) -> Self {
        Self { episodes }
    }

    pub fn extend(&mut self, episodes: impl IntoIterator<Item = Episode>) {
        self.episodes.extend(episodes);
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn into_episodes(self) -> Vec<Episode> {
        self.episodes
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn partition(&self, p: Partition) -> impl Iterator<Item = &Episode> + '_ {
        self.episodes.iter().filter(move |e| e.partition == p)
    }

    pub fn step_count(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    /// `weight = 0 ⟺ source = NOVICE` for every logged pair.
    pub fn weights_consistent(&self) -> bool {
        self.episodes.iter().flat_map(|e| e.steps.iter()).all(|s| {
            let expected = if s.source().is_expert() { 1.0 } else { 0.0 };
            s.weight == expected
        })
    }
}

pub fn weight_for(source: SourceLabel) -> f64 {
    if source.is_expert() {
        1.0
    } else {
        0.0
    }
}
