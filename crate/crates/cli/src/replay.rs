//! Re-simulate a log from its seeds and check every logged step: the
//! environment transition bit for bit, and the gating trace against the
//! rules that produced it.

use easy_iil_core::dataset::{weight_for, DeployLabel};
use easy_iil_core::env::{Env, SourceLabel};
use easy_iil_core::gating::{assistant_gate, select_source};
use easy_iil_core::rng::{self, Stream};
use serde::Serialize;

use crate::log::ParsedLog;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Divergence {
    pub episode: u32,
    /// Index of the step whose record or transition disagrees; equal to the
    /// step count for the terminal state.
    pub step: usize,
    pub field: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplayReport {
    pub config_hash: String,
    pub episodes: usize,
    pub steps: usize,
    pub divergences: usize,
    pub first: Option<Divergence>,
}

impl ReplayReport {
    pub fn clean(&self) -> bool {
        self.divergences == 0
    }
}

pub fn replay(log: &ParsedLog) -> ReplayReport {
    let cfg = &log.header.config;
    let h_chunk = if cfg.ablation.chunk_switching { cfg.switch_chunk } else { 1 };
    let prohibition = cfg.ablation.prohibition;
    let mut env = Env::new(cfg.env.clone());
    let mut found: Vec<Divergence> = Vec::new();
    let mut steps = 0;
    for ep in &log.episodes {
        let id = ep.start.episode;
        // One divergence per step at most; the first field checked wins.
        let flag = |step: usize, field: &'static str, bad: bool, found: &mut Vec<Divergence>| {
            if bad && found.last().is_none_or(|d| d.episode != id || d.step != step) {
                found.push(Divergence { episode: id, step, field });
            }
        };
        let (mut s, o0) = env.reset(ep.start.env_seed);
        let mut gate = rng::stream(ep.start.env_seed, Stream::Gate);
        let mut x = f64::NAN;
        let mut j = 0u64;
        let label = ep.start.label;
        for (i, r) in ep.steps.iter().enumerate() {
            steps += 1;
            if i == 0 {
                flag(0, "reset", r.state != s || r.obs != o0, &mut found);
            }
            // Later checks run against the logged state so one bad entry
            // does not cascade.
            s = r.state;
            flag(i, "k", r.k != i as u64, &mut found);
            flag(i, "j", r.j != j, &mut found);
            if j % h_chunk == 0 {
                x = rng::uniform(&mut gate);
            }
            flag(i, "x", r.x.to_bits() != x.to_bits(), &mut found);
            flag(i, "region", r.region != r.obs.region, &mut found);
            let g = ep.start.beta.map(|b| assistant_gate(r.x, b, r.region, prohibition));
            flag(i, "g", r.g != g, &mut found);
            flag(i, "h", label == DeployLabel::OneDemo && !r.h, &mut found);
            let src = select_source(label, r.h, r.g);
            flag(i, "source", r.action.source != src, &mut found);
            flag(i, "weight", r.weight != weight_for(r.action.source), &mut found);
            if r.action.source == SourceLabel::Human && !ep.end.ui_steps.contains(&r.k) {
                let oracle = env.oracle_action(&s);
                flag(i, "action", oracle.components() != r.action.components(), &mut found);
            }
            let next = env.step(&s, &r.action);
            let bad = match ep.steps.get(i + 1) {
                Some(after) => after.state != next.state || after.obs != next.obs,
                None => ep.end.final_state != next.state,
            };
            flag(i, "transition", bad, &mut found);
            if label == DeployLabel::Correction && !r.h {
                j += 1;
            }
        }
        let n = ep.steps.len();
        if n == 0 {
            flag(0, "final_state", ep.end.final_state != s, &mut found);
        }
        let s = ep.end.final_state;
        // A run ends at the horizon, on success or failure, or when the
        // assistant runs out of waypoints.
        let over = env.is_done(&s) != !ep.end.exhausted;
        flag(n, "termination", over, &mut found);
        flag(n, "success", ep.end.success != s.success, &mut found);
    }
    ReplayReport {
        config_hash: log.header.config_hash.clone(),
        episodes: log.episodes.len(),
        steps,
        divergences: found.len(),
        first: found.into_iter().next(),
    }
}
