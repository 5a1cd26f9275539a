//! Standalone data collection: a batch of episodes of one deploy label,
//! driven by the scripted human or a live operator.

use std::io::Write;

use easy_iil_core::assistant::{AssistantExpert, Demonstration};
use easy_iil_core::dataset::{DeployLabel, Episode, Partition};
use easy_iil_core::env::Env;
use easy_iil_core::gating::{beta_schedule, deploy_episode, episode_seed, Agents, DeployParams, EpisodeSpec, HumanExpert, ScriptedHuman};
use easy_iil_core::novice::NovicePolicy;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::log::{Header, LogWriter, ParsedLog, SessionKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectSpec {
    pub label: DeployLabel,
    /// Online round for CORRECTION; sets `β_i`.
    pub round: u32,
    pub first_id: u32,
    pub episodes: u32,
}

impl CollectSpec {
    pub fn partition(&self) -> Partition {
        match self.label {
            DeployLabel::OneDemo => Partition::One,
            DeployLabel::RestDemo => Partition::Rest,
            DeployLabel::Correction => Partition::Correction(self.round),
        }
    }

    pub fn session(&self) -> SessionKind {
        SessionKind::Collect {
            label: self.label,
            round: self.round,
            first_id: self.first_id,
            episodes: self.episodes,
        }
    }
}

/// Policies a collection may need besides the human.
#[derive(Clone, Debug, Default)]
pub struct CollectInputs {
    pub demo: Option<Demonstration>,
    pub novice: Option<NovicePolicy>,
}

/// The human seat of a collection session.
pub trait Operator: HumanExpert {
    /// Steps of the last episode that a live operator drove.
    fn take_ui_steps(&mut self) -> Vec<u64> {
        Vec::new()
    }

    fn end_episode(&mut self, _episode: &Episode) {}
}

impl Operator for ScriptedHuman {}

/// The first ONE_DEMO episode of a log, as a demonstration.
pub fn demo_from_log(log: &ParsedLog, env: &Env) -> Result<Demonstration> {
    let ep = log
        .episodes
        .iter()
        .find(|e| e.start.label == DeployLabel::OneDemo)
        .ok_or_else(|| CliError::Config("log holds no ONE_DEMO episode".into()))?;
    Ok(Demonstration::from_episode(&ep.to_episode(), env)?)
}

pub fn run_collect<W: Write, O: Operator>(
    cfg: &ExperimentConfig,
    seed: u64,
    spec: &CollectSpec,
    inputs: CollectInputs,
    operator: &mut O,
    out: W,
) -> Result<(Vec<Episode>, W)> {
    cfg.validate()?;
    if spec.label == DeployLabel::Correction && spec.round == 0 {
        return Err(CliError::Config("corrections belong to an online round, 1 or later".into()));
    }
    let mut env = Env::new(cfg.env.clone());
    let mut assistant = match (&inputs.demo, spec.label) {
        (Some(d), DeployLabel::RestDemo | DeployLabel::Correction) => {
            Some(AssistantExpert::activate(d.clone(), cfg.assistant_config())?)
        }
        _ => None,
    };
    let mut novice = inputs.novice;
    let iil = cfg.iil(seed);
    let params = DeployParams {
        label: spec.label,
        beta: (spec.label == DeployLabel::Correction).then(|| beta_schedule(cfg.beta, spec.round)),
        sigma: iil.sigma(),
        switch_chunk: iil.switch_chunk(),
        prohibition: cfg.ablation.prohibition,
    };
    let mut writer = LogWriter::new(out, &Header::new(cfg, seed, spec.session()))?;
    let mut episodes = Vec::with_capacity(spec.episodes as usize);
    for id in spec.first_id..spec.first_id + spec.episodes {
        let es = EpisodeSpec {
            id,
            partition: spec.partition(),
            env_seed: episode_seed(seed, id),
        };
        let ep = {
            let mut agents = Agents {
                human: &mut *operator,
                assistant: assistant.as_mut(),
                novice: novice.as_mut(),
            };
            deploy_episode(&mut env, &mut agents, &params, es)?
        };
        operator.end_episode(&ep);
        writer.write_episode(&ep, operator.take_ui_steps())?;
        episodes.push(ep);
    }
    Ok((episodes, writer.finish()?))
}
