//! Who acts at each step, and the data-collection loops built on that.
//!
//! The human gate `h` has absolute priority. Online, the assistant gate
//! `g` picks the assistant whenever the held uniform draw `X` is below the
//! round threshold or the EE is in a bottleneck; otherwise the
//! noise-perturbed novice acts. `X` is redrawn whenever the non-human
//! counter `j` sits on a multiple of the switch chunk `H`.

use alloc::vec::Vec;

use crate::assistant::{AssistantConfig, AssistantExpert, Demonstration};
use crate::dataset::{weight_for, DeployLabel, Episode, Partition, StepRecord, WeightedDataset};
use crate::env::{Action, Env, EnvState, Observation, RegionLabel, SourceLabel};
use crate::error::{AssistantError, GatingError, NoviceError};
use crate::geometry::Pose2;
use crate::math::{self, clamp};
use crate::novice::{self, EpsNet, NoviceConfig, NovicePolicy, TrainConfig, TrainReport};
use crate::rng::{self, derive_seed, Stream};

/// `β_i = β^i`.
pub fn beta_schedule(beta: f64, round: u32) -> f64 {
    math::powi(beta, round as i32)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateState {
    pub k: u64,
    pub j: u64,
    pub x: f64,
    pub switch_chunk: u64,
    pub beta: Option<f64>,
}

impl GateState {
    pub fn new(switch_chunk: u64, beta: Option<f64>) -> Self {
        Self {
            k: 0,
            j: 0,
            x: 0.0,
            switch_chunk: switch_chunk.max(1),
            beta,
        }
    }

    /// Fresh `X` when `j mod H = 0`, otherwise keep it. Returns whether a
    /// draw happened.
    pub fn update_x<R: rand::Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        if self.j % self.switch_chunk == 0 {
            self.x = rng::uniform(rng);
            true
        } else {
            false
        }
    }

    /// `None` when no threshold applies.
    pub fn assistant_gate(&self, region: RegionLabel, prohibition: bool) -> Option<bool> {
        self.beta.map(|b| assistant_gate(self.x, b, region, prohibition))
    }

    /// Counter update after an executed action.
    pub fn advance(&mut self, label: DeployLabel, h: bool) {
        self.k += 1;
        if label == DeployLabel::Correction && !h {
            self.j += 1;
        }
    }
}

/// `X < β_i` or, with the prohibition on, the EE is in a bottleneck.
pub fn assistant_gate(x: f64, beta: f64, region: RegionLabel, prohibition: bool) -> bool {
    x < beta || (prohibition && region == RegionLabel::Bottleneck)
}

/// A live override wins; otherwise the scripted near-failure predicate.
pub fn human_gate(env: &Env, state: &EnvState, reference: &[Pose2], ui_override: Option<bool>) -> bool {
    match ui_override {
        Some(v) => v,
        None => env.near_failure(state, Some(reference)),
    }
}

pub fn select_source(label: DeployLabel, h: bool, g: Option<bool>) -> SourceLabel {
    match label {
        DeployLabel::OneDemo => SourceLabel::Human,
        DeployLabel::RestDemo if h => SourceLabel::Human,
        DeployLabel::RestDemo => SourceLabel::Assistant,
        DeployLabel::Correction if h => SourceLabel::Human,
        DeployLabel::Correction if g == Some(true) => SourceLabel::Assistant,
        DeployLabel::Correction => SourceLabel::Novice,
    }
}

/// Add `N(0, σ²)` to every component, then clamp.
pub fn perturb_novice<R: rand::Rng + ?Sized>(action: Action, sigma: f64, rng: &mut R) -> Action {
    if sigma == 0.0 {
        return action;
    }
    let mut c = action.components();
    for v in &mut c {
        *v = clamp(*v + sigma * rng::standard_normal(rng), -1.0, 1.0);
    }
    Action::from_components(c, action.source)
}

/// The human side of the loop: decides when to take over and what to do.
pub trait HumanExpert {
    fn begin_episode(&mut self, _env: &Env, _state: &EnvState) {}

    /// `h(k)`, asked exactly once per step.
    fn wants_control(&mut self, env: &Env, state: &EnvState, obs: &Observation, reference: &[Pose2]) -> bool;

    fn action(&mut self, env: &Env, state: &EnvState, obs: &Observation) -> Action;

    /// Called after every executed step with its record and the successor.
    fn after_step(&mut self, _record: &StepRecord, _next: &EnvState) {}
}

/// Scripted human: takes over while the near-failure predicate fires and
/// for a few steps after it clears, and drives with the privileged oracle.
#[derive(Clone, Debug)]
pub struct ScriptedHuman {
    pub hysteresis: u32,
    remaining: u32,
}

impl ScriptedHuman {
    pub fn new(hysteresis: u32) -> Self {
        Self {
            hysteresis,
            remaining: 0,
        }
    }
}

impl Default for ScriptedHuman {
    fn default() -> Self {
        Self::new(5)
    }
}

impl HumanExpert for ScriptedHuman {
    fn begin_episode(&mut self, _env: &Env, _state: &EnvState) {
        self.remaining = 0;
    }

    fn wants_control(&mut self, env: &Env, state: &EnvState, _obs: &Observation, reference: &[Pose2]) -> bool {
        if human_gate(env, state, reference, None) {
            self.remaining = self.hysteresis;
            true
        } else if self.remaining > 0 {
            self.remaining -= 1;
            true
        } else {
            false
        }
    }

    fn action(&mut self, env: &Env, state: &EnvState, _obs: &Observation) -> Action {
        env.oracle_action(state)
    }
}

/// A human who watches but never steps in; still drives when forced to.
#[derive(Clone, Copy, Debug, Default)]
pub struct PassiveHuman;

impl HumanExpert for PassiveHuman {
    fn wants_control(&mut self, _: &Env, _: &EnvState, _: &Observation, _: &[Pose2]) -> bool {
        false
    }

    fn action(&mut self, env: &Env, state: &EnvState, _obs: &Observation) -> Action {
        env.oracle_action(state)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeployParams {
    pub label: DeployLabel,
    pub beta: Option<f64>,
    pub sigma: f64,
    pub switch_chunk: u64,
    pub prohibition: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub id: u32,
    pub partition: Partition,
    pub env_seed: u64,
}

pub struct Agents<'a> {
    pub human: &'a mut dyn HumanExpert,
    pub assistant: Option<&'a mut AssistantExpert>,
    pub novice: Option<&'a mut NovicePolicy>,
}

/// Run one episode of the data-collection procedure.
pub fn deploy_episode(
    env: &mut Env,
    agents: &mut Agents<'_>,
    params: &DeployParams,
    spec: EpisodeSpec,
) -> Result<Episode, GatingError> {
    let label = params.label;
    match label {
        DeployLabel::OneDemo => {}
        DeployLabel::RestDemo if agents.assistant.is_none() => {
            return Err(GatingError::MissingPolicy {
                label: label.as_str(),
                policy: "assistant",
            })
        }
        DeployLabel::RestDemo => {}
        DeployLabel::Correction => {
            if agents.novice.is_none() {
                return Err(GatingError::MissingPolicy {
                    label: label.as_str(),
                    policy: "novice",
                });
            }
            if params.beta.is_some() && agents.assistant.is_none() {
                return Err(GatingError::MissingPolicy {
                    label: label.as_str(),
                    policy: "assistant",
                });
            }
        }
    }
    let seed = spec.env_seed;
    let (mut s, mut o) = env.reset(seed);
    let mut gate_rng = rng::stream(seed, Stream::Gate);
    let mut explore = rng::stream(seed, Stream::Exploration);
    let use_assistant = label != DeployLabel::OneDemo;
    if use_assistant {
        if let Some(a) = agents.assistant.as_deref_mut() {
            a.begin_episode(&o, seed)?;
        }
    }
    if let Some(n) = agents.novice.as_deref_mut() {
        n.reset(seed);
    }
    agents.human.begin_episode(env, &s);
    let nominal = if agents.assistant.is_none() && label != DeployLabel::OneDemo {
        env.nominal_path(&s)
    } else {
        Vec::new()
    };
    let beta = if label == DeployLabel::Correction { params.beta } else { None };
    let mut gate = GateState::new(params.switch_chunk, beta);
    let mut steps = Vec::new();
    let mut exhausted = false;
    while !env.is_done(&s) {
        gate.update_x(&mut gate_rng);
        let reference = match agents.assistant.as_deref() {
            Some(a) if use_assistant => a.reference_poses(),
            _ => nominal.clone(),
        };
        // The human is asked every step; in ONE_DEMO they are in control
        // whatever they answer.
        let asked = agents.human.wants_control(env, &s, &o, &reference);
        let h = label == DeployLabel::OneDemo || asked;
        let g = gate.assistant_gate(o.region, params.prohibition);
        let source = select_source(label, h, g);
        if let Some(n) = agents.novice.as_deref_mut() {
            n.observe(&o);
        }
        let action = match source {
            SourceLabel::Human => agents.human.action(env, &s, &o).with_source(SourceLabel::Human),
            SourceLabel::Assistant => {
                let a = agents.assistant.as_deref_mut().expect("checked above");
                match a.next_action(&o) {
                    Ok(a) => a,
                    Err(AssistantError::TrajectoryExhausted) => {
                        exhausted = true;
                        break;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            SourceLabel::Novice => {
                let n = agents.novice.as_deref_mut().expect("checked above");
                perturb_novice(n.next_action(), params.sigma, &mut explore)
            }
        };
        if source != SourceLabel::Novice {
            if let Some(n) = agents.novice.as_deref_mut() {
                n.interrupt();
            }
        }
        let record = StepRecord {
            k: gate.k,
            j: gate.j,
            x: gate.x,
            h,
            g,
            region: o.region,
            state: s,
            obs: o,
            action,
            weight: weight_for(action.source),
        };
        let r = env.step(&s, &action);
        agents.human.after_step(&record, &r.state);
        steps.push(record);
        gate.advance(label, h);
        s = r.state;
        o = r.obs;
    }
    if let Some(a) = agents.assistant.as_deref_mut() {
        a.end_episode();
    }
    Ok(Episode {
        id: spec.id,
        partition: spec.partition,
        label,
        env_seed: seed,
        beta,
        steps,
        success: s.success,
        final_state: s,
        exhausted,
    })
}

/// Run `specs` in order.
pub fn deploy(
    env: &mut Env,
    agents: &mut Agents<'_>,
    params: &DeployParams,
    specs: &[EpisodeSpec],
) -> Result<Vec<Episode>, GatingError> {
    specs.iter().map(|&spec| deploy_episode(env, agents, params, spec)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RoundConfig {
    /// Online rounds `M`.
    pub rounds: u32,
    /// Offline demonstrations `N_0`.
    pub offline_demos: u32,
    /// Demonstrations per online round `N_i`.
    pub demos_per_round: u32,
    pub beta: f64,
    pub sigma: f64,
    /// Switch chunk `H`.
    pub switch_chunk: u64,
    pub seed: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            rounds: 4,
            offline_demos: 10,
            demos_per_round: 5,
            beta: 0.5,
            sigma: 0.3,
            switch_chunk: 8,
            seed: 0,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<(), GatingError> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(GatingError::InvalidConfig(alloc::format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.offline_demos < 1 {
            return Err(GatingError::InvalidConfig("at least one offline demonstration is required".into()));
        }
        if self.switch_chunk < 1 {
            return Err(GatingError::InvalidConfig("switch chunk H must be at least 1".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(GatingError::InvalidConfig(alloc::format!("sigma must be non-negative, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Switches for the ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Ablation {
    /// Off means `H = 1`.
    pub chunk_switching: bool,
    /// Off means `σ = 0`.
    pub noise: bool,
    /// Off lets the novice act in bottlenecks.
    pub prohibition: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            chunk_switching: true,
            noise: true,
            prohibition: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct IilConfig {
    pub round: RoundConfig,
    pub ablation: Ablation,
    pub novice: NoviceConfig,
    pub train: TrainConfig,
    /// Defaults to [`AssistantConfig::for_env`].
    pub assistant: Option<AssistantConfig>,
    pub human_hysteresis: Option<u32>,
}

impl IilConfig {
    pub fn switch_chunk(&self) -> u64 {
        if self.ablation.chunk_switching {
            self.round.switch_chunk
        } else {
            1
        }
    }

    pub fn sigma(&self) -> f64 {
        if self.ablation.noise {
            self.round.sigma
        } else {
            0.0
        }
    }
}

/// Per-episode seed for collection episode `id`.
pub fn episode_seed(seed: u64, id: u32) -> u64 {
    derive_seed(seed, 1 + u64::from(id))
}

/// Seed of evaluation episode `e`; disjoint from collection seeds and shared
/// by every checkpoint of a run.
pub fn eval_seed(seed: u64, e: u32) -> u64 {
    derive_seed(seed, (1 << 40) + u64::from(e))
}

fn train_seed(seed: u64, round: u32) -> u64 {
    derive_seed(seed, (2 << 40) + u64::from(round))
}

/// Everything a run produced that later stages need.
#[derive(Clone, Debug)]
pub struct IilOutcome {
    /// Novice after offline training, then after each online round.
    pub checkpoints: Vec<EpsNet>,
    pub dataset: WeightedDataset,
    pub train_reports: Vec<TrainReport>,
    pub demonstration: Option<Demonstration>,
}

impl IilOutcome {
    pub fn final_policy(&self) -> &EpsNet {
        self.checkpoints.last().expect("at least the offline checkpoint")
    }
}

/// Hooks for callers that want to see data as it is produced.
pub trait RunObserver {
    fn episode(&mut self, _episode: &Episode) {}
    fn checkpoint(&mut self, _round: u32, _net: &EpsNet, _report: &TrainReport) {}
}

impl RunObserver for () {}

/// Train the checkpoint for `round` on everything collected so far,
/// warm-starting from `prev` when configured.
pub fn train_checkpoint(
    cfg: &IilConfig,
    dataset: &WeightedDataset,
    prev: Option<&EpsNet>,
    round: u32,
) -> Result<(EpsNet, TrainReport), NoviceError> {
    let samples = novice::filter_samples(dataset, cfg.novice.h_pred, cfg.novice.h_obs);
    let seed = train_seed(cfg.round.seed, round);
    let mut tc = cfg.train.clone();
    let init = match prev {
        Some(p) if tc.warm_start => {
            tc.epochs = tc.warm_epochs.unwrap_or(tc.epochs);
            p.clone()
        }
        _ => EpsNet::init(cfg.novice.dims(), &mut rng::stream(seed, Stream::Init)),
    };
    novice::train(&samples, init, &cfg.novice.schedule(), &tc, seed)
}

/// Train the offline checkpoint, then for each round collect with
/// `collect_round` and retrain.
fn run_rounds(
    cfg: &IilConfig,
    env: &mut Env,
    mut dataset: WeightedDataset,
    human: &mut dyn HumanExpert,
    mut assistant: Option<&mut AssistantExpert>,
    observer: &mut dyn RunObserver,
    mut next_id: u32,
) -> Result<(Vec<EpsNet>, WeightedDataset, Vec<TrainReport>), GatingError> {
    let (net, report) = train_checkpoint(cfg, &dataset, None, 0)?;
    observer.checkpoint(0, &net, &report);
    let mut checkpoints = alloc::vec![net];
    let mut reports = alloc::vec![report];
    for i in 1..=cfg.round.rounds {
        let prev = checkpoints.last().expect("non-empty").clone();
        let mut pol = NovicePolicy::new(prev, cfg.novice.clone())?;
        let params = DeployParams {
            label: DeployLabel::Correction,
            beta: assistant.as_ref().map(|_| beta_schedule(cfg.round.beta, i)),
            sigma: cfg.sigma(),
            switch_chunk: cfg.switch_chunk(),
            prohibition: cfg.ablation.prohibition,
        };
        let mut agents = Agents {
            human: &mut *human,
            assistant: assistant.as_deref_mut(),
            novice: Some(&mut pol),
        };
        for _ in 0..cfg.round.demos_per_round {
            let spec = EpisodeSpec {
                id: next_id,
                partition: Partition::Correction(i),
                env_seed: episode_seed(cfg.round.seed, next_id),
            };
            next_id += 1;
            let ep = deploy_episode(env, &mut agents, &params, spec)?;
            observer.episode(&ep);
            dataset.extend([ep]);
        }
        let (net, report) = train_checkpoint(cfg, &dataset, checkpoints.last(), i)?;
        observer.checkpoint(i, &net, &report);
        checkpoints.push(net);
        reports.push(report);
    }
    Ok((checkpoints, dataset, reports))
}

/// One human demo, activate the assistant, assistant-led offline demos,
/// train, then `M` rounds of gated corrections with warm-started retraining.
pub fn run_easy_iil(
    cfg: &IilConfig,
    env: &mut Env,
    human: &mut dyn HumanExpert,
    observer: &mut dyn RunObserver,
) -> Result<IilOutcome, GatingError> {
    cfg.round.validate()?;
    let seed = cfg.round.seed;
    let mut dataset = WeightedDataset::new();
    let one = {
        let mut agents = Agents {
            human: &mut *human,
            assistant: None,
            novice: None,
        };
        let params = DeployParams {
            label: DeployLabel::OneDemo,
            beta: None,
            sigma: 0.0,
            switch_chunk: cfg.switch_chunk(),
            prohibition: cfg.ablation.prohibition,
        };
        let spec = EpisodeSpec {
            id: 0,
            partition: Partition::One,
            env_seed: episode_seed(seed, 0),
        };
        deploy_episode(env, &mut agents, &params, spec)?
    };
    observer.episode(&one);
    let demo = Demonstration::from_episode(&one, env)?;
    dataset.extend([one]);
    let acfg = cfg.assistant.unwrap_or_else(|| AssistantConfig::for_env(env.config()));
    let mut assistant = AssistantExpert::activate(demo.clone(), acfg)?;
    let params = DeployParams {
        label: DeployLabel::RestDemo,
        beta: None,
        sigma: 0.0,
        switch_chunk: cfg.switch_chunk(),
        prohibition: cfg.ablation.prohibition,
    };
    {
        let mut agents = Agents {
            human: &mut *human,
            assistant: Some(&mut assistant),
            novice: None,
        };
        for id in 1..cfg.round.offline_demos {
            let spec = EpisodeSpec {
                id,
                partition: Partition::Rest,
                env_seed: episode_seed(seed, id),
            };
            let ep = deploy_episode(env, &mut agents, &params, spec)?;
            observer.episode(&ep);
            dataset.extend([ep]);
        }
    }
    let (checkpoints, dataset, train_reports) = run_rounds(
        cfg,
        env,
        dataset,
        human,
        Some(&mut assistant),
        observer,
        cfg.round.offline_demos,
    )?;
    Ok(IilOutcome {
        checkpoints,
        dataset,
        train_reports,
        demonstration: Some(demo),
    })
}

/// The baseline: every offline demo by the human, then novice rollouts the
/// human corrects on near-failure, with no assistant.
pub fn run_standard_iil(
    cfg: &IilConfig,
    env: &mut Env,
    human: &mut dyn HumanExpert,
    observer: &mut dyn RunObserver,
) -> Result<IilOutcome, GatingError> {
    cfg.round.validate()?;
    let seed = cfg.round.seed;
    let mut dataset = WeightedDataset::new();
    {
        let mut agents = Agents {
            human: &mut *human,
            assistant: None,
            novice: None,
        };
        let params = DeployParams {
            label: DeployLabel::OneDemo,
            beta: None,
            sigma: 0.0,
            switch_chunk: cfg.switch_chunk(),
            prohibition: cfg.ablation.prohibition,
        };
        for id in 0..cfg.round.offline_demos {
            let spec = EpisodeSpec {
                id,
                partition: if id == 0 { Partition::One } else { Partition::Rest },
                env_seed: episode_seed(seed, id),
            };
            let ep = deploy_episode(env, &mut agents, &params, spec)?;
            observer.episode(&ep);
            dataset.extend([ep]);
        }
    }
    let (checkpoints, dataset, train_reports) =
        run_rounds(cfg, env, dataset, human, None, observer, cfg.round.offline_demos)?;
    Ok(IilOutcome {
        checkpoints,
        dataset,
        train_reports,
        demonstration: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalResult {
    pub episodes: u32,
    pub successes: u32,
    pub success_flags: Vec<bool>,
}

impl EvalResult {
    pub fn success_rate(&self) -> f64 {
        100.0 * f64::from(self.successes) / f64::from(self.episodes.max(1))
    }
}

/// Novice-only rollout, no noise and no takeover.
pub fn rollout_novice(env: &mut Env, policy: &mut NovicePolicy, env_seed: u64) -> bool {
    let (mut s, mut o) = env.reset(env_seed);
    policy.reset(env_seed);
    while !env.is_done(&s) {
        let a = policy.act(&o);
        let r = env.step(&s, &a);
        s = r.state;
        o = r.obs;
    }
    s.success
}

pub fn evaluate_policy(
    env: &mut Env,
    net: &EpsNet,
    novice_cfg: &NoviceConfig,
    seeds: &[u64],
) -> Result<EvalResult, GatingError> {
    let mut policy = NovicePolicy::new(net.clone(), novice_cfg.clone())?;
    let flags: Vec<bool> = seeds.iter().map(|&s| rollout_novice(env, &mut policy, s)).collect();
    Ok(EvalResult {
        episodes: flags.len() as u32,
        successes: flags.iter().filter(|&&f| f).count() as u32,
        success_flags: flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;

    #[test]
    fn beta_powers() {
        assert_eq!(beta_schedule(0.5, 1), 0.5);
        assert_eq!(beta_schedule(0.5, 2), 0.25);
        assert!((beta_schedule(0.9, 4) - 0.6561).abs() < 1e-15);
    }

    #[test]
    fn x_held_within_chunk() {
        let mut r = rng::stream(0, Stream::Gate);
        let mut g = GateState::new(8, Some(0.5));
        assert!(g.update_x(&mut r));
        let first = g.x;
        for j in 1..8 {
            g.j = j;
            assert!(!g.update_x(&mut r));
            assert_eq!(g.x, first);
        }
        g.j = 8;
        assert!(g.update_x(&mut r));
        assert_ne!(g.x, first);
    }

    #[test]
    fn gate_truth_table() {
        use RegionLabel::*;
        assert!(assistant_gate(0.2, 0.25, Free, true));
        assert!(assistant_gate(0.9, 0.25, Bottleneck, true));
        assert!(!assistant_gate(0.9, 0.25, Free, true));
        assert!(!assistant_gate(0.9, 0.25, Bottleneck, false));
    }

    #[test]
    fn human_gate_rules() {
        let mut env = Env::new(EnvConfig::default());
        let (mut s, _) = env.reset(0);
        assert!(!human_gate(&env, &s, &[], None));
        assert!(human_gate(&env, &s, &[], Some(true)));
        s.ee = Pose2::new(0.999, 0.5, 0.0);
        s.last_motion = crate::geometry::Point2::new(0.01, 0.0);
        assert!(human_gate(&env, &s, &[], None));
        assert!(!human_gate(&env, &s, &[], Some(false)));
    }

    #[test]
    fn source_selection() {
        use DeployLabel::*;
        use SourceLabel::*;
        assert_eq!(select_source(Correction, true, Some(true)), Human);
        assert_eq!(select_source(RestDemo, false, None), Assistant);
        assert_eq!(select_source(Correction, false, Some(false)), Novice);
        assert_eq!(select_source(OneDemo, false, None), Human);
    }

    #[test]
    fn perturbation_statistics() {
        let a = Action::new(0.1, -0.2, 0.0, 0.3, SourceLabel::Novice);
        let mut r = rng::stream(0, Stream::Exploration);
        assert_eq!(perturb_novice(a, 0.0, &mut r), a);
        // Centered actions keep clamping negligible at σ = 0.3.
        let z = Action::zero(SourceLabel::Novice);
        let n = 10_000;
        let mut sq = 0.0;
        for _ in 0..n {
            let p = perturb_novice(z, 0.3, &mut r);
            assert_eq!(p.source, SourceLabel::Novice);
            sq += p.dx * p.dx;
        }
        let sd = (sq / n as f64).sqrt();
        assert!((sd - 0.3).abs() <= 0.05 * 0.3, "{sd}");
    }

    #[test]
    fn config_validation() {
        let mut c = RoundConfig::default();
        assert!(c.validate().is_ok());
        c.beta = 1.0;
        assert!(c.validate().is_err());
        c.beta = 0.5;
        c.offline_demos = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn missing_policies_rejected() {
        let mut env = Env::new(EnvConfig::default());
        let mut human = ScriptedHuman::default();
        let mut agents = Agents {
            human: &mut human,
            assistant: None,
            novice: None,
        };
        let spec = EpisodeSpec {
            id: 0,
            partition: Partition::Rest,
            env_seed: 0,
        };
        let params = DeployParams {
            label: DeployLabel::RestDemo,
            beta: None,
            sigma: 0.0,
            switch_chunk: 8,
            prohibition: true,
        };
        assert!(matches!(
            deploy_episode(&mut env, &mut agents, &params, spec),
            Err(GatingError::MissingPolicy { policy: "assistant", .. })
        ));
    }
}
