use easy_iil_core::assistant::{AssistantConfig, AssistantExpert, Demonstration};
use easy_iil_core::dataset::{DeployLabel, Episode, Partition};
use easy_iil_core::env::{Env, EnvConfig, RegionLabel, SourceLabel};
use easy_iil_core::gating::*;
use easy_iil_core::metrics::{PhaseFilter, RunLog};
use easy_iil_core::novice::{EpsNet, NoviceConfig, NovicePolicy, TrainConfig};
use easy_iil_core::rng::{self, Stream};

fn setup() -> (Env, AssistantExpert) {
    let mut env = Env::new(EnvConfig::default());
    let mut human = ScriptedHuman::default();
    let mut agents = Agents {
        human: &mut human,
        assistant: None,
        novice: None,
    };
    let params = DeployParams {
        label: DeployLabel::OneDemo,
        beta: None,
        sigma: 0.0,
        switch_chunk: 8,
        prohibition: true,
    };
    let spec = EpisodeSpec {
        id: 0,
        partition: Partition::One,
        env_seed: episode_seed(0, 0),
    };
    let one = deploy_episode(&mut env, &mut agents, &params, spec).unwrap();
    let demo = Demonstration::from_episode(&one, &env).unwrap();
    let assistant = AssistantExpert::activate(demo, AssistantConfig::for_env(env.config())).unwrap();
    (env, assistant)
}

fn untrained_novice(seed: u64) -> NovicePolicy {
    let cfg = NoviceConfig::default();
    let net = EpsNet::init(cfg.dims(), &mut rng::stream(seed, Stream::Init));
    NovicePolicy::new(net, cfg).unwrap()
}

fn correction(beta: f64, prohibition: bool) -> DeployParams {
    DeployParams {
        label: DeployLabel::Correction,
        beta: Some(beta),
        sigma: 0.3,
        switch_chunk: 8,
        prohibition,
    }
}

fn specs(from: u32, n: u32) -> Vec<EpisodeSpec> {
    (from..from + n)
        .map(|id| EpisodeSpec {
            id,
            partition: Partition::Correction(1),
            env_seed: episode_seed(7, id),
        })
        .collect()
}

/// Run corrections with the scripted human until at least `min_steps`
/// steps are logged.
fn collect(beta: f64, min_steps: usize) -> Vec<Episode> {
    let (mut env, mut assistant) = setup();
    let mut novice = untrained_novice(3);
    let mut human = ScriptedHuman::default();
    let mut agents = Agents {
        human: &mut human,
        assistant: Some(&mut assistant),
        novice: Some(&mut novice),
    };
    let mut out = Vec::new();
    let mut steps = 0;
    let mut id = 1;
    while steps < min_steps {
        for ep in deploy(&mut env, &mut agents, &correction(beta, true), &specs(id, 10)).unwrap() {
            steps += ep.len();
            out.push(ep);
        }
        id += 10;
    }
    out
}

#[test]
fn x_follows_the_gate_stream_exactly() {
    let episodes = collect(0.5, 2000);
    let mut redraws = 0;
    for ep in &episodes {
        // Independent replay: draw whenever j sits on a chunk boundary.
        let mut r = rng::stream(ep.env_seed, Stream::Gate);
        let mut x = f64::NAN;
        for s in &ep.steps {
            if s.j % 8 == 0 {
                x = rng::uniform(&mut r);
                redraws += 1;
            }
            assert_eq!(s.x, x);
            assert!((0.0..1.0).contains(&s.x));
        }
        for w in ep.steps.windows(2) {
            if w[1].j % 8 != 0 {
                assert_eq!(w[0].x, w[1].x);
            } else if w[1].j != w[0].j {
                assert_ne!(w[0].x, w[1].x);
            }
        }
    }
    assert!(redraws > 100);
}

#[test]
fn priority_holds_on_every_step() {
    let episodes = collect(0.5, 10_000);
    let mut total = 0;
    let mut humans = 0;
    for ep in &episodes {
        let mut j = 0;
        for (k, s) in ep.steps.iter().enumerate() {
            let src = s.action.source;
            assert_eq!(s.k, k as u64);
            assert_eq!(s.j, j);
            assert!(s.j <= s.k);
            if s.h {
                assert_eq!(src, SourceLabel::Human);
                humans += 1;
            } else {
                j += 1;
            }
            if src == SourceLabel::Novice {
                assert!(!s.h);
                assert_eq!(s.g, Some(false));
                assert_eq!(s.region, RegionLabel::Free);
            }
            if s.region == RegionLabel::Bottleneck && !s.h {
                assert_eq!(src, SourceLabel::Assistant);
            }
            assert_eq!(s.weight == 0.0, src == SourceLabel::Novice);
            total += 1;
        }
    }
    assert!(total >= 10_000);
    assert!(humans > 0, "the scripted human never stepped in");
}

#[test]
fn assistant_share_tracks_beta_per_round() {
    for round in 1..=4 {
        let beta = beta_schedule(0.5, round);
        let (mut env, mut assistant) = setup();
        let mut novice = untrained_novice(u64::from(round));
        let mut human = ScriptedHuman::default();
        let mut agents = Agents {
            human: &mut human,
            assistant: Some(&mut assistant),
            novice: Some(&mut novice),
        };
        let (mut n, mut a) = (0usize, 0usize);
        let mut id = 1000 * round;
        while n < 2000 {
            for ep in deploy(&mut env, &mut agents, &correction(beta, true), &specs(id, 10)).unwrap() {
                for s in ep.steps.iter().filter(|s| !s.h && s.region == RegionLabel::Free) {
                    n += 1;
                    a += usize::from(s.action.source == SourceLabel::Assistant);
                }
            }
            id += 10;
        }
        let share = a as f64 / n as f64;
        assert!((share - beta).abs() <= 0.05, "round {round}: share {share} vs {beta} over {n}");
    }
}

#[test]
fn full_threshold_correction_matches_rest_demo() {
    let (mut env, mut assistant) = setup();
    let mut novice = untrained_novice(0);
    for spec in specs(1, 5) {
        let mut human = PassiveHuman;
        let mut agents = Agents {
            human: &mut human,
            assistant: Some(&mut assistant),
            novice: Some(&mut novice),
        };
        let corr = deploy_episode(&mut env, &mut agents, &correction(1.0, true), spec).unwrap();
        let rest_params = DeployParams {
            label: DeployLabel::RestDemo,
            beta: None,
            sigma: 0.3,
            switch_chunk: 8,
            prohibition: true,
        };
        let rest = deploy_episode(&mut env, &mut agents, &rest_params, spec).unwrap();
        assert_eq!(corr.len(), rest.len());
        for (c, r) in corr.steps.iter().zip(&rest.steps) {
            assert_eq!(c.action, r.action);
            assert_eq!(c.action.source, SourceLabel::Assistant);
        }
    }
}

#[test]
fn one_demo_is_all_human() {
    let mut env = Env::new(EnvConfig::default());
    let mut human = ScriptedHuman::default();
    let mut agents = Agents {
        human: &mut human,
        assistant: None,
        novice: None,
    };
    let params = DeployParams {
        label: DeployLabel::OneDemo,
        beta: None,
        sigma: 0.3,
        switch_chunk: 8,
        prohibition: true,
    };
    let ep = deploy_episode(&mut env, &mut agents, &params, specs(0, 1)[0]).unwrap();
    assert!(ep.success);
    assert!(ep.steps.iter().all(|s| s.action.source == SourceLabel::Human && s.weight == 1.0));
}

#[test]
fn rest_demo_with_silent_human_is_all_assistant() {
    let (mut env, mut assistant) = setup();
    let mut human = PassiveHuman;
    let mut agents = Agents {
        human: &mut human,
        assistant: Some(&mut assistant),
        novice: None,
    };
    let params = DeployParams {
        label: DeployLabel::RestDemo,
        beta: None,
        sigma: 0.0,
        switch_chunk: 8,
        prohibition: true,
    };
    for ep in deploy(&mut env, &mut agents, &params, &specs(1, 5)).unwrap() {
        assert!(!ep.is_empty());
        assert!(ep.steps.iter().all(|s| s.action.source == SourceLabel::Assistant && s.weight == 1.0));
    }
}

fn quick_cfg(rounds: u32) -> IilConfig {
    let mut cfg = IilConfig::default();
    cfg.round.rounds = rounds;
    cfg.train = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    cfg
}

#[test]
fn no_rounds_gives_offline_policy_only() {
    let mut env = Env::new(EnvConfig::default());
    let out = run_easy_iil(&quick_cfg(0), &mut env, &mut ScriptedHuman::default(), &mut ()).unwrap();
    assert_eq!(out.checkpoints.len(), 1);
    assert_eq!(out.dataset.len(), 10);
    assert!(out.dataset.episodes().iter().all(|e| e.partition.is_offline()));
}

#[test]
fn default_counts_and_partitions() {
    let mut env = Env::new(EnvConfig::default());
    let out = run_easy_iil(&quick_cfg(4), &mut env, &mut ScriptedHuman::default(), &mut ()).unwrap();
    let d = &out.dataset;
    assert_eq!(d.len(), 30);
    assert_eq!(out.checkpoints.len(), 5);
    assert_eq!(d.partition(Partition::One).count(), 1);
    assert_eq!(d.partition(Partition::Rest).count(), 9);
    for i in 1..=4 {
        assert_eq!(d.partition(Partition::Correction(i)).count(), 5);
        let b = beta_schedule(0.5, i);
        assert!(d.partition(Partition::Correction(i)).all(|e| e.beta == Some(b)));
    }
    assert!(d.weights_consistent());
    let ids: Vec<u32> = d.episodes().iter().map(|e| e.id).collect();
    assert_eq!(ids, (0..30).collect::<Vec<_>>());
}

#[test]
fn runs_are_deterministic() {
    let run = || {
        let mut env = Env::new(EnvConfig::default());
        run_easy_iil(&quick_cfg(2), &mut env, &mut ScriptedHuman::default(), &mut ()).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.checkpoints, b.checkpoints);
}

#[test]
fn standard_offline_is_all_human() {
    let mut env = Env::new(EnvConfig::default());
    let out = run_standard_iil(&quick_cfg(1), &mut env, &mut ScriptedHuman::default(), &mut ()).unwrap();
    let log = RunLog::from_episodes(out.dataset.episodes());
    assert_eq!(log.intervention_rate(PhaseFilter::Offline).unwrap(), 100.0);
    assert_eq!(out.dataset.len(), 15);
    let online = out.dataset.episodes().iter().filter(|e| !e.partition.is_offline());
    assert!(online.flat_map(|e| &e.steps).all(|s| s.action.source != SourceLabel::Assistant));
}
