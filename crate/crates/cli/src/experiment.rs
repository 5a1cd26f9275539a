//! Full runs per seed: collect, train, evaluate every checkpoint, and
//! summarize intervention and success metrics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use easy_iil_core::dataset::SourceCounts;
use easy_iil_core::env::Env;
use easy_iil_core::gating::{eval_seed, evaluate_policy, run_easy_iil, run_standard_iil, IilOutcome, ScriptedHuman};
use easy_iil_core::metrics::{mean_std, MeanStd, PhaseFilter, RunLog};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, Method};
use crate::error::{CliError, Result};
use crate::log::{Header, LogWriter, SessionKind, SCHEMA_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub offline: SourceCounts,
    pub online: SourceCounts,
    pub total: SourceCounts,
}

/// Percentages; `None` where the phase executed no actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionRates {
    pub offline: Option<f64>,
    pub online: Option<f64>,
    pub total: Option<f64>,
    /// Online rounds `1..=M`.
    pub rounds: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub round: u32,
    pub samples: usize,
    pub steps: usize,
    pub final_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub log: Option<String>,
    pub counts: PhaseCounts,
    pub intervention: InterventionRates,
    /// Success rate of each checkpoint, round 0 first.
    pub success: Vec<f64>,
    pub final_success: f64,
    pub best_success: f64,
    pub best_round: u32,
    pub train: Vec<TrainSummary>,
    pub collection_episodes: usize,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub offline_rate: Option<MeanStd>,
    pub online_rate: Option<MeanStd>,
    pub total_rate: Option<MeanStd>,
    pub final_success: MeanStd,
    pub best_success: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u64,
    pub config_hash: String,
    pub method: Method,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedReport>,
    pub summary: Summary,
}

fn rate(log: &RunLog, scope: PhaseFilter) -> Option<f64> {
    log.intervention_rate(scope).ok()
}

pub fn summarize_outcome(cfg: &ExperimentConfig, seed: u64, outcome: &IilOutcome, elapsed_s: f64) -> Result<SeedReport> {
    let log = RunLog::from_episodes(outcome.dataset.episodes());
    let mut env = Env::new(cfg.env.clone());
    let seeds: Vec<u64> = (0..cfg.eval_episodes).map(|e| eval_seed(seed, e)).collect();
    let mut success = Vec::with_capacity(outcome.checkpoints.len());
    for net in &outcome.checkpoints {
        success.push(evaluate_policy(&mut env, net, &cfg.novice, &seeds)?.success_rate());
    }
    let final_success = *success.last().expect("offline checkpoint");
    // Ties go to the earliest checkpoint.
    let (best_round, best_success) = success
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    Ok(SeedReport {
        seed,
        log: None,
        counts: PhaseCounts {
            offline: log.counts(PhaseFilter::Offline),
            online: log.counts(PhaseFilter::Online),
            total: log.counts(PhaseFilter::All),
        },
        intervention: InterventionRates {
            offline: rate(&log, PhaseFilter::Offline),
            online: rate(&log, PhaseFilter::Online),
            total: rate(&log, PhaseFilter::All),
            rounds: (1..=cfg.rounds).map(|i| rate(&log, PhaseFilter::Round(i))).collect(),
        },
        success,
        final_success,
        best_success,
        best_round: best_round as u32,
        train: outcome
            .train_reports
            .iter()
            .enumerate()
            .map(|(i, r)| TrainSummary {
                round: i as u32,
                samples: r.samples,
                steps: r.steps,
                final_loss: r.epoch_loss.last().copied(),
            })
            .collect(),
        collection_episodes: outcome.dataset.len(),
        elapsed_s,
    })
}

/// One seed of the configured method, logging to `out`.
pub fn run_seed<W: Write>(cfg: &ExperimentConfig, seed: u64, out: W) -> Result<(SeedReport, IilOutcome, W)> {
    let t = Instant::now();
    let header = Header::new(cfg, seed, SessionKind::Run { method: cfg.method });
    let mut writer = LogWriter::new(out, &header)?;
    let mut env = Env::new(cfg.env.clone());
    let mut human = ScriptedHuman::new(cfg.human_hysteresis);
    let iil = cfg.iil(seed);
    let outcome = match cfg.method {
        Method::EasyIil => run_easy_iil(&iil, &mut env, &mut human, &mut writer)?,
        Method::StandardIil => run_standard_iil(&iil, &mut env, &mut human, &mut writer)?,
    };
    let out = writer.finish()?;
    let report = summarize_outcome(cfg, seed, &outcome, t.elapsed().as_secs_f64())?;
    Ok((report, outcome, out))
}

fn summary(seeds: &[SeedReport]) -> Result<Summary> {
    let over = |f: &dyn Fn(&SeedReport) -> Option<f64>| {
        let v: Option<Vec<f64>> = seeds.iter().map(f).collect();
        v.and_then(|v| mean_std(&v).ok())
    };
    Ok(Summary {
        offline_rate: over(&|s| s.intervention.offline),
        online_rate: over(&|s| s.intervention.online),
        total_rate: over(&|s| s.intervention.total),
        final_success: mean_std(&seeds.iter().map(|s| s.final_success).collect::<Vec<_>>())?,
        best_success: mean_std(&seeds.iter().map(|s| s.best_success).collect::<Vec<_>>())?,
    })
}

pub fn log_name(method: Method, seed: u64) -> String {
    format!("{}_seed{seed}.jsonl", method.as_str())
}

fn checkpoint_name(method: Method, seed: u64, round: usize) -> String {
    format!("{}_seed{seed}_round{round}.ckpt.json", method.as_str())
}

/// Every configured seed, each on its own thread, writing logs and
/// checkpoints under `out_dir` and the report to `out_dir/report.json`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let results: Vec<Result<SeedReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| scope.spawn(move || run_seed_to_dir(cfg, seed, out_dir)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed thread panicked")).collect()
    });
    let seeds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        method: cfg.method,
        config: cfg.clone(),
        summary: summary(&seeds)?,
        seeds,
    };
    let path = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(report)
}

fn run_seed_to_dir(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<SeedReport> {
    let name = log_name(cfg.method, seed);
    let path: PathBuf = out_dir.join(&name);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let (mut report, outcome, _) = run_seed(cfg, seed, BufWriter::new(file))?;
    for (round, net) in outcome.checkpoints.iter().enumerate() {
        let ck = Checkpoint {
            schema_version: SCHEMA_VERSION,
            config_hash: cfg.hash(),
            seed,
            round: round as u32,
            novice: cfg.novice.clone(),
            net: net.clone(),
        };
        ck.save(&out_dir.join(checkpoint_name(cfg.method, seed, round)))?;
    }
    report.log = Some(name);
    Ok(report)
}
