//! Offline training from collected logs, and checkpoint evaluation.

use easy_iil_core::dataset::WeightedDataset;
use easy_iil_core::env::Env;
use easy_iil_core::gating::{eval_seed, evaluate_policy, train_checkpoint, EvalResult};
use easy_iil_core::novice::TrainReport;

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::log::{ParsedLog, SCHEMA_VERSION};

/// Train on every episode of `logs`, which must share one config; the
/// first log's seed drives training. `prev` warm-starts the network.
pub fn train_from_logs(logs: &[ParsedLog], round: u32, prev: Option<&Checkpoint>) -> Result<(Checkpoint, TrainReport)> {
    let first = logs.first().ok_or_else(|| CliError::Config("training needs at least one log".into()))?;
    let hash = &first.header.config_hash;
    if let Some(l) = logs.iter().find(|l| &l.header.config_hash != hash) {
        return Err(CliError::Config(format!(
            "logs mix configs {hash} and {}",
            l.header.config_hash
        )));
    }
    let cfg = &first.header.config;
    let seed = first.header.seed;
    let dataset = WeightedDataset::from_episodes(logs.iter().flat_map(ParsedLog::episodes).collect());
    let (net, report) = train_checkpoint(&cfg.iil(seed), &dataset, prev.map(|c| &c.net), round)?;
    let ck = Checkpoint {
        schema_version: SCHEMA_VERSION,
        config_hash: hash.clone(),
        seed,
        round,
        novice: cfg.novice.clone(),
        net,
    };
    Ok((ck, report))
}

/// Roll the checkpoint out on the evaluation seeds of `seed`.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, ck: &Checkpoint, seed: u64, episodes: u32) -> Result<EvalResult> {
    let mut env = Env::new(cfg.env.clone());
    let seeds: Vec<u64> = (0..episodes).map(|e| eval_seed(seed, e)).collect();
    Ok(evaluate_policy(&mut env, &ck.net, &ck.novice, &seeds)?)
}
