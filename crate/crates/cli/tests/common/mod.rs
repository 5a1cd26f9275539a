#![allow(dead_code)]

use easy_iil::ExperimentConfig;

/// A run small enough for a unit-speed test: two offline demos, one
/// round of two corrections, a handful of epochs.
pub fn tiny() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.offline_demos = 2;
    c.rounds = 1;
    c.demos_per_round = 2;
    c.eval_episodes = 2;
    c.seeds = vec![0];
    c.train.epochs = 2;
    c
}

/// The shipped tuned config.
pub fn desk() -> ExperimentConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.json");
    ExperimentConfig::load(std::path::Path::new(path)).expect("configs/desk.json")
}
