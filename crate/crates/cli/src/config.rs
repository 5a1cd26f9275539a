//! Experiment configuration: JSON files with flag overrides on top.

use std::path::Path;

use easy_iil_core::assistant::AssistantConfig;
use easy_iil_core::env::EnvConfig;
use easy_iil_core::gating::{Ablation, IilConfig, RoundConfig};
use easy_iil_core::novice::{NoviceConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EasyIil,
    StandardIil,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::EasyIil => "easy_iil",
            Method::StandardIil => "standard_iil",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    /// Online rounds `M`.
    pub rounds: u32,
    /// Offline demonstrations `N_0`.
    pub offline_demos: u32,
    /// Corrections per online round `N_i`.
    pub demos_per_round: u32,
    pub beta: f64,
    pub sigma: f64,
    /// Switch chunk `H`.
    pub switch_chunk: u64,
    pub ablation: Ablation,
    pub eval_episodes: u32,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub novice: NoviceConfig,
    pub env: EnvConfig,
    /// Derived from `env` when absent.
    pub assistant: Option<AssistantConfig>,
    pub human_hysteresis: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let r = RoundConfig::default();
        Self {
            method: Method::EasyIil,
            rounds: r.rounds,
            offline_demos: r.offline_demos,
            demos_per_round: r.demos_per_round,
            beta: r.beta,
            sigma: r.sigma,
            switch_chunk: r.switch_chunk,
            ablation: Ablation::default(),
            eval_episodes: 60,
            seeds: vec![0, 1, 2],
            train: TrainConfig::default(),
            novice: NoviceConfig::default(),
            env: EnvConfig::default(),
            assistant: None,
            human_hysteresis: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.switch_chunk < 1 {
            return Err(CliError::Config("switch_chunk must be at least 1".into()));
        }
        if self.eval_episodes < 1 {
            return Err(CliError::Config("eval_episodes must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        if self.train.batch_size < 1 {
            return Err(CliError::Config("batch_size must be at least 1".into()));
        }
        if self.novice.h_exec < 1 || self.novice.h_exec > self.novice.h_pred {
            return Err(CliError::Config("h_exec must lie in 1..=h_pred".into()));
        }
        self.round(0).validate()?;
        Ok(())
    }

    pub fn round(&self, seed: u64) -> RoundConfig {
        RoundConfig {
            rounds: self.rounds,
            offline_demos: self.offline_demos,
            demos_per_round: self.demos_per_round,
            beta: self.beta,
            sigma: self.sigma,
            switch_chunk: self.switch_chunk,
            seed,
        }
    }

    pub fn iil(&self, seed: u64) -> IilConfig {
        IilConfig {
            round: self.round(seed),
            ablation: self.ablation,
            novice: self.novice.clone(),
            train: self.train.clone(),
            assistant: self.assistant,
            human_hysteresis: Some(self.human_hysteresis),
        }
    }

    pub fn assistant_config(&self) -> AssistantConfig {
        self.assistant.unwrap_or_else(|| AssistantConfig::for_env(&self.env))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Command-line overrides; every flag left out keeps the file's value.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct ConfigArgs {
    /// JSON config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub rounds: Option<u32>,
    #[arg(long)]
    pub offline_demos: Option<u32>,
    #[arg(long)]
    pub demos_per_round: Option<u32>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub switch_chunk: Option<u64>,
    #[arg(long)]
    pub eval_episodes: Option<u32>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warm_epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub no_chunk_switching: bool,
    #[arg(long)]
    pub no_noise: bool,
    #[arg(long)]
    pub no_prohibition: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        fn set<T: Clone>(dst: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *dst = v.clone();
            }
        }
        set(&mut cfg.method, &self.method);
        set(&mut cfg.rounds, &self.rounds);
        set(&mut cfg.offline_demos, &self.offline_demos);
        set(&mut cfg.demos_per_round, &self.demos_per_round);
        set(&mut cfg.beta, &self.beta);
        set(&mut cfg.sigma, &self.sigma);
        set(&mut cfg.switch_chunk, &self.switch_chunk);
        set(&mut cfg.eval_episodes, &self.eval_episodes);
        set(&mut cfg.seeds, &self.seeds);
        set(&mut cfg.train.epochs, &self.epochs);
        set(&mut cfg.train.learning_rate, &self.learning_rate);
        if self.warm_epochs.is_some() {
            cfg.train.warm_epochs = self.warm_epochs;
        }
        if self.no_chunk_switching {
            cfg.ablation.chunk_switching = false;
        }
        if self.no_noise {
            cfg.ablation.noise = false;
        }
        if self.no_prohibition {
            cfg.ablation.prohibition = false;
        }
    }
}
