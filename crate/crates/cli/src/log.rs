//! JSONL episode logs. Line 1 is a header with the schema version, the
//! config and its hash; after that each episode is a start line, one line
//! per executed step and an end line. Checkpoint lines record training.

use std::io::{BufRead, Write};

use easy_iil_core::dataset::{weight_for, DeployLabel, Episode, Partition, StepRecord};
use easy_iil_core::env::EnvState;
use easy_iil_core::gating::RunObserver;
use easy_iil_core::novice::{EpsNet, TrainReport};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Method};
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u64 = 1;

/// What produced the log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionKind {
    /// A full run of one method.
    Run { method: Method },
    /// Standalone collection episodes of one label.
    Collect { label: DeployLabel, round: u32, first_id: u32, episodes: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema_version: u64,
    pub config_hash: String,
    pub seed: u64,
    pub session: SessionKind,
    pub config: ExperimentConfig,
}

impl Header {
    pub fn new(config: &ExperimentConfig, seed: u64, session: SessionKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: config.hash(),
            seed,
            session,
            config: config.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStart {
    pub episode: u32,
    pub partition: Partition,
    pub label: DeployLabel,
    pub env_seed: u64,
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLine {
    pub episode: u32,
    #[serde(flatten)]
    pub record: StepRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub episode: u32,
    pub steps: usize,
    pub success: bool,
    pub exhausted: bool,
    pub final_state: EnvState,
    /// Steps driven by a live operator rather than the scripted human.
    pub ui_steps: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLine {
    pub round: u32,
    pub samples: usize,
    pub final_loss: Option<f64>,
    pub params_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Header(Header),
    EpisodeStart(EpisodeStart),
    Step(StepLine),
    EpisodeEnd(EpisodeEnd),
    Checkpoint(CheckpointLine),
}

pub fn params_digest(net: &EpsNet) -> String {
    let mut h = Sha256::new();
    for p in &net.params {
        h.update(p.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Streams episodes as they finish. As a [`RunObserver`] it cannot return
/// errors, so the first one is kept for [`LogWriter::finish`].
pub struct LogWriter<W: Write> {
    out: W,
    error: Option<CliError>,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W, header: &Header) -> Result<Self> {
        write_line(&mut out, &LogLine::Header(header.clone()))?;
        Ok(Self { out, error: None })
    }

    pub fn write_episode(&mut self, ep: &Episode, ui_steps: Vec<u64>) -> Result<()> {
        for s in &ep.steps {
            if s.weight != weight_for(s.action.source) {
                return Err(CliError::WeightRule {
                    episode: ep.id,
                    k: s.k,
                    weight: s.weight,
                });
            }
        }
        let start = EpisodeStart {
            episode: ep.id,
            partition: ep.partition,
            label: ep.label,
            env_seed: ep.env_seed,
            beta: ep.beta,
        };
        write_line(&mut self.out, &LogLine::EpisodeStart(start))?;
        for s in &ep.steps {
            let line = StepLine {
                episode: ep.id,
                record: s.clone(),
            };
            write_line(&mut self.out, &LogLine::Step(line))?;
        }
        let end = EpisodeEnd {
            episode: ep.id,
            steps: ep.steps.len(),
            success: ep.success,
            exhausted: ep.exhausted,
            final_state: ep.final_state,
            ui_steps,
        };
        write_line(&mut self.out, &LogLine::EpisodeEnd(end))
    }

    pub fn write_checkpoint(&mut self, round: u32, net: &EpsNet, report: &TrainReport) -> Result<()> {
        let line = CheckpointLine {
            round,
            samples: report.samples,
            final_loss: report.epoch_loss.last().copied(),
            params_sha256: params_digest(net),
        };
        write_line(&mut self.out, &LogLine::Checkpoint(line))
    }

    pub fn finish(mut self) -> Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }

    fn keep(&mut self, r: Result<()>) {
        if let (Err(e), None) = (r, &self.error) {
            self.error = Some(e);
        }
    }
}

impl<W: Write> RunObserver for LogWriter<W> {
    fn episode(&mut self, episode: &Episode) {
        if self.error.is_none() {
            let r = self.write_episode(episode, Vec::new());
            self.keep(r);
        }
    }

    fn checkpoint(&mut self, round: u32, net: &EpsNet, report: &TrainReport) {
        if self.error.is_none() {
            let r = self.write_checkpoint(round, net, report);
            self.keep(r);
        }
    }
}

fn write_line<W: Write>(out: &mut W, line: &LogLine) -> Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// An episode read back from a log.
#[derive(Clone, Debug, PartialEq)]
pub struct LoggedEpisode {
    pub start: EpisodeStart,
    pub steps: Vec<StepRecord>,
    pub end: EpisodeEnd,
}

impl LoggedEpisode {
    pub fn to_episode(&self) -> Episode {
        Episode {
            id: self.start.episode,
            partition: self.start.partition,
            label: self.start.label,
            env_seed: self.start.env_seed,
            beta: self.start.beta,
            steps: self.steps.clone(),
            final_state: self.end.final_state,
            success: self.end.success,
            exhausted: self.end.exhausted,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedLog {
    pub header: Header,
    pub episodes: Vec<LoggedEpisode>,
    pub checkpoints: Vec<CheckpointLine>,
}

impl ParsedLog {
    pub fn episodes(&self) -> Vec<Episode> {
        self.episodes.iter().map(LoggedEpisode::to_episode).collect()
    }
}

/// Parse a whole log, checking the schema version before anything else.
pub fn read_log<R: BufRead>(input: R) -> Result<ParsedLog> {
    let mut lines = input.lines().enumerate();
    let malformed = |line: usize, reason: String| CliError::MalformedLog { line: line + 1, reason };
    let (_, first) = lines.next().ok_or_else(|| malformed(0, "empty log".into()))?;
    let first = first?;
    let raw: serde_json::Value = serde_json::from_str(&first).map_err(|e| malformed(0, e.to_string()))?;
    let found = raw
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| malformed(0, "header lacks schema_version".into()))?;
    if found != SCHEMA_VERSION {
        return Err(CliError::SchemaVersionMismatch {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    let header = match serde_json::from_value(raw).map_err(|e| malformed(0, e.to_string()))? {
        LogLine::Header(h) => h,
        _ => return Err(malformed(0, "first line is not a header".into())),
    };
    let mut episodes = Vec::new();
    let mut checkpoints = Vec::new();
    let mut open: Option<(EpisodeStart, Vec<StepRecord>)> = None;
    let mut last = 0;
    for (n, line) in lines {
        last = n;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line).map_err(|e| malformed(n, e.to_string()))? {
            LogLine::Header(_) => return Err(malformed(n, "second header".into())),
            LogLine::EpisodeStart(s) => {
                if open.is_some() {
                    return Err(malformed(n, "episode started inside another".into()));
                }
                open = Some((s, Vec::new()));
            }
            LogLine::Step(s) => match &mut open {
                Some((start, steps)) if start.episode == s.episode => steps.push(s.record),
                _ => return Err(malformed(n, format!("step outside episode {}", s.episode))),
            },
            LogLine::EpisodeEnd(end) => match open.take() {
                Some((start, steps)) if start.episode == end.episode && steps.len() == end.steps => {
                    episodes.push(LoggedEpisode { start, steps, end });
                }
                _ => return Err(malformed(n, format!("unmatched end of episode {}", end.episode))),
            },
            LogLine::Checkpoint(c) => checkpoints.push(c),
        }
    }
    if let Some((s, _)) = open {
        return Err(malformed(last, format!("episode {} never ended", s.episode)));
    }
    Ok(ParsedLog {
        header,
        episodes,
        checkpoints,
    })
}

pub fn read_log_file(path: &std::path::Path) -> Result<ParsedLog> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_log(std::io::BufReader::new(f))
}
