use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use easy_iil::analyze::{analyze_ratings, log_rates, read_ratings, AnalysisReport};
use easy_iil::checkpoint::Checkpoint;
use easy_iil::collect::{demo_from_log, run_collect, CollectInputs, CollectSpec};
use easy_iil::config::ConfigArgs;
use easy_iil::error::{CliError, Result};
use easy_iil::experiment::run_experiment;
use easy_iil::log::read_log_file;
use easy_iil::replay::replay;
use easy_iil::session::{serve_session, SessionOptions, DEFAULT_TICK_HZ};
use easy_iil::train::{evaluate_checkpoint, train_from_logs};
use easy_iil_core::dataset::DeployLabel;
use easy_iil_core::env::Env;
use easy_iil_core::gating::ScriptedHuman;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "easy-iil", version, about = "Easy-IIL desk lab runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Label {
    OneDemo,
    RestDemo,
    Correction,
}

impl From<Label> for DeployLabel {
    fn from(l: Label) -> Self {
        match l {
            Label::OneDemo => DeployLabel::OneDemo,
            Label::RestDemo => DeployLabel::RestDemo,
            Label::Correction => DeployLabel::Correction,
        }
    }
}

#[derive(clap::Args)]
struct CollectArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum)]
    label: Label,
    /// Online round, for corrections.
    #[arg(long, default_value_t = 0)]
    round: u32,
    #[arg(long, default_value_t = 0)]
    first_id: u32,
    #[arg(long, default_value_t = 1)]
    episodes: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Log holding the ONE_DEMO episode that seeds the assistant.
    #[arg(long)]
    demo_log: Option<PathBuf>,
    /// Novice checkpoint rolled out during corrections.
    #[arg(long)]
    novice: Option<PathBuf>,
    /// JSONL log to write.
    #[arg(long)]
    out: PathBuf,
}

impl CollectArgs {
    fn parts(&self) -> Result<(easy_iil::ExperimentConfig, CollectSpec, CollectInputs)> {
        let cfg = self.config.resolve()?;
        let spec = CollectSpec {
            label: self.label.into(),
            round: self.round,
            first_id: self.first_id,
            episodes: self.episodes,
        };
        let demo = match &self.demo_log {
            Some(p) => Some(demo_from_log(&read_log_file(p)?, &Env::new(cfg.env.clone()))?),
            None => None,
        };
        let novice = match &self.novice {
            Some(p) => Some(Checkpoint::load(p)?.policy()?),
            None => None,
        };
        Ok((cfg, spec, CollectInputs { demo, novice }))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Full runs for every configured seed, with logs, checkpoints and a report.
    Experiment {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Collect a batch of episodes with the scripted human.
    Collect(CollectArgs),
    /// Train a novice checkpoint on collected logs.
    Train {
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        round: u32,
        /// Warm-start from this checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Success rate of a checkpoint on evaluation episodes.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seed whose evaluation scenes to use; the checkpoint's by default.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-simulate a log and report divergences; exits 1 on any.
    Replay {
        log: PathBuf,
    },
    /// Collect over a live WebSocket session.
    Serve {
        #[command(flatten)]
        collect: CollectArgs,
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
        /// Ticks per second; 0 runs unpaced.
        #[arg(long, default_value_t = DEFAULT_TICK_HZ)]
        tick_hz: f64,
        /// Hold the first episode until a client connects.
        #[arg(long)]
        wait_for_client: bool,
    },
    /// Burden statistics from a ratings CSV, plus intervention rates of logs.
    Analyze {
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long = "log")]
        logs: Vec<PathBuf>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| CliError::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    checkpoint: &'a Path,
    round: u32,
    samples: usize,
    steps: usize,
    final_loss: Option<f64>,
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Experiment { config, out } => {
            let cfg = config.resolve()?;
            let report = run_experiment(&cfg, &out)?;
            emit(&report.summary, None)?;
        }
        Command::Collect(args) => {
            let (cfg, spec, inputs) = args.parts()?;
            let mut human = ScriptedHuman::new(cfg.human_hysteresis);
            let seed = args.seed;
            let (_, mut w) = run_collect(&cfg, seed, &spec, inputs, &mut human, create(&args.out)?)?;
            w.flush()?;
        }
        Command::Train { logs, round, init, out } => {
            let parsed = logs.iter().map(|p| read_log_file(p)).collect::<Result<Vec<_>>>()?;
            let prev = init.as_deref().map(Checkpoint::load).transpose()?;
            let (ck, report) = train_from_logs(&parsed, round, prev.as_ref())?;
            ck.save(&out)?;
            emit(
                &TrainOutput {
                    checkpoint: &out,
                    round,
                    samples: report.samples,
                    steps: report.steps,
                    final_loss: report.epoch_loss.last().copied(),
                },
                None,
            )?;
        }
        Command::Eval { config, checkpoint, seed } => {
            let cfg = config.resolve()?;
            let ck = Checkpoint::load(&checkpoint)?;
            let seed = seed.unwrap_or(ck.seed);
            let result = evaluate_checkpoint(&cfg, &ck, seed, cfg.eval_episodes)?;
            #[derive(Serialize)]
            struct EvalOutput {
                seed: u64,
                success_rate: f64,
                #[serde(flatten)]
                result: easy_iil_core::gating::EvalResult,
            }
            let success_rate = result.success_rate();
            emit(&EvalOutput { seed, success_rate, result }, None)?;
        }
        Command::Replay { log } => {
            let report = replay(&read_log_file(&log)?);
            emit(&report, None)?;
            if !report.clean() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Serve {
            collect,
            addr,
            tick_hz,
            wait_for_client,
        } => {
            let (cfg, spec, inputs) = collect.parts()?;
            let listener = TcpListener::bind(&addr)?;
            eprintln!("serving on ws://{}", listener.local_addr()?);
            let opts = SessionOptions { tick_hz, wait_for_client };
            let (_, mut w) = serve_session(&cfg, collect.seed, &spec, inputs, listener, opts, create(&collect.out)?)?;
            w.flush()?;
        }
        Command::Analyze { ratings, logs, out } => {
            let (groups, comparisons) = match &ratings {
                Some(p) => {
                    let f = File::open(p).map_err(|e| CliError::io(p, e))?;
                    analyze_ratings(&read_ratings(BufReader::new(f))?)?
                }
                None => (Vec::new(), Vec::new()),
            };
            let logs = logs
                .iter()
                .map(|p| Ok(log_rates(&p.display().to_string(), &read_log_file(p)?)))
                .collect::<Result<Vec<_>>>()?;
            emit(&AnalysisReport { groups, comparisons, logs }, out.as_deref())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
