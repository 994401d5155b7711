//! `signalgame`: generate suites, run simulated signalers, sweep lambda and
//! analyze records. Every command goes through the HTTP service; without
//! `--server` a private in-process instance is started on a loopback port.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use signalgame_client::{ClientError, ServiceClient};
use signalgame_core::gridworld::Condition;
use signalgame_core::sim_lab::cleaning::ParticipantRecord;
use signalgame_core::sim_lab::report::cells_csv;
use signalgame_core::sim_lab::{read_records, write_records, BatchConfig, CleaningConfig, DEFAULT_EPISODES};
use signalgame_core::trial_factory::TrialSuite;
use signalgame_protocol::{AnalyzeRequest, GenerateRequest, SimulateRequest, SweepRequest};
use signalgame_service::session::Catalog;
use signalgame_service::{spawn, AppState, ServiceConfig};

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("starting the in-process service: {0}")]
    Service(String),
}

fn file_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::File { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Parser)]
#[command(name = "signalgame", version, about = "Signaling-game lab tools")]
struct Cli {
    /// Service base URL; an in-process service is used when absent.
    #[arg(long, global = true, env = "SIGNALGAME_SERVER")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActorArg {
    Rsa,
    Joint,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long, default_value_t = DEFAULT_EPISODES)]
    episodes: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Play the most likely action instead of sampling.
    #[arg(long)]
    argmax: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scene pairs and write them as a suite directory.
    Generate {
        /// simple, difficult or control; all three when absent.
        #[arg(long)]
        condition: Option<Condition>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a simulated signaler over a suite.
    Simulate {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, value_enum, default_value = "rsa")]
        actor: ActorArg,
        #[arg(long, default_value_t = 4.0)]
        lambda: f64,
        #[command(flatten)]
        batch: BatchArgs,
        /// Directory for records.jsonl, cells.csv and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal-signal rates per cell for a range of lambda values.
    SweepLambda {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        min: f64,
        #[arg(long)]
        max: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[command(flatten)]
        batch: BatchArgs,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize trial records (JSONL) or participant exports (JSON array).
    Analyze {
        #[arg(long)]
        records: PathBuf,
        /// Suite the participants played; required for participant exports.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every scene and pair of a suite.
    Validate {
        #[arg(long)]
        suite: PathBuf,
    },
}

fn load_suite(path: &Path) -> Result<TrialSuite, CliError> {
    TrialSuite::load(path).map_err(|e| file_err(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| file_err(path, e))
}

fn batch_config(actor: ActorArg, lambda: f64, args: &BatchArgs) -> BatchConfig {
    let mut config = match actor {
        ActorArg::Rsa => BatchConfig::rsa(lambda, args.seed),
        ActorArg::Joint => BatchConfig::joint(args.seed),
    };
    config.episodes_per_scene = args.episodes;
    if args.argmax {
        config.policy = signalgame_core::sim_lab::PolicyMode::Argmax;
    }
    config
}

async fn connect(server: Option<String>) -> Result<ServiceClient, CliError> {
    if let Some(url) = server {
        return Ok(ServiceClient::new(url));
    }
    // lab operations carry their own suites, so the private instance needs no scenes
    let empty = || TrialSuite { pairs: Vec::new() };
    let config = ServiceConfig { practice_trials: 0, ..ServiceConfig::default() };
    let app = AppState::with_catalog(config, Catalog { suite: empty(), practice: empty() })
        .await
        .map_err(|e| CliError::Service(e.to_string()))?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| CliError::Service(e.to_string()))?;
    let addr = listener.local_addr().map_err(|e| CliError::Service(e.to_string()))?;
    spawn(Arc::new(app), listener);
    Ok(ServiceClient::new(format!("http://{addr}")))
}

async fn run(cli: Cli) -> Result<(), CliError> {
    let client = connect(cli.server).await?;
    match cli.command {
        Command::Generate { condition, seed, out } => {
            let suite = client.generate(&GenerateRequest { condition, seed }).await?;
            suite.write_dir(&out).map_err(|e| file_err(&out, e))?;
            println!("wrote {} pairs to {}", suite.pairs.len(), out.display());
        }
        Command::Simulate { suite, actor, lambda, batch, out } => {
            let suite = load_suite(&suite)?;
            let config = batch_config(actor, lambda, &batch);
            let resp = client.simulate(&SimulateRequest { suite, config }).await?;
            if let Some(dir) = out {
                write(&dir.join("records.jsonl"), &write_records(&resp.records))?;
                let csv = cells_csv(&resp.summary.cells).map_err(|e| file_err(&dir, e))?;
                write(&dir.join("cells.csv"), &csv)?;
                write(&dir.join("report.txt"), &resp.report)?;
            }
            print!("{}", resp.report);
        }
        Command::SweepLambda { suite, min, max, step, batch, out } => {
            let suite = load_suite(&suite)?;
            let config = batch_config(ActorArg::Rsa, min, &batch);
            let resp = client.sweep(&SweepRequest { suite, min, max, step, config }).await?;
            match out {
                Some(path) => write(&path, &resp.csv)?,
                None => print!("{}", resp.csv),
            }
        }
        Command::Analyze { records, suite, out } => {
            let text = fs::read_to_string(&records).map_err(|e| file_err(&records, e))?;
            let req = if text.trim_start().starts_with('[') {
                let participants: Vec<ParticipantRecord> =
                    serde_json::from_str(&text).map_err(|e| file_err(&records, e))?;
                let suite = suite
                    .ok_or_else(|| CliError::Usage("participant exports need --suite".into()))
                    .and_then(|p| load_suite(&p))?;
                AnalyzeRequest {
                    participants: Some(participants),
                    suite: Some(suite),
                    cleaning: Some(CleaningConfig::default()),
                    ..Default::default()
                }
            } else {
                let records = read_records(&text).map_err(|e| file_err(&records, e))?;
                AnalyzeRequest { records, ..Default::default() }
            };
            let resp = client.analyze(&req).await?;
            write(&out.join("cells.csv"), &resp.cells_csv)?;
            write(&out.join("comparisons.csv"), &resp.comparisons_csv)?;
            write(&out.join("trend.csv"), &resp.trend_csv)?;
            write(&out.join("report.txt"), &resp.report)?;
            if let Some(log) = &resp.drop_log {
                let text = serde_json::to_string_pretty(log).map_err(|e| file_err(&out, e))?;
                write(&out.join("drop_log.json"), &text)?;
            }
            print!("{}", resp.report);
        }
        Command::Validate { suite } => {
            let suite = load_suite(&suite)?;
            let resp = client.validate(&suite).await?;
            if !resp.violations.is_empty() {
                for v in &resp.violations {
                    let side = v.side.map(|s| s.short()).unwrap_or("pair");
                    let clauses: Vec<String> = v.violated.iter().map(|c| c.to_string()).collect();
                    println!("{} {side}: {}", v.pair_id, clauses.join(", "));
                }
                return Err(CliError::Usage(format!("{} violation(s)", resp.violations.len())));
            }
            println!("{} pairs valid", suite.pairs.len());
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
