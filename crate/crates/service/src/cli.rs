use std::io::{BufRead, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::Context;
use chrono::NaiveDateTime;
use clap::{Parser, Subcommand};

use catforge::pipeline::Project;

use crate::app::{AppState, ServeOptions, ServiceError};
use crate::ops::{self, BenchSource, BenchmarkRequest};

#[derive(Debug, Parser)]
#[command(
    name = "cat-forge",
    version,
    about = "Build and run data-aware conversational agents"
)]
pub struct Cli {
    /// Project directory holding catforge.toml, schema, tasks and data.
    #[arg(long, global = true, default_value = ".")]
    pub project: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cinema project.
    Fixture {
        #[arg(long, default_value_t = 1000)]
        scale: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Target directory; the project directory by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Append rows from a CSV file to a table.
    Ingest {
        #[arg(long)]
        table: String,
        file: PathBuf,
    },
    /// Generate the NLU corpus and self-play dialogue flows.
    Generate,
    /// Train the NLU model and the dialogue policy.
    Train,
    /// Talk to the agent in the terminal.
    Chat {
        /// Fixed current time, e.g. 2024-05-01T18:00:00.
        #[arg(long)]
        now: Option<NaiveDateTime>,
        /// Write the transcript as JSON when the session ends.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        now: Option<NaiveDateTime>,
        /// Static files served under /ui; `<project>/ui` by default.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Compare attribute selection strategies by turns to identify an entity.
    Bench {
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BenchSource::Fixture)]
        source: BenchSource,
        /// Customers generated for the fixture source.
        #[arg(long, default_value_t = 10_000)]
        scale: usize,
        #[arg(long, default_value = "customer")]
        table: String,
        /// Ingest a skew-inverted batch halfway through.
        #[arg(long)]
        adapt: bool,
    },
}

/// Process exit code for an error: 1 for invalid input, 2 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<catforge::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<ServiceError>() {
            return match e {
                ServiceError::Core(c) if !c.is_validation() => 2,
                _ => 1,
            };
        }
    }
    2
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let open = || Project::open(&cli.project).with_context(|| format!("opening project {}", cli.project.display()));
    match cli.command {
        Command::Fixture { scale, seed, out } => {
            let dir = out.unwrap_or_else(|| cli.project.clone());
            let files = ops::write_fixture(&dir, scale, seed)?;
            println!("wrote {} files to {}", files.len(), dir.display());
        }
        Command::Ingest { table, file } => {
            let added = ops::ingest(&open()?, &table, &file)?;
            println!("ingested {added} rows into {table}");
        }
        Command::Generate => {
            let (utterances, flows) = ops::generate(&open()?)?;
            println!("generated {utterances} utterances and {flows} dialogue flows");
        }
        Command::Train => {
            let (intents, entries) = ops::train(&open()?)?;
            println!("trained {intents} intents and {entries} policy entries");
        }
        Command::Chat { now, transcript } => chat(open()?, now, transcript)?,
        Command::Serve {
            port,
            host,
            now,
            ui_dir,
        } => {
            let state = AppState::open(open()?, ServeOptions { now, ui_dir })?;
            if !state.agent().is_ready() {
                tracing::warn!("models are not trained; chat endpoints answer 409 until /pipeline/train completes");
            }
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(crate::api::serve(state, SocketAddr::new(host, port)))?;
        }
        Command::Bench {
            trials,
            seed,
            out,
            source,
            scale,
            table,
            adapt,
        } => {
            let req = BenchmarkRequest {
                source,
                scale,
                table,
                trials,
                seed,
                adapt,
                ..BenchmarkRequest::default()
            };
            let project = match source {
                BenchSource::Project => Some(open()?),
                BenchSource::Fixture => None,
            };
            let report = ops::benchmark(project.as_ref(), &req)?;
            print!("{}", ops::format_report(&report));
            if let Some(path) = out {
                std::fs::write(&path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
                println!("report written to {}", path.display());
            }
        }
    }
    Ok(())
}

fn chat(project: Project, now: Option<NaiveDateTime>, transcript: Option<PathBuf>) -> anyhow::Result<()> {
    let state = AppState::open(project, ServeOptions { now, ui_dir: None })?;
    let id = state.create_session()?;
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    writeln!(stdout, "Type a message, or /quit to leave.")?;
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim() == "/quit" {
            break;
        }
        let response = state.message(&id, &line)?;
        writeln!(stdout, "{}", response.text)?;
        stdout.flush()?;
    }
    if let Some(path) = transcript {
        let turns = state.transcript(&id)?;
        std::fs::write(&path, serde_json::to_string_pretty(&turns)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
