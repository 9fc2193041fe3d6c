//! Pipeline operations shared by the command line and the HTTP API, so both
//! produce the same files from the same inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use catforge::bench::{run_benchmark, BenchmarkConfig, BenchmarkReport, Strategy};
use catforge::fixture;
use catforge::pipeline::Project;
use catforge::{Error, Result};

/// Writes the cinema fixture project into `dir`.
pub fn write_fixture(dir: &Path, scale: usize, seed: u64) -> Result<Vec<PathBuf>> {
    if scale == 0 {
        return Err(Error::InvalidArgument("scale must be at least 1".into()));
    }
    fixture::write_cinema_project(dir, scale, seed)
}

/// Appends the rows of `csv` to `table` and persists the table.
pub fn ingest(project: &Project, table: &str, csv: &Path) -> Result<usize> {
    let inputs = project.load_inputs()?;
    let mut store = project.load_store(inputs.schema)?;
    project.ingest(&mut store, table, csv)
}

/// Generates the utterance corpus and self-play flows from the persisted data.
pub fn generate(project: &Project) -> Result<(usize, usize)> {
    let inputs = project.load_inputs()?;
    let store = project.load_store(inputs.schema.clone())?;
    project.generate(&store, &inputs.tasks)
}

/// Trains both models from the generated files. Returns the number of
/// intents and of policy entries.
pub fn train(project: &Project) -> Result<(usize, usize)> {
    let inputs = project.load_inputs()?;
    let (model, policy) = project.train(&inputs.schema, &inputs.tasks)?;
    Ok((model.intents.len(), policy.len()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BenchSource {
    /// The synthetic customers table.
    #[default]
    Fixture,
    /// The project's own data.
    Project,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkRequest {
    pub source: BenchSource,
    /// Customers generated for the fixture source.
    pub scale: usize,
    pub table: String,
    pub trials: usize,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    /// Ingest a skew-inverted batch halfway through (fixture source only).
    pub adapt: bool,
}

impl Default for BenchmarkRequest {
    fn default() -> Self {
        let c = BenchmarkConfig::default();
        BenchmarkRequest {
            source: BenchSource::Fixture,
            scale: 10_000,
            table: c.table,
            trials: c.trials,
            seed: c.seed,
            strategies: c.strategies,
            adapt: false,
        }
    }
}

pub fn benchmark(project: Option<&Project>, req: &BenchmarkRequest) -> Result<BenchmarkReport> {
    let policy = project.map(|p| p.config().policy).unwrap_or_default();
    let cfg = BenchmarkConfig {
        table: req.table.clone(),
        trials: req.trials,
        seed: req.seed,
        strategies: req.strategies.clone(),
        policy,
    };
    match req.source {
        BenchSource::Fixture => {
            if req.scale == 0 {
                return Err(Error::InvalidArgument("scale must be at least 1".into()));
            }
            let mut store = fixture::customers_store(req.scale, req.seed);
            let batch = req
                .adapt
                .then(|| fixture::customers_inverted_batch(req.scale, req.scale, req.seed));
            run_benchmark(&mut store, &cfg, batch)
        }
        BenchSource::Project => {
            let project = project.ok_or_else(|| Error::InvalidArgument("no project to benchmark".into()))?;
            if req.adapt {
                return Err(Error::InvalidArgument("adaptation runs need the fixture source".into()));
            }
            let inputs = project.load_inputs()?;
            let mut store = project.load_store(inputs.schema)?;
            run_benchmark(&mut store, &cfg, None)
        }
    }
}

/// Plain-text table of a report.
pub fn format_report(report: &BenchmarkReport) -> String {
    let mut out = format!(
        "table {}, {} trials, seed {}, list threshold {}\n",
        report.table, report.trials, report.seed, report.list_threshold
    );
    let mut section = |title: &str, rows: &[catforge::bench::StrategyReport]| {
        out.push_str(&format!(
            "{title}\n{:<12}{:>8}{:>8}{:>8}{:>10}\n",
            "strategy", "mean", "median", "p90", "failures"
        ));
        for r in rows {
            out.push_str(&format!(
                "{:<12}{:>8.3}{:>8.1}{:>8.1}{:>10}\n",
                r.strategy.name(),
                r.mean_turns,
                r.median_turns,
                r.p90_turns,
                r.failures
            ));
        }
    };
    section("all trials", &report.strategies);
    if let Some(a) = &report.adaptation {
        section(&format!("after ingesting {} rows", a.ingested_rows), &a.post_ingest);
    }
    out
}
