use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{AblationResult, ExperimentConfig, ExperimentError, MiaResult, Setting, SweepResult, TuneResult};
use crate::estimation::Comparison;
use crate::randomizer::PrivacyBudget;

/// One remote exchange.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transcript {
    pub setting: Setting,
    pub epsilon: Option<PrivacyBudget>,
    pub run: usize,
    pub seed: u64,
    pub prompt: String,
    pub response: String,
    pub latency_ms: f64,
    pub unparseable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Sweep(SweepResult),
    Ablation(AblationResult),
    Estimation(Comparison),
    Mia(MiaResult),
    TuneSeed(TuneResult),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.display().to_string(), source }
}

fn csv_of<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| ExperimentError::Config(format!("csv encoding: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Config(format!("csv encoding: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Serialize)]
struct EstimationCsvRow {
    method: crate::estimation::Method,
    epsilon: PrivacyBudget,
    seed: u64,
    queries: usize,
    n: Option<usize>,
    raw_estimate: f64,
    debiased_estimate: Option<f64>,
    ground_truth: f64,
    wrapped: bool,
    failures: usize,
    channel_flip_rate: Option<f64>,
}

impl ExperimentOutput {
    /// Long-format rows.
    pub fn results_csv(&self) -> Result<String, ExperimentError> {
        match self {
            ExperimentOutput::Sweep(s) => csv_of(&s.rows),
            ExperimentOutput::Ablation(a) => csv_of(a.sweeps.iter().flat_map(|s| &s.rows)),
            ExperimentOutput::Estimation(c) => csv_of(c.reports.iter().map(|r| EstimationCsvRow {
                method: r.method,
                epsilon: r.epsilon,
                seed: r.seed,
                queries: r.queries,
                n: r.n,
                raw_estimate: r.raw_estimate,
                debiased_estimate: r.debiased_estimate,
                ground_truth: r.ground_truth,
                wrapped: r.wrapped,
                failures: r.failures,
                channel_flip_rate: r.channel_flip_rate,
            })),
            ExperimentOutput::Mia(m) => csv_of(&m.rows),
            ExperimentOutput::TuneSeed(t) => csv_of(&t.scores),
        }
    }

    pub fn transcripts(&self) -> Vec<&super::Transcript> {
        match self {
            ExperimentOutput::Sweep(s) => s.transcripts.iter().collect(),
            ExperimentOutput::Ablation(a) => a.sweeps.iter().flat_map(|s| &s.transcripts).collect(),
            _ => Vec::new(),
        }
    }
}

/// Aggregates of an output as JSON.
pub fn summary_json(output: &ExperimentOutput) -> serde_json::Value {
    use serde_json::json;
    match output {
        ExperimentOutput::Sweep(s) => json!({ "kind": "sweep", "n": s.n, "summary": s.summary }),
        ExperimentOutput::Ablation(a) => json!({
            "kind": "ablation",
            "n_grid": a.sweeps.iter().map(|s| s.n).collect::<Vec<_>>(),
            "summary": a.sweeps.iter().flat_map(|s| &s.summary).collect::<Vec<_>>(),
        }),
        ExperimentOutput::Estimation(c) => json!({ "kind": "estimation", "summary": c.summaries }),
        ExperimentOutput::Mia(m) => json!({ "kind": "mia", "summary": m.summary }),
        ExperimentOutput::TuneSeed(t) => json!({ "kind": "tune_seed", "best": t.best, "scores": t.scores }),
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serialises");
    s.push('\n');
    s
}

/// Write `results.csv`, `summary.json`, `config.json` and, when remote
/// exchanges were recorded, `transcripts.jsonl`. Creates `dir` if needed.
pub fn emit_report(output: &ExperimentOutput, config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let mut write = |name: &str, contents: String| -> Result<(), ExperimentError> {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };
    write("results.csv", output.results_csv()?)?;
    write("summary.json", pretty(&summary_json(output)))?;
    write("config.json", pretty(config))?;
    let transcripts = output.transcripts();
    if !transcripts.is_empty() {
        let mut lines = String::new();
        for t in transcripts {
            lines.push_str(&serde_json::to_string(t).expect("transcript serialises"));
            lines.push('\n');
        }
        write("transcripts.jsonl", lines)?;
    }
    Ok(written)
}
