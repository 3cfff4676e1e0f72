use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ldp_icl::backend::BackendKind;
use ldp_icl::demonstrations::{load_dataset, DataFormat, DatasetSchema, Split};
use ldp_icl::experiments::{
    emit_report, summary_json, BackendConfig, DataConfig, Experiment, ExperimentConfig, ExperimentError,
    ExperimentOutput, SweepResult,
};
use ldp_icl::randomizer::{perturb_labels, verify_ldp, Label, LabelSpace, MechanismSpec, PrivacyBudget};
use ldp_icl::rng::RandomSeed;

#[derive(Parser)]
#[command(name = "ldp-icl", version, about = "Label-private in-context learning experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated privacy budgets, e.g. `0,0.5,1,inf`.
    #[arg(long, global = true, value_delimiter = ',')]
    epsilon: Option<Vec<PrivacyBudget>>,
    /// Demonstrations per prompt.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Randomize labels with k-ary randomized response.
    Perturb {
        /// Label names to perturb, comma-separated.
        #[arg(long, value_delimiter = ',', conflicts_with = "input")]
        labels: Option<Vec<String>>,
        /// Dataset file (CSV or JSONL) whose labels are perturbed.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also check the mechanism empirically with this many trials.
        #[arg(long)]
        verify: Option<usize>,
    },
    /// Classify query texts with (perturbed) demonstrations.
    Classify {
        /// Query text; repeat for several.
        #[arg(long, required = true)]
        query: Vec<String>,
    },
    /// Accuracy across the privacy grid plus ICL, ZSL and FL-ICL baselines.
    Sweep,
    /// Repeat the sweep for several demonstration counts.
    Ablate {
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
    },
    /// Compare CF and LDP-ICL positive-rate estimates.
    Estimate {
        /// Number of queries.
        #[arg(long)]
        r: Option<usize>,
        /// Number of derived seeds.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Membership-inference gap against demonstration count (mock only).
    Mia {
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Pick the master seed with the best non-private validation accuracy.
    TuneSeed {
        #[arg(long, value_delimiter = ',')]
        candidates: Option<Vec<u64>>,
    },
}

fn resolve_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(eps) = &common.epsilon {
        config.epsilons = eps.clone();
    }
    if let Some(n) = common.n {
        config.n = n;
    }
    if let Some(runs) = common.runs {
        config.runs = runs;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(kind) = common.backend {
        config = config.with_backend(kind)?;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn print_sweep(sweep: &SweepResult) {
    println!("n = {}", sweep.n);
    println!("{:<8} {:>8} {:>8} {:>8}", "setting", "epsilon", "mean", "std");
    for s in &sweep.summary {
        let eps = s.epsilon.map(|e| e.to_string()).unwrap_or_else(|| "-".into());
        println!("{:<8} {:>8} {:>8.4} {:>8.4}", s.setting.to_string(), eps, s.mean, s.std);
    }
}

fn write(output: &ExperimentOutput, config: &ExperimentConfig) -> Result<()> {
    let files = emit_report(output, config, &config.out_dir)?;
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

/// Flush whatever a failed sweep finished before reporting the error.
fn sweep_or_flush(result: Result<SweepResult, ExperimentError>, config: &ExperimentConfig) -> Result<SweepResult> {
    match result {
        Err(ExperimentError::Partial { completed, source }) => {
            write(&ExperimentOutput::Sweep(*completed), config)?;
            Err(anyhow::Error::new(*source).context("sweep aborted; partial results written"))
        }
        other => Ok(other?),
    }
}

fn label_space(config: &ExperimentConfig) -> Result<LabelSpace> {
    Ok(match &config.data {
        DataConfig::Files(f) => LabelSpace::new(f.labels.iter().cloned())?,
        DataConfig::Synthetic { .. } => ldp_icl::synthetic::label_space(),
    })
}

fn perturb(config: &ExperimentConfig, labels: Option<Vec<String>>, input: Option<PathBuf>, verify: Option<usize>) -> Result<()> {
    let space = label_space(config)?;
    let source: Vec<Label> = if let Some(names) = labels {
        names
            .iter()
            .map(|n| space.index_of(n).with_context(|| format!("label {n:?} is not one of {:?}", space.names())))
            .collect::<Result<_>>()?
    } else if let Some(path) = input {
        let format = DataFormat::from_path(&path).context("expected a .csv or .jsonl input")?;
        let schema = match &config.data {
            DataConfig::Files(f) => DatasetSchema { text_field: f.text_field.clone(), label_field: f.label_field.clone() },
            DataConfig::Synthetic { .. } => DatasetSchema::default(),
        };
        load_dataset(&path, format, &schema, &space, &config.task, Split::Train)?
            .examples
            .iter()
            .map(|e| e.label)
            .collect()
    } else {
        bail!("perturb needs --labels or --input");
    };
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["epsilon", "index", "label", "perturbed"])?;
    let seed = RandomSeed::new(config.seed).derive_str("perturb");
    for &budget in &config.epsilons {
        let mech = MechanismSpec::new(budget, space.clone());
        let out = perturb_labels(&source, &mech, &mut seed.derive_str(&budget.to_string()).stream())?;
        for (i, (a, b)) in source.iter().zip(&out).enumerate() {
            let name = |l: &Label| space.name(*l).unwrap_or_default().to_string();
            w.write_record([budget.to_string(), i.to_string(), name(a), name(b)])?;
        }
        if let (Some(trials), false) = (verify, budget.is_infinite()) {
            let report = verify_ldp(&mech, trials, seed.derive_str("verify"))?;
            eprintln!("{}", serde_json::to_string(&report)?);
        }
    }
    w.flush()?;
    Ok(())
}

fn classify(config: &ExperimentConfig, queries: &[String]) -> Result<()> {
    let experiment = Experiment::new(config.clone())?;
    let demos = experiment.demonstrations(RandomSeed::new(config.seed), config.n)?;
    let space = experiment.task.train.space.clone();
    let seed = RandomSeed::new(config.seed).derive_str("classify");
    for &budget in &config.epsilons {
        let mech = MechanismSpec::new(budget, space.clone());
        let perturbed = ldp_icl::randomizer::perturb_set(&demos, &mech, &mut seed.stream())?;
        for query in queries {
            let outcome = experiment.backend().classify(&perturbed, query)?;
            let record = serde_json::json!({
                "epsilon": budget,
                "query": query,
                "label": space.name(outcome.label),
                "probability": outcome.probability,
                "response": outcome.raw_response,
            });
            println!("{record}");
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut config = resolve_config(&cli.common)?;
    match cli.command {
        Command::Perturb { labels, input, verify } => perturb(&config, labels, input, verify),
        Command::Classify { query } => classify(&config, &query),
        Command::Sweep => {
            let experiment = Experiment::new(config.clone())?;
            let sweep = sweep_or_flush(experiment.run_classification_sweep(config.n), &config)?;
            print_sweep(&sweep);
            write(&ExperimentOutput::Sweep(sweep), &config)
        }
        Command::Ablate { n_grid } => {
            if let Some(grid) = n_grid {
                config.ablation_n = grid;
            }
            let experiment = Experiment::new(config.clone())?;
            let mut sweeps = Vec::new();
            for &n in &config.ablation_n {
                if n > experiment.task.train.len() {
                    bail!("n = {n} exceeds the training split of {}", experiment.task.train.len());
                }
                let sweep = sweep_or_flush(experiment.run_classification_sweep(n), &config)?;
                print_sweep(&sweep);
                sweeps.push(sweep);
            }
            write(&ExperimentOutput::Ablation(ldp_icl::experiments::AblationResult { sweeps }), &config)
        }
        Command::Estimate { r, seeds } => {
            if let Some(r) = r {
                config.estimation.r = r;
            }
            if let Some(s) = seeds {
                config.estimation.seeds = s;
            }
            let comparison = Experiment::new(config.clone())?.run_estimation()?;
            println!("{:<8} {:>8} {:>10} {:>12}", "method", "epsilon", "mae", "variance");
            for s in &comparison.summaries {
                println!("{:<8} {:>8} {:>10.5} {:>12.3e}", s.method.to_string(), s.epsilon.to_string(), s.mae, s.variance);
            }
            write(&ExperimentOutput::Estimation(comparison), &config)
        }
        Command::Mia { n_grid, instances } => {
            if let Some(grid) = n_grid {
                config.mia.n_grid = grid;
            }
            if let Some(i) = instances {
                config.mia.instances = i;
            }
            if !matches!(config.backend, BackendConfig::Mock(_)) {
                bail!("the membership probe needs the mock backend");
            }
            let result = Experiment::new(config.clone())?.run_mia_probe(&config.mia.n_grid, config.mia.instances)?;
            let output = ExperimentOutput::Mia(result);
            println!("{}", serde_json::to_string_pretty(&summary_json(&output))?);
            write(&output, &config)
        }
        Command::TuneSeed { candidates } => {
            if let Some(c) = candidates {
                config.tune_candidates = c;
            }
            let result = Experiment::new(config.clone())?.tune_seed(&config.tune_candidates)?;
            for s in &result.scores {
                println!("seed {:>6}  accuracy {:.4}", s.seed, s.accuracy);
            }
            println!("best seed: {}", result.best);
            write(&ExperimentOutput::TuneSeed(result), &config)
        }
    }
}
