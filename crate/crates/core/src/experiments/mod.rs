//! Sweep orchestration: privacy/utility curves, the ablation over `n`,
//! estimation comparisons, the membership-inference probe and seed tuning.

mod config;
mod report;

use rand::seq::index;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

pub use config::{
    default_grid, BackendConfig, DataConfig, EstimationConfig, ExperimentConfig, FileData, MiaConfig, MockConfig,
};
pub use report::{emit_report, summary_json, ExperimentOutput, Transcript};

use crate::backend::{fit_prior, Backend, BackendError, MockBackend, PredictionOutcome, PriorFit};
use crate::demonstrations::{
    load_dataset, subsample_demos, Constraints, DataFormat, Dataset, DatasetSchema, DemoError, DemonstrationSet,
    PromptTemplate, Split, TextExample,
};
use crate::estimation::{compare_methods, Comparison, EstimationError};
use crate::icl::{self, IclError};
use crate::randomizer::{perturb_set, LabelSpace, MechanismSpec, PrivacyBudget, RandomizerError};
use crate::rng::RandomSeed;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Randomizer(#[from] RandomizerError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Icl(#[from] IclError),
    /// A sweep stopped early; `completed` holds every finished cell.
    #[error("sweep aborted after {} rows: {source}", completed.rows.len())]
    Partial {
        completed: Box<SweepResult>,
        #[source]
        source: Box<ExperimentError>,
    },
}

/// The splits and prompt layout of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub pretrain: Dataset,
    pub train: Dataset,
    pub validation: Dataset,
    pub template: PromptTemplate,
}

impl TaskData {
    pub fn load(task: &str, data: &DataConfig) -> Result<Self, ExperimentError> {
        match data {
            DataConfig::Synthetic { synthetic } => {
                let generated = synthetic.generate()?;
                let template = PromptTemplate::for_space(&crate::synthetic::label_space());
                Ok(TaskData {
                    pretrain: generated.pretrain,
                    train: generated.train,
                    validation: generated.validation,
                    template,
                })
            }
            DataConfig::Files(files) => {
                let space = LabelSpace::new(files.labels.iter().cloned())?;
                let schema = DatasetSchema { text_field: files.text_field.clone(), label_field: files.label_field.clone() };
                let load = |path: &std::path::Path, split| -> Result<Dataset, ExperimentError> {
                    let format = DataFormat::from_path(path).ok_or_else(|| {
                        ExperimentError::Config(format!("{}: expected a .csv or .jsonl file", path.display()))
                    })?;
                    Ok(load_dataset(path, format, &schema, &space, task, split)?)
                };
                let train = load(&files.train, Split::Train)?;
                let validation = load(&files.validation, Split::Validation)?;
                let pretrain = match &files.pretrain {
                    Some(p) => load(p, Split::Pretrain)?,
                    None => Dataset { split: Split::Pretrain, ..train.clone() },
                };
                let template = match &files.template {
                    Some(p) => PromptTemplate::load(p, &space)?,
                    None => PromptTemplate::for_space(&space),
                };
                Ok(TaskData { pretrain, train, validation, template })
            }
        }
    }
}

/// A loaded task bound to a backend.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub task: TaskData,
    backend: Box<dyn Backend>,
    mock: Option<MockBackend>,
    pub prior: Option<PriorFit>,
}

impl std::fmt::Debug for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Experiment")
            .field("config", &self.config)
            .field("backend", &self.backend.kind())
            .finish_non_exhaustive()
    }
}

impl Experiment {
    /// Load the data and build the configured backend. The mock prior is
    /// fitted on the pretrain split.
    pub fn new(config: ExperimentConfig) -> Result<Self, ExperimentError> {
        config.validate()?;
        let task = TaskData::load(&config.task, &config.data)?;
        match &config.backend {
            BackendConfig::Mock(m) => {
                let fit = fit_prior(&task.pretrain, m.dim, m.prior_steps, m.prior_learning_rate)?;
                let mock = MockBackend::new(fit.w0.clone(), m.eta)?;
                Ok(Experiment { config, task, backend: Box::new(mock.clone()), mock: Some(mock), prior: Some(fit) })
            }
            #[cfg(feature = "remote")]
            BackendConfig::Remote(r) => {
                let backend = crate::backend::RemoteBackend::new(r.clone(), task.template.clone());
                Ok(Experiment { config, task, backend: Box::new(backend), mock: None, prior: None })
            }
            #[cfg(not(feature = "remote"))]
            BackendConfig::Remote(_) => Err(ExperimentError::Unsupported("built without the `remote` feature".into())),
        }
    }

    /// Use an arbitrary backend; the membership probe stays unavailable.
    pub fn with_backend(config: ExperimentConfig, task: TaskData, backend: Box<dyn Backend>) -> Result<Self, ExperimentError> {
        config.validate()?;
        Ok(Experiment { config, task, backend, mock: None, prior: None })
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend.as_ref()
    }

    fn master(&self) -> RandomSeed {
        RandomSeed::new(self.config.seed)
    }

    /// The ordered demonstration set of a seed; shared by every run and budget.
    pub fn demonstrations(&self, seed: RandomSeed, n: usize) -> Result<DemonstrationSet, ExperimentError> {
        Ok(subsample_demos(&self.task.train, n, &mut seed.derive_str("demos").stream(), Constraints::default())?)
    }

    fn test_subset(&self, seed: RandomSeed) -> Result<Vec<TextExample>, ExperimentError> {
        let pool = &self.task.validation;
        if self.config.test_size > pool.len() {
            return Err(DemoError::Size(format!(
                "test_size {} exceeds the validation split of {}",
                self.config.test_size,
                pool.len()
            ))
            .into());
        }
        Ok(index::sample(&mut seed.stream(), pool.len(), self.config.test_size)
            .into_iter()
            .map(|i| pool.examples[i].clone())
            .collect())
    }

    /// Classify every test example against `demos`. Failed calls, including
    /// unparseable answers, count as wrong.
    fn evaluate(&self, demos: &DemonstrationSet, tests: &[TextExample]) -> Cell {
        let queries: Vec<String> = tests.iter().map(|t| t.text.clone()).collect();
        let results = self.backend().classify_shared(demos, &queries, self.config.parallelism);
        let mut cell = Cell { correct: 0, failures: 0, exchanges: Vec::new(), fatal: None };
        for (t, result) in tests.iter().zip(results) {
            match result {
                Ok(outcome) => {
                    cell.correct += usize::from(outcome.label == t.label);
                    cell.exchanges.push(Exchange::from_outcome(&outcome));
                }
                Err(BackendError::Unparseable { prompt, response, latency }) => {
                    cell.failures += 1;
                    cell.exchanges.push(Exchange { prompt: Some(prompt), response: Some(response), latency, error: true });
                }
                Err(e) => {
                    cell.failures += 1;
                    cell.fatal.get_or_insert(e);
                }
            }
        }
        cell
    }

    /// Accuracy of every budget in the grid plus the ICL, ZSL and FL-ICL
    /// baselines, for each run. The demonstration set is fixed by the master
    /// seed; runs vary the perturbation draw and the test subset.
    pub fn run_classification_sweep(&self, n: usize) -> Result<SweepResult, ExperimentError> {
        let master = self.master();
        let demos = self.demonstrations(master, n)?;
        let mut result = SweepResult { n, rows: Vec::new(), summary: Vec::new(), transcripts: Vec::new() };
        let space = self.task.train.space.clone();
        for run in 0..self.config.runs {
            let run_seed = master.derive_str("run").derive(run as u64);
            let tests = self.test_subset(run_seed.derive_str("test"))?;
            let mut cells: Vec<(Setting, Option<PrivacyBudget>, DemonstrationSet)> = Vec::new();
            for &budget in &self.config.epsilons {
                let mech = MechanismSpec::new(budget, space.clone());
                // Every budget sees the same uniform draws.
                let perturbed = perturb_set(&demos, &mech, &mut run_seed.derive_str("perturb").stream())?;
                cells.push((Setting::LdpIcl, Some(budget), perturbed));
            }
            cells.push((Setting::Icl, None, demos.clone()));
            cells.push((Setting::Zsl, None, DemonstrationSet::default()));
            cells.push((Setting::FlIcl, None, demos.flip_all(&space)));
            for (setting, epsilon, cell_demos) in cells {
                let cell = self.evaluate(&cell_demos, &tests);
                for ex in &cell.exchanges {
                    if let Some(t) = ex.transcript(setting, epsilon, run, run_seed) {
                        result.transcripts.push(t);
                    }
                }
                if let Some(e) = cell.fatal {
                    result.finish(&self.config.epsilons);
                    return Err(ExperimentError::Partial { completed: Box::new(result), source: Box::new(e.into()) });
                }
                result.rows.push(SweepRow {
                    setting,
                    epsilon,
                    n,
                    run,
                    seed: run_seed.0,
                    accuracy: cell.correct as f64 / tests.len() as f64,
                    correct: cell.correct,
                    total: tests.len(),
                    failures: cell.failures,
                });
            }
        }
        result.finish(&self.config.epsilons);
        Ok(result)
    }

    /// Classification sweep for each `n` in the grid.
    pub fn run_ablation(&self, n_grid: &[usize]) -> Result<AblationResult, ExperimentError> {
        if let Some(&n) = n_grid.iter().find(|&&n| n > self.task.train.len()) {
            return Err(ExperimentError::Config(format!("n = {n} exceeds the training split of {}", self.task.train.len())));
        }
        let sweeps = n_grid.iter().map(|&n| self.run_classification_sweep(n)).collect::<Result<_, _>>()?;
        Ok(AblationResult { sweeps })
    }

    /// Seeds used by the estimation comparison.
    pub fn estimation_seeds(&self) -> Vec<RandomSeed> {
        let base = self.master().derive_str("estimation");
        (0..self.config.estimation.seeds as u64).map(|i| base.derive(i)).collect()
    }

    pub fn run_estimation(&self) -> Result<Comparison, ExperimentError> {
        Ok(compare_methods(
            &self.task.train,
            self.backend(),
            &self.config.epsilons,
            self.config.n,
            self.config.estimation.r,
            &self.estimation_seeds(),
            self.config.parallelism,
        )?)
    }

    /// Mean membership gap per `n`. Each instance draws `n` demonstrations and
    /// a validation example, then swaps the example into a random position.
    pub fn run_mia_probe(&self, n_grid: &[usize], instances: usize) -> Result<MiaResult, ExperimentError> {
        let mock = self
            .mock
            .as_ref()
            .ok_or_else(|| ExperimentError::Unsupported("the membership probe needs the mock backend's probabilities".into()))?;
        if instances == 0 {
            return Err(ExperimentError::Config("the membership probe needs at least one instance".into()));
        }
        let base = self.master().derive_str("mia");
        let mut rows = Vec::new();
        let mut summary = Vec::new();
        for &n in n_grid {
            if n == 0 || n > self.task.train.len() {
                return Err(ExperimentError::Config(format!("invalid probe size n = {n}")));
            }
            let model = mock.model(n);
            let mut gaps = Vec::with_capacity(instances);
            for i in 0..instances {
                let mut rng = base.derive_path(&[n as u64, i as u64]).stream();
                let out = subsample_demos(&self.task.train, n, &mut rng, Constraints::none())?;
                let target = &self.task.validation.examples[rng.gen_range(0..self.task.validation.len())];
                let slot = rng.gen_range(0..n);
                let mut inside = out.clone();
                inside.0[slot] = target.clone();
                let gap = icl::mia_gap(
                    &model,
                    &mock.numeric_demos(&inside)?,
                    &mock.numeric_demos(&out)?,
                    &crate::backend::embed(&target.text, mock.dim()),
                    target.label.0 == 1,
                )?;
                rows.push(MiaRow { n, instance: i, gap });
                gaps.push(gap);
            }
            summary.push(MiaSummary {
                n,
                instances,
                mean_gap: crate::estimation::mean(&gaps),
                mean_abs_gap: gaps.iter().map(|g| g.abs()).sum::<f64>() / instances as f64,
            });
        }
        Ok(MiaResult { rows, summary })
    }

    /// Non-private ICL accuracy on a fixed validation subset for each
    /// candidate master seed. Ties go to the smallest seed.
    pub fn tune_seed(&self, candidates: &[u64]) -> Result<TuneResult, ExperimentError> {
        if candidates.is_empty() {
            return Err(ExperimentError::Config("tune-seed needs at least one candidate".into()));
        }
        let tests = self.test_subset(RandomSeed::new(0).derive_str("tune"))?;
        let mut scores = Vec::with_capacity(candidates.len());
        for &c in candidates {
            let demos = self.demonstrations(RandomSeed::new(c), self.config.n)?;
            let cell = self.evaluate(&demos, &tests);
            if let Some(e) = cell.fatal {
                return Err(e.into());
            }
            scores.push(SeedScore { seed: c, accuracy: cell.correct as f64 / tests.len() as f64 });
        }
        let best = scores
            .iter()
            .max_by(|a, b| a.accuracy.total_cmp(&b.accuracy).then(b.seed.cmp(&a.seed)))
            .expect("non-empty")
            .seed;
        Ok(TuneResult { best, scores })
    }
}

struct Exchange {
    prompt: Option<String>,
    response: Option<String>,
    latency: std::time::Duration,
    error: bool,
}

impl Exchange {
    fn from_outcome(o: &PredictionOutcome) -> Self {
        Exchange { prompt: o.prompt.clone(), response: o.raw_response.clone(), latency: o.latency, error: false }
    }

    /// Only exchanges with a rendered prompt (remote calls) are logged.
    fn transcript(&self, setting: Setting, epsilon: Option<PrivacyBudget>, run: usize, seed: RandomSeed) -> Option<Transcript> {
        Some(Transcript {
            setting,
            epsilon,
            run,
            seed: seed.0,
            prompt: self.prompt.clone()?,
            response: self.response.clone().unwrap_or_default(),
            latency_ms: self.latency.as_secs_f64() * 1000.0,
            unparseable: self.error,
        })
    }
}

struct Cell {
    correct: usize,
    failures: usize,
    exchanges: Vec<Exchange>,
    fatal: Option<BackendError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Setting {
    #[serde(rename = "ldp_icl")]
    LdpIcl,
    #[serde(rename = "icl")]
    Icl,
    #[serde(rename = "zsl")]
    Zsl,
    #[serde(rename = "fl_icl")]
    FlIcl,
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setting::LdpIcl => "ldp_icl",
            Setting::Icl => "icl",
            Setting::Zsl => "zsl",
            Setting::FlIcl => "fl_icl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub setting: Setting,
    /// Set for `ldp_icl` rows only.
    pub epsilon: Option<PrivacyBudget>,
    pub n: usize,
    pub run: usize,
    /// Derived seed of the run.
    pub seed: u64,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Failed or unparseable calls, counted as wrong.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub setting: Setting,
    pub epsilon: Option<PrivacyBudget>,
    pub n: usize,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation across runs.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub n: usize,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
    #[serde(skip)]
    pub transcripts: Vec<Transcript>,
}

impl SweepResult {
    fn finish(&mut self, grid: &[PrivacyBudget]) {
        let eps_rank = |e: &Option<PrivacyBudget>| e.and_then(|e| grid.iter().position(|g| *g == e)).unwrap_or(0);
        self.rows.sort_by_key(|r| (r.setting, eps_rank(&r.epsilon), r.run));
        self.summary.clear();
        let mut groups: Vec<(Setting, Option<PrivacyBudget>)> = Vec::new();
        for r in &self.rows {
            if !groups.contains(&(r.setting, r.epsilon)) {
                groups.push((r.setting, r.epsilon));
            }
        }
        for (setting, epsilon) in groups {
            let acc: Vec<f64> = self
                .rows
                .iter()
                .filter(|r| r.setting == setting && r.epsilon == epsilon)
                .map(|r| r.accuracy)
                .collect();
            self.summary.push(SummaryRow {
                setting,
                epsilon,
                n: self.n,
                runs: acc.len(),
                mean: crate::estimation::mean(&acc),
                std: crate::estimation::sample_variance(&acc).sqrt(),
            });
        }
    }

    pub fn mean(&self, setting: Setting, epsilon: Option<PrivacyBudget>) -> Option<f64> {
        self.summary.iter().find(|s| s.setting == setting && s.epsilon == epsilon).map(|s| s.mean)
    }

    /// `(ε, mean accuracy)` of the private rows in grid order.
    pub fn curve(&self) -> Vec<(PrivacyBudget, f64)> {
        self.summary
            .iter()
            .filter(|s| s.setting == Setting::LdpIcl)
            .filter_map(|s| Some((s.epsilon?, s.mean)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationResult {
    pub sweeps: Vec<SweepResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiaRow {
    pub n: usize,
    pub instance: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiaSummary {
    pub n: usize,
    pub instances: usize,
    pub mean_gap: f64,
    pub mean_abs_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiaResult {
    pub rows: Vec<MiaRow>,
    pub summary: Vec<MiaSummary>,
}

impl MiaResult {
    pub fn mean_gap(&self, n: usize) -> Option<f64> {
        self.summary.iter().find(|s| s.n == n).map(|s| s.mean_gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedScore {
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub best: u64,
    pub scores: Vec<SeedScore>,
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `None` when either side is constant or the
/// inputs are shorter than two.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let (mx, my) = (crate::estimation::mean(&rx), crate::estimation::mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests;
