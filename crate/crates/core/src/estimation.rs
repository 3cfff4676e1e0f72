//! Private estimation of the share of label 1 in a dataset.
//!
//! Two estimators are compared on identical query samples. The baseline
//! (CF) randomizes each sampled query label directly with binary randomized
//! response. LDP-ICL instead hands each query a disjoint block of
//! demonstrations whose labels were randomized, and counts the positive model
//! outputs. Only CF outputs have a known flip rate, so only CF has an unbiased
//! debiasing step.

use serde::Serialize;
use thiserror::Error;

use crate::backend::{classify_batch, Backend, BackendError, Job};
use crate::demonstrations::{partition, stratified_query_sample, Dataset, DemoError, Query};
use crate::randomizer::{keep_probability, perturb_label, perturb_set, Label, MechanismSpec, PrivacyBudget, RandomizerError};
use crate::rng::RandomSeed;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("no outputs to estimate from")]
    NoOutputs,
    #[error("cannot debias at epsilon = 0: the randomized response carries no signal")]
    ZeroBudget,
    #[error("estimation needs a binary label space, got {0} labels")]
    NonBinary(usize),
    #[error("every query failed; first error: {0}")]
    AllFailed(BackendError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Randomizer(#[from] RandomizerError),
}

/// Share of label 1 among `outputs`.
pub fn positive_rate(outputs: &[Label]) -> Result<f64, EstimationError> {
    if outputs.is_empty() {
        return Err(EstimationError::NoOutputs);
    }
    Ok(outputs.iter().filter(|l| l.0 == 1).count() as f64 / outputs.len() as f64)
}

/// Invert binary randomized response: `(raw − (1−p)) / (2p − 1)`. The result
/// is unbiased and may leave `[0, 1]`; clamp for display only.
pub fn debias(raw: f64, budget: PrivacyBudget) -> Result<f64, EstimationError> {
    match budget {
        PrivacyBudget::Infinite => Ok(raw),
        PrivacyBudget::Finite(0.0) => Err(EstimationError::ZeroBudget),
        PrivacyBudget::Finite(_) => {
            let p = keep_probability(budget, 2)?;
            Ok((raw - (1.0 - p)) / (2.0 * p - 1.0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    #[serde(rename = "cf")]
    Cf,
    #[serde(rename = "ldp_icl")]
    LdpIcl,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Cf => "cf",
            Method::LdpIcl => "ldp_icl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationReport {
    pub method: Method,
    pub epsilon: PrivacyBudget,
    /// Seed the estimate was drawn with.
    pub seed: u64,
    pub queries: usize,
    /// Demonstrations per query (LDP-ICL only).
    pub n: Option<usize>,
    /// Share of label 1 among the outputs.
    pub raw_estimate: f64,
    /// CF only; absent at epsilon = 0.
    pub debiased_estimate: Option<f64>,
    /// True share of label 1 in the query sample.
    pub ground_truth: f64,
    /// Set when some demonstration block served more than one query.
    pub wrapped: bool,
    /// Queries whose model call failed; they are left out of the estimate.
    pub failures: usize,
    /// Share of outputs that differ from the query's true label. Reported,
    /// not inverted: the end-to-end channel has no closed-form flip rate.
    pub channel_flip_rate: Option<f64>,
}

impl EstimationReport {
    pub fn absolute_error(&self) -> f64 {
        (self.raw_estimate - self.ground_truth).abs()
    }
}

fn truth(queries: &[Query]) -> Result<f64, EstimationError> {
    positive_rate(&queries.iter().map(|q| q.label).collect::<Vec<_>>())
}

fn require_binary(dataset: &Dataset) -> Result<(), EstimationError> {
    if dataset.space.is_binary() {
        Ok(())
    } else {
        Err(EstimationError::NonBinary(dataset.space.len()))
    }
}

/// Draw the stratified query sample used by both estimators.
pub fn draw_queries(dataset: &Dataset, r: usize, seed: RandomSeed) -> Result<Vec<Query>, EstimationError> {
    require_binary(dataset)?;
    Ok(stratified_query_sample(dataset, r, &mut seed.derive_str("queries").stream())?)
}

/// CF: randomize every query label with binary randomized response.
pub fn estimate_cf(queries: &[Query], budget: PrivacyBudget, seed: RandomSeed) -> Result<EstimationReport, EstimationError> {
    let mech = MechanismSpec::binary(budget);
    let mut rng = seed.derive_str("cf").stream();
    let outputs = queries
        .iter()
        .map(|q| perturb_label(q.label, &mech, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let raw = positive_rate(&outputs)?;
    let debiased = match budget {
        PrivacyBudget::Finite(0.0) => None,
        _ => Some(debias(raw, budget)?),
    };
    Ok(EstimationReport {
        method: Method::Cf,
        epsilon: budget,
        seed: seed.0,
        queries: queries.len(),
        n: None,
        raw_estimate: raw,
        debiased_estimate: debiased,
        ground_truth: truth(queries)?,
        wrapped: false,
        failures: 0,
        channel_flip_rate: None,
    })
}

/// LDP-ICL: partition `dataset` into blocks of `n`, give query `i` block
/// `i mod l` with freshly randomized labels, and count positive outputs.
pub fn estimate_ldp_icl(
    dataset: &Dataset,
    queries: &[Query],
    backend: &dyn Backend,
    budget: PrivacyBudget,
    n: usize,
    seed: RandomSeed,
    parallelism: usize,
) -> Result<EstimationReport, EstimationError> {
    require_binary(dataset)?;
    let plan = partition(dataset, n, &mut seed.derive_str("partition").stream())?;
    let (blocks, wrapped) = plan.assignment(queries.len());
    let mech = MechanismSpec::new(budget, dataset.space.clone());
    let perturb_seed = seed.derive_str("perturb");
    let jobs = queries
        .iter()
        .zip(&blocks)
        .enumerate()
        .map(|(i, (q, &b))| {
            let mut rng = perturb_seed.derive(i as u64).stream();
            let demos = perturb_set(&plan.block(dataset, b), &mech, &mut rng)?;
            Ok(Job { demos, query: q.text.clone() })
        })
        .collect::<Result<Vec<_>, EstimationError>>()?;
    let mut outputs = Vec::with_capacity(jobs.len());
    let mut flips = 0;
    let mut first_error = None;
    let mut failures = 0;
    for (q, result) in queries.iter().zip(classify_batch(backend, &jobs, parallelism)) {
        match result {
            Ok(outcome) => {
                flips += usize::from(outcome.label != q.label);
                outputs.push(outcome.label);
            }
            Err(e) => {
                failures += 1;
                first_error.get_or_insert(e);
            }
        }
    }
    if outputs.is_empty() {
        return match first_error {
            Some(e) => Err(EstimationError::AllFailed(e)),
            None => Err(EstimationError::NoOutputs),
        };
    }
    Ok(EstimationReport {
        method: Method::LdpIcl,
        epsilon: budget,
        seed: seed.0,
        queries: queries.len(),
        n: Some(n),
        raw_estimate: positive_rate(&outputs)?,
        debiased_estimate: None,
        ground_truth: truth(queries)?,
        wrapped,
        failures,
        channel_flip_rate: Some(flips as f64 / outputs.len() as f64),
    })
}

/// Error statistics of one method at one budget across seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub epsilon: PrivacyBudget,
    pub seeds: usize,
    pub mean_estimate: f64,
    /// Mean absolute error of the raw estimate against the query-sample truth.
    pub mae: f64,
    /// Sample variance of the raw estimate across seeds.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub reports: Vec<EstimationReport>,
    pub summaries: Vec<MethodSummary>,
}

impl Comparison {
    pub fn summary(&self, method: Method, budget: PrivacyBudget) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method && s.epsilon == budget)
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n − 1 denominator); zero for fewer than two values.
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn summarise(method: Method, budget: PrivacyBudget, reports: &[&EstimationReport]) -> MethodSummary {
    let raw: Vec<f64> = reports.iter().map(|r| r.raw_estimate).collect();
    let errors: Vec<f64> = reports.iter().map(|r| r.absolute_error()).collect();
    MethodSummary {
        method,
        epsilon: budget,
        seeds: reports.len(),
        mean_estimate: mean(&raw),
        mae: mean(&errors),
        variance: sample_variance(&raw),
    }
}

/// Run both estimators for every budget and seed. Each seed draws one query
/// sample shared by CF and LDP-ICL at every budget.
#[allow(clippy::too_many_arguments)]
pub fn compare_methods(
    dataset: &Dataset,
    backend: &dyn Backend,
    budgets: &[PrivacyBudget],
    n: usize,
    r: usize,
    seeds: &[RandomSeed],
    parallelism: usize,
) -> Result<Comparison, EstimationError> {
    if seeds.is_empty() {
        return Err(EstimationError::NoOutputs);
    }
    let mut reports = Vec::new();
    for &seed in seeds {
        let queries = draw_queries(dataset, r, seed)?;
        for &budget in budgets {
            let eps_seed = seed.derive_str(&budget.to_string());
            reports.push(estimate_cf(&queries, budget, eps_seed)?);
            reports.push(estimate_ldp_icl(dataset, &queries, backend, budget, n, eps_seed, parallelism)?);
        }
    }
    let mut summaries = Vec::new();
    for &budget in budgets {
        for method in [Method::Cf, Method::LdpIcl] {
            let subset: Vec<&EstimationReport> =
                reports.iter().filter(|r| r.method == method && r.epsilon == budget).collect();
            summaries.push(summarise(method, budget, &subset));
        }
    }
    Ok(Comparison { reports, summaries })
}
