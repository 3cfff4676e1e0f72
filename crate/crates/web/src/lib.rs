//! Browser bindings: each export takes plain numbers and returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ldp_icl::experiments::{DataConfig, EstimationConfig, Experiment, ExperimentConfig, Setting};
use ldp_icl::randomizer::{flip_probability_each, keep_probability, perturb_labels};
use ldp_icl::synthetic::SyntheticConfig;
use ldp_icl::{Label, LabelSpace, MechanismSpec, PrivacyBudget, RandomSeed};

/// A negative epsilon from the page means "no privacy".
fn budget(epsilon: f64) -> PrivacyBudget {
    if epsilon < 0.0 || epsilon.is_infinite() {
        PrivacyBudget::Infinite
    } else {
        PrivacyBudget::Finite(epsilon)
    }
}

fn to_js<T: Serialize>(value: Result<T, String>) -> Result<String, JsValue> {
    value
        .and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[derive(Serialize)]
struct Histogram {
    epsilon: PrivacyBudget,
    trials: usize,
    keep: f64,
    flip_each: f64,
    /// Empirical share of each output label when label 0 goes in.
    observed: Vec<f64>,
}

fn histogram(m: usize, epsilon: f64, trials: usize, seed: u64) -> Result<Histogram, String> {
    let space = LabelSpace::new((0..m).map(|i| format!("class {i}"))).map_err(|e| e.to_string())?;
    let eps = budget(epsilon);
    let mech = MechanismSpec::new(eps, space);
    let input = vec![Label(0); trials];
    let out = perturb_labels(&input, &mech, &mut RandomSeed::new(seed).stream()).map_err(|e| e.to_string())?;
    let mut counts = vec![0usize; m];
    for l in out {
        counts[l.0] += 1;
    }
    let observed = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    Ok(Histogram {
        epsilon: eps,
        trials,
        keep: keep_probability(eps, m).map_err(|e| e.to_string())?,
        flip_each: flip_probability_each(eps, m).map_err(|e| e.to_string())?,
        observed,
    })
}

/// Randomized response on `trials` copies of label 0 over `m` classes.
#[wasm_bindgen]
pub fn krr_histogram(m: usize, epsilon: f64, trials: usize, seed: u64) -> Result<String, JsValue> {
    to_js(histogram(m, epsilon, trials.max(1), seed))
}

/// A light synthetic task that keeps the page responsive.
fn demo_config(epsilons: &[f64], n: usize, runs: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        data: DataConfig::Synthetic {
            synthetic: SyntheticConfig { train_size: 600, validation_size: 200, ..SyntheticConfig::default() },
        },
        epsilons: epsilons.iter().copied().map(budget).collect(),
        n,
        test_size: 100,
        runs,
        seed,
        parallelism: 1,
        ..ExperimentConfig::default()
    }
}

#[derive(Serialize)]
struct Point {
    setting: Setting,
    epsilon: Option<PrivacyBudget>,
    mean: f64,
    std: f64,
}

fn curve(epsilons: &[f64], n: usize, runs: usize, seed: u64) -> Result<Vec<Point>, String> {
    let experiment = Experiment::new(demo_config(epsilons, n, runs, seed)).map_err(|e| e.to_string())?;
    let sweep = experiment.run_classification_sweep(n).map_err(|e| e.to_string())?;
    Ok(sweep
        .summary
        .into_iter()
        .map(|s| Point { setting: s.setting, epsilon: s.epsilon, mean: s.mean, std: s.std })
        .collect())
}

/// Mock-backend accuracy over the budgets plus the ICL, ZSL and FL-ICL baselines.
#[wasm_bindgen]
pub fn tradeoff_curve(epsilons: Vec<f64>, n: usize, runs: usize, seed: u64) -> Result<String, JsValue> {
    to_js(curve(&epsilons, n, runs.max(1), seed))
}

fn estimation(epsilons: &[f64], n: usize, r: usize, seeds: usize, seed: u64) -> Result<serde_json::Value, String> {
    let config = ExperimentConfig {
        estimation: EstimationConfig { r, seeds },
        ..demo_config(epsilons, n, 1, seed)
    };
    let comparison = Experiment::new(config)
        .and_then(|e| e.run_estimation())
        .map_err(|e| e.to_string())?;
    serde_json::to_value(&comparison.summaries).map_err(|e| e.to_string())
}

/// Positive-rate estimation error of client-side randomized response against
/// LDP-ICL.
#[wasm_bindgen]
pub fn estimation_comparison(epsilons: Vec<f64>, n: usize, r: usize, seeds: usize, seed: u64) -> Result<String, JsValue> {
    to_js(estimation(&epsilons, n, r.max(1), seeds.max(2), seed))
}
