use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendKind, PredictionOutcome};
use crate::demonstrations::{Dataset, DemoError, DemonstrationSet};
use crate::icl::{self, cross_entropy_loss, sigmoid, FeatureVector, IclError, LinearIclModel, NumericDemonstration};
use crate::randomizer::Label;
use crate::rng::{fnv1a64, splitmix64};

/// Signed feature hashing of lower-cased alphanumeric tokens into `dim`
/// buckets, L2-normalised. Empty text maps to the zero vector.
pub fn embed(text: &str, dim: usize) -> FeatureVector {
    assert!(dim >= 2, "embedding dimension must be at least 2");
    let mut v = vec![0.0; dim];
    for token in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let h = splitmix64(fnv1a64(token.to_lowercase().as_bytes()));
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    FeatureVector(v)
}

/// A prior fitted by logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorFit {
    pub w0: Vec<f64>,
    pub train_accuracy: f64,
    /// Mean cross-entropy before each step and after the last one.
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent on the mean cross-entropy of the embedded
/// split, starting from zero weights.
pub fn fit_prior(split: &Dataset, dim: usize, steps: usize, learning_rate: f64) -> Result<PriorFit, BackendError> {
    if split.is_empty() {
        return Err(DemoError::Size("prior split is empty".into()).into());
    }
    if !split.space.is_binary() {
        return Err(IclError::NonBinary(split.space.len()).into());
    }
    let demos: Vec<NumericDemonstration> = split
        .examples
        .iter()
        .map(|e| NumericDemonstration::from_label(embed(&e.text, dim), e.label))
        .collect::<Result<_, _>>()?;
    let n = demos.len() as f64;
    let mut w = vec![0.0; dim];
    let mut losses = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        losses.push(cross_entropy_loss(&w, &demos) / n);
        let mut grad = vec![0.0; dim];
        for d in &demos {
            let err = sigmoid(icl::dot(&w, d.x.as_slice())) - d.target();
            for (g, x) in grad.iter_mut().zip(d.x.as_slice()) {
                *g += err * x;
            }
        }
        for (wj, g) in w.iter_mut().zip(&grad) {
            *wj -= learning_rate * g / n;
        }
    }
    losses.push(cross_entropy_loss(&w, &demos) / n);
    let correct = demos
        .iter()
        .filter(|d| (icl::dot(&w, d.x.as_slice()) > 0.0) == d.y)
        .count();
    Ok(PriorFit { w0: w, train_accuracy: correct as f64 / n, losses })
}

/// How the simulator's step size depends on the number of demonstrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EtaRule {
    /// `η = scale / n`.
    InverseN { scale: f64 },
    Fixed { eta: f64 },
}

impl Default for EtaRule {
    fn default() -> Self {
        EtaRule::InverseN { scale: 1.0 }
    }
}

impl EtaRule {
    pub fn eta(&self, n: usize) -> f64 {
        match *self {
            EtaRule::InverseN { scale } => scale / n.max(1) as f64,
            EtaRule::Fixed { eta } => eta,
        }
    }
}

/// Numerical stand-in for an LLM: hashed features plus one implicit gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct MockBackend {
    w0: Vec<f64>,
    eta: EtaRule,
}

impl MockBackend {
    pub fn new(w0: Vec<f64>, eta: EtaRule) -> Result<Self, BackendError> {
        // Validates dimension and finiteness.
        LinearIclModel::new(w0.clone(), eta.eta(1))?;
        Ok(MockBackend { w0, eta })
    }

    pub fn dim(&self) -> usize {
        self.w0.len()
    }

    pub fn eta_rule(&self) -> EtaRule {
        self.eta
    }

    /// The simulator used for a demonstration set of size `n`.
    pub fn model(&self, n: usize) -> LinearIclModel {
        LinearIclModel::new(self.w0.clone(), self.eta.eta(n)).expect("validated at construction")
    }

    pub fn numeric_demos(&self, demos: &DemonstrationSet) -> Result<Vec<NumericDemonstration>, IclError> {
        demos
            .iter()
            .map(|e| NumericDemonstration::from_label(embed(&e.text, self.dim()), e.label))
            .collect()
    }

    /// Probability of label 1 for `query`.
    pub fn probability(&self, demos: &DemonstrationSet, query: &str) -> Result<f64, IclError> {
        let numeric = self.numeric_demos(demos)?;
        icl::predict_ldp(&self.model(numeric.len()), &numeric, &embed(query, self.dim()))
    }
}

impl Backend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn classify(&self, demos: &DemonstrationSet, query: &str) -> Result<PredictionOutcome, BackendError> {
        Ok(outcome(self.probability(demos, query)?))
    }

    /// Embeds the demonstrations once for all queries.
    fn classify_shared(
        &self,
        demos: &DemonstrationSet,
        queries: &[String],
        _parallelism: usize,
    ) -> Vec<Result<PredictionOutcome, BackendError>> {
        let numeric = match self.numeric_demos(demos) {
            Ok(n) => n,
            Err(e) => return queries.iter().map(|_| Err(e.clone().into())).collect(),
        };
        let model = self.model(numeric.len());
        queries
            .iter()
            .map(|q| Ok(outcome(icl::predict_ldp(&model, &numeric, &embed(q, self.dim()))?)))
            .collect()
    }
}

fn outcome(p: f64) -> PredictionOutcome {
    // Exactly one half goes to label 0.
    let label = if p > 0.5 { Label(1) } else { Label(0) };
    PredictionOutcome { label, probability: Some(p), prompt: None, raw_response: None, latency: Duration::ZERO }
}
