//! In-context learning as one implicit gradient step.
//!
//! A binary classifier with prior weights `w0` and learning rate `η` sees the
//! demonstrations `(x_i, y_i)` and answers the query `x` with
//!
//! ```text
//! p(x) = σ( w0·x − η Σ_i (σ(w0·x_i) − y_i) (x_i·x) )
//! ```
//!
//! which is a single gradient-descent step on the cross-entropy loss followed
//! by a prediction. The same number is produced by one head of unnormalised
//! linear attention over the stacked tokens `(x_i ; y_i)`; see
//! [`AttentionConstruction`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::randomizer::{Label, MechanismSpec};
use crate::rng::Stream;

/// Largest demonstration count for which [`expected_ldp_prediction`]
/// enumerates every flip pattern instead of sampling.
pub const EXACT_ENUMERATION_MAX_N: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IclError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid neighbouring demonstration sets: {0}")]
    InvalidNeighbor(String),
    #[error("the ICL simulator is binary, but the mechanism has {0} labels")]
    NonBinary(usize),
    #[error("at least one Monte-Carlo trial is required")]
    NoTrials,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The simulated language model: prior weight row `w0` and step size `η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearIclModel {
    w0: Vec<f64>,
    eta: f64,
}

impl LinearIclModel {
    pub fn new(w0: Vec<f64>, eta: f64) -> Result<Self, IclError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(IclError::InvalidModel(format!("learning rate must be positive and finite, got {eta}")));
        }
        if w0.is_empty() {
            return Err(IclError::InvalidModel("prior weights are empty".into()));
        }
        if w0.iter().any(|w| !w.is_finite()) {
            return Err(IclError::InvalidModel("prior weights must be finite".into()));
        }
        Ok(LinearIclModel { w0, eta })
    }

    pub fn w0(&self) -> &[f64] {
        &self.w0
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn dim(&self) -> usize {
        self.w0.len()
    }

    /// Same prior with a different step size.
    pub fn with_eta(&self, eta: f64) -> Result<Self, IclError> {
        LinearIclModel::new(self.w0.clone(), eta)
    }

    pub fn prior_logit(&self, x: &FeatureVector) -> Result<f64, IclError> {
        self.check(x)?;
        Ok(dot(&self.w0, &x.0))
    }

    /// Zero-shot probability `σ(w0·x)`.
    pub fn zero_shot(&self, x: &FeatureVector) -> Result<f64, IclError> {
        Ok(sigmoid(self.prior_logit(x)?))
    }

    fn check(&self, x: &FeatureVector) -> Result<(), IclError> {
        if x.dim() != self.dim() {
            return Err(IclError::Shape { expected: self.dim(), got: x.dim() });
        }
        Ok(())
    }

    fn check_all(&self, demos: &[NumericDemonstration]) -> Result<(), IclError> {
        demos.iter().try_for_each(|d| self.check(&d.x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericDemonstration {
    pub x: FeatureVector,
    /// `true` for label 1.
    pub y: bool,
}

impl NumericDemonstration {
    pub fn new(x: FeatureVector, y: bool) -> Self {
        NumericDemonstration { x, y }
    }

    pub fn from_label(x: FeatureVector, label: Label) -> Result<Self, IclError> {
        match label.0 {
            0 => Ok(NumericDemonstration { x, y: false }),
            1 => Ok(NumericDemonstration { x, y: true }),
            other => Err(IclError::NonBinary(other + 1)),
        }
    }

    pub fn target(&self) -> f64 {
        if self.y {
            1.0
        } else {
            0.0
        }
    }

    pub fn flipped(&self) -> Self {
        NumericDemonstration { x: self.x.clone(), y: !self.y }
    }
}

/// Branch-stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Binary cross-entropy (negative log-likelihood) of weights `w` on `demos`.
pub fn cross_entropy_loss(w: &[f64], demos: &[NumericDemonstration]) -> f64 {
    demos
        .iter()
        .map(|d| {
            let z = dot(w, &d.x.0);
            softplus(z) - d.target() * z
        })
        .sum()
}

/// `ΔW = −η Σ_i (σ(w0·x_i) − y_i) x_i`.
pub fn gd_weight_update(model: &LinearIclModel, demos: &[NumericDemonstration]) -> Result<Vec<f64>, IclError> {
    model.check_all(demos)?;
    let mut delta = vec![0.0; model.dim()];
    for d in demos {
        let err = sigmoid(dot(&model.w0, &d.x.0)) - d.target();
        for (acc, xi) in delta.iter_mut().zip(&d.x.0) {
            *acc -= model.eta * err * xi;
        }
    }
    Ok(delta)
}

/// Logit of the query after the implicit gradient step.
pub fn updated_logit(model: &LinearIclModel, demos: &[NumericDemonstration], x_test: &FeatureVector) -> Result<f64, IclError> {
    model.check(x_test)?;
    model.check_all(demos)?;
    let shift: f64 = demos
        .iter()
        .map(|d| (sigmoid(dot(&model.w0, &d.x.0)) - d.target()) * d.x.dot(x_test))
        .sum();
    Ok(dot(&model.w0, &x_test.0) - model.eta * shift)
}

/// Probability of label 1 for `x_test` after learning from `demos`.
pub fn predict_updated(model: &LinearIclModel, demos: &[NumericDemonstration], x_test: &FeatureVector) -> Result<f64, IclError> {
    updated_logit(model, demos, x_test).map(sigmoid)
}

/// Same formula as [`predict_updated`], evaluated on labels that have already
/// passed through the randomizer.
pub fn predict_ldp(model: &LinearIclModel, perturbed: &[NumericDemonstration], x_test: &FeatureVector) -> Result<f64, IclError> {
    predict_updated(model, perturbed, x_test)
}

/// Mean and variance of the label-1 probability under label perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionDistribution {
    pub mean: f64,
    pub variance: f64,
    /// Monte-Carlo draws, or the number of enumerated patterns.
    pub trials: usize,
    pub exact: bool,
}

impl PredictionDistribution {
    /// Distribution of the probability assigned to `positive` instead of label 1.
    pub fn for_label(self, positive: bool) -> Self {
        if positive {
            self
        } else {
            PredictionDistribution { mean: 1.0 - self.mean, ..self }
        }
    }

    /// Standard error of the mean; zero for an exact result.
    pub fn std_error(&self) -> f64 {
        if self.exact {
            0.0
        } else {
            (self.variance / self.trials as f64).sqrt()
        }
    }
}

fn binary_flip_prob(mech: &MechanismSpec) -> Result<f64, IclError> {
    if !mech.space().is_binary() {
        return Err(IclError::NonBinary(mech.space().len()));
    }
    Ok(mech.flip_prob_each())
}

/// Per-demonstration logit contributions `(kept, flipped)` and the prior logit.
fn contributions(
    model: &LinearIclModel,
    demos: &[NumericDemonstration],
    x_test: &FeatureVector,
) -> Result<(f64, Vec<(f64, f64)>), IclError> {
    model.check(x_test)?;
    model.check_all(demos)?;
    let base = dot(&model.w0, &x_test.0);
    let terms = demos
        .iter()
        .map(|d| {
            let s = sigmoid(dot(&model.w0, &d.x.0));
            let sim = d.x.dot(x_test);
            let y = d.target();
            (-model.eta * (s - y) * sim, -model.eta * (s - (1.0 - y)) * sim)
        })
        .collect();
    Ok((base, terms))
}

/// Enumerate all `2^n` flip patterns of a binary mechanism.
pub fn exact_ldp_prediction(
    model: &LinearIclModel,
    demos: &[NumericDemonstration],
    x_test: &FeatureVector,
    mech: &MechanismSpec,
) -> Result<PredictionDistribution, IclError> {
    let flip = binary_flip_prob(mech)?;
    let keep = 1.0 - flip;
    let (base, terms) = contributions(model, demos, x_test)?;
    let n = terms.len();
    assert!(n < 31, "exact enumeration over {n} demonstrations is infeasible");
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut total_weight = 0.0;
    for mask in 0u32..(1u32 << n) {
        let mut logit = base;
        let mut weight = 1.0;
        for (i, &(kept, flipped)) in terms.iter().enumerate() {
            if mask & (1 << i) != 0 {
                logit += flipped;
                weight *= flip;
            } else {
                logit += kept;
                weight *= keep;
            }
        }
        if weight == 0.0 {
            continue;
        }
        let p = sigmoid(logit);
        mean += weight * p;
        second += weight * p * p;
        total_weight += weight;
    }
    debug_assert!((total_weight - 1.0).abs() < 1e-12);
    Ok(PredictionDistribution {
        mean,
        variance: (second - mean * mean).max(0.0),
        trials: 1 << n,
        exact: true,
    })
}

/// Sample `trials` independent perturbations of the demonstration labels.
pub fn monte_carlo_ldp_prediction(
    model: &LinearIclModel,
    demos: &[NumericDemonstration],
    x_test: &FeatureVector,
    mech: &MechanismSpec,
    trials: usize,
    rng: &mut Stream,
) -> Result<PredictionDistribution, IclError> {
    if trials == 0 {
        return Err(IclError::NoTrials);
    }
    let flip = binary_flip_prob(mech)?;
    let (base, terms) = contributions(model, demos, x_test)?;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        let logit = terms.iter().fold(base, |acc, &(kept, flipped)| {
            // One uniform per label, matching the randomizer's draw discipline.
            let u: f64 = rng.gen();
            acc + if u < 1.0 - flip { kept } else { flipped }
        });
        let p = sigmoid(logit);
        sum += p;
        sum_sq += p * p;
    }
    let t = trials as f64;
    let mean = sum / t;
    let variance = if trials > 1 { ((sum_sq - t * mean * mean) / (t - 1.0)).max(0.0) } else { 0.0 };
    Ok(PredictionDistribution { mean, variance, trials, exact: false })
}

/// Exact enumeration for `n <= 12`, Monte Carlo beyond.
pub fn expected_ldp_prediction(
    model: &LinearIclModel,
    demos: &[NumericDemonstration],
    x_test: &FeatureVector,
    mech: &MechanismSpec,
    trials: usize,
    rng: &mut Stream,
) -> Result<PredictionDistribution, IclError> {
    if demos.len() <= EXACT_ENUMERATION_MAX_N {
        exact_ldp_prediction(model, demos, x_test, mech)
    } else {
        monte_carlo_ldp_prediction(model, demos, x_test, mech, trials, rng)
    }
}

/// Weights of one linear-attention head that reproduces the gradient step.
///
/// Tokens live in `R^{N+1}` as `(x ; y)`. Keys and queries keep the feature
/// block, values map a token to `(w0·x ; y)`, and `σ⁻` turns that into the
/// error signal `(0 ; σ(w0·x) − y)`. The attention output scaled by `P = ηI`
/// carries `η Σ_i (σ(w0·x_i) − y_i)(x_i·x)` in its second channel, which is
/// `−ΔW·x`, so the readout subtracts it from the prior logit.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionConstruction {
    pub w_k: DMatrix<f64>,
    pub w_q: DMatrix<f64>,
    pub w_v: DMatrix<f64>,
    pub p: DMatrix<f64>,
    dim: usize,
}

impl AttentionConstruction {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(v0 ; v1) ↦ (0 ; σ(v0) − v1)`.
    pub fn sigma_minus(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![0.0, sigmoid(v[0]) - v[1]])
    }

    pub fn token(&self, x: &FeatureVector, y: f64) -> DVector<f64> {
        let mut t = DVector::zeros(self.dim + 1);
        t.rows_mut(0, self.dim).copy_from_slice(x.as_slice());
        t[self.dim] = y;
        t
    }
}

pub fn build_attention_construction(model: &LinearIclModel) -> AttentionConstruction {
    let n = model.dim();
    let mut w_k = DMatrix::zeros(n + 1, n + 1);
    w_k.view_mut((0, 0), (n, n)).fill_with_identity();
    let w_q = w_k.clone();
    let mut w_v = DMatrix::zeros(2, n + 1);
    for (j, &w) in model.w0().iter().enumerate() {
        w_v[(0, j)] = w;
    }
    w_v[(1, n)] = 1.0;
    let p = DMatrix::identity(2, 2) * model.eta();
    AttentionConstruction { w_k, w_q, w_v, p, dim: n }
}

/// `σ(w0·x + readout(P · LinearAttn(σ⁻(W_V X), W_K X, W_Q x)))` where the
/// linear attention is the unnormalised sum of value ⊗ key products applied to
/// the query token.
pub fn attention_predict(
    construction: &AttentionConstruction,
    demos: &[NumericDemonstration],
    x_test: &FeatureVector,
) -> Result<f64, IclError> {
    let n = construction.dim;
    for x in demos.iter().map(|d| &d.x).chain(std::iter::once(x_test)) {
        if x.dim() != n {
            return Err(IclError::Shape { expected: n, got: x.dim() });
        }
    }
    // The query's label slot is unknown; W_Q zeroes it anyway.
    let query_token = construction.token(x_test, 0.0);
    let q = &construction.w_q * &query_token;
    let mut memory = DMatrix::<f64>::zeros(2, n + 1);
    for d in demos {
        let t = construction.token(&d.x, d.target());
        let v = construction.sigma_minus(&(&construction.w_v * &t));
        let k = &construction.w_k * &t;
        memory += v * k.transpose();
    }
    let attn = construction.p.clone() * (memory * q);
    let prior = (&construction.w_v * &query_token)[0];
    Ok(sigmoid(prior - attn[1]))
}

/// Membership-inference signal: how much more probability the true label of
/// `x_test` gets when `x_test` is one of the demonstrations.
///
/// `demos_in` and `demos_out` must have the same length and differ in at most
/// one position; when they differ, `demos_in` must hold `x_test` there.
pub fn mia_gap(
    model: &LinearIclModel,
    demos_in: &[NumericDemonstration],
    demos_out: &[NumericDemonstration],
    x_test: &FeatureVector,
    y_test: bool,
) -> Result<f64, IclError> {
    if demos_in.len() != demos_out.len() {
        return Err(IclError::InvalidNeighbor(format!(
            "sets have sizes {} and {}",
            demos_in.len(),
            demos_out.len()
        )));
    }
    let differing: Vec<usize> = demos_in
        .iter()
        .zip(demos_out)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, _)| i)
        .collect();
    match differing.as_slice() {
        [] => {}
        [i] => {
            if demos_in[*i].x != *x_test {
                return Err(IclError::InvalidNeighbor(
                    "the replaced member is not the query input".into(),
                ));
            }
        }
        many => {
            return Err(IclError::InvalidNeighbor(format!("sets differ in {} positions", many.len())));
        }
    }
    let p_in = predict_updated(model, demos_in, x_test)?;
    let p_out = predict_updated(model, demos_out, x_test)?;
    Ok(if y_test { p_in - p_out } else { p_out - p_in })
}
