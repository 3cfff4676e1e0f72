//! k-ary randomized response over a finite label space.
//!
//! A label is kept with probability `e^ε / (M - 1 + e^ε)` and otherwise
//! replaced by one of the other `M - 1` labels chosen uniformly. With `M = 2`
//! this is Warner's coin-flipping mechanism.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::demonstrations::DemonstrationSet;
use crate::rng::{RandomSeed, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandomizerError {
    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),
    #[error("label index {label} is outside a label space of size {size}")]
    UnknownLabel { label: usize, size: usize },
    #[error("invalid privacy budget {0}: epsilon must be a non-negative number or infinity")]
    InvalidBudget(String),
    #[error("invalid keep probability {0}")]
    InvalidProbability(f64),
    #[error("empirical LDP verification is not applicable to an infinite budget")]
    NotApplicable,
    #[error("verification needs at least {min} trials per input, got {got}")]
    TooFewTrials { min: usize, got: usize },
}

/// Privacy budget ε. Infinity is a distinct variant so the identity mechanism
/// is exact rather than approximated by a large float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrivacyBudget {
    Finite(f64),
    Infinite,
}

impl PrivacyBudget {
    pub fn finite(epsilon: f64) -> Result<Self, RandomizerError> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(RandomizerError::InvalidBudget(epsilon.to_string()));
        }
        if epsilon.is_infinite() {
            return Ok(PrivacyBudget::Infinite);
        }
        Ok(PrivacyBudget::Finite(epsilon))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, PrivacyBudget::Infinite)
    }

    /// ε as a float; `f64::INFINITY` for the infinite budget.
    pub fn epsilon(&self) -> f64 {
        match *self {
            PrivacyBudget::Finite(e) => e,
            PrivacyBudget::Infinite => f64::INFINITY,
        }
    }

    /// Ordering key where infinity sorts above every finite value.
    pub fn sort_key(&self) -> f64 {
        self.epsilon()
    }
}

impl fmt::Display for PrivacyBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrivacyBudget::Finite(e) => write!(f, "{e}"),
            PrivacyBudget::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for PrivacyBudget {
    type Err = RandomizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" => return Ok(PrivacyBudget::Infinite),
            _ => {}
        }
        if t == "∞" {
            return Ok(PrivacyBudget::Infinite);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| RandomizerError::InvalidBudget(t.to_string()))?;
        PrivacyBudget::finite(v)
    }
}

impl Serialize for PrivacyBudget {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            PrivacyBudget::Finite(e) => serializer.serialize_f64(*e),
            PrivacyBudget::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PrivacyBudget {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => PrivacyBudget::finite(v).map_err(serde::de::Error::custom),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Index of a label inside its [`LabelSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    labels: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, RandomizerError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(RandomizerError::InvalidLabelSpace(format!(
                "need at least 2 labels, got {}",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(RandomizerError::InvalidLabelSpace(format!("duplicate label {l:?}")));
            }
        }
        Ok(LabelSpace { labels })
    }

    /// `{"0", "1"}`, the numeric binary space.
    pub fn binary() -> Self {
        LabelSpace { labels: vec!["0".into(), "1".into()] }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.labels.len() == 2
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, label: Label) -> Option<&str> {
        self.labels.get(label.0).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<Label> {
        self.labels.iter().position(|l| l == name).map(Label)
    }

    pub fn contains(&self, label: Label) -> bool {
        label.0 < self.labels.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        (0..self.labels.len()).map(Label)
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = RandomizerError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        LabelSpace::new(v)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(s: LabelSpace) -> Self {
        s.labels
    }
}

/// Probability that k-RR reports the true label.
pub fn keep_probability(budget: PrivacyBudget, m: usize) -> Result<f64, RandomizerError> {
    if m < 2 {
        return Err(RandomizerError::InvalidLabelSpace(format!("need at least 2 labels, got {m}")));
    }
    Ok(match budget {
        PrivacyBudget::Infinite => 1.0,
        // e^ε / (M-1+e^ε) rewritten with e^{-ε} so large ε cannot overflow.
        PrivacyBudget::Finite(eps) => 1.0 / (1.0 + (m as f64 - 1.0) * (-eps).exp()),
    })
}

/// Probability of reporting one particular wrong label.
pub fn flip_probability_each(budget: PrivacyBudget, m: usize) -> Result<f64, RandomizerError> {
    if m < 2 {
        return Err(RandomizerError::InvalidLabelSpace(format!("need at least 2 labels, got {m}")));
    }
    Ok(match budget {
        PrivacyBudget::Infinite => 0.0,
        PrivacyBudget::Finite(eps) => {
            let t = (-eps).exp();
            t / (1.0 + (m as f64 - 1.0) * t)
        }
    })
}

/// A fully parameterised k-RR channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismSpec {
    budget: PrivacyBudget,
    space: LabelSpace,
    keep_prob: f64,
    flip_prob_each: f64,
}

impl MechanismSpec {
    pub fn new(budget: PrivacyBudget, space: LabelSpace) -> Self {
        let m = space.len();
        // LabelSpace guarantees m >= 2.
        let keep_prob = keep_probability(budget, m).expect("label space has at least two labels");
        let flip_prob_each = flip_probability_each(budget, m).expect("label space has at least two labels");
        MechanismSpec { budget, space, keep_prob, flip_prob_each }
    }

    pub fn binary(budget: PrivacyBudget) -> Self {
        MechanismSpec::new(budget, LabelSpace::binary())
    }

    /// A channel with an arbitrary keep probability that merely *claims* the
    /// given budget. Used to audit the verifier against broken mechanisms.
    pub fn with_keep_probability(
        budget: PrivacyBudget,
        space: LabelSpace,
        keep_prob: f64,
    ) -> Result<Self, RandomizerError> {
        if !(0.0..=1.0).contains(&keep_prob) {
            return Err(RandomizerError::InvalidProbability(keep_prob));
        }
        let flip_prob_each = (1.0 - keep_prob) / (space.len() as f64 - 1.0);
        Ok(MechanismSpec { budget, space, keep_prob, flip_prob_each })
    }

    pub fn budget(&self) -> PrivacyBudget {
        self.budget
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn keep_prob(&self) -> f64 {
        self.keep_prob
    }

    pub fn flip_prob_each(&self) -> f64 {
        self.flip_prob_each
    }

    /// Analytic `P(output | input)`.
    pub fn transition(&self, input: Label, output: Label) -> f64 {
        if input == output {
            self.keep_prob
        } else {
            self.flip_prob_each
        }
    }

    fn check(&self, label: Label) -> Result<(), RandomizerError> {
        if self.space.contains(label) {
            Ok(())
        } else {
            Err(RandomizerError::UnknownLabel { label: label.0, size: self.space.len() })
        }
    }
}

/// Perturb one label. Consumes exactly one uniform variate from `rng`.
pub fn perturb_label(label: Label, mech: &MechanismSpec, rng: &mut Stream) -> Result<Label, RandomizerError> {
    mech.check(label)?;
    let u: f64 = rng.gen();
    Ok(select_output(label, mech, u))
}

fn select_output(label: Label, mech: &MechanismSpec, u: f64) -> Label {
    if u < mech.keep_prob || mech.flip_prob_each <= 0.0 {
        return label;
    }
    let others = mech.space.len() - 1;
    let j = (((u - mech.keep_prob) / mech.flip_prob_each) as usize).min(others - 1);
    // j indexes the labels other than `label`, in order.
    if j < label.0 {
        Label(j)
    } else {
        Label(j + 1)
    }
}

/// Perturb every label of a sequence independently, keeping order.
pub fn perturb_labels(labels: &[Label], mech: &MechanismSpec, rng: &mut Stream) -> Result<Vec<Label>, RandomizerError> {
    labels.iter().map(|&l| perturb_label(l, mech, rng)).collect()
}

/// Perturb the labels of a demonstration set; inputs and order are untouched.
pub fn perturb_set(demos: &DemonstrationSet, mech: &MechanismSpec, rng: &mut Stream) -> Result<DemonstrationSet, RandomizerError> {
    let labels = perturb_labels(&demos.labels(), mech, rng)?;
    Ok(demos.with_labels(&labels))
}

/// Outcome of an empirical ε-LDP audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpReport {
    pub epsilon: f64,
    pub trials: usize,
    /// Largest observed `ln(P̂(o|a) / P̂(o|a'))` over all input pairs and outputs.
    pub max_log_ratio: f64,
    /// Three-sigma allowance attached to the cell that attained the maximum.
    pub slack_at_max: f64,
    /// Largest `log_ratio - epsilon - slack` over all cells; `<= 0` means pass.
    pub worst_excess: f64,
    pub passed: bool,
}

pub const MIN_VERIFY_TRIALS: usize = 10_000;

/// Estimate the output distribution of every input with `trials` draws each
/// and check the LDP ratio bound cell by cell. The allowance for a cell is
/// three binomial standard errors propagated through the log ratio by the
/// delta method: `se(ln p̂) ≈ sqrt((1-p)/(n p))`.
pub fn verify_ldp(mech: &MechanismSpec, trials: usize, seed: RandomSeed) -> Result<LdpReport, RandomizerError> {
    let eps = match mech.budget {
        PrivacyBudget::Infinite => return Err(RandomizerError::NotApplicable),
        PrivacyBudget::Finite(e) => e,
    };
    if trials < MIN_VERIFY_TRIALS {
        return Err(RandomizerError::TooFewTrials { min: MIN_VERIFY_TRIALS, got: trials });
    }
    let m = mech.space.len();
    let mut freq = vec![vec![0.0f64; m]; m];
    for (a, row) in freq.iter_mut().enumerate() {
        let mut rng = seed.derive(a as u64).stream();
        let mut counts = vec![0usize; m];
        for _ in 0..trials {
            let o = perturb_label(Label(a), mech, &mut rng)?;
            counts[o.0] += 1;
        }
        for (f, c) in row.iter_mut().zip(counts) {
            *f = c as f64 / trials as f64;
        }
    }

    let n = trials as f64;
    let log_se = |p: f64| ((1.0 - p) / (n * p)).sqrt();
    let mut max_log_ratio = f64::NEG_INFINITY;
    let mut slack_at_max = 0.0;
    let mut worst_excess = f64::NEG_INFINITY;
    for a in 0..m {
        for b in 0..m {
            if a == b {
                continue;
            }
            for (&pa, &pb) in freq[a].iter().zip(&freq[b]) {
                if pa == 0.0 {
                    continue;
                }
                let (ratio, slack) = if pb == 0.0 {
                    (f64::INFINITY, 0.0)
                } else {
                    let se = (log_se(pa).powi(2) + log_se(pb).powi(2)).sqrt();
                    ((pa / pb).ln(), 3.0 * se)
                };
                if ratio > max_log_ratio {
                    max_log_ratio = ratio;
                    slack_at_max = slack;
                }
                worst_excess = worst_excess.max(ratio - eps - slack);
            }
        }
    }
    Ok(LdpReport {
        epsilon: eps,
        trials,
        max_log_ratio,
        slack_at_max,
        worst_excess,
        passed: worst_excess <= 0.0,
    })
}

/// Basic sequential composition: budgets add.
pub fn compose(budgets: &[PrivacyBudget]) -> PrivacyBudget {
    budgets.iter().fold(PrivacyBudget::Finite(0.0), |acc, b| match (acc, b) {
        (PrivacyBudget::Finite(x), PrivacyBudget::Finite(y)) => PrivacyBudget::Finite(x + y),
        _ => PrivacyBudget::Infinite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::Rng;

    fn eps(e: f64) -> PrivacyBudget {
        PrivacyBudget::finite(e).unwrap()
    }

    #[test]
    fn keep_probability_examples() {
        assert_eq!(keep_probability(eps(0.0), 2).unwrap(), 0.5);
        assert_eq!(keep_probability(PrivacyBudget::Infinite, 2).unwrap(), 1.0);
        assert!((keep_probability(eps(3f64.ln()), 2).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(
            keep_probability(eps(1.0), 1),
            Err(RandomizerError::InvalidLabelSpace(_))
        ));
    }

    #[test]
    fn huge_epsilon_does_not_overflow() {
        let p = keep_probability(eps(800.0), 5).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(flip_probability_each(eps(800.0), 5).unwrap(), 0.0);
    }

    #[test]
    fn budget_parsing() {
        assert_eq!("inf".parse::<PrivacyBudget>().unwrap(), PrivacyBudget::Infinite);
        assert_eq!("∞".parse::<PrivacyBudget>().unwrap(), PrivacyBudget::Infinite);
        assert_eq!("0.5".parse::<PrivacyBudget>().unwrap(), PrivacyBudget::Finite(0.5));
        assert!("-1".parse::<PrivacyBudget>().is_err());
        assert!("NaN".parse::<PrivacyBudget>().is_err());
        assert_eq!(PrivacyBudget::finite(f64::INFINITY).unwrap(), PrivacyBudget::Infinite);
        let json = serde_json::to_string(&vec![PrivacyBudget::Finite(0.5), PrivacyBudget::Infinite]).unwrap();
        assert_eq!(json, r#"[0.5,"inf"]"#);
        let back: Vec<PrivacyBudget> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![PrivacyBudget::Finite(0.5), PrivacyBudget::Infinite]);
    }

    #[test]
    fn label_space_validation() {
        assert!(LabelSpace::new(["a"]).is_err());
        assert!(LabelSpace::new(["a", "a"]).is_err());
        let s = LabelSpace::new(["neg", "pos"]).unwrap();
        assert_eq!(s.index_of("pos"), Some(Label(1)));
        assert_eq!(s.name(Label(0)), Some("neg"));
    }

    #[test]
    fn identity_at_infinity() {
        let mech = MechanismSpec::new(PrivacyBudget::Infinite, LabelSpace::new(["a", "b", "c"]).unwrap());
        let mut rng = RandomSeed(1).stream();
        for l in 0..3 {
            for _ in 0..100 {
                assert_eq!(perturb_label(Label(l), &mech, &mut rng).unwrap(), Label(l));
            }
        }
    }

    #[test]
    fn unknown_label_rejected() {
        let mech = MechanismSpec::binary(eps(1.0));
        let mut rng = RandomSeed(1).stream();
        assert_eq!(
            perturb_label(Label(2), &mech, &mut rng),
            Err(RandomizerError::UnknownLabel { label: 2, size: 2 })
        );
    }

    #[test]
    fn one_variate_per_call() {
        let mech = MechanismSpec::new(eps(0.3), LabelSpace::new(["a", "b", "c"]).unwrap());
        let mut a = RandomSeed(5).stream();
        let mut b = RandomSeed(5).stream();
        for _ in 0..10 {
            perturb_label(Label(1), &mech, &mut a).unwrap();
            let _: f64 = b.gen();
        }
        let x: u64 = a.gen();
        let y: u64 = b.gen();
        assert_eq!(x, y);
    }

    #[test]
    fn warner_keep_frequency_binary_ln3() {
        let mech = MechanismSpec::binary(eps(3f64.ln()));
        let mut rng = RandomSeed(11).stream();
        let trials = 100_000;
        let kept = (0..trials)
            .filter(|_| perturb_label(Label(1), &mech, &mut rng).unwrap() == Label(1))
            .count();
        let freq = kept as f64 / trials as f64;
        let sigma = (0.75f64 * 0.25 / trials as f64).sqrt();
        assert!((freq - 0.75).abs() < 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn three_labels_uniform_at_zero() {
        let mech = MechanismSpec::new(eps(0.0), LabelSpace::new(["a", "b", "c"]).unwrap());
        let mut rng = RandomSeed(3).stream();
        let trials = 90_000;
        let mut counts = [0usize; 3];
        for _ in 0..trials {
            counts[perturb_label(Label(0), &mech, &mut rng).unwrap().0] += 1;
        }
        let sigma = ((1.0 / 3.0) * (2.0 / 3.0) / trials as f64).sqrt();
        for c in counts {
            assert!((c as f64 / trials as f64 - 1.0 / 3.0).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn perturb_set_flip_count_binomial() {
        // n = 32, ε = 0: flipped count ~ Binomial(32, 1/2). Mean over 400 seeds
        // must land within 3 standard errors of 16.
        let mech = MechanismSpec::binary(eps(0.0));
        let labels: Vec<Label> = (0..32).map(|i| Label(i % 2)).collect();
        let reps = 400;
        let total: usize = (0..reps)
            .map(|s| {
                let mut rng = RandomSeed(s).stream();
                let out = perturb_labels(&labels, &mech, &mut rng).unwrap();
                out.iter().zip(&labels).filter(|(a, b)| a != b).count()
            })
            .sum();
        let mean = total as f64 / reps as f64;
        let se = (32.0f64 * 0.25).sqrt() / (reps as f64).sqrt();
        assert!((mean - 16.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn verify_examples() {
        let r = verify_ldp(&MechanismSpec::binary(eps(1.0)), 100_000, RandomSeed(1)).unwrap();
        assert!(r.passed, "{r:?}");
        let r = verify_ldp(
            &MechanismSpec::new(eps(0.0), LabelSpace::new(["a", "b", "c"]).unwrap()),
            100_000,
            RandomSeed(2),
        )
        .unwrap();
        assert!(r.passed && r.max_log_ratio.abs() < 0.05, "{r:?}");
        let broken = MechanismSpec::with_keep_probability(eps(1.0), LabelSpace::binary(), 0.99).unwrap();
        let r = verify_ldp(&broken, 100_000, RandomSeed(3)).unwrap();
        assert!(!r.passed);
        assert!((r.max_log_ratio - 99f64.ln()).abs() < 0.3, "{r:?}");
    }

    #[test]
    fn verify_errors() {
        let inf = MechanismSpec::binary(PrivacyBudget::Infinite);
        assert_eq!(verify_ldp(&inf, 100_000, RandomSeed(0)), Err(RandomizerError::NotApplicable));
        assert!(matches!(
            verify_ldp(&MechanismSpec::binary(eps(1.0)), 10, RandomSeed(0)),
            Err(RandomizerError::TooFewTrials { .. })
        ));
    }

    #[test]
    fn perturb_set_examples() {
        use crate::demonstrations::TextExample;
        let demos = DemonstrationSet::new(vec![
            TextExample::new("a", Label(0)),
            TextExample::new("b", Label(1)),
            TextExample::new("c", Label(1)),
        ]);
        let mut rng = RandomSeed(0).stream();
        let same = perturb_set(&demos, &MechanismSpec::binary(PrivacyBudget::Infinite), &mut rng).unwrap();
        assert_eq!(same, demos);
        let empty = perturb_set(&DemonstrationSet::default(), &MechanismSpec::binary(eps(0.0)), &mut rng).unwrap();
        assert!(empty.is_empty());
        let noisy = perturb_set(&demos, &MechanismSpec::binary(eps(0.0)), &mut rng).unwrap();
        let texts: Vec<_> = noisy.iter().map(|e| e.text.as_str()).collect();
        assert_eq!(texts, ["a", "b", "c"]);
        let bad = DemonstrationSet::new(vec![TextExample::new("z", Label(4))]);
        assert!(perturb_set(&bad, &MechanismSpec::binary(eps(1.0)), &mut rng).is_err());
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose(&[eps(1.0), eps(2.0)]), PrivacyBudget::Finite(3.0));
        assert_eq!(compose(&[]), PrivacyBudget::Finite(0.0));
        assert_eq!(compose(&[eps(0.5), eps(0.5), PrivacyBudget::Infinite]), PrivacyBudget::Infinite);
    }

    proptest! {
        #[test]
        fn analytic_ratio_and_normalisation(e in 0.0f64..20.0, m in 2usize..12) {
            let mech = MechanismSpec::new(eps(e), LabelSpace::new((0..m).map(|i| i.to_string())).unwrap());
            let total = mech.keep_prob() + (m as f64 - 1.0) * mech.flip_prob_each();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for a in 0..m {
                for b in 0..m {
                    for o in 0..m {
                        let pa = mech.transition(Label(a), Label(o));
                        let pb = mech.transition(Label(b), Label(o));
                        prop_assert!(pa <= e.exp() * pb * (1.0 + 1e-12));
                    }
                }
            }
            prop_assert!((mech.keep_prob() / mech.flip_prob_each() - e.exp()).abs() <= 1e-9 * e.exp());
        }

        #[test]
        fn keep_probability_monotone(e in 0.0f64..15.0, d in 0.01f64..3.0, m in 2usize..10) {
            let lo = keep_probability(eps(e), m).unwrap();
            let hi = keep_probability(eps(e + d), m).unwrap();
            prop_assert!(hi > lo);
            let more = keep_probability(eps(e), m + 1).unwrap();
            prop_assert!(more < lo);
        }

        #[test]
        fn deterministic_per_seed(seed in any::<u64>(), e in 0.0f64..4.0) {
            let mech = MechanismSpec::new(eps(e), LabelSpace::new(["a", "b", "c", "d"]).unwrap());
            let labels: Vec<Label> = (0..50).map(|i| Label(i % 4)).collect();
            let a = perturb_labels(&labels, &mech, &mut RandomSeed(seed).stream()).unwrap();
            let b = perturb_labels(&labels, &mech, &mut RandomSeed(seed).stream()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
