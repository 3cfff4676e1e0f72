//! A separable two-class text task for offline runs.
//!
//! Every text carries a few class cue words plus neutral filler. Cue words come
//! from two vocabularies per class: "known" cues also appear in the pretrain
//! split the mock prior is fitted on, "novel" cues never do. Texts built from
//! novel cues are invisible to the prior and can only be resolved from
//! demonstrations.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demonstrations::{Dataset, DemoError, Split, TextExample};
use crate::randomizer::{Label, LabelSpace};
use crate::rng::{RandomSeed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub train_size: usize,
    pub validation_size: usize,
    pub pretrain_size: usize,
    /// Exact share of label 1 in the train and validation splits.
    pub positive_rate: f64,
    /// Known cue words per class.
    pub known_vocab: usize,
    /// Novel cue words per class.
    pub novel_vocab: usize,
    /// Share of train/validation texts built from known cues.
    pub known_text_rate: f64,
    pub cues_per_text: usize,
    pub fillers_per_text: usize,
    pub filler_vocab: usize,
    /// Seed of the generator; independent of the experiment seed so that
    /// runs vary the sampling, not the data.
    pub data_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train_size: 2000,
            validation_size: 600,
            pretrain_size: 400,
            positive_rate: 0.5,
            known_vocab: 6,
            novel_vocab: 2,
            known_text_rate: 0.6,
            cues_per_text: 3,
            fillers_per_text: 3,
            filler_vocab: 300,
            data_seed: 2024,
        }
    }
}

/// The three splits of a generated task.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub pretrain: Dataset,
    pub train: Dataset,
    pub validation: Dataset,
}

pub const TASK_NAME: &str = "synthetic";

/// Label names in index order.
pub const LABELS: [&str; 2] = ["negative", "positive"];

pub fn label_space() -> LabelSpace {
    LabelSpace::new(LABELS).expect("distinct names")
}

fn cue(class: usize, known: bool, i: usize) -> String {
    let polarity = if class == 1 { "pos" } else { "neg" };
    let kind = if known { "k" } else { "n" };
    format!("{kind}{polarity}{i}")
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DemoError> {
        let bad = |m: &str| Err(DemoError::Size(format!("synthetic config: {m}")));
        if !(0.0..=1.0).contains(&self.positive_rate) {
            return bad("positive_rate must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.known_text_rate) {
            return bad("known_text_rate must lie in [0, 1]");
        }
        if self.known_vocab == 0 || self.novel_vocab == 0 || self.cues_per_text == 0 {
            return bad("cue vocabularies and cues_per_text must be positive");
        }
        if self.fillers_per_text > 0 && self.filler_vocab == 0 {
            return bad("filler_vocab must be positive when fillers are used");
        }
        if self.train_size == 0 || self.validation_size == 0 || self.pretrain_size == 0 {
            return bad("split sizes must be positive");
        }
        Ok(())
    }

    fn text(&self, class: usize, known: bool, rng: &mut Stream) -> String {
        let vocab = if known { self.known_vocab } else { self.novel_vocab };
        let mut words: Vec<String> = (0..self.cues_per_text)
            .map(|_| cue(class, known, rng.gen_range(0..vocab)))
            .collect();
        words.extend((0..self.fillers_per_text).map(|_| format!("w{}", rng.gen_range(0..self.filler_vocab))));
        words.shuffle(rng);
        words.join(" ")
    }

    fn split(&self, split: Split, size: usize, rate: f64, known_rate: f64, rng: &mut Stream) -> Result<Dataset, DemoError> {
        let positives = (rate * size as f64).round() as usize;
        let mut classes: Vec<usize> = (0..size).map(|i| usize::from(i < positives)).collect();
        classes.shuffle(rng);
        let examples = classes
            .into_iter()
            .map(|c| {
                let known = rng.gen_bool(known_rate);
                TextExample::new(self.text(c, known, rng), Label(c))
            })
            .collect();
        Dataset::new(TASK_NAME, label_space(), split, examples)
    }

    pub fn generate(&self) -> Result<SyntheticTask, DemoError> {
        self.validate()?;
        let seed = RandomSeed::new(self.data_seed);
        let pretrain = self.split(Split::Pretrain, self.pretrain_size, 0.5, 1.0, &mut seed.derive_str("pretrain").stream())?;
        let train = self.split(
            Split::Train,
            self.train_size,
            self.positive_rate,
            self.known_text_rate,
            &mut seed.derive_str("train").stream(),
        )?;
        let validation = self.split(
            Split::Validation,
            self.validation_size,
            self.positive_rate,
            self.known_text_rate,
            &mut seed.derive_str("validation").stream(),
        )?;
        Ok(SyntheticTask { pretrain, train, validation })
    }
}
