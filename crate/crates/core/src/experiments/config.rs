use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::backend::{BackendKind, EtaRule, RemoteConfig};
use crate::randomizer::PrivacyBudget;
use crate::synthetic::SyntheticConfig;

/// Settings of the numerical simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    /// Embedding dimension.
    pub dim: usize,
    /// Gradient steps of the prior fit on the pretrain split.
    pub prior_steps: usize,
    pub prior_learning_rate: f64,
    pub eta: EtaRule,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig { dim: 512, prior_steps: 1, prior_learning_rate: 0.6, eta: EtaRule::default() }
    }
}

/// Exactly one backend kind; the table's `kind` key selects it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Mock(MockConfig),
    Remote(RemoteConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock(MockConfig::default())
    }
}

impl BackendConfig {
    pub fn kind(&self) -> BackendKind {
        match self {
            BackendConfig::Mock(_) => BackendKind::Mock,
            BackendConfig::Remote(_) => BackendKind::Remote,
        }
    }
}

/// Labelled text files on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileData {
    /// Demonstration pool and estimation dataset.
    pub train: PathBuf,
    /// Test and seed-tuning pool.
    pub validation: PathBuf,
    /// Split the mock prior is fitted on; defaults to `train`.
    #[serde(default)]
    pub pretrain: Option<PathBuf>,
    /// Label names in index order; index 1 is the positive class.
    pub labels: Vec<String>,
    #[serde(default = "default_text_field")]
    pub text_field: String,
    #[serde(default = "default_label_field")]
    pub label_field: String,
    /// Prompt template (TOML); defaults to plain `Input:`/`Output:` framing.
    #[serde(default)]
    pub template: Option<PathBuf>,
}

fn default_text_field() -> String {
    "text".into()
}
fn default_label_field() -> String {
    "label".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataConfig {
    Synthetic {
        #[serde(default)]
        synthetic: SyntheticConfig,
    },
    Files(FileData),
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic { synthetic: SyntheticConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    /// Number of queries.
    pub r: usize,
    /// Number of seeds, derived from the master seed.
    pub seeds: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig { r: 200, seeds: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiaConfig {
    pub n_grid: Vec<usize>,
    pub instances: usize,
}

impl Default for MiaConfig {
    fn default() -> Self {
        MiaConfig { n_grid: vec![4, 8, 16, 32], instances: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: String,
    pub data: DataConfig,
    pub backend: BackendConfig,
    pub epsilons: Vec<PrivacyBudget>,
    /// Demonstrations per prompt.
    pub n: usize,
    pub test_size: usize,
    pub runs: usize,
    /// Master seed; every random choice derives from it.
    pub seed: u64,
    pub parallelism: usize,
    pub ablation_n: Vec<usize>,
    pub tune_candidates: Vec<u64>,
    pub estimation: EstimationConfig,
    pub mia: MiaConfig,
    pub out_dir: PathBuf,
}

pub fn default_grid() -> Vec<PrivacyBudget> {
    [0.0, 0.5, 1.0, 2.0, 3.0, 8.0]
        .into_iter()
        .map(PrivacyBudget::Finite)
        .chain([PrivacyBudget::Infinite])
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: crate::synthetic::TASK_NAME.into(),
            data: DataConfig::default(),
            backend: BackendConfig::default(),
            epsilons: default_grid(),
            n: 32,
            test_size: 150,
            runs: 6,
            seed: 0,
            parallelism: 4,
            ablation_n: vec![16, 32, 64],
            tune_candidates: (0..8).collect(),
            estimation: EstimationConfig::default(),
            mia: MiaConfig::default(),
            out_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(source: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig = toml::from_str(source).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Read a config file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&source)?;
        if let (DataConfig::Files(files), Some(dir)) = (&mut config.data, path.parent()) {
            let resolve = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            resolve(&mut files.train);
            resolve(&mut files.validation);
            files.pretrain.as_mut().map(resolve);
            files.template.as_mut().map(resolve);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.epsilons.is_empty() {
            return bad("the epsilon grid is empty".into());
        }
        if let Some(e) = self.epsilons.iter().find(|e| e.sort_key() < 0.0) {
            return bad(format!("negative epsilon {e}"));
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.test_size == 0 {
            return bad("test_size must be positive".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if let BackendConfig::Mock(m) = &self.backend {
            if m.dim < 2 {
                return bad("mock.dim must be at least 2".into());
            }
        }
        Ok(())
    }

    /// Switch the backend kind. Moving to `remote` needs the remote settings
    /// to be present already.
    pub fn with_backend(mut self, kind: BackendKind) -> Result<Self, ExperimentError> {
        match (kind, &self.backend) {
            (BackendKind::Mock, BackendConfig::Remote(_)) => self.backend = BackendConfig::default(),
            (BackendKind::Remote, BackendConfig::Mock(_)) => {
                return Err(ExperimentError::Config(
                    "--backend remote needs a [backend] table with kind = \"remote\" in the config".into(),
                ))
            }
            _ => {}
        }
        Ok(self)
    }
}
