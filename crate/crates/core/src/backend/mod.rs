//! Model backends and the single-query classification pipeline.
//!
//! The mock backend embeds text into hashed bag-of-words features and answers
//! with the implicit-gradient-step simulator from [`crate::icl`]. The remote
//! backend renders the prompt and asks a chat-completion endpoint.

mod mock;
#[cfg(feature = "remote")]
mod remote;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demonstrations::{DemoError, DemonstrationSet};
use crate::icl::IclError;
use crate::randomizer::Label;

pub use mock::{embed, fit_prior, EtaRule, MockBackend, PriorFit};
#[cfg(feature = "remote")]
pub use remote::{chat_request_body, extract_content, RemoteBackend};

/// Connection settings for a chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable that holds the bearer token.
    #[serde(default = "default_token_env")]
    pub token_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default)]
    pub instruction: Option<String>,
}

fn default_token_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            token_env: default_token_env(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            instruction: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed completion payload: {0}")]
    Payload(String),
    #[error("environment variable {0} holding the API token is not set")]
    MissingToken(String),
    #[error("unparseable response {response:?}")]
    Unparseable { prompt: String, response: String, latency: Duration },
    #[error(transparent)]
    Icl(#[from] IclError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error("{0}")]
    Unsupported(String),
}

impl BackendError {
    /// Whether a fresh attempt could succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport(_) | BackendError::Timeout(_) => true,
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Result of classifying one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionOutcome {
    pub label: Label,
    /// Probability of label 1; only the mock backend exposes it.
    pub probability: Option<f64>,
    /// Prompt sent to a remote model.
    pub prompt: Option<String>,
    pub raw_response: Option<String>,
    pub latency: Duration,
}

pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Predict the label of `query` given `demos`. Whatever labels the
    /// demonstrations carry are used as-is: perturbation, flipping or an empty
    /// set (zero-shot) are the caller's business.
    fn classify(&self, demos: &DemonstrationSet, query: &str) -> Result<PredictionOutcome, BackendError>;

    /// Classify several queries against one demonstration set, with at most
    /// `parallelism` calls in flight. Must agree with [`Backend::classify`]
    /// query by query.
    fn classify_shared(
        &self,
        demos: &DemonstrationSet,
        queries: &[String],
        parallelism: usize,
    ) -> Vec<Result<PredictionOutcome, BackendError>> {
        let jobs: Vec<Job> = queries.iter().map(|q| Job { demos: demos.clone(), query: q.clone() }).collect();
        classify_batch(self, &jobs, parallelism)
    }
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mock" => Ok(BackendKind::Mock),
            "remote" => Ok(BackendKind::Remote),
            other => Err(format!("unknown backend {other:?} (expected mock or remote)")),
        }
    }
}

pub fn classify(backend: &dyn Backend, demos: &DemonstrationSet, query: &str) -> Result<PredictionOutcome, BackendError> {
    backend.classify(demos, query)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub demos: DemonstrationSet,
    pub query: String,
}

/// Classify every job with at most `parallelism` in flight. Results come back
/// in job order; a failing job does not stop the others.
pub fn classify_batch<B: Backend + ?Sized>(
    backend: &B,
    jobs: &[Job],
    parallelism: usize,
) -> Vec<Result<PredictionOutcome, BackendError>> {
    let workers = parallelism.max(1).min(jobs.len().max(1));
    if workers == 1 {
        return jobs.iter().map(|j| backend.classify(&j.demos, &j.query)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<PredictionOutcome, BackendError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = backend.classify(&job.demos, &job.query);
                slots.lock().expect("result slots poisoned")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every job produces a result"))
        .collect()
}
