use std::time::{Duration, Instant};

use serde::Serialize;

use super::{Backend, BackendError, BackendKind, PredictionOutcome, RemoteConfig};
use crate::demonstrations::{parse_label, render_prompt, DemonstrationSet, PromptTemplate};

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: u8,
}

/// JSON body of a single-turn, temperature-0 chat request. Field order is
/// fixed, so equal inputs give byte-identical bodies.
pub fn chat_request_body(model: &str, prompt: &str) -> String {
    serde_json::to_string(&ChatRequest {
        model,
        messages: [ChatMessage { role: "user", content: prompt }],
        temperature: 0,
    })
    .expect("request serialises")
}

/// Text of `choices[0].message.content`.
pub fn extract_content(payload: &str) -> Result<String, BackendError> {
    let value: serde_json::Value =
        serde_json::from_str(payload).map_err(|e| BackendError::Payload(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(serde_json::Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| BackendError::Payload("missing choices[0].message.content".into()))
}

pub struct RemoteBackend {
    config: RemoteConfig,
    template: PromptTemplate,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig, template: PromptTemplate) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend { config, template, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn token(&self) -> Result<String, BackendError> {
        std::env::var(&self.config.token_env).map_err(|_| BackendError::MissingToken(self.config.token_env.clone()))
    }

    fn send_once(&self, body: &str, token: &str) -> Result<String, BackendError> {
        let response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {token}"))
            .header("Content-Type", "application/json")
            .send(body);
        let mut response = match response {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => {
                return Err(BackendError::Timeout(Duration::from_secs_f64(self.config.timeout_secs)))
            }
            Err(e) => return Err(BackendError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Http { status, body: text });
        }
        extract_content(&text)
    }

    /// POST with exponential backoff on transient failures.
    pub fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let token = self.token()?;
        let body = chat_request_body(&self.config.model, prompt);
        let mut attempt = 0;
        loop {
            match self.send_once(&body, &token) {
                Err(e) if e.is_transient() && attempt < self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

impl Backend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn classify(&self, demos: &DemonstrationSet, query: &str) -> Result<PredictionOutcome, BackendError> {
        let prompt = render_prompt(&self.template, demos, query, self.config.instruction.as_deref())?;
        let started = Instant::now();
        let response = self.complete(&prompt)?;
        let latency = started.elapsed();
        match parse_label(&response, &self.template) {
            Ok(label) => Ok(PredictionOutcome {
                label,
                probability: None,
                prompt: Some(prompt),
                raw_response: Some(response),
                latency,
            }),
            Err(_) => Err(BackendError::Unparseable { prompt, response, latency }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_body_is_stable() {
        let a = chat_request_body("gpt-3.5-turbo", "Input: hi\nOutput: ");
        assert_eq!(
            a,
            r#"{"model":"gpt-3.5-turbo","messages":[{"role":"user","content":"Input: hi\nOutput: "}],"temperature":0}"#
        );
        assert_eq!(a, chat_request_body("gpt-3.5-turbo", "Input: hi\nOutput: "));
    }

    #[test]
    fn content_extraction() {
        let ok = r#"{"choices":[{"index":0,"message":{"role":"assistant","content":" Positive"}}]}"#;
        assert_eq!(extract_content(ok).unwrap(), " Positive");
        assert!(matches!(extract_content("{\"choices\":[]}"), Err(BackendError::Payload(_))));
        assert!(matches!(extract_content("not json"), Err(BackendError::Payload(_))));
    }

    #[test]
    fn transient_classification() {
        assert!(BackendError::Http { status: 503, body: String::new() }.is_transient());
        assert!(BackendError::Http { status: 429, body: String::new() }.is_transient());
        assert!(!BackendError::Http { status: 401, body: String::new() }.is_transient());
        assert!(!BackendError::MissingToken("X".into()).is_transient());
    }
}
