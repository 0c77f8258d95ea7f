//! Annotator clients used by concept disambiguation.
//!
//! A client takes the rendered prompt and returns the raw completion text.
//! [`MockAnnotator`] answers deterministically with no network and is the
//! default for tests and fixtures; [`HttpAnnotator`] posts the prompt to a
//! completion endpoint with retries.

use std::sync::Mutex;
use std::time::Duration;

use regex::Regex;
use serde_json::json;

use super::ConstructError;

/// Environment variable holding the HTTP annotator endpoint URL.
pub const ANNOTATOR_URL_VAR: &str = "MMKG_ANNOTATOR_URL";

/// A completion backend for disambiguation prompts.
pub trait AnnotatorClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ConstructError>;
}

/// Deterministic offline annotator: selects the first candidate of every
/// mention and labels it Positive, answering in the delimited block format.
#[derive(Debug, Default, Clone)]
pub struct MockAnnotator;

impl MockAnnotator {
    pub fn new() -> MockAnnotator {
        MockAnnotator
    }
}

impl AnnotatorClient for MockAnnotator {
    fn complete(&self, prompt: &str) -> Result<String, ConstructError> {
        // Candidate lines in the prompt look like:
        //   - "surface": (C0011849, Aspirin, Pharmacologic Substance); ...
        let first_cui = Regex::new(r#"^- ".*?": \((C\d+),"#).unwrap();
        let mut out = String::from("***start***\n");
        for line in prompt.lines() {
            if let Some(caps) = first_cui.captures(line.trim_end()) {
                out.push_str(&format!("({}, Positive)\n", &caps[1]));
            }
        }
        out.push_str("***end***\n");
        Ok(out)
    }
}

/// Test and scripting helper: delegates to a closure.
pub struct FnAnnotator<F>(pub F);

impl<F> AnnotatorClient for FnAnnotator<F>
where
    F: Fn(&str) -> Result<String, ConstructError> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, ConstructError> {
        (self.0)(prompt)
    }
}

/// HTTP annotator: posts `{"model": ..., "prompt": ...}` as JSON and expects
/// a JSON object carrying the completion under `completion` (or `text`).
///
/// Transport failures and 5xx responses are retried with the configured
/// backoff before giving up as unavailable.
pub struct HttpAnnotator {
    endpoint: String,
    model: String,
    backoff: Vec<Duration>,
    client: reqwest::blocking::Client,
    calls: Mutex<usize>,
}

impl HttpAnnotator {
    /// Client with the default schedule: an initial attempt plus three
    /// retries after 1s, 2s, and 4s pauses.
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> HttpAnnotator {
        HttpAnnotator::with_backoff(
            endpoint,
            model,
            vec![Duration::from_secs(1), Duration::from_secs(2), Duration::from_secs(4)],
        )
    }

    /// Client reading its endpoint from [`ANNOTATOR_URL_VAR`].
    pub fn from_env(model: impl Into<String>) -> Result<HttpAnnotator, ConstructError> {
        let endpoint = std::env::var(ANNOTATOR_URL_VAR).map_err(|_| {
            ConstructError::AnnotatorUnavailable(format!("{ANNOTATOR_URL_VAR} is not set"))
        })?;
        Ok(HttpAnnotator::new(endpoint, model))
    }

    /// Custom retry schedule: one pause per retry, so total attempts are
    /// `backoff.len() + 1`.
    pub fn with_backoff(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        backoff: Vec<Duration>,
    ) -> HttpAnnotator {
        HttpAnnotator {
            endpoint: endpoint.into(),
            model: model.into(),
            backoff,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("default TLS-free client"),
            calls: Mutex::new(0),
        }
    }

    /// Total HTTP attempts made, across retries.
    pub fn attempts_made(&self) -> usize {
        *self.calls.lock().unwrap()
    }

    fn attempt(&self, prompt: &str) -> Result<String, String> {
        *self.calls.lock().unwrap() += 1;
        let response = self
            .client
            .post(&self.endpoint)
            .json(&json!({ "model": self.model, "prompt": prompt }))
            .send()
            .map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("endpoint returned {status}"));
        }
        let body: serde_json::Value = response.json().map_err(|e| e.to_string())?;
        body.get("completion")
            .or_else(|| body.get("text"))
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| "response has no completion field".to_string())
    }
}

impl AnnotatorClient for HttpAnnotator {
    fn complete(&self, prompt: &str) -> Result<String, ConstructError> {
        let attempts = self.backoff.len() + 1;
        let mut last_err = String::new();
        for i in 0..attempts {
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err(e) => last_err = e,
            }
            if i < self.backoff.len() {
                std::thread::sleep(self.backoff[i]);
            }
        }
        Err(ConstructError::AnnotatorUnavailable(format!(
            "{attempts} attempts failed; last error: {last_err}"
        )))
    }
}
