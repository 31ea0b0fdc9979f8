//! Tier-2 semantic equivalence: asks a multimodal judge whether two
//! screenshots differ in a meaningful way.
//!
//! The wire contract is a multipart HTTP POST with a fixed prompt and both
//! PNGs; the response is strict JSON (`equivalent`, `explanation`,
//! `confidence`) and any missing field is a protocol error, never defaulted.
//! Note the polarity: `"equivalent": true` means the differences are NOT
//! meaningful, i.e. the states are the same logical state.
//!
//! A deterministic mock backs tests and offline runs: it compares observation
//! labels after stripping a cosmetic suffix.

use crate::trace::StateObservation;
use serde::{Deserialize, Serialize};
use std::sync::{Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;

/// The prompt sent verbatim as the "prompt" multipart field.
pub const EQUIVALENCE_PROMPT: &str = include_str!("judge_prompt.txt");

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge transport failure: {0}")]
    Transport(String),
    #[error("judge returned a non-parsable response: {0}")]
    Unparsable(String),
    #[error("judge response violates the schema: {0}")]
    Schema(String),
    #[error("judge config invalid: {0}")]
    Config(String),
    #[error("failed to read image for judging: {0}")]
    ImageRead(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    High,
    Medium,
    Low,
}

/// A parsed judge response. `equivalent: true` means no meaningful
/// difference was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticJudgment {
    pub equivalent: bool,
    pub explanation: String,
    pub confidence: Confidence,
}

impl SemanticJudgment {
    /// Strict parse of the response schema; a missing or mistyped field is a
    /// schema error.
    pub fn parse(body: &str) -> Result<Self, JudgeError> {
        let value: serde_json::Value =
            serde_json::from_str(body).map_err(|e| JudgeError::Unparsable(e.to_string()))?;
        serde_json::from_value(value).map_err(|e| JudgeError::Schema(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeMode {
    Remote,
    Mock,
}

/// Configuration for the remote judge endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub mode: JudgeMode,
    /// Endpoint URL for remote mode.
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Base delay for exponential backoff between retries.
    pub backoff_base_ms: u64,
    /// Maximum concurrent in-flight requests.
    pub max_in_flight: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            mode: JudgeMode::Mock,
            endpoint: None,
            token_env: None,
            timeout_secs: 60,
            max_retries: 2,
            backoff_base_ms: 1000,
            max_in_flight: 4,
        }
    }
}

impl JudgeConfig {
    /// Remote config from `JUDGE_ENDPOINT` and `JUDGE_TOKEN_VAR`.
    pub fn remote_from_env() -> Result<Self, JudgeError> {
        let endpoint = std::env::var("JUDGE_ENDPOINT")
            .map_err(|_| JudgeError::Config("JUDGE_ENDPOINT is not set".into()))?;
        let token_env = std::env::var("JUDGE_TOKEN_VAR").ok();
        Ok(JudgeConfig {
            mode: JudgeMode::Remote,
            endpoint: Some(endpoint),
            token_env,
            ..JudgeConfig::default()
        })
    }

    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.timeout_secs == 0 {
            return Err(JudgeError::Config("timeout must be positive".into()));
        }
        if self.mode == JudgeMode::Remote && self.endpoint.is_none() {
            return Err(JudgeError::Config("remote mode needs an endpoint".into()));
        }
        Ok(())
    }
}

/// Sends one image pair to the remote judge and parses the reply.
///
/// Retries transport failures with exponential backoff; schema errors are
/// never retried, they indicate the wrong service rather than a flaky one.
pub fn judge_pair(
    a_png: &[u8],
    b_png: &[u8],
    cfg: &JudgeConfig,
) -> Result<SemanticJudgment, JudgeError> {
    cfg.validate()?;
    let endpoint = cfg
        .endpoint
        .as_deref()
        .ok_or_else(|| JudgeError::Config("remote mode needs an endpoint".into()))?;
    let token = cfg
        .token_env
        .as_deref()
        .and_then(|var| std::env::var(var).ok());

    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(cfg.timeout_secs))
        .build()
        .map_err(|e| JudgeError::Transport(e.to_string()))?;

    let mut attempt = 0u32;
    loop {
        match post_pair(&client, endpoint, token.as_deref(), a_png, b_png) {
            Ok(body) => return SemanticJudgment::parse(&body),
            Err(err) => {
                if attempt >= cfg.max_retries {
                    return Err(err);
                }
                let delay = cfg.backoff_base_ms.saturating_mul(1u64 << attempt);
                log::warn!(
                    "judge transport error (attempt {attempt}): {err}; retrying in {delay}ms"
                );
                std::thread::sleep(Duration::from_millis(delay));
                attempt += 1;
            }
        }
    }
}

fn post_pair(
    client: &reqwest::blocking::Client,
    endpoint: &str,
    token: Option<&str>,
    a_png: &[u8],
    b_png: &[u8],
) -> Result<String, JudgeError> {
    let form = reqwest::blocking::multipart::Form::new()
        .text("prompt", EQUIVALENCE_PROMPT)
        .part(
            "image_a",
            reqwest::blocking::multipart::Part::bytes(a_png.to_vec())
                .file_name("image_a.png")
                .mime_str("image/png")
                .map_err(|e| JudgeError::Transport(e.to_string()))?,
        )
        .part(
            "image_b",
            reqwest::blocking::multipart::Part::bytes(b_png.to_vec())
                .file_name("image_b.png")
                .mime_str("image/png")
                .map_err(|e| JudgeError::Transport(e.to_string()))?,
        );

    let mut req = client.post(endpoint).multipart(form);
    if let Some(token) = token {
        req = req.bearer_auth(token);
    }
    let resp = req
        .send()
        .map_err(|e| JudgeError::Transport(e.to_string()))?;
    let status = resp.status();
    let body = resp
        .text()
        .map_err(|e| JudgeError::Transport(e.to_string()))?;
    if !status.is_success() {
        return Err(JudgeError::Transport(format!(
            "endpoint returned {status}: {body}"
        )));
    }
    Ok(body)
}

/// A handle the equivalence classifier calls when Tier 1 is ambiguous.
pub trait SemanticJudge: Send + Sync {
    fn judge(
        &self,
        a: &StateObservation,
        b: &StateObservation,
    ) -> Result<SemanticJudgment, JudgeError>;
}

/// Remote judge: reads both images and performs the multipart exchange,
/// queueing requests beyond the configured in-flight cap.
pub struct RemoteJudge {
    cfg: JudgeConfig,
    slots: Semaphore,
}

impl RemoteJudge {
    pub fn new(cfg: JudgeConfig) -> Result<Self, JudgeError> {
        cfg.validate()?;
        let cap = cfg.max_in_flight.max(1);
        Ok(RemoteJudge {
            cfg,
            slots: Semaphore::new(cap),
        })
    }
}

impl SemanticJudge for RemoteJudge {
    fn judge(
        &self,
        a: &StateObservation,
        b: &StateObservation,
    ) -> Result<SemanticJudgment, JudgeError> {
        let a_png = a
            .image
            .read_bytes()
            .map_err(|e| JudgeError::ImageRead(format!("{}: {e}", a.image.describe())))?;
        let b_png = b
            .image
            .read_bytes()
            .map_err(|e| JudgeError::ImageRead(format!("{}: {e}", b.image.describe())))?;
        let _slot = self.slots.acquire();
        judge_pair(&a_png, &b_png, &self.cfg)
    }
}

/// Deterministic test double: two observations are equivalent iff their
/// labels are equal after stripping everything from the cosmetic separator
/// onwards ("mainwindow#decorA" and "mainwindow#decorB" are equivalent).
/// Unlabeled observations are never equivalent.
#[derive(Debug, Clone)]
pub struct MockJudge {
    pub cosmetic_separator: String,
}

impl Default for MockJudge {
    fn default() -> Self {
        MockJudge {
            cosmetic_separator: "#".into(),
        }
    }
}

impl MockJudge {
    fn core_label<'a>(&self, label: &'a str) -> &'a str {
        match label.split_once(self.cosmetic_separator.as_str()) {
            Some((core, _)) => core,
            None => label,
        }
    }
}

impl SemanticJudge for MockJudge {
    fn judge(
        &self,
        a: &StateObservation,
        b: &StateObservation,
    ) -> Result<SemanticJudgment, JudgeError> {
        match (&a.label, &b.label) {
            (Some(la), Some(lb)) => {
                let ca = self.core_label(la);
                let cb = self.core_label(lb);
                if ca == cb {
                    Ok(SemanticJudgment {
                        equivalent: true,
                        explanation: format!("labels match after cosmetic strip: {ca:?}"),
                        confidence: Confidence::High,
                    })
                } else {
                    Ok(SemanticJudgment {
                        equivalent: false,
                        explanation: format!("labels differ: {ca:?} vs {cb:?}"),
                        confidence: Confidence::High,
                    })
                }
            }
            _ => Ok(SemanticJudgment {
                equivalent: false,
                explanation: "one or both observations carry no label".into(),
                confidence: Confidence::Low,
            }),
        }
    }
}

/// A judge that always fails with a transport error; exercises fallback
/// policies.
pub struct FailingJudge;

impl SemanticJudge for FailingJudge {
    fn judge(
        &self,
        _a: &StateObservation,
        _b: &StateObservation,
    ) -> Result<SemanticJudgment, JudgeError> {
        Err(JudgeError::Transport("judge unavailable".into()))
    }
}

/// Counting semaphore for the in-flight request cap.
struct Semaphore {
    state: Mutex<usize>,
    cv: Condvar,
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            state: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.state.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard(self)
    }
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.state.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}
