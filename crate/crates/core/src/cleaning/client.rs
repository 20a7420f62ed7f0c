//! External corrector (LLM) and synthesizer (TTS) clients.
//!
//! Both speak a JSON request/response protocol:
//!
//! ```text
//! request:  {"operation": "correct" | "backfill" | "synthesize", "payload": {...}, "provenance_id": "..."}
//! response: {"ok": true, "result": ...} | {"ok": false, "error": "..."}
//! ```
//!
//! The mocks are deterministic functions of their inputs so the whole
//! pipeline runs offline.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{token_count_for_duration, AudioTokenSpan, Dialogue, Turn, ADAPTER_RATE_HZ};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ClientError {
    #[error("timeout after {0} ms")]
    Timeout(u64),
    #[error("transport: {0}")]
    Transport(String),
    #[error("remote error: {0}")]
    Remote(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

pub trait CorrectorClient: Send + Sync {
    /// Corrected version of `text`, given the dialogue it belongs to.
    fn correct(&self, text: &str, context: &Dialogue, provenance_id: &str) -> Result<String, ClientError>;

    /// Turns to prepend to a truncated dialogue.
    fn backfill(&self, truncated: &Dialogue, provenance_id: &str) -> Result<Vec<Turn>, ClientError>;
}

pub trait SynthClient: Send + Sync {
    fn synthesize(&self, text: &str, speaker_id: &str, provenance_id: &str) -> Result<AudioTokenSpan, ClientError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientRequest {
    pub operation: String,
    pub payload: Value,
    pub provenance_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientResponse {
    pub ok: bool,
    #[serde(default)]
    pub result: Value,
    #[serde(default)]
    pub error: Option<String>,
}

/// What the mock corrector does to text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorrectMode {
    Identity,
    Append(String),
}

/// Deterministic corrector. Fault injection makes the first `fail_calls`
/// calls (or all calls, with `usize::MAX`) time out.
#[derive(Debug)]
pub struct MockCorrector {
    pub mode: CorrectMode,
    /// Returned by `backfill`, cloned per call.
    pub backfill_turns: Vec<Turn>,
    pub fail_calls: usize,
    calls: AtomicUsize,
}

impl MockCorrector {
    pub fn new(mode: CorrectMode) -> Self {
        MockCorrector {
            mode,
            backfill_turns: Vec::new(),
            fail_calls: 0,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn identity() -> Self {
        Self::new(CorrectMode::Identity)
    }

    pub fn with_backfill(mut self, turns: Vec<Turn>) -> Self {
        self.backfill_turns = turns;
        self
    }

    pub fn failing(mut self, calls: usize) -> Self {
        self.fail_calls = calls;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn tick(&self) -> Result<(), ClientError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.fail_calls {
            Err(ClientError::Timeout(0))
        } else {
            Ok(())
        }
    }
}

impl Default for MockCorrector {
    fn default() -> Self {
        Self::identity()
    }
}

impl CorrectorClient for MockCorrector {
    fn correct(&self, text: &str, _context: &Dialogue, _provenance_id: &str) -> Result<String, ClientError> {
        self.tick()?;
        Ok(match &self.mode {
            CorrectMode::Identity => text.to_string(),
            CorrectMode::Append(suffix) => format!("{text}{suffix}"),
        })
    }

    fn backfill(&self, _truncated: &Dialogue, _provenance_id: &str) -> Result<Vec<Turn>, ClientError> {
        self.tick()?;
        Ok(self.backfill_turns.clone())
    }
}

/// Deterministic TTS stand-in: token ids are a hash stream of
/// `(text, speaker_id)`, length follows from 80 ms per character at the
/// adapter rate (at least one token).
#[derive(Debug, Default)]
pub struct MockSynth {
    pub fail_calls: usize,
    pub vocab_size: u32,
    calls: AtomicUsize,
}

impl MockSynth {
    pub const SECONDS_PER_CHAR: f64 = 0.08;

    pub fn new() -> Self {
        MockSynth {
            fail_calls: 0,
            vocab_size: 4096,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn failing(mut self, calls: usize) -> Self {
        self.fail_calls = calls;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl SynthClient for MockSynth {
    fn synthesize(&self, text: &str, speaker_id: &str, _provenance_id: &str) -> Result<AudioTokenSpan, ClientError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.fail_calls {
            return Err(ClientError::Timeout(0));
        }
        let chars = text.chars().count().max(1);
        let n_tokens = token_count_for_duration(chars as f64 * Self::SECONDS_PER_CHAR, ADAPTER_RATE_HZ).max(1);
        let duration_s = n_tokens as f64 / ADAPTER_RATE_HZ;
        let base = derive_seed(0, &format!("{speaker_id}\u{0}{text}"), "mock-synth");
        let vocab = self.vocab_size.max(1) as u64;
        let token_ids = (0..n_tokens as u64)
            .map(|i| (derive_seed(base, &i.to_string(), "tok") % vocab) as u32)
            .collect();
        Ok(AudioTokenSpan {
            token_ids,
            frame_rate_hz: ADAPTER_RATE_HZ,
            duration_s,
        })
    }
}

/// Endpoint settings for HTTP-backed clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub corrector_url: String,
    pub synth_url: String,
    pub timeout_ms: u64,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            corrector_url: "http://127.0.0.1:8700/correct".into(),
            synth_url: "http://127.0.0.1:8701/synthesize".into(),
            timeout_ms: 30_000,
        }
    }
}

/// Corrector and synthesizer over HTTP POST with JSON bodies.
pub struct HttpClient {
    agent: ureq::Agent,
    settings: HttpSettings,
}

impl HttpClient {
    pub fn new(settings: HttpSettings) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(settings.timeout_ms))
            .build();
        HttpClient { agent, settings }
    }

    fn call(&self, url: &str, operation: &str, payload: Value, provenance_id: &str) -> Result<Value, ClientError> {
        let req = ClientRequest {
            operation: operation.to_string(),
            payload,
            provenance_id: provenance_id.to_string(),
        };
        let resp = self.agent.post(url).send_json(&req).map_err(|e| match e {
            ureq::Error::Transport(t) if t.kind() == ureq::ErrorKind::Io => {
                if t.to_string().to_lowercase().contains("timed out") {
                    ClientError::Timeout(self.settings.timeout_ms)
                } else {
                    ClientError::Transport(t.to_string())
                }
            }
            other => ClientError::Transport(other.to_string()),
        })?;
        let body: ClientResponse = resp.into_json().map_err(|e| ClientError::Malformed(e.to_string()))?;
        if body.ok {
            Ok(body.result)
        } else {
            Err(ClientError::Remote(body.error.unwrap_or_else(|| "unspecified".into())))
        }
    }
}

impl CorrectorClient for HttpClient {
    fn correct(&self, text: &str, context: &Dialogue, provenance_id: &str) -> Result<String, ClientError> {
        let v = self.call(
            &self.settings.corrector_url,
            "correct",
            json!({ "text": text, "context": context }),
            provenance_id,
        )?;
        v.as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Malformed("correct: expected a string result".into()))
    }

    fn backfill(&self, truncated: &Dialogue, provenance_id: &str) -> Result<Vec<Turn>, ClientError> {
        let v = self.call(
            &self.settings.corrector_url,
            "backfill",
            json!({ "dialogue": truncated }),
            provenance_id,
        )?;
        serde_json::from_value(v).map_err(|e| ClientError::Malformed(format!("backfill: {e}")))
    }
}

impl SynthClient for HttpClient {
    fn synthesize(&self, text: &str, speaker_id: &str, provenance_id: &str) -> Result<AudioTokenSpan, ClientError> {
        let v = self.call(
            &self.settings.synth_url,
            "synthesize",
            json!({ "text": text, "speaker_id": speaker_id }),
            provenance_id,
        )?;
        let span: AudioTokenSpan =
            serde_json::from_value(v).map_err(|e| ClientError::Malformed(format!("synthesize: {e}")))?;
        if !span.satisfies_duration_bound() {
            return Err(ClientError::Malformed(format!(
                "synthesize: {} tokens inconsistent with {}s at {} Hz",
                span.len(),
                span.duration_s,
                span.frame_rate_hz
            )));
        }
        Ok(span)
    }
}
