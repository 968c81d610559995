//! Generation contract over interchangeable backends.
//!
//! A [`BackendHandle`] wraps a [`Generator`] and enforces the edge
//! constraint of one in-flight request, with further callers served in
//! arrival order. Latency is measured around the generator call only, so
//! queueing time never leaks into per-query numbers.

mod external;
mod scripted;
mod stub;

use std::fmt;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{PromptDocument, Role};
use crate::text::estimate_tokens;

pub use external::ExternalBackend;
pub use scripted::{ScriptEntry, ScriptFile, ScriptedBackend, DEFAULT_UNSCRIPTED_REPLY};
pub use stub::{StubBackend, StubConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("request timed out after {0:.1}s")]
    Timeout(f64),
    #[error("prompt has {tokens} tokens, limit is {limit}")]
    ContextOverflow { tokens: usize, limit: usize },
    #[error("model artifact not found: {0}")]
    ModelNotFound(PathBuf),
    #[error("model needs {required} bytes, budget is {budget}")]
    OutOfMemoryBudget { required: u64, budget: u64 },
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

impl BackendError {
    pub fn class_name(&self) -> &'static str {
        match self {
            BackendError::BackendUnavailable(_) => "BackendUnavailable",
            BackendError::Timeout(_) => "Timeout",
            BackendError::ContextOverflow { .. } => "ContextOverflow",
            BackendError::ModelNotFound(_) => "ModelNotFound",
            BackendError::OutOfMemoryBudget { .. } => "OutOfMemoryBudget",
            BackendError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParameterScale {
    #[serde(rename = "0.5B")]
    HalfBillion,
    #[serde(rename = "1.5B")]
    OneAndHalfBillion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantization {
    #[serde(rename = "16-bit")]
    Bits16,
    #[serde(rename = "8-bit")]
    Bits8,
    #[serde(rename = "4-bit")]
    Bits4,
}

impl fmt::Display for Quantization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantization::Bits16 => "16-bit",
            Quantization::Bits8 => "8-bit",
            Quantization::Bits4 => "4-bit",
        })
    }
}

/// What is being served. Quantized weights are produced elsewhere; this
/// only records which artifact a run used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_scale: Option<ParameterScale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantization: Option<Quantization>,
}

impl ModelDescriptor {
    pub fn named(name: &str) -> Self {
        ModelDescriptor {
            name: name.to_string(),
            parameter_scale: None,
            quantization: None,
        }
    }

    /// Row label in the style `Qwen2.5-0.5B (8-bit)`.
    pub fn label(&self) -> String {
        match self.quantization {
            Some(q) => format!("{} ({q})", self.name),
            None => self.name.clone(),
        }
    }
}

impl Default for ModelDescriptor {
    fn default() -> Self {
        ModelDescriptor::named("scripted")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Stub,
    External,
}

fn default_threads() -> usize {
    4
}
fn default_load_timeout() -> f64 {
    60.0
}
fn default_request_timeout() -> f64 {
    120.0
}
fn default_max_context() -> usize {
    2048
}
fn default_memory_budget() -> u64 {
    8 * 1024 * 1024 * 1024
}
fn default_completion_path() -> String {
    "/completion".into()
}
fn default_health_path() -> String {
    "/health".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub model: ModelDescriptor,
    #[serde(default = "default_threads")]
    pub worker_threads: usize,
    #[serde(default = "default_load_timeout")]
    pub load_timeout_seconds: f64,
    #[serde(default = "default_request_timeout")]
    pub request_timeout_seconds: f64,
    #[serde(default = "default_max_context")]
    pub max_context_tokens: usize,
    #[serde(default = "default_memory_budget")]
    pub memory_budget_bytes: u64,
    /// Base URL of an external runtime, e.g. `http://127.0.0.1:8081`.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_completion_path")]
    pub completion_path: String,
    #[serde(default = "default_health_path")]
    pub health_path: String,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    /// Scripted/stub replies (see [`ScriptFile`]).
    #[serde(default)]
    pub script_path: Option<PathBuf>,
    #[serde(default)]
    pub stub: StubConfig,
}

impl BackendConfig {
    pub fn new(kind: BackendKind) -> Self {
        BackendConfig {
            kind,
            model: ModelDescriptor::named(match kind {
                BackendKind::Scripted => "scripted",
                BackendKind::Stub => "stub",
                BackendKind::External => "external",
            }),
            worker_threads: default_threads(),
            load_timeout_seconds: default_load_timeout(),
            request_timeout_seconds: default_request_timeout(),
            max_context_tokens: default_max_context(),
            memory_budget_bytes: default_memory_budget(),
            endpoint: None,
            completion_path: default_completion_path(),
            health_path: default_health_path(),
            model_path: None,
            script_path: None,
            stub: StubConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.worker_threads == 0 {
            return Err(BackendError::InvalidConfig("worker_threads must be at least 1".into()));
        }
        if !(self.load_timeout_seconds > 0.0 && self.request_timeout_seconds > 0.0) {
            return Err(BackendError::InvalidConfig("timeouts must be positive".into()));
        }
        if self.kind == BackendKind::External && self.endpoint.is_none() {
            return Err(BackendError::InvalidConfig("external backend needs an endpoint".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: PromptDocument,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl GenerationRequest {
    /// Greedy decoding, 256 new tokens.
    pub fn new(prompt: PromptDocument) -> Self {
        GenerationRequest {
            prompt,
            max_new_tokens: 256,
            temperature: 0.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub latency_seconds: f64,
    pub backend_id: String,
    pub model: ModelDescriptor,
}

/// Renders a prompt document with the ChatML markers used by Qwen chat
/// models, ending with an open assistant turn.
pub fn render_chatml(prompt: &PromptDocument) -> String {
    let mut out = String::new();
    for turn in &prompt.turns {
        let role = match turn.from {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        out.push_str("<|im_start|>");
        out.push_str(role);
        out.push('\n');
        out.push_str(&turn.value);
        out.push_str("<|im_end|>\n");
    }
    out.push_str("<|im_start|>assistant\n");
    out
}

pub trait Generator: Send + Sync {
    fn id(&self) -> &str;

    fn generate_text(&self, req: &GenerationRequest) -> Result<String, BackendError>;

    /// Safe to call concurrently without the single-flight queue.
    fn reentrant(&self) -> bool {
        false
    }
}

/// Ticket lock: callers are admitted strictly in arrival order.
#[derive(Default)]
struct FifoGate {
    tickets: Mutex<(u64, u64)>,
    turn: Condvar,
}

struct Permit<'a>(&'a FifoGate);

impl FifoGate {
    fn acquire(&self) -> Permit<'_> {
        let mut guard = self.tickets.lock().unwrap_or_else(|p| p.into_inner());
        let mine = guard.0;
        guard.0 += 1;
        while guard.1 != mine {
            guard = self.turn.wait(guard).unwrap_or_else(|p| p.into_inner());
        }
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut guard = self.0.tickets.lock().unwrap_or_else(|p| p.into_inner());
        guard.1 += 1;
        self.0.turn.notify_all();
    }
}

pub struct BackendHandle {
    generator: Box<dyn Generator>,
    config: BackendConfig,
    gate: FifoGate,
}

impl fmt::Debug for BackendHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendHandle")
            .field("id", &self.generator.id())
            .field("config", &self.config)
            .finish()
    }
}

impl BackendHandle {
    pub fn new(generator: Box<dyn Generator>, config: BackendConfig) -> Self {
        BackendHandle {
            generator,
            config,
            gate: FifoGate::default(),
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn descriptor(&self) -> &ModelDescriptor {
        &self.config.model
    }

    pub fn reentrant(&self) -> bool {
        self.generator.reentrant()
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        let tokens = estimate_tokens(&render_chatml(&req.prompt));
        if tokens > self.config.max_context_tokens {
            return Err(BackendError::ContextOverflow {
                tokens,
                limit: self.config.max_context_tokens,
            });
        }
        let _permit = (!self.generator.reentrant()).then(|| self.gate.acquire());
        let start = Instant::now();
        let text = self.generator.generate_text(req)?;
        let latency_seconds = start.elapsed().as_secs_f64();
        Ok(GenerationResult {
            text,
            latency_seconds,
            backend_id: self.generator.id().to_string(),
            model: self.config.model.clone(),
        })
    }
}

/// Initializes the configured backend and reports how long that took,
/// separately from any per-query latency.
pub fn load_backend(cfg: &BackendConfig) -> Result<(BackendHandle, f64), BackendError> {
    cfg.validate()?;
    let start = Instant::now();
    let script = match &cfg.script_path {
        Some(path) => ScriptedBackend::from_file(path)?,
        None => ScriptedBackend::default(),
    };
    let generator: Box<dyn Generator> = match cfg.kind {
        BackendKind::Scripted => Box::new(script),
        BackendKind::Stub => Box::new(StubBackend::load(cfg.stub.clone(), cfg.worker_threads, script)),
        BackendKind::External => Box::new(ExternalBackend::load(cfg)?),
    };
    let load_time = start.elapsed().as_secs_f64();
    Ok((BackendHandle::new(generator, cfg.clone()), load_time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, REFERENCE_ASSISTANT, REFERENCE_USER};
    use crate::prompt::render_chat;
    use std::sync::Arc;
    use std::time::Duration;

    fn reference_request() -> GenerationRequest {
        GenerationRequest::new(render_chat(&fixtures::default_context(), REFERENCE_USER).unwrap())
    }

    #[test]
    fn scripted_returns_gold_reply() {
        let mut script = ScriptedBackend::default();
        script.insert_utterance(REFERENCE_USER, REFERENCE_ASSISTANT);
        let handle = BackendHandle::new(Box::new(script), BackendConfig::new(BackendKind::Scripted));
        let res = handle.generate(&reference_request()).unwrap();
        assert_eq!(res.text, REFERENCE_ASSISTANT);
        assert!(res.latency_seconds < 0.01);
        assert_eq!(res.backend_id, "scripted");
    }

    #[test]
    fn scripted_load_is_fast() {
        let (_, load) = load_backend(&BackendConfig::new(BackendKind::Scripted)).unwrap();
        assert!(load < 0.1);
    }

    #[test]
    fn context_overflow() {
        let mut cfg = BackendConfig::new(BackendKind::Scripted);
        cfg.max_context_tokens = 2048;
        let (handle, _) = load_backend(&cfg).unwrap();
        let long = "word ".repeat(2100);
        let req = GenerationRequest::new(render_chat(&fixtures::default_context(), &long).unwrap());
        assert!(matches!(
            handle.generate(&req),
            Err(BackendError::ContextOverflow { limit: 2048, .. })
        ));
        assert!(handle.generate(&reference_request()).is_ok());
    }

    #[test]
    fn rejects_zero_threads() {
        let mut cfg = BackendConfig::new(BackendKind::Stub);
        cfg.worker_threads = 0;
        assert!(matches!(load_backend(&cfg), Err(BackendError::InvalidConfig(_))));
    }

    #[test]
    fn stub_load_delay_is_reported() {
        let mut cfg = BackendConfig::new(BackendKind::Stub);
        cfg.stub.load_delay_seconds = 0.3;
        let (_, load) = load_backend(&cfg).unwrap();
        assert!((0.3..0.5).contains(&load), "{load}");
    }

    #[test]
    fn stub_latency_tracks_delay() {
        for delay in [0.05, 0.5, 2.0] {
            let mut cfg = BackendConfig::new(BackendKind::Stub);
            cfg.stub.delay_seconds = delay;
            let (handle, _) = load_backend(&cfg).unwrap();
            let res = handle.generate(&reference_request()).unwrap();
            assert!(
                res.latency_seconds >= delay && res.latency_seconds <= delay + 0.02,
                "delay {delay}: {}",
                res.latency_seconds
            );
        }
    }

    #[test]
    fn concurrent_callers_are_serialized_in_order() {
        let mut cfg = BackendConfig::new(BackendKind::Stub);
        cfg.stub.delay_seconds = 0.1;
        let (handle, _) = load_backend(&cfg).unwrap();
        let handle = Arc::new(handle);
        let order = Arc::new(Mutex::new(Vec::new()));
        let start = Instant::now();
        let workers: Vec<_> = (0..4)
            .map(|i| {
                let handle = Arc::clone(&handle);
                let order = Arc::clone(&order);
                // Stagger arrivals so the expected admission order is known.
                std::thread::sleep(Duration::from_millis(15));
                std::thread::spawn(move || {
                    handle.generate(&reference_request()).unwrap();
                    order.lock().unwrap().push(i);
                })
            })
            .collect();
        for w in workers {
            w.join().unwrap();
        }
        let elapsed = start.elapsed().as_secs_f64();
        assert!(elapsed >= 0.4, "{elapsed}");
        assert!(elapsed < 0.6, "{elapsed}");
        assert_eq!(*order.lock().unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn scripted_is_pure() {
        let mut script = ScriptedBackend::default();
        script.insert_utterance(REFERENCE_USER, REFERENCE_ASSISTANT);
        let handle = Arc::new(BackendHandle::new(
            Box::new(script),
            BackendConfig::new(BackendKind::Scripted),
        ));
        let texts: Vec<String> = (0..8)
            .map(|_| {
                let h = Arc::clone(&handle);
                std::thread::spawn(move || h.generate(&reference_request()).unwrap().text)
            })
            .map(|t| t.join().unwrap())
            .collect();
        assert!(texts.iter().all(|t| t == REFERENCE_ASSISTANT));
    }

    #[test]
    fn chatml_layout() {
        let doc = PromptDocument::single_turn("S", "U");
        assert_eq!(
            render_chatml(&doc),
            "<|im_start|>system\nS<|im_end|>\n<|im_start|>user\nU<|im_end|>\n<|im_start|>assistant\n"
        );
    }

    #[test]
    fn descriptor_label_and_config_parsing() {
        let cfg: BackendConfig = serde_json::from_str(
            r#"{"kind": "external", "endpoint": "http://127.0.0.1:1",
                "model": {"name": "Qwen2.5-0.5B", "parameter_scale": "0.5B", "quantization": "8-bit"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.model.label(), "Qwen2.5-0.5B (8-bit)");
        assert_eq!(cfg.worker_threads, 4);
        assert_eq!(cfg.max_context_tokens, 2048);
        assert_eq!(cfg.memory_budget_bytes, 8 * 1024 * 1024 * 1024);
    }
}
