use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{render_chatml, BackendConfig, BackendError, GenerationRequest, Generator};

/// Body of a completion request to an external runtime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
}

/// Client for a local runtime serving pre-quantized weights over a minimal
/// HTTP completion protocol.
pub struct ExternalBackend {
    agent: ureq::Agent,
    completion_url: String,
    request_timeout: f64,
}

fn map_error(err: ureq::Error, timeout: f64) -> BackendError {
    match err {
        ureq::Error::Timeout(_) => BackendError::Timeout(timeout),
        other => BackendError::BackendUnavailable(other.to_string()),
    }
}

impl ExternalBackend {
    /// Checks the model artifact against the memory budget, then waits for
    /// the runtime to answer on its health path.
    pub fn load(cfg: &BackendConfig) -> Result<Self, BackendError> {
        if let Some(path) = &cfg.model_path {
            let meta = std::fs::metadata(path).map_err(|_| BackendError::ModelNotFound(path.clone()))?;
            if meta.len() > cfg.memory_budget_bytes {
                return Err(BackendError::OutOfMemoryBudget {
                    required: meta.len(),
                    budget: cfg.memory_budget_bytes,
                });
            }
        }
        let endpoint = cfg
            .endpoint
            .as_deref()
            .ok_or_else(|| BackendError::InvalidConfig("external backend needs an endpoint".into()))?
            .trim_end_matches('/');

        let deadline = Instant::now() + Duration::from_secs_f64(cfg.load_timeout_seconds);
        let probe: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.load_timeout_seconds.min(2.0))))
            .http_status_as_error(false)
            .build()
            .into();
        let health_url = format!("{endpoint}{}", cfg.health_path);
        loop {
            match probe.get(&health_url).call() {
                Ok(_) => break,
                Err(e) => {
                    if Instant::now() >= deadline {
                        return Err(BackendError::BackendUnavailable(format!("{health_url}: {e}")));
                    }
                    log::debug!("waiting for runtime at {health_url}: {e}");
                    std::thread::sleep(Duration::from_millis(100));
                }
            }
        }

        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.request_timeout_seconds)))
            .http_status_as_error(true)
            .build()
            .into();
        Ok(ExternalBackend {
            agent,
            completion_url: format!("{endpoint}{}", cfg.completion_path),
            request_timeout: cfg.request_timeout_seconds,
        })
    }
}

impl Generator for ExternalBackend {
    fn id(&self) -> &str {
        "external"
    }

    fn generate_text(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        let body = CompletionRequest {
            prompt: render_chatml(&req.prompt),
            max_new_tokens: req.max_new_tokens,
            temperature: req.temperature,
            seed: req.seed,
        };
        let mut resp = self
            .agent
            .post(&self.completion_url)
            .send_json(&body)
            .map_err(|e| map_error(e, self.request_timeout))?;
        let parsed: CompletionResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| map_error(e, self.request_timeout))?;
        Ok(parsed.text)
    }
}
