//! Per-query latency measurement. The backend is loaded once (its load time
//! reported separately), warmed up with a few queries, then queried
//! sequentially; statistics cover only the time spent inside generation.

use thiserror::Error;

use super::dataset::ConversationSample;
use super::metrics::{mean_std, LatencyStats};
use crate::backend::{load_backend, BackendConfig, BackendError, GenerationRequest};
use crate::prompt::PromptDocument;

pub const WARMUP_QUERIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("{requested} samples requested, only {available} available")]
    InsufficientSamples { requested: usize, available: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub stats: LatencyStats,
    pub per_query_seconds: Vec<f64>,
}

fn request(sample: &ConversationSample) -> GenerationRequest {
    GenerationRequest::new(PromptDocument::single_turn(&sample.system_text, &sample.user_text))
}

/// Measures the first `sample_count` samples under `config`, with the
/// worker thread count given by the config.
pub fn benchmark_latency(
    config: &BackendConfig,
    samples: &[ConversationSample],
    sample_count: usize,
) -> Result<BenchResult, BenchError> {
    if sample_count == 0 {
        return Err(BenchError::NoSamples);
    }
    if sample_count > samples.len() {
        return Err(BenchError::InsufficientSamples {
            requested: sample_count,
            available: samples.len(),
        });
    }
    let (handle, load_seconds) = load_backend(config)?;
    for sample in samples.iter().cycle().take(WARMUP_QUERIES) {
        handle.generate(&request(sample))?;
    }
    let per_query_seconds = samples[..sample_count]
        .iter()
        .map(|s| handle.generate(&request(s)).map(|r| r.latency_seconds))
        .collect::<Result<Vec<_>, _>>()?;
    let (mean_seconds, std_seconds) = mean_std(&per_query_seconds);
    Ok(BenchResult {
        stats: LatencyStats {
            mean_seconds,
            std_seconds,
            samples: sample_count,
            worker_threads: config.worker_threads,
            load_seconds,
        },
        per_query_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendKind;
    use crate::eval::dataset::sample_from_record;
    use crate::fixtures;

    fn samples(n: usize) -> Vec<ConversationSample> {
        let s = sample_from_record(0, &serde_json::from_str(&fixtures::reference_record_json()).unwrap()).unwrap();
        vec![s; n]
    }

    #[test]
    fn degenerate_counts() {
        let cfg = BackendConfig::new(BackendKind::Scripted);
        assert_eq!(
            benchmark_latency(&cfg, &samples(2), 0).unwrap_err(),
            BenchError::NoSamples
        );
        assert_eq!(
            benchmark_latency(&cfg, &samples(2), 3).unwrap_err(),
            BenchError::InsufficientSamples {
                requested: 3,
                available: 2
            }
        );
    }

    #[test]
    fn stub_delay_is_recovered() {
        let mut cfg = BackendConfig::new(BackendKind::Stub);
        cfg.stub.delay_seconds = 0.05;
        cfg.stub.load_delay_seconds = 0.1;
        let r = benchmark_latency(&cfg, &samples(4), 4).unwrap();
        assert_eq!(r.per_query_seconds.len(), 4);
        assert!((r.stats.mean_seconds - 0.05).abs() < 0.05 * 0.1, "{:?}", r.stats);
        assert!(r.stats.load_seconds >= 0.1);
        assert_eq!(r.stats.worker_threads, 4);
    }

    #[test]
    fn backend_failure_is_surfaced() {
        let mut cfg = BackendConfig::new(BackendKind::Scripted);
        cfg.max_context_tokens = 10;
        assert!(matches!(
            benchmark_latency(&cfg, &samples(1), 1),
            Err(BenchError::Backend(BackendError::ContextOverflow { .. }))
        ));
    }
}
