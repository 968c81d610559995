use std::hint::black_box;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, GenerationRequest, Generator, ScriptedBackend};

/// Timing behaviour of the stub backend.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StubConfig {
    /// Sleep per request.
    #[serde(default)]
    pub delay_seconds: f64,
    /// Sleep at load time.
    #[serde(default)]
    pub load_delay_seconds: f64,
    /// Total spin iterations per request, split evenly over the worker
    /// threads, so the request is CPU-bound and scales with cores.
    #[serde(default)]
    pub cpu_work_units: u64,
}

/// Stand-in for a real runtime with programmable latency. Replies come from
/// an embedded script.
pub struct StubBackend {
    config: StubConfig,
    threads: usize,
    script: ScriptedBackend,
}

fn spin(iterations: u64, seed: u64) -> u64 {
    let mut x = seed | 1;
    for _ in 0..iterations {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
    }
    x
}

impl StubBackend {
    pub fn load(config: StubConfig, threads: usize, script: ScriptedBackend) -> Self {
        if config.load_delay_seconds > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(config.load_delay_seconds));
        }
        StubBackend {
            config,
            threads: threads.max(1),
            script,
        }
    }

    fn burn(&self) {
        if self.config.cpu_work_units == 0 {
            return;
        }
        let per_thread = self.config.cpu_work_units / self.threads as u64;
        std::thread::scope(|scope| {
            for t in 0..self.threads {
                scope.spawn(move || black_box(spin(black_box(per_thread), t as u64 + 1)));
            }
        });
    }
}

impl Generator for StubBackend {
    fn id(&self) -> &str {
        "stub"
    }

    fn generate_text(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        if self.config.delay_seconds > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(self.config.delay_seconds));
        }
        self.burn();
        self.script.generate_text(req)
    }
}
