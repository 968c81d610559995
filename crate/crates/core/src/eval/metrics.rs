//! Slot-intent exact match and reply similarity over a test split.
//!
//! Every system, language model or baseline, produces assistant text that
//! goes through the same parse and validate pipeline. A prediction is
//! correct when its service and target device both equal the gold action.
//! Every incorrect prediction is assigned exactly one error class.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::ConversationSample;
use super::similarity::SimilarityScorer;
use crate::backend::{BackendError, BackendHandle, GenerationRequest, ModelDescriptor};
use crate::baseline::{BaselineClassifier, TrainingMetadata};
use crate::model::{RawAction, ValidationError};
use crate::parser::{parse_assistant_output, ParseOutcome};
use crate::prompt::PromptDocument;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorClass {
    NoActionBlock,
    MalformedJson,
    MissingField,
    UnknownService,
    UnknownDevice,
    DomainMismatch,
    WrongService,
    WrongDevice,
    BackendError,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 9] = [
        ErrorClass::NoActionBlock,
        ErrorClass::MalformedJson,
        ErrorClass::MissingField,
        ErrorClass::UnknownService,
        ErrorClass::UnknownDevice,
        ErrorClass::DomainMismatch,
        ErrorClass::WrongService,
        ErrorClass::WrongDevice,
        ErrorClass::BackendError,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Correct,
    /// Service and device match but the parameters did not validate.
    CorrectWithParamError,
    Error(ErrorClass),
}

impl Verdict {
    pub fn is_correct(&self) -> bool {
        !matches!(self, Verdict::Error(_))
    }
}

fn compare(predicted: &RawAction, gold: &RawAction) -> Option<ErrorClass> {
    if predicted.service != gold.service {
        Some(ErrorClass::WrongService)
    } else if predicted.device != gold.device {
        Some(ErrorClass::WrongDevice)
    } else {
        None
    }
}

/// Scores one assistant output against the gold action of `sample`.
pub fn judge(sample: &ConversationSample, output_text: &str) -> (Verdict, String) {
    let out = parse_assistant_output(output_text, &sample.context.catalog, &sample.context.registry);
    let verdict = match &out.outcome {
        ParseOutcome::Ok => {
            let raw = out
                .raw_action
                .as_ref()
                .expect("validated outputs keep their raw action");
            match compare(raw, &sample.gold_action) {
                Some(e) => Verdict::Error(e),
                None => Verdict::Correct,
            }
        }
        ParseOutcome::NoActionBlock => Verdict::Error(ErrorClass::NoActionBlock),
        ParseOutcome::MalformedJson => Verdict::Error(ErrorClass::MalformedJson),
        ParseOutcome::MissingField(_) => Verdict::Error(ErrorClass::MissingField),
        ParseOutcome::Invalid(ValidationError::UnknownService(_)) => Verdict::Error(ErrorClass::UnknownService),
        ParseOutcome::Invalid(ValidationError::UnknownDevice(_)) => Verdict::Error(ErrorClass::UnknownDevice),
        ParseOutcome::Invalid(ValidationError::DomainMismatch { .. }) => Verdict::Error(ErrorClass::DomainMismatch),
        ParseOutcome::Invalid(_) => {
            let raw = out.raw_action.as_ref().expect("validation errors keep the raw action");
            match compare(raw, &sample.gold_action) {
                Some(e) => Verdict::Error(e),
                None => Verdict::CorrectWithParamError,
            }
        }
    };
    (verdict, out.response_text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingSettings {
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl Default for DecodingSettings {
    fn default() -> Self {
        DecodingSettings {
            max_new_tokens: 256,
            temperature: 0.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemReply {
    pub text: String,
    pub latency_seconds: f64,
}

/// Anything that answers a conversation sample with assistant text.
pub trait AssistantSystem: Sync {
    fn label(&self) -> String;

    fn respond(&self, sample: &ConversationSample) -> Result<SystemReply, BackendError>;

    /// Whether replies are free text worth comparing to the gold reply.
    fn generates_replies(&self) -> bool {
        true
    }

    /// Safe to query from several threads at once.
    fn parallel(&self) -> bool {
        false
    }

    fn model(&self) -> Option<ModelDescriptor> {
        None
    }

    fn decoding(&self) -> Option<DecodingSettings> {
        None
    }

    fn classifier(&self) -> Option<TrainingMetadata> {
        None
    }
}

pub struct LlmSystem<'a> {
    pub handle: &'a BackendHandle,
    pub decoding: DecodingSettings,
}

impl<'a> LlmSystem<'a> {
    pub fn new(handle: &'a BackendHandle) -> Self {
        LlmSystem {
            handle,
            decoding: DecodingSettings::default(),
        }
    }
}

impl AssistantSystem for LlmSystem<'_> {
    fn label(&self) -> String {
        self.handle.descriptor().label()
    }

    fn respond(&self, sample: &ConversationSample) -> Result<SystemReply, BackendError> {
        let req = GenerationRequest {
            prompt: PromptDocument::single_turn(&sample.system_text, &sample.user_text),
            max_new_tokens: self.decoding.max_new_tokens,
            temperature: self.decoding.temperature,
            seed: self.decoding.seed,
        };
        let res = self.handle.generate(&req)?;
        Ok(SystemReply {
            text: res.text,
            latency_seconds: res.latency_seconds,
        })
    }

    fn parallel(&self) -> bool {
        self.handle.reentrant()
    }

    fn model(&self) -> Option<ModelDescriptor> {
        Some(self.handle.descriptor().clone())
    }

    fn decoding(&self) -> Option<DecodingSettings> {
        Some(self.decoding.clone())
    }
}

pub const BASELINE_LABEL: &str = "SVC (Baseline)";

pub struct BaselineSystem<'a> {
    pub classifier: &'a BaselineClassifier,
}

impl AssistantSystem for BaselineSystem<'_> {
    fn label(&self) -> String {
        BASELINE_LABEL.to_string()
    }

    fn respond(&self, sample: &ConversationSample) -> Result<SystemReply, BackendError> {
        let start = std::time::Instant::now();
        let p = self
            .classifier
            .predict(&sample.user_text, Some(&sample.context.registry));
        Ok(SystemReply {
            text: p.to_assistant_text(),
            latency_seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn generates_replies(&self) -> bool {
        false
    }

    fn parallel(&self) -> bool {
        true
    }

    fn classifier(&self) -> Option<TrainingMetadata> {
        Some(self.classifier.training.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleResult {
    pub index: usize,
    pub class_label: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub scored: usize,
    /// Samples with an empty reply on either side.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub samples: usize,
    pub worker_threads: usize,
    pub load_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub system: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoding: Option<DecodingSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<TrainingMetadata>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<super::split::SplitSummary>,
    pub total: usize,
    pub correct: usize,
    pub exact_match_accuracy: f64,
    /// Every class is listed, including those with zero count.
    pub errors: BTreeMap<ErrorClass, usize>,
    /// Correct predictions whose parameters failed validation.
    pub param_errors: usize,
    pub per_class_accuracy: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_similarity: Option<SimilarityStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencyStats>,
}

impl MetricsReport {
    pub fn error_fraction(&self, class: ErrorClass) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.errors.get(&class).copied().unwrap_or(0) as f64 / self.total as f64
        }
    }
}

pub struct Evaluation {
    pub report: MetricsReport,
    pub results: Vec<SampleResult>,
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => 0.0,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

fn score_one(
    system: &dyn AssistantSystem,
    scorer: Option<&dyn SimilarityScorer>,
    sample: &ConversationSample,
) -> SampleResult {
    let mut result = SampleResult {
        index: sample.index,
        class_label: sample.class_label.clone(),
        verdict: Verdict::Error(ErrorClass::BackendError),
        similarity: None,
        backend_error: None,
    };
    match system.respond(sample) {
        Ok(reply) => {
            let (verdict, response_text) = judge(sample, &reply.text);
            result.verdict = verdict;
            if let (Some(scorer), true) = (scorer, system.generates_replies()) {
                result.similarity = scorer.score(&response_text, &sample.gold_response).ok().map(|s| s.f1);
            }
        }
        Err(e) => result.backend_error = Some(e.class_name().to_string()),
    }
    result
}

/// Runs `system` over every sample. Results come back in sample order
/// whether or not the system was queried in parallel.
pub fn evaluate_slot_intent(
    system: &dyn AssistantSystem,
    samples: &[ConversationSample],
    scorer: Option<&dyn SimilarityScorer>,
) -> Evaluation {
    let results: Vec<SampleResult> = if system.parallel() {
        samples.par_iter().map(|s| score_one(system, scorer, s)).collect()
    } else {
        samples.iter().map(|s| score_one(system, scorer, s)).collect()
    };
    let report = summarize(system, &results, scorer.is_some() && system.generates_replies());
    Evaluation { report, results }
}

fn summarize(system: &dyn AssistantSystem, results: &[SampleResult], with_similarity: bool) -> MetricsReport {
    let mut errors: BTreeMap<ErrorClass, usize> = ErrorClass::ALL.iter().map(|c| (*c, 0)).collect();
    let mut correct = 0;
    let mut param_errors = 0;
    let mut per_class: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in results {
        let entry = per_class.entry(r.class_label.clone()).or_default();
        entry.1 += 1;
        match r.verdict {
            Verdict::Correct => correct += 1,
            Verdict::CorrectWithParamError => {
                correct += 1;
                param_errors += 1;
            }
            Verdict::Error(class) => *errors.get_mut(&class).expect("all classes present") += 1,
        }
        entry.0 += usize::from(r.verdict.is_correct());
    }
    let total = results.len();
    let semantic_similarity = with_similarity.then(|| {
        let scores: Vec<f64> = results.iter().filter_map(|r| r.similarity).collect();
        let (mean, std) = mean_std(&scores);
        SimilarityStats {
            mean,
            median: median(&scores),
            std,
            scored: scores.len(),
            skipped: total - scores.len(),
        }
    });
    MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        system: system.label(),
        model: system.model(),
        decoding: system.decoding(),
        classifier: system.classifier(),
        split: None,
        total,
        correct,
        exact_match_accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        errors,
        param_errors,
        per_class_accuracy: per_class
            .into_iter()
            .map(|(c, (ok, n))| (c, ok as f64 / n as f64))
            .collect(),
        semantic_similarity,
        latency: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendConfig, BackendKind, ScriptedBackend};
    use crate::eval::dataset::sample_from_record;
    use crate::eval::similarity::TokenEmbeddingScorer;
    use crate::fixtures::{self, REFERENCE_ASSISTANT};

    fn reference() -> ConversationSample {
        sample_from_record(0, &serde_json::from_str(&fixtures::reference_record_json()).unwrap()).unwrap()
    }

    fn verdict(text: &str) -> Verdict {
        judge(&reference(), text).0
    }

    fn block(json: &str) -> String {
        format!("ok\n```homeassistant\n{json}\n```")
    }

    #[test]
    fn error_classes_by_hand() {
        assert_eq!(verdict(REFERENCE_ASSISTANT), Verdict::Correct);
        assert_eq!(verdict("just text"), Verdict::Error(ErrorClass::NoActionBlock));
        assert_eq!(
            verdict(&block("{\"service\": ")),
            Verdict::Error(ErrorClass::MalformedJson)
        );
        assert_eq!(
            verdict(&block(r#"{"target_device": "cover.master_bedroom"}"#)),
            Verdict::Error(ErrorClass::MissingField)
        );
        assert_eq!(
            verdict(&block(
                r#"{"service": "cover.fly", "target_device": "cover.master_bedroom"}"#
            )),
            Verdict::Error(ErrorClass::UnknownService)
        );
        assert_eq!(
            verdict(&block(r#"{"service": "cover.toggle", "target_device": "cover.attic"}"#)),
            Verdict::Error(ErrorClass::UnknownDevice)
        );
        assert_eq!(
            verdict(&block(
                r#"{"service": "switch.toggle", "target_device": "cover.master_bedroom"}"#
            )),
            Verdict::Error(ErrorClass::DomainMismatch)
        );
        assert_eq!(
            verdict(&block(
                r#"{"service": "cover.open_cover", "target_device": "cover.master_bedroom"}"#
            )),
            Verdict::Error(ErrorClass::WrongService)
        );
        // Same service, but the gold action targets another cover.
        let mut other = reference();
        other.gold_action.device = "cover.garage_door".into();
        assert_eq!(
            judge(&other, REFERENCE_ASSISTANT).0,
            Verdict::Error(ErrorClass::WrongDevice)
        );
    }

    #[test]
    fn param_failure_with_right_slots_is_correct() {
        let text = block(r#"{"service": "cover.toggle", "target_device": "cover.master_bedroom", "speed": 3}"#);
        assert_eq!(verdict(&text), Verdict::CorrectWithParamError);
    }

    struct Fixed(Vec<Result<&'static str, BackendError>>);

    impl AssistantSystem for Fixed {
        fn label(&self) -> String {
            "fixed".into()
        }
        fn respond(&self, s: &ConversationSample) -> Result<SystemReply, BackendError> {
            self.0[s.index].clone().map(|t| SystemReply {
                text: t.into(),
                latency_seconds: 0.0,
            })
        }
    }

    #[test]
    fn report_decomposes_exactly() {
        let answers = vec![
            Ok(REFERENCE_ASSISTANT),
            Ok("nothing"),
            Err(BackendError::Timeout(1.0)),
            Ok(REFERENCE_ASSISTANT),
        ];
        let samples: Vec<_> = (0..4)
            .map(|i| ConversationSample {
                index: i,
                ..reference()
            })
            .collect();
        let eval = evaluate_slot_intent(&Fixed(answers), &samples, Some(&TokenEmbeddingScorer::default()));
        let r = &eval.report;
        assert_eq!((r.total, r.correct), (4, 2));
        assert_eq!(r.errors[&ErrorClass::NoActionBlock], 1);
        assert_eq!(r.errors[&ErrorClass::BackendError], 1);
        assert_eq!(r.errors.len(), ErrorClass::ALL.len());
        assert_eq!(r.correct + r.errors.values().sum::<usize>(), r.total);
        let fractions: f64 = ErrorClass::ALL.iter().map(|c| r.error_fraction(*c)).sum();
        assert!((r.exact_match_accuracy + fractions - 1.0).abs() < 1e-12);
        assert_eq!(eval.results[2].backend_error.as_deref(), Some("Timeout"));
        let sim = r.semantic_similarity.as_ref().unwrap();
        assert_eq!((sim.scored, sim.skipped), (3, 1));
        assert!((sim.mean - (1.0 + 1.0 + sim_of("nothing")) / 3.0).abs() < 1e-12);
    }

    fn sim_of(text: &str) -> f64 {
        TokenEmbeddingScorer::default()
            .score(text, fixtures::REFERENCE_RESPONSE_TEXT)
            .unwrap()
            .f1
    }

    #[test]
    fn scripted_llm_replay_is_perfect() {
        let mut script = ScriptedBackend::default();
        script.insert_prompt(
            fixtures::REFERENCE_SYSTEM_PROMPT,
            fixtures::REFERENCE_USER,
            REFERENCE_ASSISTANT,
        );
        let handle = BackendHandle::new(Box::new(script), BackendConfig::new(BackendKind::Scripted));
        let eval = evaluate_slot_intent(&LlmSystem::new(&handle), &[reference()], None);
        assert_eq!(eval.report.exact_match_accuracy, 1.0);
        assert!(eval.report.semantic_similarity.is_none());
        assert_eq!(eval.report.model.as_ref().unwrap().name, "scripted");
    }

    #[test]
    fn mean_std_and_median_by_hand() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }
}
