//! Offline evaluation: dataset loading, stratified splits, slot-intent
//! metrics, reply similarity, latency benchmarking and reports.

pub mod bench;
pub mod corrupt;
pub mod dataset;
pub mod export;
pub mod metrics;
pub mod report;
pub mod similarity;
pub mod split;
pub mod synth;

pub use bench::{benchmark_latency, BenchError, BenchResult};
pub use dataset::{load_dataset, ConversationSample, Dataset, DatasetError};
pub use export::{export_training_corpus, training_samples};
pub use metrics::{
    evaluate_slot_intent, AssistantSystem, BaselineSystem, ErrorClass, Evaluation, LlmSystem, MetricsReport,
};
pub use report::{emit_report, ReportFormat};
pub use similarity::{score_semantic_similarity, EmbeddingTable, SimilarityScorer, TokenEmbeddingScorer};
pub use split::{stratified_split, stratified_subset, Allocation, Split, SplitSpec, SplitSummary};
