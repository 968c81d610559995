//! On-device home assistant pipeline: system-prompt codec, action parsing
//! and validation, a simulated home, pluggable generation backends, a
//! TF-IDF baseline and the evaluation bench.

pub mod backend;
pub mod baseline;
pub mod eval;
pub mod fixtures;
pub mod model;
pub mod parser;
pub mod prompt;
pub mod simulator;
pub mod text;

pub use model::{
    parse_entity_id, validate_action, ActionCall, Device, DeviceRegistry, DeviceState, EntityId, ModelError, RawAction,
    Scalar, ServiceCatalog, ServiceSignature, ValidationError,
};
pub use parser::{parse_assistant_output, AssistantOutput, ParseOutcome};
pub use prompt::{parse_system_prompt, render_chat, render_system_prompt, PromptDocument, SystemContext};
