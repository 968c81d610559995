//! Loading conversation records into evaluation samples.
//!
//! Accepted layouts: a JSON array of records, or JSON Lines with one record
//! per line. A record is either a bare array of `{from, value}` turns or an
//! object with a `conversations` array. Records that are well-formed JSON
//! but unusable (missing turns, unparseable home, gold output that does not
//! validate) are quarantined with a reason rather than failing the load.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::model::RawAction;
use crate::parser::{parse_assistant_output, ParseOutcome};
use crate::prompt::{parse_system_prompt, Role, SystemContext, Turn};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation at record {index}: {message}")]
    SchemaViolation { index: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "class", content = "detail")]
pub enum QuarantineReason {
    SchemaViolation(String),
    BadSystemPrompt(String),
    /// Gold assistant turn failed the same pipeline model outputs go
    /// through; holds the outcome class.
    GoldUnparseable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quarantined {
    pub index: usize,
    pub reason: QuarantineReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversationSample {
    /// Position of the record in its source file.
    pub index: usize,
    pub system_text: String,
    pub user_text: String,
    /// Full gold assistant turn, reply plus fenced action.
    pub assistant_text: String,
    /// Gold reply with the action block removed.
    pub gold_response: String,
    pub gold_action: RawAction,
    pub class_label: String,
    pub context: SystemContext,
    /// Action blocks after the first; nonzero marks a multi-intent record.
    pub extra_actions: usize,
}

impl ConversationSample {
    pub fn is_multi_intent(&self) -> bool {
        self.extra_actions > 0
    }

    pub fn turns(&self) -> Vec<Turn> {
        vec![
            Turn {
                from: Role::System,
                value: self.system_text.clone(),
            },
            Turn {
                from: Role::User,
                value: self.user_text.clone(),
            },
            Turn {
                from: Role::Assistant,
                value: self.assistant_text.clone(),
            },
        ]
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<ConversationSample>,
    pub quarantined: Vec<Quarantined>,
}

impl Dataset {
    pub fn multi_intent_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_multi_intent()).count()
    }

    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.class_label.clone()).or_default() += 1;
        }
        counts
    }
}

/// Reporting class for a service. The cover open/close/stop services carry
/// a `_cover` suffix in prompts but are reported without it.
pub fn class_label(service: &str) -> String {
    match service.strip_suffix("_cover") {
        Some(base) if base.starts_with("cover.") => base.to_string(),
        _ => service.to_string(),
    }
}

fn role_of(from: &str) -> Option<Role> {
    match from {
        "system" => Some(Role::System),
        "user" | "human" => Some(Role::User),
        "assistant" | "gpt" => Some(Role::Assistant),
        _ => None,
    }
}

fn record_turns(record: &Value) -> Result<Vec<(Role, String)>, String> {
    let turns = match record {
        Value::Array(turns) => turns,
        Value::Object(obj) => match obj.get("conversations") {
            Some(Value::Array(turns)) => turns,
            _ => return Err("object record without a `conversations` array".into()),
        },
        _ => return Err("record is neither a turn array nor an object".into()),
    };
    turns
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let from = t
                .get("from")
                .and_then(Value::as_str)
                .ok_or(format!("turn {i} has no `from`"))?;
            let value = t
                .get("value")
                .and_then(Value::as_str)
                .ok_or(format!("turn {i} has no `value`"))?;
            let role = role_of(from).ok_or(format!("turn {i} has unknown role `{from}`"))?;
            Ok((role, value.to_string()))
        })
        .collect()
}

/// Turns one record into a sample, or explains why it cannot be used.
pub fn sample_from_record(index: usize, record: &Value) -> Result<ConversationSample, QuarantineReason> {
    let turns = record_turns(record).map_err(QuarantineReason::SchemaViolation)?;
    let find = |role: Role| turns.iter().find(|(r, _)| *r == role).map(|(_, v)| v.clone());
    let missing = |what: &str| QuarantineReason::SchemaViolation(format!("missing {what} turn"));
    let system_text = find(Role::System).ok_or_else(|| missing("system"))?;
    let user_text = find(Role::User).ok_or_else(|| missing("user"))?;
    let assistant_text = find(Role::Assistant).ok_or_else(|| missing("assistant"))?;
    let context = parse_system_prompt(&system_text).map_err(|e| QuarantineReason::BadSystemPrompt(e.to_string()))?;
    let gold = parse_assistant_output(&assistant_text, &context.catalog, &context.registry);
    let gold_action = match (&gold.outcome, gold.raw_action) {
        (ParseOutcome::Ok, Some(raw)) => raw,
        (outcome, _) => return Err(QuarantineReason::GoldUnparseable(outcome.class_name().to_string())),
    };
    Ok(ConversationSample {
        index,
        system_text,
        user_text,
        class_label: class_label(&gold_action.service),
        gold_response: gold.response_text,
        gold_action,
        assistant_text,
        context,
        extra_actions: gold.diagnostics.ignored_blocks,
    })
}

/// Builds a dataset from already-decoded records.
pub fn dataset_from_records(records: &[Value]) -> Dataset {
    let results: Vec<_> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| (i, sample_from_record(i, r)))
        .collect();
    let mut data = Dataset::default();
    for (index, result) in results {
        match result {
            Ok(sample) => data.samples.push(sample),
            Err(reason) => data.quarantined.push(Quarantined { index, reason }),
        }
    }
    data
}

/// Splits file contents into records. Structural problems in the file
/// itself (not valid JSON, top level is not an array) are errors.
pub fn decode_records(text: &str) -> Result<Vec<Value>, DatasetError> {
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if trimmed.starts_with('[') {
        // A whole-file array, unless this is JSON Lines whose first record
        // happens to be a bare turn array.
        if let Ok(Value::Array(records)) = serde_json::from_str::<Value>(text) {
            let is_single_record = records.first().is_some_and(|r| r.get("from").is_some());
            if !is_single_record {
                return Ok(records);
            }
        }
    }
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .enumerate()
        .map(|(index, (lineno, line))| {
            serde_json::from_str(line).map_err(|e| DatasetError::SchemaViolation {
                index,
                message: format!("line {}: {e}", lineno + 1),
            })
        })
        .collect()
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(dataset_from_records(&decode_records(&text)?))
}

/// Writes samples back in the whole-file array layout.
pub fn write_records(path: &Path, records: &[Vec<Turn>]) -> std::io::Result<()> {
    let json = serde_json::to_string(records).map_err(std::io::Error::other)?;
    std::fs::write(path, json)
}
