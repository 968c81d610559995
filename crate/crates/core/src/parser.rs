//! Extraction of the response text and the fenced `homeassistant` action
//! block from raw model output, strict JSON parsing of the block, and
//! validation of the resulting fields.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{validate_action, ActionCall, DeviceRegistry, RawAction, Scalar, ServiceCatalog, ValidationError};

pub const FENCE: &str = "```";
pub const ACTION_INFO_STRING: &str = "homeassistant";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("opening ```homeassistant fence has no closing fence")]
    UnterminatedFence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Service,
    TargetDevice,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Service => "service",
            Field::TargetDevice => "target_device",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionJsonError {
    #[error("malformed action JSON: {0}")]
    MalformedJson(String),
    #[error("action JSON lacks `{0}`")]
    MissingField(Field),
}

/// Result of splitting raw model output around its action block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    pub response_text: String,
    pub block: Option<String>,
    /// Further `homeassistant` blocks after the first; they are not parsed.
    pub extra_blocks: usize,
}

/// Byte offset of the next opening fence at or after `from`, and the offset
/// where its content starts. The info string must be exactly
/// `homeassistant` followed by whitespace or end of input.
fn find_opening(raw: &str, from: usize) -> Option<(usize, usize)> {
    let marker = "```homeassistant";
    let mut cursor = from;
    while let Some(rel) = raw[cursor..].find(marker) {
        let at = cursor + rel;
        let after = at + marker.len();
        match raw[after..].chars().next() {
            None => return Some((at, after)),
            Some(c) if c.is_whitespace() => {
                let content = if c == '\n' { after + 1 } else { after };
                return Some((at, content));
            }
            Some(_) => cursor = after,
        }
    }
    None
}

pub fn extract_action_block(raw: &str) -> Result<Extracted, ExtractError> {
    let Some((open, content)) = find_opening(raw, 0) else {
        return Ok(Extracted {
            response_text: raw.trim().to_string(),
            block: None,
            extra_blocks: 0,
        });
    };
    let close_rel = raw[content..].find(FENCE).ok_or(ExtractError::UnterminatedFence)?;
    let block = raw[content..content + close_rel].to_string();

    let mut outside = vec![&raw[..open]];
    let mut extra_blocks = 0;
    let mut cursor = content + close_rel + FENCE.len();
    while let Some((next_open, next_content)) = find_opening(raw, cursor) {
        outside.push(&raw[cursor..next_open]);
        extra_blocks += 1;
        match raw[next_content..].find(FENCE) {
            Some(rel) => cursor = next_content + rel + FENCE.len(),
            None => {
                cursor = raw.len();
                break;
            }
        }
    }
    outside.push(&raw[cursor..]);

    let response_text = outside
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Extracted {
        response_text,
        block: Some(block),
        extra_blocks,
    })
}

/// A JSON object that refuses duplicate keys, which `serde_json::Value`
/// would silently collapse.
struct StrictObject(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for StrictObject {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ObjectVisitor;

        impl<'de> Visitor<'de> for ObjectVisitor {
            type Value = StrictObject;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<StrictObject, A::Error> {
                let mut entries: Vec<(String, Value)> = Vec::new();
                while let Some((key, value)) = map.next_entry::<String, Value>()? {
                    if entries.iter().any(|(k, _)| *k == key) {
                        return Err(de::Error::custom(format!("duplicate key `{key}`")));
                    }
                    entries.push((key, value));
                }
                Ok(StrictObject(entries))
            }
        }

        deserializer.deserialize_map(ObjectVisitor)
    }
}

/// Strict JSON parse of an action block. `device` is accepted as a synonym
/// of `target_device`; every other key besides `service` is collected as a
/// parameter and checked against the service signature during validation.
pub fn parse_action_json(block: &str) -> Result<RawAction, ActionJsonError> {
    let malformed = |msg: String| ActionJsonError::MalformedJson(msg);
    let StrictObject(entries) = serde_json::from_str(block).map_err(|e| malformed(e.to_string()))?;

    let mut service: Option<String> = None;
    let mut device: Option<String> = None;
    let mut params = BTreeMap::new();
    for (key, value) in entries {
        match key.as_str() {
            "service" | "target_device" | "device" => {
                let Value::String(s) = value else {
                    return Err(malformed(format!("`{key}` must be a string")));
                };
                if key == "service" {
                    service = Some(s);
                } else if let Some(prev) = &device {
                    if *prev != s {
                        return Err(malformed(format!("conflicting device keys `{prev}` and `{s}`")));
                    }
                } else {
                    device = Some(s);
                }
            }
            _ => {
                let scalar = match value {
                    Value::String(s) => Scalar::Text(s),
                    Value::Number(n) => Scalar::Number(
                        n.as_f64()
                            .ok_or_else(|| malformed(format!("`{key}` is out of range")))?,
                    ),
                    _ => return Err(malformed(format!("parameter `{key}` must be a string or number"))),
                };
                params.insert(key, scalar);
            }
        }
    }
    let service = service.ok_or(ActionJsonError::MissingField(Field::Service))?;
    let device = device.ok_or(ActionJsonError::MissingField(Field::TargetDevice))?;
    Ok(RawAction {
        service: service.trim().to_string(),
        device: device.trim().to_string(),
        params,
    })
}

/// How a raw output fared. Ordered by pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", content = "detail")]
pub enum ParseOutcome {
    Ok,
    NoActionBlock,
    MalformedJson,
    MissingField(Field),
    Invalid(ValidationError),
}

impl ParseOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, ParseOutcome::Ok)
    }

    /// Short class name used in reports and fallback reasons.
    pub fn class_name(&self) -> &'static str {
        match self {
            ParseOutcome::Ok => "Ok",
            ParseOutcome::NoActionBlock => "NoActionBlock",
            ParseOutcome::MalformedJson => "MalformedJson",
            ParseOutcome::MissingField(_) => "MissingField",
            ParseOutcome::Invalid(e) => e.class_name(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub ignored_blocks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssistantOutput {
    pub response_text: String,
    pub action: Option<ActionCall>,
    /// Fields as parsed from JSON, present whenever the JSON stage passed,
    /// including when validation rejected them.
    pub raw_action: Option<RawAction>,
    pub outcome: ParseOutcome,
    pub diagnostics: Diagnostics,
}

/// Extract, parse and validate. Never fails: every problem with the model
/// output is encoded in [`AssistantOutput::outcome`].
pub fn parse_assistant_output(raw: &str, catalog: &ServiceCatalog, registry: &DeviceRegistry) -> AssistantOutput {
    let mut out = AssistantOutput {
        response_text: String::new(),
        action: None,
        raw_action: None,
        outcome: ParseOutcome::NoActionBlock,
        diagnostics: Diagnostics::default(),
    };
    let extracted = match extract_action_block(raw) {
        Ok(e) => e,
        Err(e) => {
            // Treat everything before the dangling fence as the reply.
            let cut = raw.find("```homeassistant").unwrap_or(raw.len());
            out.response_text = raw[..cut].trim().to_string();
            out.diagnostics.detail = Some(e.to_string());
            return out;
        }
    };
    out.response_text = extracted.response_text;
    out.diagnostics.ignored_blocks = extracted.extra_blocks;
    let Some(block) = extracted.block else {
        return out;
    };
    let raw_action = match parse_action_json(&block) {
        Ok(r) => r,
        Err(ActionJsonError::MalformedJson(msg)) => {
            out.outcome = ParseOutcome::MalformedJson;
            out.diagnostics.detail = Some(msg);
            return out;
        }
        Err(ActionJsonError::MissingField(field)) => {
            out.outcome = ParseOutcome::MissingField(field);
            return out;
        }
    };
    match validate_action(&raw_action, catalog, registry) {
        Ok(call) => {
            out.action = Some(call);
            out.outcome = ParseOutcome::Ok;
        }
        Err(e) => {
            out.diagnostics.detail = Some(e.to_string());
            out.outcome = ParseOutcome::Invalid(e);
        }
    }
    out.raw_action = Some(raw_action);
    out
}

/// Serializes an action into a fenced block with the given device key.
pub fn render_action_block(action: &RawAction, device_key: &str) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("service".into(), Value::String(action.service.clone()));
    obj.insert(device_key.into(), Value::String(action.device.clone()));
    for (k, v) in &action.params {
        let value = match v {
            Scalar::Number(n) => serde_json::Number::from_f64(*n)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            Scalar::Text(s) => Value::String(s.clone()),
        };
        obj.insert(k.clone(), value);
    }
    format!(
        "```{ACTION_INFO_STRING}\n{}\n```",
        serde_json::to_string_pretty(&Value::Object(obj)).expect("map serializes")
    )
}

/// Response text followed by the fenced action, the dataset's assistant
/// turn layout.
pub fn render_assistant_output(response_text: &str, action: &RawAction) -> String {
    format!(
        "{}\n{}",
        response_text.trim(),
        render_action_block(action, "target_device")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, REFERENCE_ASSISTANT, REFERENCE_RESPONSE_TEXT};
    use proptest::prelude::*;

    #[test]
    fn extracts_reference_block() {
        let ex = extract_action_block(REFERENCE_ASSISTANT).unwrap();
        assert_eq!(ex.response_text, REFERENCE_RESPONSE_TEXT);
        let block = ex.block.unwrap();
        assert!(block.contains("\"service\": \"cover.toggle\""));
        assert!(block.contains("\"target_device\": \"cover.master_bedroom\""));
        assert_eq!(ex.extra_blocks, 0);
    }

    #[test]
    fn no_fence_means_no_block() {
        let ex = extract_action_block("  hello \n").unwrap();
        assert_eq!(ex.response_text, "hello");
        assert_eq!(ex.block, None);
        // A different info string is not an action block.
        let ex = extract_action_block("x\n```json\n{}\n```").unwrap();
        assert_eq!(ex.block, None);
        let ex = extract_action_block("x ```homeassistantx\n{}\n```").unwrap();
        assert_eq!(ex.block, None);
    }

    #[test]
    fn unterminated_fence() {
        assert_eq!(
            extract_action_block("x\n```homeassistant\n{}"),
            Err(ExtractError::UnterminatedFence)
        );
    }

    #[test]
    fn later_blocks_are_counted_and_stripped() {
        let raw = "a\n```homeassistant\n{\"x\":1}\n```\nb\n```homeassistant\n{\"y\":2}\n```\nc";
        let ex = extract_action_block(raw).unwrap();
        assert_eq!(ex.block.as_deref(), Some("{\"x\":1}\n"));
        assert_eq!(ex.extra_blocks, 1);
        assert_eq!(ex.response_text, "a\nb\nc");
    }

    #[test]
    fn parses_both_device_spellings() {
        let r = parse_action_json(r#"{"service": "cover.toggle", "target_device": "cover.master_bedroom"}"#).unwrap();
        assert_eq!(r, RawAction::new("cover.toggle", "cover.master_bedroom"));
        let r = parse_action_json(r#"{"service": "light.turn_on", "device": "light.living_room"}"#).unwrap();
        assert_eq!(r, RawAction::new("light.turn_on", "light.living_room"));
        let r = parse_action_json(r#"{"service": "a.b", "device": "a.c", "target_device": "a.c"}"#).unwrap();
        assert_eq!(r.device, "a.c");
    }

    #[test]
    fn json_errors() {
        let missing = |s| parse_action_json(s).unwrap_err();
        assert_eq!(
            missing(r#"{"service": "cover.toggle"}"#),
            ActionJsonError::MissingField(Field::TargetDevice)
        );
        assert_eq!(
            missing(r#"{"target_device": "cover.x"}"#),
            ActionJsonError::MissingField(Field::Service)
        );
        for bad in [
            r#"{"service": "a.b", "device": "a.c", "target_device": "a.d"}"#,
            r#"{"service": "a.b", "service": "a.b", "device": "a.c"}"#,
            r#"{"service": "a.b", "device": "a.c",}"#,
            r#"{'service': 'a.b', 'device': 'a.c'}"#,
            r#"{service: "a.b", device: "a.c"}"#,
            r#"{"service": 3, "device": "a.c"}"#,
            r#"{"service": "a.b", "device": "a.c", "p": [1]}"#,
            r#"{"service": "a.b", "device": "a.c", "p": true}"#,
            r#"["a.b"]"#,
            r#"{"service": "a.b", "device": "a.c"} {}"#,
            "",
        ] {
            assert!(
                matches!(parse_action_json(bad), Err(ActionJsonError::MalformedJson(_))),
                "{bad} accepted"
            );
        }
    }

    #[test]
    fn full_pipeline_outcomes() {
        let ctx = fixtures::default_context();
        let out = parse_assistant_output(REFERENCE_ASSISTANT, &ctx.catalog, &ctx.registry);
        assert_eq!(out.outcome, ParseOutcome::Ok);
        let action = out.action.unwrap();
        assert_eq!(action.service().canonical(), "cover.toggle");
        assert_eq!(action.target_device().to_string(), "cover.master_bedroom");
        assert_eq!(out.response_text, REFERENCE_RESPONSE_TEXT);

        let out = parse_assistant_output("Sure thing!", &ctx.catalog, &ctx.registry);
        assert_eq!(out.outcome, ParseOutcome::NoActionBlock);
        assert_eq!(out.response_text, "Sure thing!");

        let out = parse_assistant_output("ok\n```homeassistant\n{", &ctx.catalog, &ctx.registry);
        assert_eq!(out.outcome, ParseOutcome::NoActionBlock);
        assert_eq!(out.response_text, "ok");
    }

    #[test]
    fn unknown_device_on_home_without_lights() {
        let ctx = fixtures::default_context();
        // Oracle: registry membership.
        assert!(!ctx.registry.iter().any(|d| d.id.domain() == "light"));
        let mut catalog = ctx.catalog.clone();
        catalog
            .insert(crate::model::ServiceSignature::parse("light.turn_on()").unwrap())
            .unwrap();
        let raw = "On it.\n```homeassistant\n{\"service\": \"light.turn_on\", \"device\": \"light.living_room\"}\n```";
        let out = parse_assistant_output(raw, &catalog, &ctx.registry);
        assert_eq!(
            out.outcome,
            ParseOutcome::Invalid(ValidationError::UnknownDevice("light.living_room".into()))
        );
        assert!(out.action.is_none());
        assert_eq!(out.raw_action.unwrap().device, "light.living_room");
    }

    #[test]
    fn rendered_output_parses_back() {
        let ctx = fixtures::default_context();
        let mut raw = RawAction::new("timer.start", "timer.kitchen_oven");
        raw.params.insert("duration".into(), "00:10:00".into());
        let text = render_assistant_output("Starting the oven timer.", &raw);
        let out = parse_assistant_output(&text, &ctx.catalog, &ctx.registry);
        assert!(out.outcome.is_ok(), "{:?}", out.outcome);
        assert_eq!(out.action.unwrap().to_raw(), raw);
        assert_eq!(out.response_text, "Starting the oven timer.");
    }

    proptest! {
        #[test]
        fn never_panics_and_ok_iff_action(raw in ".{0,400}") {
            let ctx = fixtures::default_context();
            let out = parse_assistant_output(&raw, &ctx.catalog, &ctx.registry);
            prop_assert_eq!(out.outcome.is_ok(), out.action.is_some());
            prop_assert!(!out.response_text.contains("```homeassistant"));
        }

        #[test]
        fn fenced_noise_never_panics(prefix in ".{0,40}", body in ".{0,200}", suffix in ".{0,40}") {
            let ctx = fixtures::default_context();
            let raw = format!("{prefix}\n```homeassistant\n{body}\n```{suffix}");
            let out = parse_assistant_output(&raw, &ctx.catalog, &ctx.registry);
            prop_assert_eq!(out.outcome.is_ok(), out.action.is_some());
            prop_assert!(!out.response_text.contains("```homeassistant"));
        }

        #[test]
        fn single_char_device_mutation_is_never_rescued(pos in 0usize..20, c in "[a-z_.A-Z0-9 ]") {
            let ctx = fixtures::default_context();
            let gold = "cover.master_bedroom";
            let pos = pos % gold.len();
            let mut chars: Vec<char> = gold.chars().collect();
            let replacement = c.chars().next().unwrap();
            prop_assume!(chars[pos] != replacement);
            chars[pos] = replacement;
            let mutated: String = chars.into_iter().collect();
            let raw = format!("ok\n```homeassistant\n{{\"service\": \"cover.toggle\", \"target_device\": {}}}\n```",
                serde_json::to_string(&mutated).unwrap());
            let out = parse_assistant_output(&raw, &ctx.catalog, &ctx.registry);
            let rescued = matches!(out.outcome, ParseOutcome::Ok);
            prop_assert!(!rescued, "mutated device {} accepted", mutated);
        }
    }
}
