//! Bidirectional codec for the system prompt that describes a home, and the
//! two-turn chat document handed to a backend.
//!
//! Canonical layout:
//!
//! ```text
//! <preamble>
//! Services: cover.toggle(), timer.start(duration)
//! Devices: cover.master_bedroom 'Master Bedroom' = closed
//! media_player.speaker 'Speaker' = standby; vol=0.88
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixtures::DEFAULT_PREAMBLE;
use crate::model::{
    parse_entity_id, Device, DeviceRegistry, DeviceState, ModelError, Scalar, ServiceCatalog, ServiceSignature,
};

const SERVICES_MARKER: &str = "Services:";
const DEVICES_MARKER: &str = "Devices:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("system context has no services or no devices")]
    EmptyContext,
    #[error("missing `{0}` section")]
    MissingSection(&'static str),
    #[error("malformed service list: {0}")]
    MalformedServiceList(String),
    #[error("malformed device line {line}: {reason}")]
    MalformedDeviceLine { line: usize, reason: String },
    #[error("user utterance is empty")]
    EmptyUtterance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemContext {
    pub preamble: String,
    pub catalog: ServiceCatalog,
    pub registry: DeviceRegistry,
}

impl SystemContext {
    pub fn new(catalog: ServiceCatalog, registry: DeviceRegistry) -> Self {
        SystemContext {
            preamble: DEFAULT_PREAMBLE.to_string(),
            catalog,
            registry,
        }
    }
}

/// `<entity_id> '<friendly_name>' = <state>[; <attr>=<val>]*`
pub fn render_device_line(device: &Device) -> String {
    let mut line = format!("{} '{}' = {}", device.id, device.friendly_name, device.state.primary);
    for (name, value) in &device.state.attributes {
        line.push_str("; ");
        line.push_str(name);
        line.push('=');
        line.push_str(&value.to_string());
    }
    line
}

pub fn render_system_prompt(ctx: &SystemContext) -> Result<String, PromptError> {
    if ctx.catalog.is_empty() || ctx.registry.is_empty() {
        return Err(PromptError::EmptyContext);
    }
    let services: Vec<String> = ctx.catalog.iter().map(ServiceSignature::display_form).collect();
    let devices: Vec<String> = ctx.registry.iter().map(render_device_line).collect();
    let mut out = String::new();
    if !ctx.preamble.is_empty() {
        out.push_str(&ctx.preamble);
        out.push('\n');
    }
    out.push_str(SERVICES_MARKER);
    out.push(' ');
    out.push_str(&services.join(", "));
    out.push('\n');
    out.push_str(DEVICES_MARKER);
    out.push(' ');
    out.push_str(&devices.join("\n"));
    Ok(out)
}

/// Splits on commas that are not inside a parameter list.
fn split_services(list: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in list.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&list[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&list[start..]);
    parts
}

fn parse_device_line(line: &str) -> Result<Device, String> {
    let (id_text, rest) = line.split_once(' ').ok_or("expected `<id> '<name>' = <state>`")?;
    let id = parse_entity_id(id_text).map_err(|e| e.to_string())?;
    let rest = rest.strip_prefix('\'').ok_or("friendly name must be quoted")?;
    let (name, state_part) = rest.split_once("' = ").ok_or("expected `' = ` after friendly name")?;
    let mut fields = state_part.split("; ");
    let primary = fields.next().unwrap_or_default();
    let mut state = DeviceState::new(primary);
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| format!("attribute `{field}` is not `name=value`"))?;
        if state.attributes.insert(key.to_string(), Scalar::parse(value)).is_some() {
            return Err(format!("duplicate attribute `{key}`"));
        }
    }
    Device::new(id, name, state).map_err(|e| e.to_string())
}

pub fn parse_system_prompt(text: &str) -> Result<SystemContext, PromptError> {
    let services_at = text
        .find(SERVICES_MARKER)
        .ok_or(PromptError::MissingSection(SERVICES_MARKER))?;
    let devices_rel = text[services_at..]
        .find(DEVICES_MARKER)
        .ok_or(PromptError::MissingSection(DEVICES_MARKER))?;
    let devices_at = services_at + devices_rel;

    let preamble = text[..services_at].trim_end().to_string();

    let service_text = text[services_at + SERVICES_MARKER.len()..devices_at].trim();
    let mut catalog = ServiceCatalog::new();
    if !service_text.is_empty() {
        for part in split_services(service_text) {
            let sig = ServiceSignature::parse(part).map_err(|e| PromptError::MalformedServiceList(e.to_string()))?;
            catalog
                .insert(sig)
                .map_err(|e| PromptError::MalformedServiceList(e.to_string()))?;
        }
    }

    let first_line = text[..devices_at].matches('\n').count() + 1;
    let device_text = &text[devices_at + DEVICES_MARKER.len()..];
    let mut registry = DeviceRegistry::new();
    for (offset, line) in device_text.split('\n').enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = first_line + offset;
        let device =
            parse_device_line(line).map_err(|reason| PromptError::MalformedDeviceLine { line: lineno, reason })?;
        registry
            .insert(device)
            .map_err(|e: ModelError| PromptError::MalformedDeviceLine {
                line: lineno,
                reason: e.to_string(),
            })?;
    }

    Ok(SystemContext {
        preamble,
        catalog,
        registry,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One conversation turn in the dataset's `from`/`value` shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub from: Role,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptDocument {
    pub turns: Vec<Turn>,
}

impl PromptDocument {
    /// A system/user pair using `system_text` verbatim.
    pub fn single_turn(system_text: &str, user_text: &str) -> Self {
        PromptDocument {
            turns: vec![
                Turn {
                    from: Role::System,
                    value: system_text.to_string(),
                },
                Turn {
                    from: Role::User,
                    value: user_text.to_string(),
                },
            ],
        }
    }

    pub fn system_text(&self) -> Option<&str> {
        self.turns
            .iter()
            .find(|t| t.from == Role::System)
            .map(|t| t.value.as_str())
    }

    pub fn user_text(&self) -> Option<&str> {
        self.turns
            .iter()
            .rev()
            .find(|t| t.from == Role::User)
            .map(|t| t.value.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("turns serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn render_chat(ctx: &SystemContext, user_utterance: &str) -> Result<PromptDocument, PromptError> {
    if user_utterance.trim().is_empty() {
        return Err(PromptError::EmptyUtterance);
    }
    let system = render_system_prompt(ctx)?;
    Ok(PromptDocument::single_turn(&system, user_utterance))
}
