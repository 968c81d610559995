//! Per-session homes and how they are configured and persisted.

use std::collections::BTreeMap;
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use edgehome_core::backend::ModelDescriptor;
use edgehome_core::fixtures::default_context;
use edgehome_core::model::{Device, DeviceRegistry, DeviceState, EntityId, Scalar, ServiceCatalog, ServiceSignature};
use edgehome_core::prompt::{parse_system_prompt, render_system_prompt, SystemContext};
use edgehome_core::simulator::{default_transition_table, EventLog, ExecutionRecord, TransitionTable};
use edgehome_core::RawAction;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::error::ApiError;

/// Explicit home description accepted by `POST /sessions`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomeConfig {
    #[serde(default)]
    pub preamble: Option<String>,
    /// Signatures such as `cover.toggle()` or `timer.start(duration)`.
    pub services: Vec<String>,
    pub devices: Vec<DeviceConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub id: String,
    pub name: String,
    pub state: String,
    #[serde(default)]
    pub attributes: serde_json::Map<String, serde_json::Value>,
}

fn invalid(msg: impl ToString) -> ApiError {
    ApiError::InvalidHomeConfig(msg.to_string())
}

impl HomeConfig {
    pub fn into_context(self) -> Result<SystemContext, ApiError> {
        let mut catalog = ServiceCatalog::new();
        for s in &self.services {
            catalog
                .insert(ServiceSignature::parse(s).map_err(invalid)?)
                .map_err(invalid)?;
        }
        let mut registry = DeviceRegistry::new();
        for d in self.devices {
            let id: EntityId = d.id.parse().map_err(invalid)?;
            let mut state = DeviceState::new(&d.state);
            for (name, value) in d.attributes {
                let scalar = match value {
                    serde_json::Value::Number(n) => Scalar::Number(n.as_f64().ok_or_else(|| invalid("bad number"))?),
                    serde_json::Value::String(s) => Scalar::Text(s),
                    other => {
                        return Err(invalid(format!(
                            "attribute `{name}` must be a string or number, got {other}"
                        )))
                    }
                };
                state = state.with_attr(&name, scalar);
            }
            state.validate(id.domain()).map_err(invalid)?;
            registry
                .insert(Device::new(id, &d.name, state).map_err(invalid)?)
                .map_err(invalid)?;
        }
        let mut ctx = SystemContext::new(catalog, registry);
        if let Some(preamble) = self.preamble {
            ctx.preamble = preamble;
        }
        Ok(ctx)
    }
}

/// Interprets a `POST /sessions` body: empty for the default home, a JSON
/// object (`{"system_prompt": ...}` or a [`HomeConfig`]), a JSON string, or
/// raw system-prompt text.
pub fn context_from_body(body: &[u8]) -> Result<SystemContext, ApiError> {
    let text = std::str::from_utf8(body).map_err(|_| invalid("body is not UTF-8"))?;
    if text.trim().is_empty() {
        return Ok(default_context());
    }
    let ctx = match serde_json::from_str::<serde_json::Value>(text) {
        Ok(serde_json::Value::Object(obj)) => match obj.get("system_prompt") {
            Some(serde_json::Value::String(prompt)) if obj.len() == 1 => {
                parse_system_prompt(prompt).map_err(invalid)?
            }
            Some(_) => return Err(invalid("`system_prompt` must be the only key and a string")),
            None => serde_json::from_value::<HomeConfig>(serde_json::Value::Object(obj))
                .map_err(invalid)?
                .into_context()?,
        },
        Ok(serde_json::Value::String(prompt)) => parse_system_prompt(&prompt).map_err(invalid)?,
        Ok(_) => return Err(invalid("expected an object, a string or system-prompt text")),
        Err(_) => parse_system_prompt(text).map_err(invalid)?,
    };
    check_context(&ctx)?;
    Ok(ctx)
}

/// A usable home renders to a prompt and has transitions for all services.
fn check_context(ctx: &SystemContext) -> Result<(), ApiError> {
    render_system_prompt(ctx).map_err(invalid)?;
    if ctx.preamble.contains("Services:") || ctx.preamble.contains("Devices:") {
        return Err(invalid("preamble must not contain section markers"));
    }
    default_transition_table(&ctx.catalog).map_err(invalid)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason")]
pub enum Outcome {
    Ok,
    Fallback(String),
}

/// The executed action, or the one that would have been executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionView {
    pub service: String,
    pub target_device: String,
    #[serde(default)]
    pub params: BTreeMap<String, Scalar>,
}

impl From<&RawAction> for ActionView {
    fn from(raw: &RawAction) -> Self {
        ActionView {
            service: raw.service.clone(),
            target_device: raw.device.clone(),
            params: raw.params.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub response_text: String,
    pub action: Option<ActionView>,
    pub new_state: Option<DeviceState>,
    pub outcome: Outcome,
    pub latency_seconds: f64,
    pub model: ModelDescriptor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub user_text: String,
    /// Raw backend output.
    pub assistant_text: String,
    pub outcome: Outcome,
    #[serde(default)]
    pub record: Option<serde_json::Value>,
}

pub struct SessionState {
    pub context: SystemContext,
    pub table: TransitionTable,
    pub log: EventLog,
    pub history: Vec<HistoryEntry>,
}

pub struct Session {
    pub id: String,
    pub created_at: f64,
    /// Held for a whole chat turn so turns within a session never overlap.
    pub turn: Mutex<()>,
    pub state: RwLock<SessionState>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl Session {
    pub fn new(id: String, context: SystemContext) -> Result<Self, ApiError> {
        let table = default_transition_table(&context.catalog).map_err(invalid)?;
        Ok(Session {
            id,
            created_at: unix_now(),
            turn: Mutex::new(()),
            state: RwLock::new(SessionState {
                context,
                table,
                log: EventLog::default(),
                history: Vec::new(),
            }),
        })
    }

    pub fn read(&self) -> std::sync::RwLockReadGuard<'_, SessionState> {
        self.state.read().unwrap_or_else(|p| p.into_inner())
    }

    pub fn write(&self) -> std::sync::RwLockWriteGuard<'_, SessionState> {
        self.state.write().unwrap_or_else(|p| p.into_inner())
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let st = self.read();
        SessionSnapshot {
            session_id: self.id.clone(),
            created_at: self.created_at,
            system_prompt: render_system_prompt(&st.context).expect("session homes always render"),
            history: st.history.clone(),
        }
    }

    pub fn restore(snapshot: SessionSnapshot) -> Result<Self, ApiError> {
        let ctx = parse_system_prompt(&snapshot.system_prompt).map_err(invalid)?;
        let session = Session::new(snapshot.session_id, ctx)?;
        let session = Session {
            created_at: snapshot.created_at,
            ..session
        };
        session.write().history = snapshot.history;
        Ok(session)
    }
}

/// Persisted form of a session. The home is stored as its live system
/// prompt; the event log restarts empty after a restore.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub created_at: f64,
    pub system_prompt: String,
    pub history: Vec<HistoryEntry>,
}

pub fn record_json(record: &ExecutionRecord) -> serde_json::Value {
    serde_json::to_value(record).expect("records serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgehome_core::fixtures::{DEFAULT_PREAMBLE, REFERENCE_SYSTEM_PROMPT};

    #[test]
    fn empty_body_is_default_home() {
        let ctx = context_from_body(b"  ").unwrap();
        assert_eq!(ctx.registry.len(), 6);
        assert_eq!(ctx, default_context());
    }

    #[test]
    fn raw_prompt_text_delegates_to_parser() {
        let direct = parse_system_prompt(REFERENCE_SYSTEM_PROMPT).unwrap();
        assert_eq!(context_from_body(REFERENCE_SYSTEM_PROMPT.as_bytes()).unwrap(), direct);
        let wrapped = serde_json::json!({"system_prompt": REFERENCE_SYSTEM_PROMPT}).to_string();
        assert_eq!(context_from_body(wrapped.as_bytes()).unwrap(), direct);
        let string = serde_json::to_string(REFERENCE_SYSTEM_PROMPT).unwrap();
        assert_eq!(context_from_body(string.as_bytes()).unwrap(), direct);
    }

    #[test]
    fn explicit_home_config() {
        let body = serde_json::json!({
            "services": ["light.turn_on()", "light.turn_off()", "media_player.volume_up()"],
            "devices": [
                {"id": "light.kitchen", "name": "Kitchen Light", "state": "off"},
                {"id": "media_player.tv", "name": "TV", "state": "on", "attributes": {"vol": 0.5}}
            ]
        });
        let ctx = context_from_body(body.to_string().as_bytes()).unwrap();
        assert_eq!(ctx.catalog.len(), 3);
        let tv = ctx.registry.iter().nth(1).unwrap();
        assert_eq!(tv.state.attr_f64("vol"), Some(0.5));
        assert_eq!(ctx.preamble, DEFAULT_PREAMBLE);
    }

    #[test]
    fn duplicate_devices_are_rejected() {
        let body = serde_json::json!({
            "services": ["light.turn_on()"],
            "devices": [
                {"id": "light.kitchen", "name": "A", "state": "off"},
                {"id": "light.kitchen", "name": "B", "state": "on"}
            ]
        });
        assert!(matches!(
            context_from_body(body.to_string().as_bytes()),
            Err(ApiError::InvalidHomeConfig(_))
        ));
    }

    #[test]
    fn bad_configs_are_rejected() {
        for body in [
            &b"\xff\xfe"[..],
            b"[1, 2]",
            b"Services: nope",
            br#"{"services": ["light.turn_on()"], "devices": [{"id": "light.k", "name": "K", "state": "dancing"}]}"#,
            br#"{"services": ["garage.levitate()"], "devices": [{"id": "garage.k", "name": "K", "state": "x"}]}"#,
            br#"{"system_prompt": 3}"#,
        ] {
            assert!(
                matches!(context_from_body(body), Err(ApiError::InvalidHomeConfig(_))),
                "{}",
                String::from_utf8_lossy(body)
            );
        }
    }
}
