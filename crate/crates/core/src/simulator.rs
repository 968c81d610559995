//! Per-domain transition tables and execution of validated actions against
//! a [`DeviceRegistry`].

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{domain_states, ActionCall, DeviceRegistry, DeviceState, Scalar, ServiceCatalog};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("device `{0}` no longer exists")]
    StaleAction(String),
    #[error("no transitions for service `{0}`")]
    UnknownDomain(String),
    #[error("parameter `{0}` cannot be used as a state token")]
    BadParam(String),
    #[error("resulting state is not representable: {0}")]
    IllegalResult(String),
}

impl SimError {
    pub fn class_name(&self) -> &'static str {
        match self {
            SimError::StaleAction(_) => "StaleAction",
            SimError::UnknownDomain(_) => "UnknownDomain",
            SimError::BadParam(_) => "BadParam",
            SimError::IllegalResult(_) => "IllegalResult",
        }
    }
}

/// Effect magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub volume_step: f64,
    pub fan_step: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            volume_step: 0.1,
            fan_step: 25.0,
        }
    }
}

/// Which prior states a rule applies to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateKey {
    Exact(String),
    /// Any token; used for free-form domains.
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NextState {
    To(String),
    Keep,
    /// The value of the named call parameter becomes the state.
    FromParam(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttrOp {
    Set(Scalar),
    /// Copy the named call parameter.
    SetFromParam(String),
    /// Add and clamp to `[min, max]`; a missing attribute counts as `min`.
    AddClamped {
        delta: f64,
        min: f64,
        max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrEffect {
    pub attribute: String,
    pub op: AttrOp,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionTable {
    states: BTreeMap<(String, StateKey), NextState>,
    effects: BTreeMap<String, Vec<AttrEffect>>,
}

// add-clamped results are kept on a 1e-9 grid so 0.88 + 0.1 renders as 0.98.
fn snap(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

impl TransitionTable {
    fn rule(&mut self, service: &str, from: &str, to: NextState) {
        let key = if from == "*" {
            StateKey::Any
        } else {
            StateKey::Exact(from.to_string())
        };
        self.states.insert((service.to_string(), key), to);
    }

    /// Same target for every legal state of the service's domain.
    fn all(&mut self, service: &str, to: NextState) {
        let domain = service.split('.').next().unwrap_or_default();
        match domain_states(domain) {
            Some(states) => {
                for s in states {
                    self.rule(service, s, to.clone());
                }
            }
            None => self.rule(service, "*", to),
        }
    }

    fn map(&mut self, service: &str, pairs: &[(&str, &str)]) {
        let domain = service.split('.').next().unwrap_or_default();
        for s in domain_states(domain).unwrap_or_default() {
            let to = pairs
                .iter()
                .find(|(from, _)| from == s)
                .map(|(_, to)| NextState::To(to.to_string()))
                .unwrap_or(NextState::Keep);
            self.rule(service, s, to);
        }
    }

    fn effect(&mut self, service: &str, attribute: &str, op: AttrOp) {
        self.effects.entry(service.to_string()).or_default().push(AttrEffect {
            attribute: attribute.to_string(),
            op,
        });
    }

    /// Every service the simulator knows: the dataset's class inventory plus
    /// the extra names that appear in system prompts (`cover.open_cover`,
    /// `media_player.toggle`, `timer.pause`, ...).
    pub fn builtin(cfg: &SimConfig) -> Self {
        use NextState::{FromParam, Keep, To};
        let to = |s: &str| To(s.to_string());
        let mut t = TransitionTable::default();

        for domain in ["light", "switch", "fan"] {
            t.all(&format!("{domain}.turn_on"), to("on"));
            t.all(&format!("{domain}.turn_off"), to("off"));
            t.map(&format!("{domain}.toggle"), &[("on", "off"), ("off", "on")]);
        }
        t.all("fan.increase_speed", to("on"));
        t.effect(
            "fan.increase_speed",
            "percentage",
            AttrOp::AddClamped {
                delta: cfg.fan_step,
                min: 0.0,
                max: 100.0,
            },
        );
        t.all("fan.decrease_speed", Keep);
        t.effect(
            "fan.decrease_speed",
            "percentage",
            AttrOp::AddClamped {
                delta: -cfg.fan_step,
                min: 0.0,
                max: 100.0,
            },
        );

        for name in ["open", "open_cover"] {
            t.all(&format!("cover.{name}"), to("open"));
        }
        for name in ["close", "close_cover"] {
            t.all(&format!("cover.{name}"), to("closed"));
        }
        for name in ["stop", "stop_cover"] {
            t.map(&format!("cover.{name}"), &[("opening", "open"), ("closing", "closed")]);
        }
        t.map(
            "cover.toggle",
            &[
                ("open", "closed"),
                ("closed", "open"),
                ("opening", "closing"),
                ("closing", "opening"),
            ],
        );

        t.all("lock.lock", to("locked"));
        t.all("lock.unlock", to("unlocked"));

        let mp = "media_player";
        t.map(&format!("{mp}.turn_on"), &[("off", "on"), ("standby", "on")]);
        t.all(&format!("{mp}.turn_off"), to("off"));
        t.map(
            &format!("{mp}.toggle"),
            &[
                ("off", "on"),
                ("standby", "on"),
                ("on", "off"),
                ("playing", "off"),
                ("paused", "off"),
            ],
        );
        t.all(&format!("{mp}.media_play"), to("playing"));
        t.map(&format!("{mp}.media_pause"), &[("playing", "paused")]);
        t.map(
            &format!("{mp}.media_play_pause"),
            &[("playing", "paused"), ("paused", "playing")],
        );
        t.map(&format!("{mp}.media_stop"), &[("playing", "on"), ("paused", "on")]);
        t.all(&format!("{mp}.media_next_track"), Keep);
        t.all(&format!("{mp}.media_previous_track"), Keep);
        t.all(&format!("{mp}.volume_up"), Keep);
        t.effect(
            &format!("{mp}.volume_up"),
            "vol",
            AttrOp::AddClamped {
                delta: cfg.volume_step,
                min: 0.0,
                max: 1.0,
            },
        );
        t.all(&format!("{mp}.volume_down"), Keep);
        t.effect(
            &format!("{mp}.volume_down"),
            "vol",
            AttrOp::AddClamped {
                delta: -cfg.volume_step,
                min: 0.0,
                max: 1.0,
            },
        );
        t.all(&format!("{mp}.volume_mute"), Keep);
        t.effect(&format!("{mp}.volume_mute"), "muted", AttrOp::Set(Scalar::from("true")));

        t.all("timer.start", to("active"));
        t.effect("timer.start", "duration", AttrOp::SetFromParam("duration".into()));
        t.map("timer.pause", &[("active", "paused")]);
        t.all("timer.cancel", to("idle"));

        t.all("vacuum.start", to("cleaning"));
        t.map("vacuum.pause", &[("cleaning", "paused")]);
        t.map("vacuum.stop", &[("cleaning", "paused"), ("returning", "paused")]);
        t.all("vacuum.return_to_base", to("returning"));

        t.all("climate.set_hvac_mode", FromParam("hvac_mode".into()));
        t.all("climate.set_temperature", Keep);
        t.effect(
            "climate.set_temperature",
            "temperature",
            AttrOp::SetFromParam("temperature".into()),
        );
        t.all("climate.set_humidity", Keep);
        t.effect(
            "climate.set_humidity",
            "humidity",
            AttrOp::SetFromParam("humidity".into()),
        );
        t.all("climate.set_fan_mode", Keep);
        t.effect(
            "climate.set_fan_mode",
            "fan_mode",
            AttrOp::SetFromParam("fan_mode".into()),
        );

        t.all("todo.add_item", Keep);
        t.effect("todo.add_item", "last_item", AttrOp::SetFromParam("item".into()));
        t
    }

    pub fn covers(&self, service: &str) -> bool {
        self.states.keys().any(|(s, _)| s == service)
    }

    pub fn services(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.states.keys().map(|(s, _)| s.as_str()).collect();
        out.dedup();
        out
    }

    /// All rules in key order, for enumeration.
    pub fn rules(&self) -> impl Iterator<Item = (&str, &StateKey, &NextState)> {
        self.states.iter().map(|((s, k), n)| (s.as_str(), k, n))
    }

    pub fn effects(&self, service: &str) -> &[AttrEffect] {
        self.effects.get(service).map(Vec::as_slice).unwrap_or_default()
    }

    /// Toggle-style services whose transition is an involution on the
    /// domain's states. `media_player.toggle` is a power toggle that
    /// collapses every powered state to `off`, so it is not in this set.
    pub fn involutions(&self) -> Vec<&str> {
        self.services()
            .into_iter()
            .filter(|s| {
                let name = s.split('.').nth(1).unwrap_or_default();
                (name == "toggle" && !s.starts_with("media_player.")) || name == "media_play_pause"
            })
            .collect()
    }

    /// Applies `service` with `params` to `prior`. Pure.
    pub fn apply(
        &self,
        service: &str,
        params: &BTreeMap<String, Scalar>,
        prior: &DeviceState,
    ) -> Result<DeviceState, SimError> {
        let next = self
            .states
            .get(&(service.to_string(), StateKey::Exact(prior.primary.clone())))
            .or_else(|| self.states.get(&(service.to_string(), StateKey::Any)))
            .ok_or_else(|| SimError::UnknownDomain(service.to_string()))?;
        let mut state = prior.clone();
        match next {
            NextState::To(s) => state.primary = s.clone(),
            NextState::Keep => {}
            NextState::FromParam(p) => match params.get(p) {
                Some(Scalar::Text(s)) if !s.is_empty() && !s.contains(char::is_whitespace) && !s.contains(';') => {
                    state.primary = s.clone()
                }
                _ => return Err(SimError::BadParam(p.clone())),
            },
        }
        for effect in self.effects(service) {
            let value = match &effect.op {
                AttrOp::Set(v) => v.clone(),
                AttrOp::SetFromParam(p) => params.get(p).cloned().ok_or_else(|| SimError::BadParam(p.clone()))?,
                AttrOp::AddClamped { delta, min, max } => {
                    let base = state.attr_f64(&effect.attribute).unwrap_or(*min);
                    Scalar::Number(snap((base + delta).clamp(*min, *max)))
                }
            };
            state.attributes.insert(effect.attribute.clone(), value);
        }
        let domain = service.split('.').next().unwrap_or_default();
        state
            .validate(domain)
            .map_err(|e| SimError::IllegalResult(e.to_string()))?;
        Ok(state)
    }
}

/// The built-in table, after checking that it covers every service in
/// `catalog`.
pub fn default_transition_table(catalog: &ServiceCatalog) -> Result<TransitionTable, SimError> {
    let table = TransitionTable::builtin(&SimConfig::default());
    for service in catalog.iter() {
        let name = service.canonical();
        if !table.covers(&name) {
            return Err(SimError::UnknownDomain(name));
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionRecord {
    pub seq: u64,
    pub action: ActionCall,
    pub prior_state: DeviceState,
    pub new_state: DeviceState,
    #[serde(skip)]
    pub timestamp: Instant,
    /// Milliseconds since the owning event log was created.
    pub elapsed_ms: u64,
}

/// Append-only log of executions with cursor reads.
#[derive(Debug)]
pub struct EventLog {
    origin: Instant,
    records: Vec<ExecutionRecord>,
}

impl Default for EventLog {
    fn default() -> Self {
        EventLog {
            origin: Instant::now(),
            records: Vec::new(),
        }
    }
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records with `seq >= cursor`, and the cursor to pass next time.
    pub fn since(&self, cursor: u64) -> (&[ExecutionRecord], u64) {
        let start = (cursor as usize).min(self.records.len());
        (&self.records[start..], self.records.len() as u64)
    }
}

/// Applies a validated action and appends the record to `log`.
pub fn execute(
    action: &ActionCall,
    registry: &mut DeviceRegistry,
    table: &TransitionTable,
    log: &mut EventLog,
) -> Result<ExecutionRecord, SimError> {
    let id = action.target_device();
    let device = registry
        .get_mut(id)
        .ok_or_else(|| SimError::StaleAction(id.to_string()))?;
    let new_state = table.apply(&action.service().canonical(), action.params(), &device.state)?;
    let prior_state = std::mem::replace(&mut device.state, new_state.clone());
    let now = Instant::now();
    let record = ExecutionRecord {
        seq: log.records.len() as u64,
        action: action.clone(),
        prior_state,
        new_state,
        timestamp: now,
        elapsed_ms: now.duration_since(log.origin).as_millis() as u64,
    };
    log.records.push(record.clone());
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{validate_action, RawAction};
    use proptest::prelude::*;

    fn table() -> TransitionTable {
        TransitionTable::builtin(&SimConfig::default())
    }

    fn step(service: &str, state: &str) -> String {
        table()
            .apply(service, &BTreeMap::new(), &DeviceState::new(state))
            .unwrap()
            .primary
    }

    #[test]
    fn reference_cover_toggle_opens() {
        let mut ctx = fixtures::default_context();
        let mut log = EventLog::default();
        let call = validate_action(
            &RawAction::new("cover.toggle", "cover.master_bedroom"),
            &ctx.catalog,
            &ctx.registry,
        )
        .unwrap();
        let rec = execute(&call, &mut ctx.registry, &table(), &mut log).unwrap();
        assert_eq!(rec.prior_state.primary, "closed");
        assert_eq!(rec.new_state.primary, "open");
        assert_eq!(
            ctx.registry
                .get(&"cover.master_bedroom".parse().unwrap())
                .unwrap()
                .state
                .primary,
            "open"
        );
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn idempotent_turn_on() {
        assert_eq!(step("light.turn_on", "on"), "on");
        assert_eq!(step("lock.unlock", "locked"), "unlocked");
        assert_eq!(step("cover.stop", "opening"), "open");
        assert_eq!(step("cover.stop_cover", "closing"), "closed");
        assert_eq!(step("vacuum.return_to_base", "cleaning"), "returning");
    }

    #[test]
    fn switch_toggle_twice_is_identity() {
        assert_eq!(step("switch.toggle", &step("switch.toggle", "off")), "off");
    }

    #[test]
    fn volume_up_clamps() {
        let prior = DeviceState::new("playing").with_attr("vol", 0.95);
        let next = table()
            .apply("media_player.volume_up", &BTreeMap::new(), &prior)
            .unwrap();
        let oracle = (0.95f64 + 0.1).clamp(0.0, 1.0);
        assert_eq!(next.attr_f64("vol"), Some(oracle));
        assert_eq!(oracle, 1.0);
        let prior = DeviceState::new("standby").with_attr("vol", 0.88);
        let next = table()
            .apply("media_player.volume_up", &BTreeMap::new(), &prior)
            .unwrap();
        assert_eq!(next.attributes["vol"].to_string(), "0.98");
    }

    #[test]
    fn timer_start_records_duration() {
        let mut params = BTreeMap::new();
        params.insert("duration".to_string(), Scalar::from("00:05:00"));
        let next = table()
            .apply("timer.start", &params, &DeviceState::new("idle"))
            .unwrap();
        assert_eq!(next.primary, "active");
        assert_eq!(next.attributes["duration"], Scalar::from("00:05:00"));
    }

    #[test]
    fn hvac_mode_comes_from_param() {
        let mut params = BTreeMap::new();
        params.insert("hvac_mode".to_string(), Scalar::from("cool"));
        let next = table()
            .apply("climate.set_hvac_mode", &params, &DeviceState::new("heat"))
            .unwrap();
        assert_eq!(next.primary, "cool");
    }

    #[test]
    fn stale_action() {
        let mut ctx = fixtures::default_context();
        let call = validate_action(
            &RawAction::new("lock.lock", "lock.office_cabinet"),
            &ctx.catalog,
            &ctx.registry,
        )
        .unwrap();
        ctx.registry.remove(&"lock.office_cabinet".parse().unwrap());
        let mut log = EventLog::default();
        assert_eq!(
            execute(&call, &mut ctx.registry, &table(), &mut log),
            Err(SimError::StaleAction("lock.office_cabinet".into()))
        );
        assert!(log.is_empty());
    }

    #[test]
    fn default_table_covers_reference_and_rejects_unknown() {
        let ctx = fixtures::default_context();
        assert!(default_transition_table(&ctx.catalog).is_ok());
        let mut catalog = ctx.catalog.clone();
        catalog
            .insert(crate::model::ServiceSignature::parse("scene.activate()").unwrap())
            .unwrap();
        assert_eq!(
            default_transition_table(&catalog).unwrap_err(),
            SimError::UnknownDomain("scene.activate".into())
        );
    }

    #[test]
    fn event_log_cursor() {
        let mut ctx = fixtures::default_context();
        let mut log = EventLog::default();
        let t = table();
        for svc in ["lock.lock", "lock.unlock", "lock.lock"] {
            let call =
                validate_action(&RawAction::new(svc, "lock.office_cabinet"), &ctx.catalog, &ctx.registry).unwrap();
            execute(&call, &mut ctx.registry, &t, &mut log).unwrap();
        }
        let (all, next) = log.since(0);
        assert_eq!((all.len(), next), (3, 3));
        let (tail, next) = log.since(2);
        assert_eq!((tail.len(), tail[0].seq, next), (1, 2, 3));
        assert!(log.since(99).0.is_empty());
    }

    proptest! {
        #[test]
        fn volume_walk_stays_bounded(start in 0.0f64..=1.0, ups in proptest::collection::vec(any::<bool>(), 0..=100)) {
            let t = table();
            let mut state = DeviceState::new("playing").with_attr("vol", start);
            for up in ups {
                let svc = if up { "media_player.volume_up" } else { "media_player.volume_down" };
                state = t.apply(svc, &BTreeMap::new(), &state).unwrap();
                let v = state.attr_f64("vol").unwrap();
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
