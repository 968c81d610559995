use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendError, GenerationRequest, Generator};

pub const DEFAULT_UNSCRIPTED_REPLY: &str = "Sorry, I don't know how to help with that.";

/// One scripted reply. Without `system`, the reply applies to the utterance
/// in any home.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub user: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub default: Option<String>,
    pub responses: Vec<ScriptEntry>,
}

/// Deterministic lookup table from prompts to replies.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    by_prompt: HashMap<(String, String), String>,
    by_utterance: HashMap<String, String>,
    default_reply: String,
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        ScriptedBackend {
            by_prompt: HashMap::new(),
            by_utterance: HashMap::new(),
            default_reply: DEFAULT_UNSCRIPTED_REPLY.to_string(),
        }
    }
}

impl ScriptedBackend {
    pub fn insert_utterance(&mut self, user: &str, text: &str) {
        self.by_utterance.insert(user.to_string(), text.to_string());
    }

    pub fn insert_prompt(&mut self, system: &str, user: &str, text: &str) {
        self.by_prompt
            .insert((system.to_string(), user.to_string()), text.to_string());
    }

    pub fn set_default_reply(&mut self, text: &str) {
        self.default_reply = text.to_string();
    }

    pub fn len(&self) -> usize {
        self.by_prompt.len() + self.by_utterance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_script(script: ScriptFile) -> Self {
        let mut backend = ScriptedBackend::default();
        if let Some(default) = script.default {
            backend.default_reply = default;
        }
        for entry in script.responses {
            match entry.system {
                Some(system) => backend.insert_prompt(&system, &entry.user, &entry.text),
                None => backend.insert_utterance(&entry.user, &entry.text),
            }
        }
        backend
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|_| BackendError::ModelNotFound(path.to_path_buf()))?;
        let script: ScriptFile =
            serde_json::from_str(&text).map_err(|e| BackendError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Ok(Self::from_script(script))
    }

    pub fn reply(&self, system: &str, user: &str) -> &str {
        self.by_prompt
            .get(&(system.to_string(), user.to_string()))
            .or_else(|| self.by_utterance.get(user))
            .map(String::as_str)
            .unwrap_or(&self.default_reply)
    }
}

impl Generator for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn generate_text(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        let system = req.prompt.system_text().unwrap_or_default();
        let user = req.prompt.user_text().unwrap_or_default();
        Ok(self.reply(system, user).to_string())
    }

    fn reentrant(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_entries_win_over_utterance_entries() {
        let mut s = ScriptedBackend::default();
        s.insert_utterance("hi", "generic");
        s.insert_prompt("home A", "hi", "specific");
        assert_eq!(s.reply("home A", "hi"), "specific");
        assert_eq!(s.reply("home B", "hi"), "generic");
        assert_eq!(s.reply("home B", "bye"), DEFAULT_UNSCRIPTED_REPLY);
    }

    #[test]
    fn loads_script_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(
            &path,
            r#"{"default": "nope", "responses": [{"user": "a", "text": "b"}]}"#,
        )
        .unwrap();
        let s = ScriptedBackend::from_file(&path).unwrap();
        assert_eq!(s.reply("", "a"), "b");
        assert_eq!(s.reply("", "z"), "nope");
        assert!(matches!(
            ScriptedBackend::from_file(&dir.path().join("missing.json")),
            Err(BackendError::ModelNotFound(_))
        ));
    }
}
