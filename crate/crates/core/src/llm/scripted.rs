use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{ChatRequest, LlmError, Phase, Provider};

/// One canned answer. Every matcher that is set must hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Case-insensitive substring of the instruction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<u32>,
    /// Substring of the previous iteration's feedback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
    #[serde(default)]
    pub phase: Phase,
    /// Simulated model latency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
    /// Returned verbatim when a string, as compact JSON otherwise.
    pub response: Json,
}

impl ScriptEntry {
    fn matches(&self, req: &ChatRequest) -> bool {
        let m = &req.meta;
        self.phase == m.phase
            && self
                .instruction
                .as_ref()
                .is_none_or(|s| m.instruction.to_lowercase().contains(&s.to_lowercase()))
            && self.iteration.is_none_or(|i| i == m.iteration)
            && self
                .last_error
                .as_ref()
                .is_none_or(|s| m.last_error.as_deref().is_some_and(|e| e.contains(s.as_str())))
    }

    fn text(&self) -> String {
        match &self.response {
            Json::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

/// Ordered entries; the first match wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptTable {
    pub entries: Vec<ScriptEntry>,
}

impl ScriptTable {
    pub fn parse(text: &str) -> Result<ScriptTable, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::Config(format!("script table: {e}")))
    }

    pub fn load(path: &Path) -> Result<ScriptTable, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("script table {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn lookup(&self, req: &ChatRequest) -> Option<&ScriptEntry> {
        self.entries.iter().find(|e| e.matches(req))
    }
}

/// Deterministic provider answering from a [`ScriptTable`].
#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    table: ScriptTable,
}

impl ScriptedProvider {
    pub fn new(table: ScriptTable) -> ScriptedProvider {
        ScriptedProvider { table }
    }
}

impl Provider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        req.validate()?;
        let entry = self.table.lookup(req).ok_or_else(|| LlmError::NoMatch {
            instruction: req.meta.instruction.clone(),
            iteration: req.meta.iteration,
        })?;
        if let Some(ms) = entry.delay_ms {
            std::thread::sleep(std::time::Duration::from_millis(ms));
        }
        Ok(entry.text())
    }
}

/// Script tables shipped with the crate, by name.
pub const BUILTIN_SCRIPTS: [(&str, &str); 6] = [
    ("table2", include_str!("../../assets/scripts/table2.json")),
    ("always-na", include_str!("../../assets/scripts/always_na.json")),
    ("mixed", include_str!("../../assets/scripts/mixed.json")),
    ("listing1", include_str!("../../assets/scripts/listing1.json")),
    ("listing2", include_str!("../../assets/scripts/listing2.json")),
    ("listing2-fail", include_str!("../../assets/scripts/listing2_fail.json")),
];

pub fn builtin_script(name: &str) -> Option<ScriptTable> {
    let (_, text) = BUILTIN_SCRIPTS.iter().find(|(n, _)| *n == name)?;
    Some(ScriptTable::parse(text).expect("shipped script table parses"))
}
