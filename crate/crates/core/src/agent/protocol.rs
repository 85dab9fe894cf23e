//! The JSON reply format the model must use:
//! `{"thinking": "...", "action_code": "js:<code>", "final_step": true}`,
//! or `"action_code": "N/A:<reasons>"` when the task cannot be done.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use crate::sandbox::ActionCode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentAction {
    Code(ActionCode),
    NotPossible { reasons: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub thinking: String,
    pub action: AgentAction,
    pub final_step: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no JSON object found in the response")]
    NoJsonObject,
    #[error("missing key '{0}'")]
    MissingKey(&'static str),
    #[error("key '{key}' must be {expected}")]
    WrongType { key: &'static str, expected: &'static str },
    #[error("action_code must start with 'js:' or 'N/A:', got '{0}'")]
    UnknownTag(String),
}

impl AgentResponse {
    pub fn code(thinking: impl Into<String>, source: impl Into<String>, final_step: bool) -> AgentResponse {
        AgentResponse { thinking: thinking.into(), action: AgentAction::Code(ActionCode::js(source)), final_step }
    }

    pub fn not_possible(thinking: impl Into<String>, reasons: impl Into<String>) -> AgentResponse {
        AgentResponse { thinking: thinking.into(), action: AgentAction::NotPossible { reasons: reasons.into() }, final_step: true }
    }

    pub fn action_code(&self) -> String {
        match &self.action {
            AgentAction::Code(c) => format!("{}:{}", c.tag, c.source),
            AgentAction::NotPossible { reasons } => format!("N/A:{reasons}"),
        }
    }

    /// Canonical serialization: compact, keys in protocol order.
    pub fn to_json(&self) -> String {
        let mut m = Map::new();
        m.insert("thinking".into(), Json::String(self.thinking.clone()));
        m.insert("action_code".into(), Json::String(self.action_code()));
        m.insert("final_step".into(), Json::Bool(self.final_step));
        Json::Object(m).to_string()
    }
}

/// The first `{` that starts a complete JSON object.
fn first_object(text: &str) -> Option<Map<String, Json>> {
    let mut from = 0;
    while let Some(off) = text[from..].find('{') {
        let start = from + off;
        let mut it = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Json>();
        if let Some(Ok(Json::Object(m))) = it.next() {
            return Some(m);
        }
        from = start + 1;
    }
    None
}

/// Parses a model reply, tolerating code fences and prose around the JSON
/// object. `final_step` must be a JSON boolean; `thinking` may be omitted
/// only in an `N/A:` reply.
pub fn parse_response(text: &str) -> Result<AgentResponse, ParseError> {
    let m = first_object(text).ok_or(ParseError::NoJsonObject)?;
    let code = match m.get("action_code") {
        None => return Err(ParseError::MissingKey("action_code")),
        Some(Json::String(s)) => s,
        Some(_) => return Err(ParseError::WrongType { key: "action_code", expected: "a string" }),
    };
    let final_step = match m.get("final_step") {
        None => return Err(ParseError::MissingKey("final_step")),
        Some(Json::Bool(b)) => *b,
        Some(_) => return Err(ParseError::WrongType { key: "final_step", expected: "true or false" }),
    };
    let action = if let Some(src) = code.strip_prefix("js:") {
        AgentAction::Code(ActionCode::js(src))
    } else if let Some(r) = code.strip_prefix("N/A:") {
        AgentAction::NotPossible { reasons: r.trim().to_string() }
    } else {
        let tag: String = code.chars().take_while(|c| *c != ':').take(20).collect();
        return Err(ParseError::UnknownTag(tag));
    };
    let thinking = match (m.get("thinking"), &action) {
        (Some(Json::String(s)), _) => s.clone(),
        (None, AgentAction::NotPossible { .. }) => String::new(),
        (None, _) => return Err(ParseError::MissingKey("thinking")),
        (Some(_), _) => return Err(ParseError::WrongType { key: "thinking", expected: "a string" }),
    };
    Ok(AgentResponse { thinking, action, final_step })
}
