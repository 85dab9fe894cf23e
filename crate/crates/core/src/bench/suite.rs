use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::oracle::{Oracle, OraclePathError};
use crate::host::init_fixture;

pub const TABLE2_SUITE: &str = include_str!("../../suites/table2.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    /// Row group in the report, e.g. the application the task targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub instruction: String,
    pub fixture: String,
    pub oracle: Oracle,
    #[serde(default)]
    pub expects_multi_step: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    #[serde(rename = "task")]
    pub tasks: Vec<TaskSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SuiteSyntaxError {
    #[error("suite file: {0}")]
    Format(String),
    #[error("suite has no tasks")]
    Empty,
    #[error("duplicate task id '{0}'")]
    DuplicateId(String),
    #[error("task '{task}': {message}")]
    Fixture { task: String, message: String },
    #[error("task '{task}': {source}")]
    OraclePath { task: String, source: OraclePathError },
}

impl Suite {
    pub fn parse(text: &str) -> Result<Suite, SuiteSyntaxError> {
        let suite: Suite = toml::from_str(text).map_err(|e| SuiteSyntaxError::Format(e.to_string()))?;
        if suite.tasks.is_empty() {
            return Err(SuiteSyntaxError::Empty);
        }
        let mut ids = BTreeSet::new();
        for t in &suite.tasks {
            if !ids.insert(t.id.as_str()) {
                return Err(SuiteSyntaxError::DuplicateId(t.id.clone()));
            }
            let state = init_fixture(&t.fixture)
                .map_err(|e| SuiteSyntaxError::Fixture { task: t.id.clone(), message: e.to_string() })?;
            t.oracle
                .check_paths(&state)
                .map_err(|source| SuiteSyntaxError::OraclePath { task: t.id.clone(), source })?;
        }
        Ok(suite)
    }

    /// `table2` names the shipped suite; anything else is a file path.
    pub fn load(name_or_path: &str) -> Result<Suite, SuiteSyntaxError> {
        if name_or_path == "table2" {
            return Suite::parse(TABLE2_SUITE);
        }
        let text = std::fs::read_to_string(Path::new(name_or_path))
            .map_err(|e| SuiteSyntaxError::Format(format!("{name_or_path}: {e}")))?;
        Suite::parse(&text)
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("suite serializes")
    }

    pub fn table2() -> Suite {
        Suite::parse(TABLE2_SUITE).expect("shipped suite parses")
    }
}
