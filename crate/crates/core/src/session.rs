//! Panel interaction model.
//!
//! A [`Session`] mirrors what the generated panel shows: it starts at the
//! basic level, exposes only the tools visible at the current level and logs
//! every interaction. The event log JSON is the format the runtime harness
//! writes too, so the two can be compared line by line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::{tool_index, ToolIndexEntry};
use crate::model::{ComplexityLevel, ScaffoldSpec, ToolId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("tool {tool_id} is hidden at the {level} level")]
    Hidden { tool_id: ToolId, level: ComplexityLevel },
    #[error("no tool with id {0}")]
    UnknownTool(ToolId),
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    LevelChange,
    Invoke,
    Hover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventStatus {
    Ok,
    Hidden,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    /// 1-based position in the log.
    pub ordinal: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_id: Option<ToolId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
    /// The new level for a level change, the current one otherwise.
    pub level: ComplexityLevel,
    pub status: EventStatus,
}

/// The exported log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    pub spec_version: u64,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone)]
pub struct Session<'a> {
    spec: &'a ScaffoldSpec,
    index: Vec<ToolIndexEntry>,
    level: ComplexityLevel,
    events: Vec<Event>,
}

impl<'a> Session<'a> {
    pub fn new(spec: &'a ScaffoldSpec) -> Self {
        Self::starting_at(spec, ComplexityLevel::Basic)
    }

    /// A session that opens at `level`, for users who skip the early levels.
    /// Nothing is logged for the starting level.
    pub fn starting_at(spec: &'a ScaffoldSpec, level: ComplexityLevel) -> Self {
        Self {
            spec,
            index: tool_index(spec),
            level,
            events: Vec::new(),
        }
    }

    pub fn level(&self) -> ComplexityLevel {
        self.level
    }

    pub fn index(&self) -> &[ToolIndexEntry] {
        &self.index
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn set_level(&mut self, level: ComplexityLevel) {
        self.level = level;
        self.log(EventKind::LevelChange, None, None, EventStatus::Ok);
    }

    /// Entries shown at the current level, in panel order.
    pub fn visible(&self) -> Vec<&ToolIndexEntry> {
        self.index.iter().filter(|e| e.level <= self.level).collect()
    }

    /// Visible entries of one stage panel.
    pub fn visible_in_stage(&self, stage_id: u32) -> Vec<&ToolIndexEntry> {
        self.visible().into_iter().filter(|e| e.stage_id == stage_id).collect()
    }

    pub fn invoke(&mut self, tool_id: &ToolId) -> Result<&ToolIndexEntry, SessionError> {
        let i = self.reach(EventKind::Invoke, tool_id)?;
        Ok(&self.index[i])
    }

    /// Returns the tooltip shown on hover.
    pub fn hover(&mut self, tool_id: &ToolId) -> Result<&str, SessionError> {
        let i = self.reach(EventKind::Hover, tool_id)?;
        Ok(&self.index[i].tooltip)
    }

    fn reach(&mut self, kind: EventKind, tool_id: &ToolId) -> Result<usize, SessionError> {
        let Some(i) = self.index.iter().position(|e| &e.tool_id == tool_id) else {
            self.log(kind, Some(tool_id.clone()), None, EventStatus::Unknown);
            return Err(SessionError::UnknownTool(tool_id.clone()));
        };
        let operator = Some(self.index[i].operator_id.clone());
        if self.index[i].level > self.level {
            self.log(kind, Some(tool_id.clone()), operator, EventStatus::Hidden);
            return Err(SessionError::Hidden { tool_id: tool_id.clone(), level: self.level });
        }
        self.log(kind, Some(tool_id.clone()), operator, EventStatus::Ok);
        Ok(i)
    }

    fn log(&mut self, kind: EventKind, tool_id: Option<ToolId>, operator: Option<String>, status: EventStatus) {
        self.events.push(Event {
            ordinal: self.events.len() as u64 + 1,
            kind,
            tool_id,
            operator,
            level: self.level,
            status,
        });
    }

    pub fn event_log(&self) -> EventLog {
        EventLog {
            spec_version: self.spec.version,
            events: self.events.clone(),
        }
    }

    /// Runs a line script: `level <name>`, `invoke <tool_id>`, `hover <tool_id>`.
    /// Blank lines and `#` comments are skipped. Rejected interactions are
    /// logged and do not stop the script; malformed lines do.
    pub fn run_script(&mut self, script: &str) -> Result<(), SessionError> {
        for (i, line) in script.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| SessionError::Script { line: i + 1, message };
            let (verb, arg) = line.split_once(char::is_whitespace).ok_or_else(|| bad(format!("expected `verb argument`, got {line:?}")))?;
            let arg = arg.trim();
            match verb {
                "level" => {
                    let level = arg.parse().map_err(|e| bad(format!("{e}")))?;
                    self.set_level(level);
                }
                "invoke" => {
                    let _ = self.invoke(&ToolId::from(arg));
                }
                "hover" => {
                    let _ = self.hover(&ToolId::from(arg));
                }
                other => return Err(bad(format!("unknown command {other:?}"))),
            }
        }
        Ok(())
    }
}
