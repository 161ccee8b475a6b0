//! Parsing raw LLM responses into typed artifacts.
//!
//! Parsers are lenient on input and strict on output: they accept numbered or
//! dashed lists, bold markers, headings and a few labelled-field layouts, but
//! every string they emit is a verbatim slice of the response. Problems are
//! reported as [`Issue`]s; a fatal issue means no payload.

mod code;
mod labels;
mod render;
mod repair;
mod text;
mod tools;
mod workflow;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use code::{extract_code_blocks, CodeBlock};
pub use labels::{parse_labeling_response, ToolLabel};
pub use render::{render_tool_response, render_workflow_response};
pub use repair::{correction_prompt, repair_or_fail, RepairOutcome};
pub use tools::parse_tool_response;
pub use workflow::parse_workflow_response;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Fatal,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
    /// 1-based line in the response the issue refers to; 0 for the whole text.
    pub line: usize,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Fatal => "fatal",
            Severity::Warning => "warning",
        };
        if self.line == 0 {
            write!(f, "{sev}: {}", self.message)
        } else {
            write!(f, "{sev} (line {}): {}", self.line, self.message)
        }
    }
}

/// A payload, present exactly when no issue is fatal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOutcome<T> {
    payload: Option<T>,
    issues: Vec<Issue>,
}

impl<T> ParseOutcome<T> {
    /// Builds an outcome, dropping the payload if any issue is fatal.
    pub fn new(payload: Option<T>, mut issues: Vec<Issue>) -> Self {
        let fatal = issues.iter().any(|i| i.severity == Severity::Fatal);
        let payload = if fatal { None } else { payload };
        if payload.is_none() && !fatal {
            issues.push(Issue {
                severity: Severity::Fatal,
                message: "no payload produced".into(),
                line: 0,
            });
        }
        Self { payload, issues }
    }

    pub fn fatal(message: impl Into<String>, line: usize, mut issues: Vec<Issue>) -> Self {
        issues.push(Issue {
            severity: Severity::Fatal,
            message: message.into(),
            line,
        });
        Self { payload: None, issues }
    }

    pub fn payload(&self) -> Option<&T> {
        self.payload.as_ref()
    }

    pub fn into_payload(self) -> Option<T> {
        self.payload
    }

    pub fn issues(&self) -> &[Issue] {
        &self.issues
    }

    pub fn is_fatal(&self) -> bool {
        self.payload.is_none()
    }

    pub fn fatal_issues(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Fatal)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> ParseOutcome<U> {
        ParseOutcome {
            payload: self.payload.map(f),
            issues: self.issues,
        }
    }
}

/// Collects issues while a parser runs.
#[derive(Debug, Default)]
pub(crate) struct Issues(Vec<Issue>);

impl Issues {
    pub(crate) fn warn(&mut self, line: usize, message: impl Into<String>) {
        self.0.push(Issue {
            severity: Severity::Warning,
            message: message.into(),
            line,
        });
    }

    pub(crate) fn fatal(&mut self, line: usize, message: impl Into<String>) {
        self.0.push(Issue {
            severity: Severity::Fatal,
            message: message.into(),
            line,
        });
    }

    pub(crate) fn finish<T>(self, payload: T) -> ParseOutcome<T> {
        ParseOutcome::new(Some(payload), self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_present_iff_no_fatal() {
        let ok: ParseOutcome<u8> = ParseOutcome::new(Some(1), vec![]);
        assert_eq!(ok.payload(), Some(&1));
        let bad = ParseOutcome::new(
            Some(1),
            vec![Issue { severity: Severity::Fatal, message: "x".into(), line: 2 }],
        );
        assert!(bad.is_fatal());
        let empty: ParseOutcome<u8> = ParseOutcome::new(None, vec![]);
        assert_eq!(empty.fatal_issues().count(), 1);
    }
}
