use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::text::{field, lines, split_bold_head, strip_emphasis};
use super::{Issues, ParseOutcome};
use crate::model::{ControlKind, NativeMapping, ToolId, ToolSpec, WorkflowStage};
use crate::prompt::RawResponse;
use crate::stage::StageKind;

/// What the labeling stage adds to a selected tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolLabel {
    pub tool_id: ToolId,
    pub concepts: Vec<String>,
    pub native: Option<NativeMapping>,
    pub control_kind: ControlKind,
}

const CONCEPTS: &[&str] = &["concepts", "concept", "domain concepts"];
const SHORTCUT: &[&str] = &["shortcut", "keyboard shortcut", "hotkey"];
const MENU: &[&str] = &["menu", "menu path"];
const MOUSE: &[&str] = &["mouse", "mouse operation"];
const CONTROL: &[&str] = &["control", "ui control", "control kind"];

#[derive(Default)]
struct Draft<'a> {
    line: usize,
    concepts: Vec<&'a str>,
    shortcut: Option<&'a str>,
    menu: Option<&'a str>,
    mouse: Option<&'a str>,
    control: Option<&'a str>,
}

fn value(v: &str) -> Option<&str> {
    let v = strip_emphasis(v.trim().trim_end_matches('.')).trim_matches('`').trim();
    let lower = v.to_ascii_lowercase();
    if v.is_empty() || matches!(lower.as_str(), "none" | "n/a" | "na" | "-" | "\u{2013}" | "not available" | "null") {
        None
    } else {
        Some(v)
    }
}

/// `[tool_id] Name` or a bare tool name; returns the id it refers to.
fn item_tool<'t>(text: &str, tools: &'t [ToolSpec]) -> Option<Result<&'t ToolSpec, String>> {
    let text = strip_emphasis(text);
    if let Some(rest) = text.strip_prefix('[') {
        let close = rest.find(']')?;
        let id = rest[..close].trim().trim_matches('`');
        let name = strip_emphasis(rest[close + 1..].trim());
        return Some(
            tools
                .iter()
                .find(|t| t.tool_id.as_str() == id)
                .or_else(|| tools.iter().find(|t| !name.is_empty() && t.label.eq_ignore_ascii_case(name)))
                .ok_or_else(|| id.to_string()),
        );
    }
    let name = split_bold_head(text).map(|(h, _)| h).unwrap_or(text);
    let name = name.trim_end_matches(':');
    tools.iter().find(|t| t.label.eq_ignore_ascii_case(name)).map(Ok)
}

/// Parses a labeling response. Concept terms must match the stages' terms
/// exactly; unknown ones are dropped with a warning.
pub fn parse_labeling_response(
    raw: &RawResponse,
    tools: &[ToolSpec],
    stages: &[WorkflowStage],
) -> ParseOutcome<Vec<ToolLabel>> {
    let mut issues = Issues::default();
    if raw.stage_kind != StageKind::ToolLabeling {
        issues.fatal(0, format!("expected a tool_labeling response, got {}", raw.stage_kind));
        return ParseOutcome::new(None, issues.0);
    }
    let terms: HashSet<&str> = stages
        .iter()
        .flat_map(|s| s.concepts.iter().map(|c| c.term.as_str()))
        .collect();

    let mut drafts: Vec<(&ToolSpec, Draft)> = Vec::new();
    let mut skipping = false;
    for line in lines(&raw.text) {
        if line.is_blank() {
            continue;
        }
        let text = line.text;
        let is_field = [CONCEPTS, SHORTCUT, MENU, MOUSE, CONTROL]
            .iter()
            .any(|labels| field(text, labels).is_some());
        if !is_field {
            match item_tool(text, tools) {
                Some(Ok(tool)) => {
                    skipping = false;
                    if drafts.iter().any(|(t, _)| t.tool_id == tool.tool_id) {
                        issues.warn(line.number, format!("tool {} labeled twice; later entry dropped", tool.tool_id));
                        skipping = true;
                        continue;
                    }
                    drafts.push((tool, Draft { line: line.number, ..Draft::default() }));
                }
                Some(Err(id)) => {
                    issues.warn(line.number, format!("unknown tool id {id:?} ignored"));
                    skipping = true;
                }
                None if !drafts.is_empty() && !skipping => {
                    issues.warn(line.number, "unrecognized line ignored");
                }
                None => {}
            }
            continue;
        }
        if skipping {
            continue;
        }
        let Some((_, draft)) = drafts.last_mut() else {
            issues.warn(line.number, "field before any tool ignored");
            continue;
        };
        if let Some(v) = field(text, CONCEPTS) {
            for term in v.split([';', ',']) {
                let Some(term) = value(term) else { continue };
                if terms.contains(term) {
                    if !draft.concepts.contains(&term) {
                        draft.concepts.push(term);
                    }
                } else {
                    issues.warn(line.number, format!("concept {term:?} is not a known domain concept; dropped"));
                }
            }
        } else if let Some(v) = field(text, SHORTCUT) {
            draft.shortcut = value(v);
        } else if let Some(v) = field(text, MENU) {
            draft.menu = value(v);
        } else if let Some(v) = field(text, MOUSE) {
            draft.mouse = value(v);
        } else if let Some(v) = field(text, CONTROL) {
            draft.control = value(v);
        }
    }

    if drafts.is_empty() {
        issues.fatal(0, "no tool labels recognized: expected `- [tool_id] Tool Name` items");
        return ParseOutcome::new(None, issues.0);
    }
    let mut labels = Vec::new();
    let mut labeled: HashSet<&ToolId> = HashSet::new();
    for (tool, d) in drafts {
        labeled.insert(&tool.tool_id);
        let native = NativeMapping::new(
            d.shortcut.map(str::to_string),
            d.menu.map(str::to_string),
            d.mouse.map(str::to_string),
        )
        .ok();
        if native.is_none() {
            issues.warn(d.line, format!("tool {} has no shortcut, menu path or mouse operation", tool.tool_id));
        }
        let control_kind = match d.control.map(str::parse::<ControlKind>) {
            Some(Ok(kind)) => kind,
            Some(Err(_)) => {
                issues.warn(d.line, format!("control {:?} not recognized; using button", d.control.unwrap()));
                ControlKind::Button
            }
            None => ControlKind::Button,
        };
        labels.push(ToolLabel {
            tool_id: tool.tool_id.clone(),
            concepts: d.concepts.into_iter().map(str::to_string).collect(),
            native,
            control_kind,
        });
    }
    for tool in tools {
        if !labeled.contains(&tool.tool_id) {
            issues.warn(0, format!("tool {} was not labeled", tool.tool_id));
        }
    }
    issues.finish(labels)
}
