//! Renders artifacts back into the response grammar the parsers accept.
//! Used to write hand-editable fixtures and for round-trip checks.

use crate::model::{ToolSpec, WorkflowStage};

/// Numbered stages with bold names, one concept per nested bullet.
pub fn render_workflow_response(stages: &[WorkflowStage]) -> String {
    let mut out = String::new();
    for (i, stage) in stages.iter().enumerate() {
        out.push_str(&format!("{}. **{}**: {}\n", i + 1, stage.name, stage.description));
        for c in &stage.concepts {
            out.push_str(&format!("   - {}: {}\n", c.term, c.explanation));
        }
    }
    out
}

/// One `- **Stage**: Label, Rationale, Level.` line per tool.
pub fn render_tool_response(tools: &[ToolSpec], stages: &[WorkflowStage]) -> String {
    let mut out = String::new();
    for tool in tools {
        let stage = stages
            .iter()
            .find(|s| s.stage_id == tool.stage_id)
            .map(|s| s.name.as_str())
            .unwrap_or("");
        out.push_str(&format!(
            "- **{}**: {}, {}, {}.\n",
            stage,
            tool.label,
            tool.rationale,
            tool.complexity.title()
        ));
    }
    out
}
