//! Prompt assembly.
//!
//! Templates live in `templates/` and carry `{{NAME}}` slots. Substitution is
//! a single pass: values are inserted as-is and never rescanned, so a task
//! text that happens to contain braces cannot inject new slots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::sha256_hex;
use crate::model::{ModelError, SoftwareProfile, TaskDescription, ToolSpec, WorkflowStage};
use crate::stage::StageKind;

const WORKFLOW_TEMPLATE: &str = include_str!("../templates/workflow_analysis.txt");
const TOOL_TEMPLATE: &str = include_str!("../templates/tool_selection.txt");
const FUNCTIONALITY_TEMPLATE: &str = include_str!("../templates/functionality_codegen.txt");
const CODEGEN_TEMPLATE: &str = include_str!("../templates/ui_codegen.txt");
const LABELING_TEMPLATE: &str = include_str!("../templates/tool_labeling.txt");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("invalid task: {0}")]
    Task(ModelError),
    #[error("invalid software profile: {0}")]
    Profile(ModelError),
    #[error("software profile {profile:?} has no example layout code")]
    MissingExampleCode { profile: String },
    #[error("no workflow stages to prompt with")]
    NoStages,
    #[error("no tools to prompt with")]
    NoTools,
    #[error("template slot {{{{{0}}}}} has no value")]
    MissingValue(String),
    #[error("template slot starting at byte {0} is not closed")]
    UnclosedSlot(usize),
}

/// A fully substituted prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub stage_kind: StageKind,
    pub body: String,
    /// Slot name to the value that was inserted.
    pub substitutions: BTreeMap<String, String>,
}

/// Text returned by a transport for one prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    pub transcript_id: String,
    pub stage_kind: StageKind,
}

impl RawResponse {
    pub fn new(stage_kind: StageKind, text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            transcript_id: String::new(),
            stage_kind,
        }
    }
}

impl PromptText {
    /// Key used by the fixture store.
    pub fn hash(&self) -> String {
        sha256_hex(self.body.as_bytes())
    }
}

/// Fills every `{{NAME}}` slot of `template` from `values`.
pub fn fill_template(template: &str, values: &BTreeMap<String, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    let mut offset = 0;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or(PromptError::UnclosedSlot(offset + start))?;
        let name = &after[..end];
        let value = values
            .get(name)
            .ok_or_else(|| PromptError::MissingValue(name.to_string()))?;
        out.push_str(value);
        let consumed = start + 2 + end + 2;
        rest = &rest[consumed..];
        offset += consumed;
    }
    out.push_str(rest);
    Ok(out)
}

fn build(
    stage_kind: StageKind,
    template: &str,
    pairs: Vec<(&str, String)>,
) -> Result<PromptText, PromptError> {
    let substitutions: BTreeMap<String, String> =
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let body = fill_template(template, &substitutions)?;
    Ok(PromptText {
        stage_kind,
        body,
        substitutions,
    })
}

fn check_profile(profile: &SoftwareProfile) -> Result<(), PromptError> {
    profile.check().map_err(PromptError::Profile)
}

/// Workflow analysis and concept identification prompt.
pub fn assemble_workflow_prompt(
    task: &TaskDescription,
    profile: &SoftwareProfile,
) -> Result<PromptText, PromptError> {
    task.check().map_err(PromptError::Task)?;
    if profile.name.trim().is_empty() {
        return Err(PromptError::Profile(ModelError::EmptyProfileField { field: "name" }));
    }
    build(
        StageKind::WorkflowAnalysis,
        WORKFLOW_TEMPLATE,
        vec![
            ("USER_TASK_DESCRIPTION", task.text.clone()),
            ("SOFTWARE", profile.name.clone()),
        ],
    )
}

/// Renders one stage as `- NAME: DESCRIPTION, CONCEPT TERMS, EXPLANATIONS`.
pub fn render_stage_line(stage: &WorkflowStage) -> String {
    let terms = stage
        .concepts
        .iter()
        .map(|c| c.term.as_str())
        .collect::<Vec<_>>()
        .join("; ");
    let explanations = stage
        .concepts
        .iter()
        .map(|c| format!("{}: {}", c.term, c.explanation))
        .collect::<Vec<_>>()
        .join("; ");
    format!("- {}: {}, {}, {}", stage.name, stage.description, terms, explanations)
}

fn render_documents(docs: &[crate::model::DocExcerpt]) -> String {
    if docs.is_empty() {
        return "(none provided)".to_string();
    }
    docs.iter()
        .map(|d| format!("### {}\n{}", d.title, d.body.trim_end()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Tool selection and complexity assessment prompt.
pub fn assemble_tool_prompt(
    stages: &[WorkflowStage],
    profile: &SoftwareProfile,
) -> Result<PromptText, PromptError> {
    check_profile(profile)?;
    if stages.is_empty() {
        return Err(PromptError::NoStages);
    }
    let block = stages.iter().map(render_stage_line).collect::<Vec<_>>().join("\n");
    build(
        StageKind::ToolSelection,
        TOOL_TEMPLATE,
        vec![
            ("SOFTWARE", profile.name.clone()),
            ("WORKFLOW_STAGES", block),
            ("SOFTWARE_MANUALS", render_documents(&profile.manual_refs)),
        ],
    )
}

/// One `SELECTED TOOLS` entry: `- STAGE: LABEL, RATIONALE, LEVEL.` plus the
/// tool's concepts when it has any.
pub fn render_selected_tool(tool: &ToolSpec, stages: &[WorkflowStage]) -> String {
    let stage = stages
        .iter()
        .find(|s| s.stage_id == tool.stage_id)
        .map(|s| s.name.as_str())
        .unwrap_or("Unassigned");
    let mut line = format!(
        "- {}: {}, {}, {}.",
        stage,
        tool.label,
        tool.rationale.trim_end_matches('.'),
        tool.complexity.title()
    );
    if !tool.concepts.is_empty() {
        let concepts = tool
            .concepts
            .iter()
            .map(|term| {
                let explanation = stages
                    .iter()
                    .flat_map(|s| s.concepts.iter())
                    .find(|c| &c.term == term)
                    .map(|c| c.explanation.as_str())
                    .unwrap_or("");
                format!("{term}: {explanation}")
            })
            .collect::<Vec<_>>()
            .join("; ");
        line.push_str(" Domain concepts: ");
        line.push_str(&concepts);
    }
    line
}

fn selected_tools_block(tools: &[ToolSpec], stages: &[WorkflowStage]) -> String {
    tools
        .iter()
        .map(|t| render_selected_tool(t, stages))
        .collect::<Vec<_>>()
        .join("\n")
}

fn check_example_code(profile: &SoftwareProfile) -> Result<(), PromptError> {
    if profile.example_layout_code.trim().is_empty() {
        return Err(PromptError::MissingExampleCode {
            profile: profile.name.clone(),
        });
    }
    check_profile(profile)
}

/// UI code generation and tool labeling prompt, including the example
/// layout code.
pub fn assemble_codegen_prompt(
    tools: &[ToolSpec],
    stages: &[WorkflowStage],
    profile: &SoftwareProfile,
) -> Result<PromptText, PromptError> {
    if tools.is_empty() {
        return Err(PromptError::NoTools);
    }
    check_example_code(profile)?;
    build(
        StageKind::UiCodegen,
        CODEGEN_TEMPLATE,
        vec![
            ("SOFTWARE", profile.name.clone()),
            ("SELECTED_TOOLS", selected_tools_block(tools, stages)),
            ("SOFTWARE_APIS", render_documents(&profile.api_refs)),
            ("EXAMPLE_CODE", profile.example_layout_code.trim_end().to_string()),
        ],
    )
}

/// Asks for one fenced block of scripting code per tool.
pub fn assemble_functionality_prompt(
    tools: &[ToolSpec],
    stages: &[WorkflowStage],
    profile: &SoftwareProfile,
) -> Result<PromptText, PromptError> {
    if tools.is_empty() {
        return Err(PromptError::NoTools);
    }
    check_profile(profile)?;
    build(
        StageKind::FunctionalityCodegen,
        FUNCTIONALITY_TEMPLATE,
        vec![
            ("SOFTWARE", profile.name.clone()),
            ("SELECTED_TOOLS", selected_tools_block(tools, stages)),
            ("SOFTWARE_APIS", render_documents(&profile.api_refs)),
        ],
    )
}

/// Asks for concept references, native mappings and a control kind per tool.
pub fn assemble_labeling_prompt(
    tools: &[ToolSpec],
    stages: &[WorkflowStage],
    profile: &SoftwareProfile,
) -> Result<PromptText, PromptError> {
    if tools.is_empty() {
        return Err(PromptError::NoTools);
    }
    check_profile(profile)?;
    let tool_list = tools
        .iter()
        .map(|t| {
            let stage = stages
                .iter()
                .find(|s| s.stage_id == t.stage_id)
                .map(|s| s.name.as_str())
                .unwrap_or("Unassigned");
            format!("- [{}] {} (stage: {}; level: {})", t.tool_id, t.label, stage, t.complexity.title())
        })
        .collect::<Vec<_>>()
        .join("\n");
    let concepts = stages
        .iter()
        .flat_map(|s| s.concepts.iter())
        .map(|c| format!("- {}: {}", c.term, c.explanation))
        .collect::<Vec<_>>();
    let concepts = if concepts.is_empty() {
        "(none identified)".to_string()
    } else {
        concepts.join("\n")
    };
    build(
        StageKind::ToolLabeling,
        LABELING_TEMPLATE,
        vec![
            ("SOFTWARE", profile.name.clone()),
            ("TOOL_LIST", tool_list),
            ("DOMAIN_CONCEPTS", concepts),
        ],
    )
}
