//! The staged generation chain.
//!
//! [`PipelineState`] owns one artifact per [`StageKind`]. Running or editing a
//! stage marks every later stage stale, and a stage only runs once all of its
//! upstream artifacts are present and fresh.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::sha256_hex;
use crate::model::{
    canonicalize, to_canonical_json, ScaffoldSpec, SoftwareProfile, StructureError, TaskDescription, ToolId,
    ToolSpec, WorkflowStage,
};
use crate::parse::{
    extract_code_blocks, parse_labeling_response, parse_tool_response, parse_workflow_response, repair_or_fail,
    Issue, ParseOutcome, ToolLabel,
};
use crate::prompt::{
    assemble_codegen_prompt, assemble_functionality_prompt, assemble_labeling_prompt, assemble_tool_prompt,
    assemble_workflow_prompt, PromptError, PromptText, RawResponse,
};
use crate::stage::StageKind;
use crate::transport::{send_with_retry, LlmTransport, RetryPolicy, TransportError};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot run {stage}: {missing} has not produced an artifact yet")]
    Missing { stage: StageKind, missing: StageKind },
    #[error("cannot run {stage}: {upstream} is stale and must be re-run first")]
    Stale { stage: StageKind, upstream: StageKind },
    #[error("cannot edit {stage}: {upstream} is stale or missing")]
    EditBlocked { stage: StageKind, upstream: StageKind },
    #[error("edited {stage} artifact is invalid: {message}")]
    InvalidEdit { stage: StageKind, message: String },
    #[error("artifact for {stage} has the wrong payload type")]
    WrongPayload { stage: StageKind },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{stage}: {source}")]
    Transport { stage: StageKind, source: TransportError },
    #[error("{stage}: response still unusable after {attempts} attempt(s)")]
    ParseExhausted { stage: StageKind, attempts: u32, issues: Vec<Issue> },
    #[error(transparent)]
    Structure(#[from] StructureError),
}

/// A code block kept from the UI code generation response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftBlock {
    pub tool_id: Option<ToolId>,
    pub code: String,
}

const DRAFT_MARKER: &str = "# --- tool: ";
const DRAFT_UNASSIGNED: &str = "(unassigned)";

/// Renders draft blocks as one Python file, each block under a marker line.
pub fn render_ui_draft(blocks: &[DraftBlock]) -> String {
    let mut out = String::new();
    for block in blocks {
        let id = block.tool_id.as_ref().map(ToolId::as_str).unwrap_or(DRAFT_UNASSIGNED);
        out.push_str(&format!("{DRAFT_MARKER}{id} ---\n"));
        out.push_str(&block.code);
        if !block.code.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

/// Inverse of [`render_ui_draft`]. Text before the first marker is dropped.
pub fn parse_ui_draft(text: &str) -> Vec<DraftBlock> {
    let mut blocks: Vec<DraftBlock> = Vec::new();
    for line in text.split_inclusive('\n') {
        let bare = line.trim_end_matches(['\n', '\r']);
        if let Some(id) = bare.strip_prefix(DRAFT_MARKER).and_then(|r| r.strip_suffix(" ---")) {
            let id = id.trim();
            blocks.push(DraftBlock {
                tool_id: (id != DRAFT_UNASSIGNED).then(|| ToolId::from(id)),
                code: String::new(),
            });
        } else if let Some(last) = blocks.last_mut() {
            last.code.push_str(line);
        }
    }
    blocks
}

/// The typed output of one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StagePayload {
    Workflow(Vec<WorkflowStage>),
    Tools(Vec<ToolSpec>),
    /// Tool id to its scripting code.
    Functionality(BTreeMap<ToolId, String>),
    UiDraft(Vec<DraftBlock>),
    Labels(Vec<ToolLabel>),
}

impl StagePayload {
    pub fn kind(&self) -> StageKind {
        match self {
            StagePayload::Workflow(_) => StageKind::WorkflowAnalysis,
            StagePayload::Tools(_) => StageKind::ToolSelection,
            StagePayload::Functionality(_) => StageKind::FunctionalityCodegen,
            StagePayload::UiDraft(_) => StageKind::UiCodegen,
            StagePayload::Labels(_) => StageKind::ToolLabeling,
        }
    }

    /// Workspace-relative files holding this payload.
    pub fn to_files(&self) -> Vec<(String, String)> {
        match self {
            StagePayload::Workflow(v) => vec![(artifact_path(StageKind::WorkflowAnalysis).into(), to_canonical_json(v))],
            StagePayload::Tools(v) => vec![(artifact_path(StageKind::ToolSelection).into(), to_canonical_json(v))],
            StagePayload::Functionality(map) => map
                .iter()
                .map(|(id, code)| (format!("{}/{}.txt", artifact_path(StageKind::FunctionalityCodegen), id), code.clone()))
                .collect(),
            StagePayload::UiDraft(blocks) => vec![(artifact_path(StageKind::UiCodegen).into(), render_ui_draft(blocks))],
            StagePayload::Labels(v) => vec![(artifact_path(StageKind::ToolLabeling).into(), to_canonical_json(v))],
        }
    }

    pub fn content_hash(&self) -> String {
        let files: Vec<(String, Vec<u8>)> = self
            .to_files()
            .into_iter()
            .map(|(path, text)| (path, text.into_bytes()))
            .collect();
        hash_files(&files)
    }
}

/// Where each stage's artifact lives in a workspace. The functionality stage
/// owns a directory with one `<tool_id>.txt` per tool.
pub fn artifact_path(kind: StageKind) -> &'static str {
    match kind {
        StageKind::WorkflowAnalysis => "workflow.json",
        StageKind::ToolSelection => "tools.json",
        StageKind::FunctionalityCodegen => "functionality",
        StageKind::UiCodegen => "ui_draft.py",
        StageKind::ToolLabeling => "labels.json",
    }
}

/// Content hash over a set of artifact files.
///
/// JSON files are hashed after a parse and re-serialize, so whitespace and
/// key order do not count as edits. Unparseable JSON and other files are
/// hashed byte for byte.
pub fn hash_files(files: &[(String, Vec<u8>)]) -> String {
    let mut sorted: Vec<&(String, Vec<u8>)> = files.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut manifest = String::new();
    for (path, bytes) in sorted {
        let digest = if path.ends_with(".json") {
            match serde_json::from_slice::<serde_json::Value>(bytes) {
                Ok(value) => sha256_hex(to_canonical_json(&value).as_bytes()),
                Err(_) => sha256_hex(bytes),
            }
        } else {
            sha256_hex(bytes)
        };
        manifest.push_str(&format!("{path}\0{digest}\n"));
    }
    sha256_hex(manifest.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub payload: StagePayload,
    pub content_hash: String,
}

/// One prompt and the response it got.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub stage_kind: StageKind,
    /// 1-based attempt within the stage run.
    pub attempt: u32,
    pub prompt: PromptText,
    pub response: RawResponse,
}

/// What a stage run did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: StageKind,
    pub attempts: u32,
    pub warnings: Vec<Issue>,
}

/// Everything a stage run needs besides the state.
pub struct PipelineContext<'a> {
    pub profile: &'a SoftwareProfile,
    pub transport: &'a mut dyn LlmTransport,
    pub retry: RetryPolicy,
    /// Transport calls allowed per stage for parsing, repairs included.
    pub max_attempts: u32,
}

impl<'a> PipelineContext<'a> {
    pub fn new(profile: &'a SoftwareProfile, transport: &'a mut dyn LlmTransport) -> Self {
        Self {
            profile,
            transport,
            retry: RetryPolicy::default(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineState {
    pub task: TaskDescription,
    artifacts: BTreeMap<StageKind, Artifact>,
    transcripts: Vec<Transcript>,
    stale: BTreeSet<StageKind>,
}

impl PipelineState {
    pub fn new(task: TaskDescription) -> Self {
        Self {
            task,
            artifacts: BTreeMap::new(),
            transcripts: Vec::new(),
            stale: BTreeSet::new(),
        }
    }

    pub fn artifact(&self, kind: StageKind) -> Option<&Artifact> {
        self.artifacts.get(&kind)
    }

    pub fn transcripts(&self) -> &[Transcript] {
        &self.transcripts
    }

    pub fn stale(&self) -> &BTreeSet<StageKind> {
        &self.stale
    }

    pub fn is_stale(&self, kind: StageKind) -> bool {
        self.stale.contains(&kind)
    }

    /// True when every stage has a fresh artifact.
    pub fn is_complete(&self) -> bool {
        self.stale.is_empty() && StageKind::CHAIN.iter().all(|k| self.artifacts.contains_key(k))
    }

    /// Restores a stored artifact without touching staleness.
    pub fn restore(&mut self, artifact: Artifact, stale: bool) {
        let kind = artifact.payload.kind();
        self.artifacts.insert(kind, artifact);
        if stale {
            self.stale.insert(kind);
        } else {
            self.stale.remove(&kind);
        }
    }

    /// Appends a transcript loaded from disk.
    pub fn push_transcript(&mut self, transcript: Transcript) {
        self.transcripts.push(transcript);
    }

    /// Marks a stage stale by hand.
    pub fn mark_stale(&mut self, kind: StageKind) {
        self.stale.insert(kind);
    }

    /// Overrides the recorded content hash, e.g. with the hash of the file a
    /// human edited.
    pub fn set_content_hash(&mut self, kind: StageKind, hash: String) {
        if let Some(a) = self.artifacts.get_mut(&kind) {
            a.content_hash = hash;
        }
    }

    pub fn workflow(&self) -> Option<&[WorkflowStage]> {
        match self.artifacts.get(&StageKind::WorkflowAnalysis).map(|a| &a.payload) {
            Some(StagePayload::Workflow(v)) => Some(v),
            _ => None,
        }
    }

    pub fn tools(&self) -> Option<&[ToolSpec]> {
        match self.artifacts.get(&StageKind::ToolSelection).map(|a| &a.payload) {
            Some(StagePayload::Tools(v)) => Some(v),
            _ => None,
        }
    }

    fn check_upstream(&self, kind: StageKind) -> Result<(), PipelineError> {
        for &up in kind.upstream() {
            if !self.artifacts.contains_key(&up) {
                return Err(PipelineError::Missing { stage: kind, missing: up });
            }
            if self.stale.contains(&up) {
                return Err(PipelineError::Stale { stage: kind, upstream: up });
            }
        }
        Ok(())
    }

    fn commit(&mut self, payload: StagePayload) {
        let kind = payload.kind();
        let content_hash = payload.content_hash();
        self.artifacts.insert(kind, Artifact { payload, content_hash });
        self.stale.remove(&kind);
        self.stale.extend(kind.downstream().iter().copied());
    }

    /// Runs one stage through the transport, repairing unparseable answers up
    /// to `ctx.max_attempts` calls.
    pub fn run_stage(&mut self, ctx: &mut PipelineContext, kind: StageKind) -> Result<StageReport, PipelineError> {
        self.check_upstream(kind)?;
        let stages = self.workflow().map(<[_]>::to_vec).unwrap_or_default();
        let tools = self.tools().map(<[_]>::to_vec).unwrap_or_default();
        let profile = ctx.profile;
        let prompt = match kind {
            StageKind::WorkflowAnalysis => assemble_workflow_prompt(&self.task, profile)?,
            StageKind::ToolSelection => assemble_tool_prompt(&stages, profile)?,
            StageKind::FunctionalityCodegen => assemble_functionality_prompt(&tools, &stages, profile)?,
            StageKind::UiCodegen => assemble_codegen_prompt(&tools, &stages, profile)?,
            StageKind::ToolLabeling => assemble_labeling_prompt(&tools, &stages, profile)?,
        };
        let (payload, attempts, mut warnings) = match kind {
            StageKind::WorkflowAnalysis => {
                self.converse(ctx, &prompt, parse_workflow_response, StagePayload::Workflow)?
            }
            StageKind::ToolSelection => self.converse(
                ctx,
                &prompt,
                |raw| parse_tool_response(raw, &stages),
                StagePayload::Tools,
            )?,
            StageKind::FunctionalityCodegen => self.converse(
                ctx,
                &prompt,
                |raw| extract_code_blocks(raw, &tools),
                |blocks| {
                    let mut map: BTreeMap<ToolId, String> = BTreeMap::new();
                    for block in blocks {
                        if let Some(id) = block.tool_id {
                            map.entry(id).or_default().push_str(&block.code);
                        }
                    }
                    StagePayload::Functionality(map)
                },
            )?,
            StageKind::UiCodegen => self.converse(
                ctx,
                &prompt,
                |raw| extract_code_blocks(raw, &tools),
                |blocks| {
                    StagePayload::UiDraft(
                        blocks
                            .into_iter()
                            .map(|b| DraftBlock { tool_id: b.tool_id, code: b.code })
                            .collect(),
                    )
                },
            )?,
            StageKind::ToolLabeling => self.converse(
                ctx,
                &prompt,
                |raw| parse_labeling_response(raw, &tools, &stages),
                StagePayload::Labels,
            )?,
        };
        if let StagePayload::Functionality(map) = &payload {
            for tool in &tools {
                if !map.contains_key(&tool.tool_id) {
                    warnings.push(Issue {
                        severity: crate::parse::Severity::Warning,
                        message: format!("no functionality code for tool {}", tool.tool_id),
                        line: 0,
                    });
                }
            }
        }
        self.commit(payload);
        Ok(StageReport { stage: kind, attempts, warnings })
    }

    fn converse<T>(
        &mut self,
        ctx: &mut PipelineContext,
        prompt: &PromptText,
        parse: impl Fn(&RawResponse) -> ParseOutcome<T>,
        wrap: impl FnOnce(T) -> StagePayload,
    ) -> Result<(StagePayload, u32, Vec<Issue>), PipelineError> {
        let kind = prompt.stage_kind;
        let retry = ctx.retry;
        let transport = &mut *ctx.transport;
        let mut complete = |p: &PromptText| {
            send_with_retry(transport, p, retry)
                .map(|text| RawResponse::new(kind, text))
                .map_err(|source| PipelineError::Transport { stage: kind, source })
        };
        let first = complete(prompt)?;
        let repaired = repair_or_fail(prompt, first, parse, &mut complete, ctx.max_attempts.max(1))?;
        for (attempt, (prompt, mut response)) in repaired.history.into_iter().enumerate() {
            response.transcript_id = format!("{:04}_{}", self.transcripts.len() + 1, kind);
            self.transcripts.push(Transcript {
                stage_kind: kind,
                attempt: attempt as u32 + 1,
                prompt,
                response,
            });
        }
        let issues = repaired.outcome.issues().to_vec();
        match repaired.outcome.into_payload() {
            Some(payload) => Ok((wrap(payload), repaired.attempts, issues)),
            None => Err(PipelineError::ParseExhausted {
                stage: kind,
                attempts: repaired.attempts,
                issues,
            }),
        }
    }

    /// Runs every stage in chain order.
    pub fn run_all(&mut self, ctx: &mut PipelineContext) -> Result<Vec<StageReport>, PipelineError> {
        StageKind::CHAIN.iter().map(|&k| self.run_stage(ctx, k)).collect()
    }

    /// Replaces an artifact with human-edited content. Refused while an
    /// upstream stage is missing or stale; marks every later stage stale.
    pub fn edit_artifact(&mut self, payload: StagePayload) -> Result<(), PipelineError> {
        self.acknowledge_edits(vec![payload])
    }

    /// Applies several human edits at once, in chain order. Edited stages
    /// count as fresh for each other, so editing `workflow.json` and
    /// `tools.json` together is fine, but an edit below a stage that must
    /// re-run is refused because the re-run would overwrite it.
    pub fn acknowledge_edits(&mut self, mut payloads: Vec<StagePayload>) -> Result<(), PipelineError> {
        payloads.sort_by_key(StagePayload::kind);
        let edited: BTreeSet<StageKind> = payloads.iter().map(StagePayload::kind).collect();
        for payload in payloads {
            let kind = payload.kind();
            for &up in kind.upstream() {
                let fresh = self.artifacts.contains_key(&up) && (!self.stale.contains(&up) || edited.contains(&up));
                if !fresh {
                    return Err(PipelineError::EditBlocked { stage: kind, upstream: up });
                }
            }
            self.check_edit(&payload)?;
            self.commit(payload);
        }
        for kind in &edited {
            self.stale.remove(kind);
        }
        for &kind in &edited {
            if let Some(&up) = kind.upstream().iter().find(|up| self.stale.contains(up)) {
                return Err(PipelineError::EditBlocked { stage: kind, upstream: up });
            }
        }
        Ok(())
    }

    fn check_edit(&self, payload: &StagePayload) -> Result<(), PipelineError> {
        let kind = payload.kind();
        let invalid = |message: String| Err(PipelineError::InvalidEdit { stage: kind, message });
        match payload {
            StagePayload::Workflow(stages) => {
                if stages.is_empty() {
                    return invalid("no workflow stages".into());
                }
                let mut ids = HashSet::new();
                for s in stages {
                    if !ids.insert(s.stage_id) {
                        return invalid(format!("stage id {} is used twice", s.stage_id));
                    }
                }
            }
            StagePayload::Tools(tools) => {
                let stages = self.workflow().unwrap_or_default();
                let mut ids = HashSet::new();
                for t in tools {
                    if t.tool_id.as_str().is_empty() || !ids.insert(&t.tool_id) {
                        return invalid(format!("tool id {:?} is empty or repeated", t.tool_id.as_str()));
                    }
                    if !stages.iter().any(|s| s.stage_id == t.stage_id) {
                        return invalid(format!("tool {} refers to unknown stage {}", t.tool_id, t.stage_id));
                    }
                }
                if tools.is_empty() {
                    return invalid("no tools".into());
                }
            }
            StagePayload::Functionality(map) => {
                let tools = self.tools().unwrap_or_default();
                if let Some(id) = map.keys().find(|id| !tools.iter().any(|t| &t.tool_id == *id)) {
                    return invalid(format!("code for unknown tool {id}"));
                }
            }
            StagePayload::UiDraft(_) => {}
            StagePayload::Labels(labels) => {
                let tools = self.tools().unwrap_or_default();
                if let Some(l) = labels.iter().find(|l| !tools.iter().any(|t| t.tool_id == l.tool_id)) {
                    return invalid(format!("label for unknown tool {}", l.tool_id));
                }
            }
        }
        Ok(())
    }

    /// Merges all artifacts into a canonical spec at `version`.
    pub fn assemble_spec(&self, version: u64) -> Result<ScaffoldSpec, PipelineError> {
        let mut parts = BTreeMap::new();
        for &kind in &StageKind::CHAIN {
            let artifact = self
                .artifacts
                .get(&kind)
                .ok_or(PipelineError::Missing { stage: StageKind::ToolLabeling, missing: kind })?;
            parts.insert(kind, &artifact.payload);
        }
        let (
            Some(StagePayload::Workflow(stages)),
            Some(StagePayload::Tools(tools)),
            Some(StagePayload::Functionality(code)),
            Some(StagePayload::UiDraft(draft)),
            Some(StagePayload::Labels(labels)),
        ) = (
            parts.get(&StageKind::WorkflowAnalysis).copied(),
            parts.get(&StageKind::ToolSelection).copied(),
            parts.get(&StageKind::FunctionalityCodegen).copied(),
            parts.get(&StageKind::UiCodegen).copied(),
            parts.get(&StageKind::ToolLabeling).copied(),
        )
        else {
            return Err(PipelineError::WrongPayload { stage: StageKind::ToolLabeling });
        };
        Ok(assemble_spec(&self.task, stages, tools, code, draft, labels, version)?)
    }
}

/// Merges stage outputs into a canonical spec.
///
/// Functionality comes from the functionality stage, falling back to the UI
/// draft block attributed to the same tool. Labels supply concepts, native
/// mapping and control kind.
pub fn assemble_spec(
    task: &TaskDescription,
    stages: &[WorkflowStage],
    tools: &[ToolSpec],
    code: &BTreeMap<ToolId, String>,
    draft: &[DraftBlock],
    labels: &[ToolLabel],
    version: u64,
) -> Result<ScaffoldSpec, StructureError> {
    let merged = tools
        .iter()
        .map(|tool| {
            let mut tool = tool.clone();
            let from_stage = code.get(&tool.tool_id).filter(|c| !c.trim().is_empty());
            let from_draft = draft
                .iter()
                .find(|b| b.tool_id.as_ref() == Some(&tool.tool_id) && !b.code.trim().is_empty())
                .map(|b| &b.code);
            if let Some(c) = from_stage.or(from_draft) {
                tool.functionality_code = c.clone();
            }
            if let Some(label) = labels.iter().find(|l| l.tool_id == tool.tool_id) {
                tool.concepts = label.concepts.clone();
                tool.native = label.native.clone();
                tool.control_kind = label.control_kind;
            }
            tool
        })
        .collect();
    canonicalize(&ScaffoldSpec {
        task: task.clone(),
        stages: stages.to_vec(),
        tools: merged,
        version,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ComplexityLevel, DocExcerpt};
    use crate::transport::ScriptedTransport;

    fn profile() -> SoftwareProfile {
        SoftwareProfile {
            name: "Blender".into(),
            manual_refs: vec![DocExcerpt { title: "UV".into(), body: "Unwrapping.".into() }],
            api_refs: vec![],
            example_layout_code: "layout.row()".into(),
        }
    }

    fn script() -> ScriptedTransport {
        ScriptedTransport::new()
            .always(StageKind::WorkflowAnalysis, "1. **Marking Seams**: Cut.\n   - Seam: a cut\n")
            .always(StageKind::ToolSelection, "- **Marking Seams**: Mark Seam, Cuts, Basic.\n")
            .always(StageKind::FunctionalityCodegen, "Mark Seam\n```python\nbpy.ops.mesh.mark_seam()\n```\n")
            .always(StageKind::UiCodegen, "Mark Seam\n```python\nrow.operator('x')\n```\n")
            .always(
                StageKind::ToolLabeling,
                "- [marking_seams_mark_seam] Mark Seam\n  - Concepts: Seam\n  - Shortcut: Ctrl+E\n  - Control: button\n",
            )
    }

    fn task() -> TaskDescription {
        TaskDescription::new("perform UV unwrapping", "blender").unwrap()
    }

    #[test]
    fn runs_end_to_end() {
        let profile = profile();
        let mut transport = script();
        let mut ctx = PipelineContext::new(&profile, &mut transport);
        ctx.retry = RetryPolicy::immediate(1);
        let mut state = PipelineState::new(task());
        state.run_all(&mut ctx).unwrap();
        assert!(state.is_complete());
        let spec = state.assemble_spec(1).unwrap();
        assert_eq!(spec.tools[0].functionality_code, "bpy.ops.mesh.mark_seam()\n");
        assert_eq!(spec.tools[0].concepts, ["Seam"]);
        assert_eq!(state.transcripts().len(), 5);
        assert_eq!(state.transcripts()[4].response.transcript_id, "0005_tool_labeling");
    }

    #[test]
    fn out_of_order_run_is_refused() {
        let profile = profile();
        let mut transport = script();
        let mut ctx = PipelineContext::new(&profile, &mut transport);
        let mut state = PipelineState::new(task());
        assert!(matches!(
            state.run_stage(&mut ctx, StageKind::UiCodegen),
            Err(PipelineError::Missing { missing: StageKind::WorkflowAnalysis, .. })
        ));
        state.run_stage(&mut ctx, StageKind::WorkflowAnalysis).unwrap();
        state.run_stage(&mut ctx, StageKind::ToolSelection).unwrap();
        state.run_stage(&mut ctx, StageKind::WorkflowAnalysis).unwrap();
        assert!(matches!(
            state.run_stage(&mut ctx, StageKind::UiCodegen),
            Err(PipelineError::Stale { upstream: StageKind::ToolSelection, .. })
        ));
    }

    #[test]
    fn edits_mark_downstream_stale() {
        let profile = profile();
        let mut transport = script();
        let mut ctx = PipelineContext::new(&profile, &mut transport);
        let mut state = PipelineState::new(task());
        state.run_all(&mut ctx).unwrap();
        let mut tools = state.tools().unwrap().to_vec();
        tools[0].complexity = ComplexityLevel::Advanced;
        state.edit_artifact(StagePayload::Tools(tools)).unwrap();
        let stale: Vec<_> = state.stale().iter().copied().collect();
        assert_eq!(stale, StageKind::ToolSelection.downstream());
        let mut labels = match &state.artifact(StageKind::ToolLabeling).unwrap().payload {
            StagePayload::Labels(l) => l.clone(),
            _ => unreachable!(),
        };
        labels[0].concepts.clear();
        assert!(matches!(
            state.edit_artifact(StagePayload::Labels(labels)),
            Err(PipelineError::EditBlocked { .. })
        ));
    }

    #[test]
    fn parse_exhaustion_reports_attempts() {
        let profile = profile();
        let mut transport = ScriptedTransport::new().always(StageKind::WorkflowAnalysis, "no idea");
        let mut ctx = PipelineContext::new(&profile, &mut transport);
        ctx.max_attempts = 3;
        let mut state = PipelineState::new(task());
        match state.run_stage(&mut ctx, StageKind::WorkflowAnalysis) {
            Err(PipelineError::ParseExhausted { attempts, issues, .. }) => {
                assert_eq!(attempts, 3);
                assert!(!issues.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(transport.calls().len(), 3);
    }

    #[test]
    fn ui_draft_round_trips() {
        let blocks = vec![
            DraftBlock { tool_id: Some("a".into()), code: "x = 1\n".into() },
            DraftBlock { tool_id: None, code: "y = 2\n\n".into() },
        ];
        assert_eq!(parse_ui_draft(&render_ui_draft(&blocks)), blocks);
    }

    #[test]
    fn json_hash_ignores_formatting() {
        let a = vec![("tools.json".to_string(), b"{\"a\": 1, \"b\": 2}".to_vec())];
        let b = vec![("tools.json".to_string(), b"{\n  \"b\": 2,\n  \"a\": 1\n}\n".to_vec())];
        assert_eq!(hash_files(&a), hash_files(&b));
        let c = vec![("ui_draft.py".to_string(), b"x".to_vec())];
        let d = vec![("ui_draft.py".to_string(), b"x ".to_vec())];
        assert_ne!(hash_files(&c), hash_files(&d));
    }
}
