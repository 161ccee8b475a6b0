//! The scaffold spec data model.
//!
//! Every pipeline stage reads or writes these types. A [`ScaffoldSpec`] is the
//! human-editable artifact: ordered workflow stages carrying domain concepts,
//! and tools bound to stages with a complexity level, concept references and a
//! native-UI mapping.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::sha256_hex;

/// Errors raised when a value violates a model invariant.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("task description is empty")]
    EmptyTask,
    #[error("software profile {field} is empty")]
    EmptyProfileField { field: &'static str },
    #[error("native mapping needs at least one of shortcut, menu path or mouse operation")]
    EmptyNativeMapping,
    #[error("unknown complexity level {0:?}")]
    UnknownComplexity(String),
    #[error("unknown control kind {0:?}")]
    UnknownControlKind(String),
}

/// Structural breaks found while canonicalizing a spec.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("tool {tool_id} refers to stage {stage_id}, which does not exist")]
    DanglingStage { tool_id: ToolId, stage_id: u32 },
    #[error("tool {tool_id} refers to concept {term:?}, which no stage defines")]
    DanglingConcept { tool_id: ToolId, term: String },
    #[error("stage id {0} is used by more than one stage")]
    DuplicateStageId(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDescription {
    pub text: String,
    pub software_id: String,
}

impl TaskDescription {
    pub fn new(text: impl Into<String>, software_id: impl Into<String>) -> Result<Self, ModelError> {
        let task = Self {
            text: text.into(),
            software_id: software_id.into(),
        };
        task.check()?;
        Ok(task)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.text.trim().is_empty() {
            return Err(ModelError::EmptyTask);
        }
        Ok(())
    }
}

/// A titled excerpt from a manual or API reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocExcerpt {
    pub title: String,
    pub body: String,
}

/// What the pipeline knows about the target application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoftwareProfile {
    pub name: String,
    #[serde(default)]
    pub manual_refs: Vec<DocExcerpt>,
    #[serde(default)]
    pub api_refs: Vec<DocExcerpt>,
    pub example_layout_code: String,
}

impl SoftwareProfile {
    pub fn check(&self) -> Result<(), ModelError> {
        if self.name.trim().is_empty() {
            return Err(ModelError::EmptyProfileField { field: "name" });
        }
        if self.example_layout_code.trim().is_empty() {
            return Err(ModelError::EmptyProfileField {
                field: "example_layout_code",
            });
        }
        Ok(())
    }

    /// Identifier used by [`TaskDescription::software_id`].
    pub fn id(&self) -> String {
        slugify(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainConcept {
    pub term: String,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowStage {
    pub stage_id: u32,
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub concepts: Vec<DomainConcept>,
}

/// The three disclosure levels, ordered `Basic < Intermediate < Advanced`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComplexityLevel {
    Basic,
    Intermediate,
    Advanced,
}

impl ComplexityLevel {
    pub const ALL: [ComplexityLevel; 3] = [
        ComplexityLevel::Basic,
        ComplexityLevel::Intermediate,
        ComplexityLevel::Advanced,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComplexityLevel::Basic => "basic",
            ComplexityLevel::Intermediate => "intermediate",
            ComplexityLevel::Advanced => "advanced",
        }
    }

    /// Capitalized name, as shown in prompts and the panel.
    pub fn title(self) -> &'static str {
        match self {
            ComplexityLevel::Basic => "Basic",
            ComplexityLevel::Intermediate => "Intermediate",
            ComplexityLevel::Advanced => "Advanced",
        }
    }

    pub fn rank(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for ComplexityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

impl FromStr for ComplexityLevel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "basic" => Ok(ComplexityLevel::Basic),
            "intermediate" => Ok(ComplexityLevel::Intermediate),
            "advanced" => Ok(ComplexityLevel::Advanced),
            _ => Err(ModelError::UnknownComplexity(s.to_string())),
        }
    }
}

/// Where a tool lives in the host application's own interface.
///
/// At least one field is always present; deserialization enforces it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawNativeMapping")]
pub struct NativeMapping {
    shortcut: Option<String>,
    menu_path: Option<String>,
    mouse_op: Option<String>,
}

#[derive(Deserialize)]
struct RawNativeMapping {
    #[serde(default)]
    shortcut: Option<String>,
    #[serde(default)]
    menu_path: Option<String>,
    #[serde(default)]
    mouse_op: Option<String>,
}

impl TryFrom<RawNativeMapping> for NativeMapping {
    type Error = ModelError;

    fn try_from(raw: RawNativeMapping) -> Result<Self, Self::Error> {
        NativeMapping::new(raw.shortcut, raw.menu_path, raw.mouse_op)
    }
}

impl NativeMapping {
    /// Blank strings count as absent.
    pub fn new(
        shortcut: Option<String>,
        menu_path: Option<String>,
        mouse_op: Option<String>,
    ) -> Result<Self, ModelError> {
        let clean = |v: Option<String>| v.filter(|s| !s.trim().is_empty());
        let mapping = Self {
            shortcut: clean(shortcut),
            menu_path: clean(menu_path),
            mouse_op: clean(mouse_op),
        };
        if mapping.shortcut.is_none() && mapping.menu_path.is_none() && mapping.mouse_op.is_none() {
            return Err(ModelError::EmptyNativeMapping);
        }
        Ok(mapping)
    }

    pub fn shortcut(&self) -> Option<&str> {
        self.shortcut.as_deref()
    }

    pub fn menu_path(&self) -> Option<&str> {
        self.menu_path.as_deref()
    }

    pub fn mouse_op(&self) -> Option<&str> {
        self.mouse_op.as_deref()
    }

    /// Present fields in the order shortcut, menu path, mouse operation,
    /// joined with `" | "`.
    pub fn display(&self) -> String {
        [&self.shortcut, &self.menu_path, &self.mouse_op]
            .into_iter()
            .flatten()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(" | ")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    #[default]
    Button,
    Dropdown,
    Radio,
    Toggle,
    Slider,
    TextField,
}

impl ControlKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlKind::Button => "button",
            ControlKind::Dropdown => "dropdown",
            ControlKind::Radio => "radio",
            ControlKind::Toggle => "toggle",
            ControlKind::Slider => "slider",
            ControlKind::TextField => "text_field",
        }
    }
}

impl FromStr for ControlKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        match key.trim_matches('_') {
            "button" | "buttons" => Ok(ControlKind::Button),
            "dropdown" | "dropdown_menu" | "drop_down" | "menu" => Ok(ControlKind::Dropdown),
            // Tabs have no native widget in a sidebar panel; they become an enum row.
            "radio" | "radio_button" | "radio_buttons" | "tab" | "tabs" => Ok(ControlKind::Radio),
            "toggle" | "switch" | "switch_toggle" | "checkbox" => Ok(ControlKind::Toggle),
            "slider" => Ok(ControlKind::Slider),
            "text_field" | "text" | "textfield" | "text_input" => Ok(ControlKind::TextField),
            _ => Err(ModelError::UnknownControlKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ToolId(pub String);

impl ToolId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ToolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ToolId {
    fn from(s: &str) -> Self {
        ToolId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub tool_id: ToolId,
    pub label: String,
    pub stage_id: u32,
    pub complexity: ComplexityLevel,
    #[serde(default)]
    pub rationale: String,
    /// Terms of concepts defined on the owning spec's stages.
    #[serde(default)]
    pub concepts: Vec<String>,
    #[serde(default)]
    pub native: Option<NativeMapping>,
    #[serde(default)]
    pub control_kind: ControlKind,
    #[serde(default)]
    pub functionality_code: String,
}

impl ToolSpec {
    /// A freshly selected tool: no concepts, native mapping or code yet.
    pub fn selected(
        label: impl Into<String>,
        stage_id: u32,
        complexity: ComplexityLevel,
        rationale: impl Into<String>,
    ) -> Self {
        Self {
            tool_id: ToolId(String::new()),
            label: label.into(),
            stage_id,
            complexity,
            rationale: rationale.into(),
            concepts: Vec::new(),
            native: None,
            control_kind: ControlKind::Button,
            functionality_code: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaffoldSpec {
    pub task: TaskDescription,
    pub stages: Vec<WorkflowStage>,
    pub tools: Vec<ToolSpec>,
    pub version: u64,
}

impl ScaffoldSpec {
    pub fn stage(&self, stage_id: u32) -> Option<&WorkflowStage> {
        self.stages.iter().find(|s| s.stage_id == stage_id)
    }

    pub fn tool(&self, tool_id: &ToolId) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| &t.tool_id == tool_id)
    }

    /// Looks a concept up by term across all stages; the first definition wins.
    pub fn concept(&self, term: &str) -> Option<&DomainConcept> {
        self.stages
            .iter()
            .flat_map(|s| s.concepts.iter())
            .find(|c| c.term == term)
    }

    /// Tools shown when the panel is at `level`, in canonical order.
    pub fn visible(&self, level: ComplexityLevel) -> Vec<&ToolSpec> {
        let mut tools: Vec<&ToolSpec> = self.tools.iter().filter(|t| t.complexity <= level).collect();
        tools.sort_by(|a, b| tool_order(a, b));
        tools
    }

    /// Applies `change` to a copy and bumps the version.
    pub fn edit(&self, change: impl FnOnce(&mut ScaffoldSpec)) -> ScaffoldSpec {
        let mut next = self.clone();
        change(&mut next);
        next.version = self.version + 1;
        next
    }

    /// Pretty UTF-8 JSON with fields in declaration order and a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        to_canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// SHA-256 of the canonical JSON of the canonicalized spec.
    pub fn content_hash(&self) -> Result<String, StructureError> {
        let canonical = canonicalize(self)?;
        Ok(sha256_hex(canonical.to_canonical_json().as_bytes()))
    }
}

/// Serializes any model value the way every JSON artifact is written.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("model values always serialize");
    text.push('\n');
    text
}

/// `(stage, complexity, label)`, then the remaining content so that tools
/// sharing a label still sort independently of input order.
fn tool_order(a: &ToolSpec, b: &ToolSpec) -> Ordering {
    let key = |t: &ToolSpec| {
        let native = t.native.as_ref().map(|n| (n.shortcut.clone(), n.menu_path.clone(), n.mouse_op.clone()));
        (t.rationale.clone(), t.concepts.clone(), native, t.control_kind.as_str(), t.functionality_code.clone())
    };
    (a.stage_id, a.complexity, a.label.as_str())
        .cmp(&(b.stage_id, b.complexity, b.label.as_str()))
        .then_with(|| key(a).cmp(&key(b)))
}

/// Lowercase ASCII slug: runs of anything but `[a-z0-9]` collapse to one `_`,
/// leading and trailing underscores are trimmed.
pub fn slugify(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending = false;
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            if pending && !out.is_empty() {
                out.push('_');
            }
            pending = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending = true;
        }
    }
    out
}

/// Assigns `slug(stage name + label)` ids in list order, suffixing `_2`, `_3`,
/// ... on collisions.
pub fn assign_tool_ids(stages: &[WorkflowStage], tools: &mut [ToolSpec]) {
    let names: HashMap<u32, &str> = stages.iter().map(|s| (s.stage_id, s.name.as_str())).collect();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut taken: HashSet<String> = HashSet::new();
    for tool in tools.iter_mut() {
        let stage_name = names.get(&tool.stage_id).copied().unwrap_or("");
        let mut base = slugify(&format!("{stage_name} {}", tool.label));
        if base.is_empty() {
            base = "tool".to_string();
        }
        let count = seen.entry(base.clone()).or_insert(0);
        let mut id = base.clone();
        loop {
            *count += 1;
            if *count > 1 {
                id = format!("{base}_{count}");
            }
            if taken.insert(id.clone()) {
                break;
            }
        }
        tool.tool_id = ToolId(id);
    }
}

/// Normalizes a structurally sound spec.
///
/// Stages are renumbered `1..n` in list order, concept lists lose repeated
/// terms, tools are sorted by `(stage, complexity, label)` and get ids
/// recomputed from stage name and label. The version is left alone and the
/// function is a fixpoint.
pub fn canonicalize(spec: &ScaffoldSpec) -> Result<ScaffoldSpec, StructureError> {
    let mut renumber: BTreeMap<u32, u32> = BTreeMap::new();
    for (index, stage) in spec.stages.iter().enumerate() {
        if renumber.insert(stage.stage_id, index as u32 + 1).is_some() {
            return Err(StructureError::DuplicateStageId(stage.stage_id));
        }
    }

    let stages: Vec<WorkflowStage> = spec
        .stages
        .iter()
        .enumerate()
        .map(|(index, stage)| {
            let mut seen = HashSet::new();
            WorkflowStage {
                stage_id: index as u32 + 1,
                name: stage.name.clone(),
                description: stage.description.clone(),
                concepts: stage
                    .concepts
                    .iter()
                    .filter(|c| seen.insert(c.term.clone()))
                    .cloned()
                    .collect(),
            }
        })
        .collect();
    let terms: HashSet<&str> = stages
        .iter()
        .flat_map(|s| s.concepts.iter().map(|c| c.term.as_str()))
        .collect();

    let mut tools = Vec::with_capacity(spec.tools.len());
    for tool in &spec.tools {
        let stage_id = *renumber
            .get(&tool.stage_id)
            .ok_or_else(|| StructureError::DanglingStage {
                tool_id: tool.tool_id.clone(),
                stage_id: tool.stage_id,
            })?;
        let mut seen = HashSet::new();
        let mut concepts = Vec::new();
        for term in &tool.concepts {
            if !terms.contains(term.as_str()) {
                return Err(StructureError::DanglingConcept {
                    tool_id: tool.tool_id.clone(),
                    term: term.clone(),
                });
            }
            if seen.insert(term.as_str()) {
                concepts.push(term.clone());
            }
        }
        tools.push(ToolSpec {
            stage_id,
            concepts,
            ..tool.clone()
        });
    }
    tools.sort_by(tool_order);
    assign_tool_ids(&stages, &mut tools);

    Ok(ScaffoldSpec {
        task: spec.task.clone(),
        stages,
        tools,
        version: spec.version,
    })
}
