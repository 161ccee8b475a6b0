//! Structural and pedagogical checks on a [`ScaffoldSpec`], and diffs between
//! two specs.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{canonicalize, ComplexityLevel, ScaffoldSpec, ToolId, ToolSpec};

/// Labels longer than this get a warning; the panel truncates them.
pub const MAX_LABEL_CHARS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Stage ids, tool ids and concept terms are unique; every reference
    /// resolves.
    ReferentialIntegrity,
    /// Every tool references at least one domain concept.
    ConceptCoverage,
    /// Every tool has a native mapping.
    NativeMapping,
    /// Every stage has at least one basic tool.
    BasicEntry,
    /// Visible sets grow with the level.
    DisclosureChain,
    UniqueStageNames,
    /// Every tool has code to run.
    Functionality,
    LabelLength,
    /// A spec equals its canonical form.
    Canonical,
}

impl Rule {
    pub const ALL: [Rule; 9] = [
        Rule::ReferentialIntegrity,
        Rule::ConceptCoverage,
        Rule::NativeMapping,
        Rule::BasicEntry,
        Rule::DisclosureChain,
        Rule::UniqueStageNames,
        Rule::Functionality,
        Rule::LabelLength,
        Rule::Canonical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::ReferentialIntegrity => "referential_integrity",
            Rule::ConceptCoverage => "concept_coverage",
            Rule::NativeMapping => "native_mapping",
            Rule::BasicEntry => "basic_entry",
            Rule::DisclosureChain => "disclosure_chain",
            Rule::UniqueStageNames => "unique_stage_names",
            Rule::Functionality => "functionality",
            Rule::LabelLength => "label_length",
            Rule::Canonical => "canonical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule: Rule,
    pub severity: Severity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage_id: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool_id: Option<ToolId>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev} [{}]", self.rule.as_str())?;
        if let Some(id) = &self.tool_id {
            write!(f, " tool {id}")?;
        } else if let Some(id) = self.stage_id {
            write!(f, " stage {id}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleStatus {
    Pass,
    Warn,
    Fail,
}

/// One line of the report summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleResult {
    pub rule: Rule,
    pub status: RuleStatus,
    /// Number of findings for the rule.
    pub findings: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Pass exactly when no rule failed.
    pub overall: RuleStatus,
    /// Every rule once, in rule order.
    pub rules: Vec<RuleResult>,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Warning)
    }

    pub fn violates(&self, rule: Rule) -> bool {
        self.errors().any(|f| f.rule == rule)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidationOptions {
    /// Downgrades concept coverage and basic entry to warnings.
    pub lenient: bool,
}

struct Findings {
    out: Vec<Finding>,
    lenient: bool,
}

impl Findings {
    fn push(&mut self, rule: Rule, stage_id: Option<u32>, tool_id: Option<&ToolId>, message: String) {
        let soft = matches!(rule, Rule::LabelLength)
            || (self.lenient && matches!(rule, Rule::ConceptCoverage | Rule::BasicEntry));
        self.out.push(Finding {
            rule,
            severity: if soft { Severity::Warning } else { Severity::Error },
            stage_id,
            tool_id: tool_id.cloned(),
            message,
        });
    }

    fn tool(&mut self, rule: Rule, tool: &ToolSpec, message: String) {
        self.push(rule, Some(tool.stage_id), Some(&tool.tool_id), message);
    }
}

/// Runs every rule. Findings are ordered by rule, then by position in `spec`.
pub fn validate(spec: &ScaffoldSpec, options: ValidationOptions) -> ValidationReport {
    let mut f = Findings { out: Vec::new(), lenient: options.lenient };

    // Referential integrity.
    if spec.stages.is_empty() {
        f.push(Rule::ReferentialIntegrity, None, None, "spec has no workflow stages".into());
    }
    let mut stage_ids = HashSet::new();
    for stage in &spec.stages {
        if !stage_ids.insert(stage.stage_id) {
            f.push(
                Rule::ReferentialIntegrity,
                Some(stage.stage_id),
                None,
                format!("stage id {} is used more than once", stage.stage_id),
            );
        }
    }
    let mut terms: BTreeMap<&str, u32> = BTreeMap::new();
    for stage in &spec.stages {
        for concept in &stage.concepts {
            if let Some(first) = terms.insert(&concept.term, stage.stage_id) {
                f.push(
                    Rule::ReferentialIntegrity,
                    Some(stage.stage_id),
                    None,
                    format!("concept {:?} is already defined by stage {first}", concept.term),
                );
            }
        }
    }
    let mut tool_ids = HashSet::new();
    for tool in &spec.tools {
        if !tool_ids.insert(&tool.tool_id) {
            f.tool(Rule::ReferentialIntegrity, tool, "tool id is used more than once".into());
        }
        if !stage_ids.contains(&tool.stage_id) {
            f.tool(
                Rule::ReferentialIntegrity,
                tool,
                format!("refers to stage {}, which does not exist", tool.stage_id),
            );
        }
        for term in &tool.concepts {
            if !terms.contains_key(term.as_str()) {
                f.tool(
                    Rule::ReferentialIntegrity,
                    tool,
                    format!("refers to concept {term:?}, which no stage defines"),
                );
            }
        }
    }

    for tool in &spec.tools {
        if tool.concepts.is_empty() {
            f.tool(Rule::ConceptCoverage, tool, format!("{:?} references no domain concept", tool.label));
        }
    }
    for tool in &spec.tools {
        if tool.native.is_none() {
            f.tool(Rule::NativeMapping, tool, format!("{:?} has no native mapping", tool.label));
        }
    }
    for stage in &spec.stages {
        let basic = spec
            .tools
            .iter()
            .any(|t| t.stage_id == stage.stage_id && t.complexity == ComplexityLevel::Basic);
        if !basic {
            f.push(
                Rule::BasicEntry,
                Some(stage.stage_id),
                None,
                format!("stage {:?} has no basic tool", stage.name),
            );
        }
    }

    let sets: Vec<BTreeSet<&ToolId>> = ComplexityLevel::ALL
        .iter()
        .map(|&level| spec.visible(level).into_iter().map(|t| &t.tool_id).collect())
        .collect();
    for (pair, levels) in sets.windows(2).zip(ComplexityLevel::ALL.windows(2)) {
        if let Some(missing) = pair[0].difference(&pair[1]).next() {
            f.push(
                Rule::DisclosureChain,
                None,
                Some(missing),
                format!("visible at {} but hidden at {}", levels[0], levels[1]),
            );
        }
    }

    let mut names = HashSet::new();
    for stage in &spec.stages {
        if !names.insert(stage.name.trim().to_lowercase()) {
            f.push(
                Rule::UniqueStageNames,
                Some(stage.stage_id),
                None,
                format!("stage name {:?} is used more than once", stage.name),
            );
        }
    }
    for tool in &spec.tools {
        if tool.functionality_code.trim().is_empty() {
            f.tool(Rule::Functionality, tool, format!("{:?} has no functionality code", tool.label));
        }
    }
    for tool in &spec.tools {
        let chars = tool.label.chars().count();
        if chars > MAX_LABEL_CHARS {
            f.tool(
                Rule::LabelLength,
                tool,
                format!("label is {chars} characters; the panel fits {MAX_LABEL_CHARS}"),
            );
        }
    }
    if let Ok(canonical) = canonicalize(spec) {
        if &canonical != spec {
            f.push(
                Rule::Canonical,
                None,
                None,
                "spec is not in canonical form (stage numbering, tool order or tool ids)".into(),
            );
        }
    }
    let rules: Vec<RuleResult> = Rule::ALL
        .iter()
        .map(|&rule| {
            let hits: Vec<&Finding> = f.out.iter().filter(|x| x.rule == rule).collect();
            let status = if hits.iter().any(|x| x.severity == Severity::Error) {
                RuleStatus::Fail
            } else if hits.is_empty() {
                RuleStatus::Pass
            } else {
                RuleStatus::Warn
            };
            RuleResult { rule, status, findings: hits.len() }
        })
        .collect();
    let overall = if rules.iter().any(|r| r.status == RuleStatus::Fail) { RuleStatus::Fail } else { RuleStatus::Pass };
    ValidationReport { overall, rules, findings: f.out }
}

/// Changes to one tool between two specs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolChange {
    pub tool_id: ToolId,
    /// Set when the tool was matched by stage and label after its id changed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub previous_id: Option<ToolId>,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRename {
    pub stage_id: u32,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptChangeKind {
    Added,
    Removed,
    Changed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptChange {
    pub stage_id: u32,
    pub term: String,
    pub change: ConceptChangeKind,
}

/// Differences from `old` to `new`. Added, removed and modified tool sets are
/// disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecDiff {
    pub added: Vec<ToolId>,
    pub removed: Vec<ToolId>,
    pub modified: Vec<ToolChange>,
    pub stages_added: Vec<u32>,
    pub stages_removed: Vec<u32>,
    pub stage_renames: Vec<StageRename>,
    pub concept_changes: Vec<ConceptChange>,
    pub version_delta: i64,
}

impl SpecDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty()
            && self.removed.is_empty()
            && self.modified.is_empty()
            && self.stages_added.is_empty()
            && self.stages_removed.is_empty()
            && self.stage_renames.is_empty()
            && self.concept_changes.is_empty()
    }
}

fn changed_fields(a: &ToolSpec, b: &ToolSpec) -> Vec<String> {
    let mut out = Vec::new();
    let mut check = |name: &str, same: bool| {
        if !same {
            out.push(name.to_string());
        }
    };
    check("label", a.label == b.label);
    check("stage_id", a.stage_id == b.stage_id);
    check("complexity", a.complexity == b.complexity);
    check("rationale", a.rationale == b.rationale);
    check("concepts", a.concepts == b.concepts);
    check("native", a.native == b.native);
    check("control_kind", a.control_kind == b.control_kind);
    check("functionality_code", a.functionality_code == b.functionality_code);
    out
}

pub fn diff(old: &ScaffoldSpec, new: &ScaffoldSpec) -> SpecDiff {
    let mut d = SpecDiff {
        version_delta: new.version as i64 - old.version as i64,
        ..SpecDiff::default()
    };

    let mut unmatched_old: Vec<&ToolSpec> = Vec::new();
    let mut unmatched_new: Vec<&ToolSpec> = Vec::new();
    for tool in &old.tools {
        if new.tool(&tool.tool_id).is_none() {
            unmatched_old.push(tool);
        }
    }
    for tool in &new.tools {
        match old.tool(&tool.tool_id) {
            Some(before) => {
                let fields = changed_fields(before, tool);
                if !fields.is_empty() {
                    d.modified.push(ToolChange { tool_id: tool.tool_id.clone(), previous_id: None, fields });
                }
            }
            None => unmatched_new.push(tool),
        }
    }
    for tool in unmatched_new {
        let key = |t: &&ToolSpec| t.stage_id == tool.stage_id && t.label == tool.label;
        match unmatched_old.iter().position(key) {
            Some(i) => {
                let before = unmatched_old.remove(i);
                d.modified.push(ToolChange {
                    tool_id: tool.tool_id.clone(),
                    previous_id: Some(before.tool_id.clone()),
                    fields: changed_fields(before, tool),
                });
            }
            None => d.added.push(tool.tool_id.clone()),
        }
    }
    d.removed = unmatched_old.into_iter().map(|t| t.tool_id.clone()).collect();

    for stage in &new.stages {
        match old.stage(stage.stage_id) {
            None => d.stages_added.push(stage.stage_id),
            Some(before) => {
                if before.name != stage.name {
                    d.stage_renames.push(StageRename {
                        stage_id: stage.stage_id,
                        from: before.name.clone(),
                        to: stage.name.clone(),
                    });
                }
                for c in &stage.concepts {
                    match before.concepts.iter().find(|b| b.term == c.term) {
                        None => d.concept_changes.push(ConceptChange {
                            stage_id: stage.stage_id,
                            term: c.term.clone(),
                            change: ConceptChangeKind::Added,
                        }),
                        Some(b) if b.explanation != c.explanation => d.concept_changes.push(ConceptChange {
                            stage_id: stage.stage_id,
                            term: c.term.clone(),
                            change: ConceptChangeKind::Changed,
                        }),
                        Some(_) => {}
                    }
                }
                for b in &before.concepts {
                    if !stage.concepts.iter().any(|c| c.term == b.term) {
                        d.concept_changes.push(ConceptChange {
                            stage_id: stage.stage_id,
                            term: b.term.clone(),
                            change: ConceptChangeKind::Removed,
                        });
                    }
                }
            }
        }
    }
    for stage in &old.stages {
        if new.stage(stage.stage_id).is_none() {
            d.stages_removed.push(stage.stage_id);
        }
    }
    d
}
