use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One step of the generation chain.
///
/// The order of the variants is the chain order:
/// workflow analysis, tool selection, functionality codegen, UI codegen,
/// tool labeling. Each stage consumes the artifacts of the stages before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    WorkflowAnalysis,
    ToolSelection,
    FunctionalityCodegen,
    UiCodegen,
    ToolLabeling,
}

impl StageKind {
    pub const CHAIN: [StageKind; 5] = [
        StageKind::WorkflowAnalysis,
        StageKind::ToolSelection,
        StageKind::FunctionalityCodegen,
        StageKind::UiCodegen,
        StageKind::ToolLabeling,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::WorkflowAnalysis => "workflow_analysis",
            StageKind::ToolSelection => "tool_selection",
            StageKind::FunctionalityCodegen => "functionality_codegen",
            StageKind::UiCodegen => "ui_codegen",
            StageKind::ToolLabeling => "tool_labeling",
        }
    }

    pub fn position(self) -> usize {
        self as usize
    }

    /// Stages strictly after this one, in chain order.
    pub fn downstream(self) -> &'static [StageKind] {
        &Self::CHAIN[self.position() + 1..]
    }

    /// Stages strictly before this one, in chain order.
    pub fn upstream(self) -> &'static [StageKind] {
        &Self::CHAIN[..self.position()]
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().replace('-', "_").to_ascii_lowercase();
        Self::CHAIN
            .into_iter()
            .find(|k| k.as_str() == key)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}
