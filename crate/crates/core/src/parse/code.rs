use serde::{Deserialize, Serialize};

use super::text::find_word_ci;
use super::{Issues, ParseOutcome};
use crate::model::{ToolId, ToolSpec};
use crate::prompt::RawResponse;
use crate::stage::StageKind;

/// One fenced block from a code-generation response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBlock {
    /// The tool whose name was mentioned last before the block, if any.
    pub tool_id: Option<ToolId>,
    pub language: Option<String>,
    /// Body between the fences, byte for byte.
    pub code: String,
    /// 1-based line of the opening fence.
    pub line: usize,
}

struct Fence {
    ch: u8,
    len: usize,
}

fn opening_fence(line: &str) -> Option<(Fence, &str)> {
    let trimmed = line.trim_start();
    if line.len() - trimmed.len() > 3 {
        return None;
    }
    let ch = *trimmed.as_bytes().first()?;
    if ch != b'`' && ch != b'~' {
        return None;
    }
    let len = trimmed.bytes().take_while(|b| *b == ch).count();
    if len < 3 {
        return None;
    }
    let info = trimmed[len..].trim();
    if ch == b'`' && info.contains('`') {
        return None;
    }
    Some((Fence { ch, len }, info))
}

fn closes(line: &str, fence: &Fence) -> bool {
    let trimmed = line.trim();
    let count = trimmed.bytes().take_while(|b| *b == fence.ch).count();
    count >= fence.len && count == trimmed.len()
}

/// Names a tool may be mentioned by: its label, and the label without a
/// trailing parenthetical.
fn names(tool: &ToolSpec) -> Vec<&str> {
    let mut out = vec![tool.label.trim()];
    if let Some(cut) = tool.label.find(" (") {
        let short = tool.label[..cut].trim();
        if !short.is_empty() {
            out.push(short);
        }
    }
    out
}

/// The tool mentioned last in `prose`; a longer name wins when two mentions
/// end at the same place.
fn attribute<'t>(prose: &str, tools: &'t [ToolSpec]) -> Option<&'t ToolSpec> {
    let mut best: Option<(usize, usize, &ToolSpec)> = None;
    for tool in tools {
        for name in names(tool) {
            if let Some(&start) = find_word_ci(prose, name).last() {
                let key = (start + name.len(), name.len());
                if best.is_none_or(|(end, len, _)| key > (end, len)) {
                    best = Some((key.0, key.1, tool));
                }
            }
        }
    }
    best.map(|(_, _, t)| t)
}

/// Pulls every fenced block out of a code-generation response and attributes
/// each to a tool by the prose that precedes it.
pub fn extract_code_blocks(raw: &RawResponse, tools: &[ToolSpec]) -> ParseOutcome<Vec<CodeBlock>> {
    let mut issues = Issues::default();
    if !matches!(raw.stage_kind, StageKind::FunctionalityCodegen | StageKind::UiCodegen) {
        issues.fatal(0, format!("expected a code generation response, got {}", raw.stage_kind));
        return ParseOutcome::new(None, issues.0);
    }
    let text = raw.text.as_str();
    let mut blocks = Vec::new();
    let mut prose_start = 0;
    let mut offset = 0;
    let mut open: Option<(Fence, Option<String>, usize, usize, usize)> = None;
    for (index, line) in text.split_inclusive('\n').enumerate() {
        let number = index + 1;
        let line_start = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        match &open {
            None => {
                if let Some((fence, info)) = opening_fence(content) {
                    let language = info.split_whitespace().next().map(str::to_string);
                    open = Some((fence, language, number, prose_start, line_start));
                    prose_start = offset;
                }
            }
            Some((fence, ..)) => {
                if closes(content, fence) {
                    let (_, language, fence_line, prose_from, prose_to) = open.take().unwrap();
                    let code = &text[prose_start..line_start];
                    let mut tool = attribute(&text[prose_from..prose_to], tools);
                    if tool.is_none() {
                        // A leading comment naming the tool also counts.
                        if let Some(first) = code.lines().next().filter(|l| l.trim_start().starts_with('#')) {
                            tool = attribute(first, tools);
                        }
                    }
                    if tool.is_none() {
                        issues.warn(fence_line, "code block could not be matched to a tool");
                    }
                    blocks.push(CodeBlock {
                        tool_id: tool.map(|t| t.tool_id.clone()),
                        language,
                        code: code.to_string(),
                        line: fence_line,
                    });
                    prose_start = offset;
                }
            }
        }
    }
    if let Some((_, _, fence_line, ..)) = open {
        issues.fatal(fence_line, "code fence is never closed");
        return ParseOutcome::new(None, issues.0);
    }
    if blocks.is_empty() {
        issues.fatal(0, "no fenced code blocks found");
        return ParseOutcome::new(None, issues.0);
    }
    issues.finish(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assign_tool_ids, ComplexityLevel, WorkflowStage};

    fn tools() -> Vec<ToolSpec> {
        let stage = WorkflowStage {
            stage_id: 1,
            name: "Marking Seams".into(),
            description: String::new(),
            concepts: Vec::new(),
        };
        let mut tools = vec![
            ToolSpec::selected("Mark Seam", 1, ComplexityLevel::Basic, ""),
            ToolSpec::selected("Clear Seam", 1, ComplexityLevel::Basic, ""),
            ToolSpec::selected("Seam", 1, ComplexityLevel::Basic, ""),
        ];
        assign_tool_ids(&[stage], &mut tools);
        tools
    }

    fn extract(text: &str) -> ParseOutcome<Vec<CodeBlock>> {
        extract_code_blocks(&RawResponse::new(StageKind::FunctionalityCodegen, text), &tools())
    }

    #[test]
    fn blocks_follow_the_last_mention() {
        let text = "Mark Seam\n```python\nbpy.ops.mesh.mark_seam(clear=False)\n```\n\nUnlike Mark Seam, this is Clear Seam:\n~~~\nbpy.ops.mesh.mark_seam(clear=True)\n~~~\n";
        let out = extract(text);
        let blocks = out.payload().unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].tool_id.as_ref().unwrap().as_str(), "marking_seams_mark_seam");
        assert_eq!(blocks[0].language.as_deref(), Some("python"));
        assert_eq!(blocks[0].code, "bpy.ops.mesh.mark_seam(clear=False)\n");
        assert_eq!(blocks[1].tool_id.as_ref().unwrap().as_str(), "marking_seams_clear_seam");
        assert_eq!(blocks[1].line, 7);
        assert_eq!(out.issues(), &[]);
    }

    #[test]
    fn body_is_byte_exact() {
        let body = "if x:\r\n    y()  \n\n\tz = '```'\n";
        let text = format!("Seam\n```\n{body}```\n");
        let out = extract(&text);
        assert_eq!(out.payload().unwrap()[0].code, body);
    }

    #[test]
    fn longer_label_wins_at_same_end() {
        let out = extract("### Mark Seam\n```\nx\n```\n");
        assert_eq!(out.payload().unwrap()[0].tool_id.as_ref().unwrap().as_str(), "marking_seams_mark_seam");
    }

    #[test]
    fn leading_comment_names_the_tool() {
        let out = extract("```python\n# Clear Seam\nx\n```\n");
        assert_eq!(out.payload().unwrap()[0].tool_id.as_ref().unwrap().as_str(), "marking_seams_clear_seam");
    }

    #[test]
    fn unassigned_block_warns() {
        let out = extract("Here:\n```\nx\n```\n");
        assert_eq!(out.payload().unwrap()[0].tool_id, None);
        assert_eq!(out.warnings().next().unwrap().line, 2);
    }

    #[test]
    fn missing_or_unclosed_fences_are_fatal() {
        assert!(extract("no code here").is_fatal());
        let out = extract("Seam\n```\nx\n");
        assert_eq!(out.fatal_issues().next().unwrap().line, 2);
    }
}
