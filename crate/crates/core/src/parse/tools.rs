use std::collections::HashSet;

use super::text::{field, find_word_ci, lines, split_bold_head, strip_emphasis, Marker};
use super::{Issues, ParseOutcome};
use crate::model::{assign_tool_ids, ComplexityLevel, ToolSpec, WorkflowStage};
use crate::prompt::RawResponse;
use crate::stage::StageKind;

const STAGE_FIELD: &[&str] = &["stage name", "stage", "workflow stage"];
const TOOL_FIELD: &[&str] = &["selected tools", "selected tool", "tools", "tool"];
const RATIONALE_FIELD: &[&str] = &["rationale", "reason"];
const LEVEL_FIELD: &[&str] = &["complexity level", "complexity", "difficulty level", "difficulty", "level"];

/// A tool being assembled from labelled fields.
struct Pending<'a> {
    label: &'a str,
    rationale: &'a str,
    line: usize,
}

struct Collector<'a> {
    stages: &'a [WorkflowStage],
    tools: Vec<ToolSpec>,
    seen: HashSet<(u32, String)>,
}

impl<'a> Collector<'a> {
    fn push(&mut self, stage_id: u32, label: &str, rationale: &str, level: ComplexityLevel, line: usize, issues: &mut Issues) {
        let label = label.trim();
        if label.is_empty() {
            issues.warn(line, "tool without a name ignored");
            return;
        }
        if !self.seen.insert((stage_id, label.to_ascii_lowercase())) {
            let stage = self.stages.iter().find(|s| s.stage_id == stage_id).map(|s| s.name.as_str()).unwrap_or("");
            issues.warn(line, format!("tool {label:?} listed twice in stage {stage:?}; later entry dropped"));
            return;
        }
        self.tools.push(ToolSpec::selected(label, stage_id, level, rationale.trim()));
    }
}

/// Resolves a stage name: exact (case-insensitive) first, then substring in
/// either direction, earliest stage winning.
fn resolve_stage(name: &str, stages: &[WorkflowStage], line: usize, issues: &mut Issues) -> Option<u32> {
    let name = strip_emphasis(strip_stage_prefix(name.trim()).trim_end_matches(':').trim());
    if name.is_empty() {
        return None;
    }
    if let Some(s) = stages.iter().find(|s| s.name.trim().eq_ignore_ascii_case(name)) {
        return Some(s.stage_id);
    }
    let lower = name.to_ascii_lowercase();
    let hits: Vec<&WorkflowStage> = stages
        .iter()
        .filter(|s| {
            let stage = s.name.trim().to_ascii_lowercase();
            !stage.is_empty() && (lower.contains(&stage) || stage.contains(&lower))
        })
        .collect();
    match hits.as_slice() {
        [] => None,
        [one] => Some(one.stage_id),
        [first, ..] => {
            issues.warn(
                line,
                format!("{name:?} matches several stages; using {:?}", first.name),
            );
            Some(first.stage_id)
        }
    }
}

fn exact_stage(name: &str, stages: &[WorkflowStage]) -> Option<u32> {
    let name = strip_emphasis(strip_stage_prefix(name.trim()));
    stages
        .iter()
        .find(|s| s.name.trim().eq_ignore_ascii_case(name))
        .map(|s| s.stage_id)
}

fn strip_stage_prefix(name: &str) -> &str {
    let lower = name.to_ascii_lowercase();
    if let Some(rest) = lower.strip_prefix("stage ") {
        let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
        if digits > 0 {
            let after = rest[digits..].trim_start();
            for sep in [":", "-", "\u{2013}", "."] {
                if after.starts_with(sep) {
                    let cut = name.len() - after.len() + sep.len();
                    return name[cut..].trim();
                }
            }
        }
    }
    name
}

/// Byte offsets of `", "` outside parentheses and brackets.
fn top_level_commas(text: &str) -> Vec<usize> {
    let mut depth = 0i32;
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    for (i, b) in bytes.iter().enumerate() {
        match b {
            b'(' | b'[' => depth += 1,
            b')' | b']' => depth -= 1,
            b',' if depth <= 0 && bytes.get(i + 1) == Some(&b' ') => out.push(i),
            _ => {}
        }
    }
    out
}

fn parse_level(token: &str, line: usize, issues: &mut Issues) -> ComplexityLevel {
    let token = token.trim();
    let token = field(token, LEVEL_FIELD).unwrap_or(token);
    let clean = strip_emphasis(token.trim().trim_end_matches('.').trim());
    if let Ok(level) = clean.parse() {
        return level;
    }
    let found: Vec<ComplexityLevel> = ComplexityLevel::ALL
        .into_iter()
        .filter(|l| !find_word_ci(clean, l.as_str()).is_empty())
        .collect();
    if let [only] = found.as_slice() {
        return *only;
    }
    issues.warn(line, format!("complexity {clean:?} not recognized; using Advanced"));
    ComplexityLevel::Advanced
}

/// `Label, rationale, Level.` Returns label, rationale and level token.
fn split_triple(text: &str) -> Option<(&str, &str, &str)> {
    let commas = top_level_commas(text);
    let (&first, &last) = (commas.first()?, commas.last()?);
    let label = text[..first].trim();
    let label = field(label, TOOL_FIELD).unwrap_or(label);
    let label = strip_emphasis(label);
    let level = text[last + 2..].trim();
    let rationale = if first == last {
        ""
    } else {
        let r = text[first + 2..last].trim();
        field(r, RATIONALE_FIELD).unwrap_or(r)
    };
    Some((label, rationale, level))
}

/// Parses a tool-selection response against the known stages. Tool ids are
/// assigned in response order.
pub fn parse_tool_response(raw: &RawResponse, stages: &[WorkflowStage]) -> ParseOutcome<Vec<ToolSpec>> {
    let mut issues = Issues::default();
    if raw.stage_kind != StageKind::ToolSelection {
        issues.fatal(0, format!("expected a tool_selection response, got {}", raw.stage_kind));
        return ParseOutcome::new(None, issues.0);
    }
    if stages.is_empty() {
        issues.fatal(0, "no workflow stages to attach tools to");
        return ParseOutcome::new(None, issues.0);
    }
    let all = lines(&raw.text);
    let mut c = Collector { stages, tools: Vec::new(), seen: HashSet::new() };
    // Stage id, header indent, and whether the header was a heading (whose
    // items need no extra indentation).
    let mut current: Option<(u32, usize, bool)> = None;
    let mut pending: Option<Pending> = None;

    let flush = |pending: &mut Option<Pending>, current: Option<(u32, usize, bool)>, c: &mut Collector, issues: &mut Issues| {
        if let Some(p) = pending.take() {
            issues.warn(p.line, format!("tool {:?} has no complexity level; using Advanced", p.label));
            if let Some((stage, ..)) = current {
                c.push(stage, p.label, p.rationale, ComplexityLevel::Advanced, p.line, issues);
            }
        }
    };

    for line in &all {
        if line.is_blank() {
            continue;
        }
        let text = line.text;
        let n = line.number;

        // Labelled fields.
        if let Some(v) = field(text, STAGE_FIELD) {
            flush(&mut pending, current, &mut c, &mut issues);
            match resolve_stage(v, stages, n, &mut issues) {
                Some(id) => current = Some((id, line.indent, false)),
                None => {
                    issues.fatal(n, format!("unknown stage {:?}", strip_emphasis(v)));
                    current = None;
                }
            }
            continue;
        }
        if let Some(v) = field(text, TOOL_FIELD) {
            flush(&mut pending, current, &mut c, &mut issues);
            if current.is_none() {
                issues.warn(n, "tool listed before any stage ignored");
                continue;
            }
            if let Some((label, rationale, level)) = split_triple(v).filter(|(_, r, _)| !r.is_empty()) {
                let level = parse_level(level, n, &mut issues);
                c.push(current.unwrap().0, label, rationale, level, n, &mut issues);
            } else {
                pending = Some(Pending { label: strip_emphasis(v.trim_end_matches('.')), rationale: "", line: n });
            }
            continue;
        }
        if let Some(v) = field(text, RATIONALE_FIELD) {
            match pending.as_mut() {
                Some(p) => p.rationale = v,
                None => issues.warn(n, "rationale without a tool ignored"),
            }
            continue;
        }
        if let Some(v) = field(text, LEVEL_FIELD) {
            match pending.take() {
                Some(p) => {
                    let level = parse_level(v, n, &mut issues);
                    if let Some((stage, ..)) = current {
                        // "Selected Tools: A, B" shares one rationale and level.
                        for label in p.label.split([',', ';']) {
                            c.push(stage, strip_emphasis(label), p.rationale, level, p.line, &mut issues);
                        }
                    }
                }
                None => issues.warn(n, "complexity level without a tool ignored"),
            }
            continue;
        }

        // Stage headers, possibly with a tool on the same line.
        let is_heading = matches!(line.marker, Some(Marker::Heading(_)));
        if is_heading || split_bold_head(text).is_some() {
            let (head, rest) = if is_heading {
                (text, "")
            } else {
                split_bold_head(text).unwrap()
            };
            let under_stage = current.is_some_and(|(_, indent, heading)| heading || line.indent > indent) && !is_heading;
            let resolved = if under_stage {
                exact_stage(head, stages)
            } else {
                resolve_stage(head, stages, n, &mut issues)
            };
            match resolved {
                Some(id) => {
                    flush(&mut pending, current, &mut c, &mut issues);
                    current = Some((id, line.indent, is_heading));
                    if !rest.is_empty() {
                        tool_line(rest, id, n, &mut c, &mut issues);
                    }
                }
                None if under_stage => {
                    // "**Mark Seam**: rationale, Basic" under a stage header.
                    flush(&mut pending, current, &mut c, &mut issues);
                    let stage = current.unwrap().0;
                    let rest = rest.trim_start_matches(',').trim();
                    match rest.rfind(", ") {
                        Some(pos) => {
                            let level = parse_level(&rest[pos + 2..], n, &mut issues);
                            c.push(stage, head, rest[..pos].trim(), level, n, &mut issues);
                        }
                        None if !rest.is_empty() => {
                            let level = parse_level(rest, n, &mut issues);
                            c.push(stage, head, "", level, n, &mut issues);
                        }
                        None => {
                            pending = Some(Pending { label: head, rationale: "", line: n });
                        }
                    }
                }
                None if is_heading => {
                    flush(&mut pending, current, &mut c, &mut issues);
                    current = None;
                    issues.warn(n, format!("heading {head:?} is not a workflow stage"));
                }
                None => {
                    flush(&mut pending, current, &mut c, &mut issues);
                    current = None;
                    issues.fatal(n, format!("unknown stage {head:?}"));
                }
            }
            continue;
        }

        // Plain "Stage Name: tool, rationale, level."
        if let Some(colon) = text.find(": ") {
            if let Some(id) = exact_stage(&text[..colon], stages) {
                flush(&mut pending, current, &mut c, &mut issues);
                current = Some((id, line.indent, false));
                tool_line(&text[colon + 2..], id, n, &mut c, &mut issues);
                continue;
            }
        }
        if let Some(id) = exact_stage(text.trim_end_matches(':'), stages) {
            flush(&mut pending, current, &mut c, &mut issues);
            current = Some((id, line.indent, false));
            continue;
        }

        match current {
            Some((stage, indent, _)) if line.marker.is_some() || line.indent > indent => {
                flush(&mut pending, current, &mut c, &mut issues);
                tool_line(text, stage, n, &mut c, &mut issues);
            }
            Some(_) => issues.warn(n, "text outside the tool list ignored"),
            None => {}
        }
    }
    flush(&mut pending, current, &mut c, &mut issues);

    if c.tools.is_empty() {
        issues.fatal(0, "no tools recognized: expected `Stage: Tool, Rationale, Level.` items");
        return ParseOutcome::new(None, issues.0);
    }
    let mut tools = c.tools;
    assign_tool_ids(stages, &mut tools);
    issues.finish(tools)
}

fn tool_line(text: &str, stage: u32, n: usize, c: &mut Collector, issues: &mut Issues) {
    match split_triple(text) {
        Some((label, rationale, level)) => {
            if rationale.is_empty() {
                issues.warn(n, format!("tool {label:?} has no rationale"));
            }
            let level = parse_level(level, n, issues);
            c.push(stage, label, rationale, level, n, issues);
        }
        None => issues.warn(n, format!("could not split {text:?} into tool, rationale and level")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DomainConcept;

    fn stages() -> Vec<WorkflowStage> {
        ["Marking Seams", "Unwrapping & Editing", "Checking & Visualization"]
            .iter()
            .enumerate()
            .map(|(i, name)| WorkflowStage {
                stage_id: i as u32 + 1,
                name: name.to_string(),
                description: String::new(),
                concepts: vec![DomainConcept { term: format!("T{i}"), explanation: "x".into() }],
            })
            .collect()
    }

    fn parse(text: &str) -> ParseOutcome<Vec<ToolSpec>> {
        parse_tool_response(&RawResponse::new(StageKind::ToolSelection, text), &stages())
    }

    #[test]
    fn one_line_per_tool() {
        let out = parse(
            "- **Marking Seams**: Mark Seam, Defines where the mesh is cut, Basic.\n\
             - **Marking Seams**: Clear Seam, Undo a wrong cut, Intermediate.\n\
             - **Unwrapping & Editing**: Unwrap, Flattens the mesh, Basic.\n",
        );
        let tools = out.payload().unwrap();
        assert_eq!(tools.len(), 3);
        assert_eq!(tools[0].label, "Mark Seam");
        assert_eq!(tools[0].rationale, "Defines where the mesh is cut");
        assert_eq!(tools[1].complexity, ComplexityLevel::Intermediate);
        assert_eq!(tools[2].stage_id, 2);
        assert_eq!(tools[2].tool_id.as_str(), "unwrapping_editing_unwrap");
        assert_eq!(out.issues(), &[]);
    }

    #[test]
    fn header_then_nested_tools() {
        let out = parse(
            "Here you go:\n\n- **Marking Seams**:\n  - Mark Seam (Ctrl+E, Edge menu), Cuts the mesh, Basic.\n  - **Clear Seam**: Removes a cut, Intermediate\n\n### Checking & Visualization\n- Display Stretch, Shows distortion, Advanced.\n",
        );
        let tools = out.payload().unwrap();
        let labels: Vec<_> = tools.iter().map(|t| t.label.as_str()).collect();
        assert_eq!(labels, ["Mark Seam (Ctrl+E, Edge menu)", "Clear Seam", "Display Stretch"]);
        assert_eq!(tools[2].stage_id, 3);
    }

    #[test]
    fn labelled_fields() {
        let out = parse(
            "- **Stage Name**: Unwrapping & Editing\n  - **Selected Tools**: Unwrap\n  - **Rationale**: Needed to flatten.\n  - **Complexity Level**: Basic\n",
        );
        let tools = out.payload().unwrap();
        assert_eq!(tools[0].label, "Unwrap");
        assert_eq!(tools[0].rationale, "Needed to flatten.");
        assert_eq!(tools[0].complexity, ComplexityLevel::Basic);
    }

    #[test]
    fn unknown_level_defaults_to_advanced() {
        let out = parse("- **Marking Seams**: Mark Seam, Cuts, Expert.\n");
        assert_eq!(out.payload().unwrap()[0].complexity, ComplexityLevel::Advanced);
        assert!(out.warnings().any(|i| i.message.contains("Expert") && i.line == 1));
    }

    #[test]
    fn unknown_stage_is_fatal_with_line() {
        let out = parse("- **Marking Seams**: Mark Seam, Cuts, Basic.\n- **Texturing**: Paint, Colors, Basic.\n");
        assert!(out.is_fatal());
        let issue = out.fatal_issues().next().unwrap();
        assert_eq!(issue.line, 2);
        assert!(issue.message.contains("Texturing"));
    }

    #[test]
    fn partial_stage_names_resolve() {
        let out = parse("- **Stage 2: Unwrapping**: Unwrap, Flattens, Basic.\n");
        assert_eq!(out.payload().unwrap()[0].stage_id, 2);
    }

    #[test]
    fn duplicates_dropped() {
        let out = parse("- **Marking Seams**: Mark Seam, a, Basic.\n- **Marking Seams**: mark seam, b, Basic.\n");
        assert_eq!(out.payload().unwrap().len(), 1);
        assert!(out.warnings().any(|i| i.line == 2));
    }

    #[test]
    fn nothing_found_is_fatal() {
        assert!(parse("I cannot help with that.").is_fatal());
    }

    #[test]
    fn strings_are_slices_of_input() {
        let text = "- **Marking Seams**: Mark Seam, Cuts it, Basic.\n";
        let out = parse(text);
        for t in out.payload().unwrap() {
            assert!(text.contains(&t.label));
            assert!(text.contains(&t.rationale));
        }
    }
}
