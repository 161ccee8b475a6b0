use std::collections::HashSet;

use super::text::{field, lines, split_bold_head, split_term, strip_emphasis, Line, Marker};
use super::{Issues, ParseOutcome};
use crate::model::{DomainConcept, WorkflowStage};
use crate::prompt::RawResponse;
use crate::stage::StageKind;

const DESCRIPTION: &[&str] = &["stage description", "description", "purpose"];
const CONCEPTS: &[&str] = &["domain concepts", "domain concept", "concepts", "key concepts"];
const EXPLANATIONS: &[&str] = &[
    "concept explanation",
    "concept explanations",
    "explanation",
    "explanations",
];

struct Item<'a> {
    header: Line<'a>,
    body: Vec<Line<'a>>,
}

/// Splits the response into top-level list items.
///
/// With two or more headings, headings delimit items. Otherwise the items are
/// the list lines at the smallest indentation; when that level mixes numbers
/// and bullets, only the numbered lines start items.
fn items<'a>(all: &[Line<'a>], issues: &mut Issues) -> Vec<Item<'a>> {
    let heading_level = item_heading_level(all);
    let heading_mode = heading_level.is_some();
    let top_indent = all
        .iter()
        .filter(|l| matches!(l.marker, Some(Marker::Numbered(_)) | Some(Marker::Bullet)))
        .map(|l| l.indent)
        .min()
        .unwrap_or(0);
    let numbered_top = all
        .iter()
        .any(|l| l.indent == top_indent && matches!(l.marker, Some(Marker::Numbered(_))));
    let starts_item = |l: &Line| -> bool {
        if heading_mode {
            return l.marker == heading_level.map(Marker::Heading) && !l.text.is_empty();
        }
        l.indent == top_indent
            && match l.marker {
                Some(Marker::Numbered(_)) => true,
                Some(Marker::Bullet) => !numbered_top,
                _ => false,
            }
    };

    let mut out: Vec<Item> = Vec::new();
    let mut closed = false;
    let mut after_blank = false;
    for line in all {
        if starts_item(line) {
            out.push(Item { header: *line, body: Vec::new() });
            closed = false;
            after_blank = false;
            continue;
        }
        if line.is_blank() {
            after_blank = true;
            continue;
        }
        let Some(item) = out.last_mut() else { continue };
        if !heading_mode && after_blank && line.marker.is_none() && line.indent <= top_indent {
            closed = true;
        }
        if closed {
            issues.warn(line.number, "text outside the stage list ignored");
            continue;
        }
        item.body.push(*line);
        after_blank = false;
    }
    out
}

/// The heading level that occurs most often (deeper wins ties), if it occurs
/// at least twice.
pub(super) fn item_heading_level(all: &[Line]) -> Option<u8> {
    let mut counts = [0usize; 7];
    for l in all {
        if let Some(Marker::Heading(level)) = l.marker {
            if !l.text.is_empty() {
                counts[level as usize] += 1;
            }
        }
    }
    // max_by_key keeps the last maximum, so ascending order favours depth.
    (1..=6u8)
        .max_by_key(|&level| counts[level as usize])
        .filter(|&level| counts[level as usize] >= 2)
}

/// Drops a leading `Stage 3:` / `Stage 3 -` from a stage name.
fn strip_stage_prefix(name: &str) -> &str {
    let lower = name.to_ascii_lowercase();
    if let Some(rest) = lower.strip_prefix("stage ") {
        let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
        if digits > 0 {
            let after = rest[digits..].trim_start();
            for sep in [":", "-", "\u{2013}", "."] {
                if after.starts_with(sep) {
                    let cut = name.len() - after.len() + sep.len();
                    let stripped = name[cut..].trim();
                    if !stripped.is_empty() {
                        return stripped;
                    }
                }
            }
        }
    }
    name
}

fn header_parts(text: &str) -> (&str, &str) {
    if let Some((head, rest)) = split_bold_head(text) {
        let rest = ["- ", "\u{2013} ", "\u{2014} "]
            .iter()
            .find_map(|d| rest.strip_prefix(d))
            .unwrap_or(rest)
            .trim();
        return (strip_stage_prefix(head), rest);
    }
    let stripped = strip_stage_prefix(text);
    if stripped.len() != text.len() {
        // "Stage 1: Name: description"
        return match stripped.find(':') {
            Some(c) => (strip_emphasis(stripped[..c].trim()), stripped[c + 1..].trim()),
            None => (strip_emphasis(stripped.trim_end_matches('.')), ""),
        };
    }
    match text.find(':') {
        Some(c) => (strip_emphasis(text[..c].trim()), text[c + 1..].trim()),
        None => (strip_emphasis(text.trim_end_matches('.').trim()), ""),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Free,
    Concepts,
    Explanations,
}

struct StageBuilder<'a> {
    name: &'a str,
    line: usize,
    description: Option<&'a str>,
    concepts: Vec<(&'a str, &'a str)>,
    pending_terms: Vec<(&'a str, usize)>,
}

impl<'a> StageBuilder<'a> {
    fn add_entry(&mut self, entry: &'a str, line: usize) {
        let entry = entry.trim();
        if entry.is_empty() {
            return;
        }
        match split_term(entry) {
            Some((term, explanation)) => {
                let explanation = explanation.trim_end_matches('.').trim_end();
                self.pending_terms.retain(|(t, _)| !t.eq_ignore_ascii_case(term));
                self.concepts.push((term, explanation));
            }
            None => {
                let term = strip_emphasis(entry.trim_end_matches('.'));
                if !term.is_empty() && !self.concepts.iter().any(|(t, _)| t.eq_ignore_ascii_case(term)) {
                    self.pending_terms.push((term, line));
                }
            }
        }
    }

    fn add_entries(&mut self, text: &'a str, line: usize) {
        let sep = if text.contains(';') { ';' } else { ',' };
        if sep == ',' && split_term(text).is_some() {
            // A single "Term: explanation" whose explanation has commas.
            self.add_entry(text, line);
            return;
        }
        for part in text.split(sep) {
            self.add_entry(part, line);
        }
    }
}

/// Parses a workflow-analysis response into stages numbered by position.
pub fn parse_workflow_response(raw: &RawResponse) -> ParseOutcome<Vec<WorkflowStage>> {
    let mut issues = Issues::default();
    if raw.stage_kind != StageKind::WorkflowAnalysis {
        issues.fatal(0, format!("expected a workflow_analysis response, got {}", raw.stage_kind));
        return ParseOutcome::new(None, issues.0);
    }
    let all = lines(&raw.text);
    let items = items(&all, &mut issues);
    if items.is_empty() {
        issues.fatal(0, "no workflow stages recognized: expected a numbered or bulleted list");
        return ParseOutcome::new(None, issues.0);
    }

    let numbers: Vec<u32> = items
        .iter()
        .filter_map(|i| match i.header.marker {
            Some(Marker::Numbered(n)) => Some(n),
            _ => None,
        })
        .collect();
    if !numbers.is_empty() && numbers.iter().copied().ne(1..=numbers.len() as u32) {
        issues.warn(
            items[0].header.number,
            format!(
                "stages numbered {} re-indexed 1..{}",
                numbers.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
                items.len()
            ),
        );
    }

    let mut builders = Vec::new();
    for item in &items {
        let (name, rest) = header_parts(item.header.text);
        if name.is_empty() {
            issues.warn(item.header.number, "list item without a stage name ignored");
            continue;
        }
        let mut b = StageBuilder {
            name,
            line: item.header.number,
            description: None,
            concepts: Vec::new(),
            pending_terms: Vec::new(),
        };
        let mut mode = Mode::Free;
        if !rest.is_empty() {
            if let Some(v) = field(rest, CONCEPTS) {
                mode = Mode::Concepts;
                b.add_entries(v, item.header.number);
            } else {
                b.description = Some(rest);
            }
        }
        for line in &item.body {
            let text = line.text;
            if let Some(v) = field(text, DESCRIPTION) {
                if !v.is_empty() {
                    b.description = Some(v);
                }
                mode = Mode::Free;
            } else if let Some(v) = field(text, CONCEPTS) {
                mode = Mode::Concepts;
                b.add_entries(v, line.number);
            } else if let Some(v) = field(text, EXPLANATIONS) {
                mode = Mode::Explanations;
                b.add_entries(v, line.number);
            } else if mode != Mode::Free || line.marker.is_some() {
                if split_term(text).is_some() || mode != Mode::Free {
                    b.add_entries(text, line.number);
                } else if b.description.is_none() {
                    b.description = Some(text);
                } else {
                    issues.warn(line.number, format!("unrecognized line in stage {:?} ignored", b.name));
                }
            } else if b.description.is_none() {
                b.description = Some(text);
            } else {
                issues.warn(line.number, format!("unrecognized line in stage {:?} ignored", b.name));
            }
        }
        builders.push(b);
    }

    let mut names = HashSet::new();
    let mut terms = HashSet::new();
    let mut stages = Vec::new();
    for b in builders {
        if !names.insert(b.name.to_ascii_lowercase()) {
            issues.warn(b.line, format!("duplicate stage {:?} dropped", b.name));
            continue;
        }
        for (term, line) in &b.pending_terms {
            issues.warn(*line, format!("concept {term:?} has no explanation and was dropped"));
        }
        let description = match b.description {
            Some(d) => d.to_string(),
            None => {
                issues.warn(b.line, format!("stage {:?} has no description", b.name));
                String::new()
            }
        };
        let mut concepts = Vec::new();
        for (term, explanation) in b.concepts {
            if !terms.insert(term.to_ascii_lowercase()) {
                issues.warn(b.line, format!("concept {term:?} already defined by an earlier stage; dropped"));
                continue;
            }
            concepts.push(DomainConcept {
                term: term.to_string(),
                explanation: explanation.to_string(),
            });
        }
        stages.push(WorkflowStage {
            stage_id: stages.len() as u32 + 1,
            name: b.name.to_string(),
            description,
            concepts,
        });
    }
    if stages.is_empty() {
        issues.fatal(0, "no usable workflow stages");
        return ParseOutcome::new(None, issues.0);
    }
    issues.finish(stages)
}
