//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Run alone with `cargo test --test acceptance`.

mod common;

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use scaffolder::cli::cmd_stage;
use scaffolder::codegen::{generate_addon, tool_index};
use scaffolder::model::{ComplexityLevel, ScaffoldSpec};
use scaffolder::parse::{
    extract_code_blocks, parse_labeling_response, parse_tool_response, parse_workflow_response, Issue, Severity,
};
use scaffolder::pipeline::{PipelineContext, PipelineState};
use scaffolder::prompt::RawResponse;
use scaffolder::session::Session;
use scaffolder::stage::StageKind;
use scaffolder::store::Workspace;
use scaffolder::transport::{RetryPolicy, ScriptedTransport};
use scaffolder::validate::{validate, ValidationOptions};

/// Wall-clock budget for one fixture-mode `run-all`.
const RUN_BUDGET: Duration = Duration::from_secs(5);
/// Random specs checked for disclosure monotonicity and parity.
const RANDOM_SPECS: u64 = 1000;
/// Minimum size of the mutated-response corpus.
const MIN_MUTATIONS: usize = 20;
/// Number of hand-edit scenarios for the refinement loop.
const EDIT_SCENARIOS: usize = 5;

const UV_STAGES: [&str; 3] = ["Marking Seams", "Unwrapping & Editing", "Checking & Visualization"];
const MARK_SEAM_TOOLTIP: &str = "Where to 'cut' the 3D model's surface so it can be unfolded into a flat 2D layout";
const UNWRAP_TOOLTIP: &str = "Flattens the 3D model's surface into 2D space based on the marked seams";

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 6] = [
        ("fixture pipeline reproduction", fixture_reproduction),
        ("disclosure monotonicity", disclosure_monotonicity),
        ("tooltip fidelity", tooltip_fidelity),
        ("refinement loop", refinement_loop),
        ("parser robustness", parser_robustness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let verdict = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn read_spec(ws: &Path) -> ScaffoldSpec {
    serde_json::from_str(&fs::read_to_string(ws.join("spec.json")).unwrap()).unwrap()
}

fn fixture_reproduction() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let start = Instant::now();
    let code = common::uv_run_all(&ws);
    let elapsed = start.elapsed();
    ensure(code == 0, || format!("run-all exited {code}"))?;
    let spec = read_spec(&ws);
    let names: Vec<&str> = spec.stages.iter().map(|s| s.name.as_str()).collect();
    ensure(names == UV_STAGES, || format!("stages {names:?}"))?;
    let report = validate(&spec, ValidationOptions::default());
    ensure(report.findings.is_empty(), || format!("findings {:?}", report.findings))?;
    let addon = fs::read(ws.join("addon/scaffold_addon.py")).unwrap();
    let golden = fs::read(common::golden_addon()).map_err(|e| format!("golden: {e}"))?;
    ensure(addon == golden, || "add-on differs from golden file".into())?;
    ensure(elapsed <= RUN_BUDGET, || format!("took {elapsed:?} > {RUN_BUDGET:?}"))?;
    Ok(format!("3 stages, {} tools, all rules pass, golden match, {elapsed:.2?}", spec.tools.len()))
}

/// `(operator id, level)` rows of the generated `TOOLS` tuple.
fn tools_tuple(source: &str) -> Vec<(String, ComplexityLevel)> {
    let start = source.find("\nTOOLS = (\n").expect("TOOLS tuple") + "\nTOOLS = (\n".len();
    source[start..]
        .lines()
        .take_while(|l| *l != ")")
        .map(|l| {
            let rest = l.trim_start().strip_prefix("(\"").unwrap();
            let (op, rest) = rest.split_once("\", ").unwrap();
            let (_stage, rest) = rest.split_once(", ").unwrap();
            let level = rest.strip_prefix('"').unwrap().split('"').next().unwrap();
            (op.to_string(), level.to_ascii_lowercase().parse().unwrap())
        })
        .collect()
}

fn disclosure_monotonicity() -> Verdict {
    let mut violations = Vec::new();
    for seed in 0..RANDOM_SPECS {
        let spec = common::gen::valid_spec(seed);
        let sets: Vec<BTreeSet<String>> = ComplexityLevel::ALL
            .iter()
            .map(|&l| spec.visible(l).iter().map(|t| t.tool_id.to_string()).collect())
            .collect();
        if !(sets[0].is_subset(&sets[1]) && sets[1].is_subset(&sets[2])) {
            violations.push(format!("seed {seed}: subset chain"));
        }
        let hash = spec.content_hash().unwrap();
        let addon = match generate_addon(&spec, &hash, ValidationOptions::default()) {
            Ok(a) => a,
            Err(e) => {
                violations.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let tagged = tools_tuple(&addon.source);
        let index = tool_index(&spec);
        let mut session = Session::new(&spec);
        for (i, &level) in ComplexityLevel::ALL.iter().enumerate() {
            session.set_level(level);
            let from_code: BTreeSet<String> =
                tagged.iter().filter(|(_, l)| *l <= level).map(|(op, _)| op.clone()).collect();
            let from_session: BTreeSet<String> = session.visible().iter().map(|e| e.operator_id.clone()).collect();
            let from_spec: BTreeSet<String> = index
                .iter()
                .filter(|e| sets[i].contains(e.tool_id.as_str()))
                .map(|e| e.operator_id.clone())
                .collect();
            if from_code != from_session || from_session != from_spec {
                violations.push(format!("seed {seed}: parity at {level}"));
            }
        }
    }
    ensure(violations.is_empty(), || format!("{} violations, first: {}", violations.len(), violations[0]))?;
    Ok(format!("{RANDOM_SPECS} random specs, 0 violations"))
}

fn tooltip_fidelity() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    ensure(common::uv_run_all(&ws) == 0, || "run-all failed".into())?;
    let spec = read_spec(&ws);
    let source = fs::read_to_string(ws.join("addon/scaffold_addon.py")).unwrap();
    let index = tool_index(&spec);
    let tip = |label: &str| {
        let tool = spec.tools.iter().find(|t| t.label == label).unwrap();
        index.iter().find(|e| e.tool_id == tool.tool_id).unwrap().tooltip.clone()
    };
    ensure(tip("Mark Seam").contains(MARK_SEAM_TOOLTIP), || format!("Mark Seam: {}", tip("Mark Seam")))?;
    ensure(tip("Unwrap").contains(UNWRAP_TOOLTIP), || format!("Unwrap: {}", tip("Unwrap")))?;
    for (tool, entry) in spec.tools.iter().zip(&index) {
        let native = tool.native.as_ref().ok_or_else(|| format!("{} has no native mapping", tool.tool_id))?;
        ensure(entry.tooltip.ends_with(&native.display()), || format!("{}: {}", tool.tool_id, entry.tooltip))?;
        ensure(source.contains(&entry.tooltip), || format!("{} tooltip not in add-on", tool.tool_id))?;
    }
    Ok(format!("both quoted explanations present, {} tooltips end with their native mapping", index.len()))
}

/// Stages strictly downstream of `edited`, found by walking the dependency
/// edges breadth first.
fn downstream_oracle(edited: &BTreeSet<StageKind>) -> Vec<StageKind> {
    use StageKind::*;
    let edges = [
        (WorkflowAnalysis, ToolSelection),
        (ToolSelection, FunctionalityCodegen),
        (FunctionalityCodegen, UiCodegen),
        (UiCodegen, ToolLabeling),
    ];
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<StageKind> = edited.iter().copied().collect();
    while let Some(k) = queue.pop_front() {
        for &(from, to) in &edges {
            if from == k && seen.insert(to) {
                queue.push_back(to);
            }
        }
    }
    seen.into_iter().filter(|k| !edited.contains(k)).collect()
}

type Scenario = (&'static str, fn(&mut Vec<serde_json::Value>), fn(ScriptedTransport) -> ScriptedTransport);

fn find<'a>(tools: &'a mut [serde_json::Value], label: &str) -> &'a mut serde_json::Value {
    tools.iter_mut().find(|t| t["label"] == label).unwrap()
}

fn scenarios() -> [Scenario; EDIT_SCENARIOS] {
    fn same(t: ScriptedTransport) -> ScriptedTransport {
        t
    }
    [
        ("raise Clear Seam to advanced", |t| find(t, "Clear Seam")["complexity"] = "advanced".into(), same),
        ("reword the Unwrap rationale", |t| find(t, "Unwrap")["rationale"] = "Flatten along the seams.".into(), same),
        ("drop Select Overlap", |t| t.retain(|x| x["label"] != "Select Overlap"), same),
        ("reverse the tool order", |t| t.reverse(), same),
        (
            "add Mark Sharp",
            |t| {
                let mut tool = find(t, "Seams from Islands").clone();
                tool["tool_id"] = "marking_seams_mark_sharp".into();
                tool["label"] = "Mark Sharp".into();
                tool["rationale"] = "Keeps hard edges visible.".into();
                t.push(tool);
            },
            |t| {
                let code = common::uv_script(StageKind::FunctionalityCodegen)
                    + "\nMark Sharp\n```python\nbpy.ops.mesh.mark_sharp(clear=False)\n```\n";
                let labels = common::uv_script(StageKind::ToolLabeling)
                    + "- [marking_seams_mark_sharp] Mark Sharp\n  - Concepts: Edge Loop\n  - Shortcut: none\n  - Menu: Edge > Mark Sharp\n  - Mouse: none\n  - Control: button\n";
                t.push(StageKind::FunctionalityCodegen, code).push(StageKind::ToolLabeling, labels)
            },
        ),
    ]
}

fn refinement_loop() -> Verdict {
    let mut done = Vec::new();
    for (name, edit, script) in scenarios() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ws");
        ensure(common::uv_run_all(&root) == 0, || format!("{name}: run-all failed"))?;
        let path = root.join("tools.json");
        let mut tools: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        edit(&mut tools);
        let edited_bytes = serde_json::to_string_pretty(&tools).unwrap().into_bytes();
        fs::write(&path, &edited_bytes).unwrap();

        let mut transport = script(common::uv_scripted());
        let outcome = {
            let ws = Workspace::open_existing(&root).map_err(|e| format!("{name}: {e}"))?;
            cmd_stage(&ws, &mut transport, RetryPolicy::immediate(1), None, false).map_err(|e| format!("{name}: {e}"))?
        };
        let edited: BTreeSet<StageKind> = outcome.edits.iter().map(|e| e.stage).collect();
        ensure(edited == BTreeSet::from([StageKind::ToolSelection]), || format!("{name}: detected {edited:?}"))?;
        let oracle = downstream_oracle(&edited);
        let ran: Vec<StageKind> = outcome.reports.iter().map(|r| r.stage).collect();
        ensure(outcome.plan == oracle, || format!("{name}: plan {:?} != {oracle:?}", outcome.plan))?;
        ensure(ran == oracle, || format!("{name}: ran {ran:?} != {oracle:?}"))?;
        ensure(transport.stages_called() == oracle, || format!("{name}: called {:?}", transport.stages_called()))?;
        ensure(fs::read(&path).unwrap() == edited_bytes, || format!("{name}: tools.json was rewritten"))?;
        let passed = outcome.validation.as_ref().is_some_and(|r| r.passed());
        ensure(passed, || format!("{name}: rebuilt spec does not validate"))?;
        done.push(name);
    }
    Ok(format!("{} scenarios re-ran exactly [functionality_codegen, ui_codegen, tool_labeling]", done.len()))
}

enum Payload {
    Strings(Vec<String>),
    Fatal(Vec<Issue>),
}

fn strings_or_fatal<T>(out: scaffolder::parse::ParseOutcome<T>, strings: impl Fn(&T) -> Vec<String>) -> Payload {
    match out.payload() {
        Some(p) => Payload::Strings(strings(p)),
        None => Payload::Fatal(out.fatal_issues().cloned().collect()),
    }
}

fn parse_any(kind: StageKind, text: &str, state: &PipelineState) -> Payload {
    let raw = RawResponse::new(kind, text);
    let stages = state.workflow().unwrap();
    let tools = state.tools().unwrap();
    match kind {
        StageKind::WorkflowAnalysis => strings_or_fatal(parse_workflow_response(&raw), |v| {
            v.iter()
                .flat_map(|s| {
                    let mut out = vec![s.name.clone(), s.description.clone()];
                    out.extend(s.concepts.iter().flat_map(|c| [c.term.clone(), c.explanation.clone()]));
                    out
                })
                .collect()
        }),
        StageKind::ToolSelection => strings_or_fatal(parse_tool_response(&raw, stages), |v| {
            v.iter().flat_map(|t| [t.label.clone(), t.rationale.clone()]).collect()
        }),
        StageKind::FunctionalityCodegen | StageKind::UiCodegen => {
            strings_or_fatal(extract_code_blocks(&raw, tools), |v| v.iter().map(|b| b.code.clone()).collect())
        }
        StageKind::ToolLabeling => strings_or_fatal(parse_labeling_response(&raw, tools, stages), |v| {
            v.iter()
                .flat_map(|l| {
                    let mut out = l.concepts.clone();
                    if let Some(n) = &l.native {
                        out.extend([n.shortcut(), n.menu_path(), n.mouse_op()].into_iter().flatten().map(String::from));
                    }
                    out
                })
                .collect()
        }),
    }
}

fn swap_blocks(text: &str, marker: &str) -> String {
    let mut blocks: Vec<String> = Vec::new();
    for line in text.lines() {
        if line.starts_with(marker) || blocks.is_empty() {
            blocks.push(String::new());
        }
        let last = blocks.last_mut().unwrap();
        last.push_str(line);
        last.push('\n');
    }
    if blocks.len() > 2 {
        blocks.swap(1, 2);
    }
    blocks.concat()
}

fn mutations() -> Vec<(&'static str, StageKind, String)> {
    use StageKind::*;
    let wf = common::uv_script(WorkflowAnalysis);
    let ts = common::uv_script(ToolSelection);
    let fc = common::uv_script(FunctionalityCodegen);
    let ui = common::uv_script(UiCodegen);
    let tl = common::uv_script(ToolLabeling);
    let drop_lines = |t: &str, pred: &dyn Fn(&str) -> bool| t.lines().filter(|l| !pred(l)).collect::<Vec<_>>().join("\n");
    vec![
        ("workflow: stages reordered", WorkflowAnalysis, swap_blocks(&wf, "- **")),
        ("workflow: concepts removed", WorkflowAnalysis, drop_lines(&wf, &|l| l.starts_with("  - "))),
        ("workflow: stray prose", WorkflowAnalysis, wf.replace("- **Unwrapping", "Note: this part matters most.\n\n- **Unwrapping")),
        ("workflow: bold stripped", WorkflowAnalysis, wf.replace("**", "")),
        ("workflow: numbered 1,2,4", WorkflowAnalysis, {
            let mut n = [1, 2, 4].into_iter();
            wf.lines().map(|l| match l.strip_prefix("- ") { Some(r) => format!("{}. {r}", n.next().unwrap()), None => l.to_string() }).collect::<Vec<_>>().join("\n")
        }),
        ("workflow: descriptions missing", WorkflowAnalysis, wf.lines().map(|l| match l.split_once("**: ") { Some((h, _)) => format!("{h}**"), None => l.to_string() }).collect::<Vec<_>>().join("\n")),
        ("workflow: refusal", WorkflowAnalysis, "No stages applicable.".into()),
        ("workflow: truncated", WorkflowAnalysis, wf[..wf.len() / 3].to_string()),
        ("workflow: CRLF", WorkflowAnalysis, wf.replace('\n', "\r\n")),
        ("tools: lines reordered", ToolSelection, {
            let mut lines: Vec<&str> = ts.lines().collect();
            lines.swap(1, 3);
            lines.join("\n")
        }),
        ("tools: levels missing", ToolSelection, ts.replace(", Intermediate.", ".")),
        ("tools: unknown level", ToolSelection, ts.replace(", Advanced.", ", Expert.")),
        ("tools: unknown stage", ToolSelection, ts.replace("**Checking & Visualization**", "**Rendering**")),
        ("tools: stray prose", ToolSelection, format!("Sure! Here are the tools.\n\n{ts}\nLet me know if you need more.")),
        ("tools: empty", ToolSelection, String::new()),
        ("tools: bullets as stars", ToolSelection, ts.replace("- ", "* ")),
        ("code: fence unclosed", FunctionalityCodegen, fc[..fc.rfind("```").unwrap()].to_string()),
        ("code: no fences", FunctionalityCodegen, fc.replace("```python\n", "").replace("```\n", "")),
        ("code: tilde fences", FunctionalityCodegen, fc.replace("```", "~~~")),
        ("code: names dropped", FunctionalityCodegen, drop_lines(&fc, &|l| l == "Pin" || l == "Unwrap")),
        ("ui: prose only", UiCodegen, ui.lines().filter(|l| !l.starts_with("```")).take(2).collect::<Vec<_>>().join("\n")),
        ("labels: fields missing", ToolLabeling, drop_lines(&tl, &|l| l.contains("Mouse:") || l.contains("Control:"))),
        ("labels: unknown ids", ToolLabeling, tl.replace("[unwrapping_editing_pin]", "[nope]")),
        ("labels: unknown concepts", ToolLabeling, tl.replace("Concepts: Seam", "Concepts: Topology")),
        ("labels: items reordered", ToolLabeling, swap_blocks(&tl, "- [")),
        ("labels: nothing", ToolLabeling, "I could not label these tools.".into()),
    ]
}

fn parser_robustness() -> Verdict {
    let profile = common::profile();
    let mut base = common::uv_scripted();
    let mut state = PipelineState::new(common::uv_task());
    {
        let mut ctx = PipelineContext::new(&profile, &mut base);
        state.run_all(&mut ctx).map_err(|e| e.to_string())?;
    }
    let corpus = mutations();
    ensure(corpus.len() >= MIN_MUTATIONS, || format!("only {} mutations", corpus.len()))?;
    let (mut ok, mut fatal) = (0, 0);
    for (i, (name, kind, text)) in corpus.iter().enumerate() {
        match parse_any(*kind, text, &state) {
            Payload::Strings(strings) => {
                if let Some(s) = strings.iter().find(|s| !text.contains(s.as_str())) {
                    return Err(format!("{name}: {s:?} is not in the response"));
                }
                ok += 1;
            }
            Payload::Fatal(issues) => {
                let lines = text.lines().count();
                ensure(!issues.is_empty(), || format!("{name}: fatal without issues"))?;
                for issue in &issues {
                    ensure(issue.severity == Severity::Fatal && issue.line <= lines && !issue.message.is_empty(), || {
                        format!("{name}: badly located issue {issue}")
                    })?;
                }
                fatal += 1;
            }
        }

        // The same response served forever never costs more than max_attempts calls.
        let max_attempts = (i % 3) as u32 + 1;
        let mut transport = StageKind::CHAIN
            .iter()
            .filter(|k| *k < kind)
            .fold(ScriptedTransport::new(), |t, &k| t.always(k, common::uv_script(k)))
            .always(*kind, text.clone());
        let mut fresh = PipelineState::new(common::uv_task());
        {
            let mut ctx = PipelineContext::new(&profile, &mut transport);
            ctx.retry = RetryPolicy::immediate(1);
            ctx.max_attempts = max_attempts;
            for &k in kind.upstream() {
                fresh.run_stage(&mut ctx, k).map_err(|e| format!("{name}: {e}"))?;
            }
            let _ = fresh.run_stage(&mut ctx, *kind);
        }
        let calls = transport.stages_called().iter().filter(|k| *k == kind).count() as u32;
        ensure(calls >= 1 && calls <= max_attempts, || format!("{name}: {calls} calls > {max_attempts}"))?;
    }
    Ok(format!("{} mutations: {ok} parsed verbatim, {fatal} fatal with located issues, repair bounded", corpus.len()))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let snap = |name: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let ws = dir.path().join(name);
        ensure(common::uv_run_all(&ws) == 0, || "run-all failed".into())?;
        let mut files = common::snapshot(&ws);
        for (path, bytes) in files.iter_mut() {
            if path == "addon/manifest.json" {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                v.as_object_mut().unwrap().remove("generated_at");
                *bytes = serde_json::to_vec(&v).unwrap();
            }
        }
        Ok(files)
    };
    let a = snap("a")?;
    let b = snap("b")?;
    let names = |s: &[(String, Vec<u8>)]| s.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    ensure(names(&a) == names(&b), || "file sets differ".into())?;
    if let Some(((path, _), _)) = a.iter().zip(&b).find(|(x, y)| x.1 != y.1) {
        return Err(format!("{path} differs"));
    }
    Ok(format!("{} files byte-identical apart from generated_at", a.len()))
}
