//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or other error, 2 validation failure,
//! 3 a response stayed unparseable after repairs, 4 transport failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::codegen::{generate_addon, CodegenError};
use crate::model::{ModelError, ScaffoldSpec, SoftwareProfile, TaskDescription};
use crate::pipeline::{PipelineContext, PipelineError, PipelineState, StageReport, DEFAULT_MAX_ATTEMPTS};
use crate::session::{Session, SessionError};
use crate::stage::StageKind;
use crate::store::{rerun_plan, Edit, StoreError, StoredState, TransportConfig, Workspace, SPEC_FILE};
use crate::transport::{FixtureStore, LiveConfig, LiveTransport, LlmTransport, RecordingTransport, RetryPolicy, TransportError};
use crate::validate::{diff, validate, ValidationOptions, ValidationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_TRANSPORT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "scaffolder", version, about = "Generate a scaffolded Blender panel from a task description")]
pub struct Cli {
    /// Workspace directory holding artifacts and outputs.
    #[arg(long, short = 'w', global = true, default_value = "scaffold-workspace")]
    pub workspace: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every stage for a new task and build the add-on.
    RunAll(RunAllArgs),
    /// Pick up hand edits and re-run the stages they affect.
    Stage(StageArgs),
    /// Validate spec.json in the workspace.
    Validate(ValidateArgs),
    /// Regenerate the add-on from a hand-edited spec.json.
    Render(ValidateArgs),
    /// Compare two spec files.
    Diff { old: PathBuf, new: PathBuf },
    /// Replay an interaction script against spec.json and print the event log.
    Simulate {
        script: PathBuf,
        /// Also write the event log here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunAllArgs {
    /// Software profile JSON.
    #[arg(long)]
    pub profile: PathBuf,
    /// Replay recorded responses from this directory.
    #[arg(long, conflicts_with = "live")]
    pub fixtures: Option<PathBuf>,
    /// Call a live chat-completions endpoint (key in SCAFFOLDER_API_KEY).
    #[arg(long)]
    pub live: bool,
    /// With --live, store every response as a fixture here.
    #[arg(long, requires = "live")]
    pub record: Option<PathBuf>,
    #[arg(long, env = "SCAFFOLDER_MODEL", default_value = "gpt-4o")]
    pub model: String,
    #[arg(long, env = "SCAFFOLDER_ENDPOINT", default_value = "https://api.openai.com/v1")]
    pub endpoint: String,
    /// Re-prompts allowed per stage after an unparseable answer.
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS - 1)]
    pub max_repairs: u32,
    #[command(flatten)]
    pub strictness: Strictness,
    /// The task, e.g. "perform UV unwrapping".
    pub task: String,
}

#[derive(Debug, Args, Clone, Copy)]
#[group(multiple = false)]
pub struct Strictness {
    /// Treat every rule violation as an error (default).
    #[arg(long)]
    pub strict: bool,
    /// Downgrade missing concepts and missing basic tools to warnings.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    /// Stage to run; without it every stage affected by edits runs.
    pub kind: Option<StageKind>,
    /// Run the stage even if nothing upstream changed.
    #[arg(long, requires = "kind")]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub strictness: Strictness,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{stage} is up to date (nothing upstream changed); pass --force to run it anyway")]
    NotInPlan { stage: StageKind },
    #[error("the pipeline is incomplete; run `stage` to finish it")]
    Incomplete,
    #[error("either --fixtures DIR or --live is required")]
    NoTransport,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Pipeline(PipelineError::ParseExhausted { .. }) => EXIT_PARSE,
            CliError::Pipeline(PipelineError::Transport { .. }) | CliError::Transport(_) => EXIT_TRANSPORT,
            _ => EXIT_ERROR,
        }
    }
}

/// What `stage` did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub edits: Vec<Edit>,
    pub plan: Vec<StageKind>,
    pub reports: Vec<StageReport>,
    pub validation: Option<ValidationReport>,
    pub spec_version: u64,
}

impl StageOutcome {
    pub fn ran(&self) -> Vec<StageKind> {
        self.reports.iter().map(|r| r.stage).collect()
    }
}

fn read_input<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let input = |message: String| CliError::Input { path: path.to_path_buf(), message };
    let text = fs::read_to_string(path).map_err(|e| input(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| input(e.to_string()))
}

/// Timestamp for the manifest; honours `SOURCE_DATE_EPOCH`.
fn generated_at() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0))
        .unwrap_or_else(chrono::Utc::now);
    now.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Builds the transport a workspace is configured for.
pub fn open_transport(config: &TransportConfig) -> Result<Box<dyn LlmTransport>, CliError> {
    Ok(match config {
        TransportConfig::Fixtures { dir } => Box::new(FixtureStore::open(dir)?),
        TransportConfig::Live { model, endpoint, record } => {
            let live = LiveTransport::from_env(LiveConfig {
                model: model.clone(),
                endpoint: endpoint.clone(),
                ..LiveConfig::default()
            })?;
            match record {
                Some(dir) => Box::new(RecordingTransport::new(live, dir.clone())),
                None => Box::new(live),
            }
        }
    })
}

fn report_stage(report: &StageReport) {
    for w in &report.warnings {
        log::warn!("{}: {w}", report.stage);
    }
    println!(
        "{}: ok ({} attempt{}, {} warning{})",
        report.stage,
        report.attempts,
        if report.attempts == 1 { "" } else { "s" },
        report.warnings.len(),
        if report.warnings.len() == 1 { "" } else { "s" },
    );
}

/// Files and directories `run-all` clears before a fresh run.
const MANAGED: &[&str] = &[
    "task.json",
    "profile.json",
    "state.json",
    "workflow.json",
    "tools.json",
    "functionality",
    "ui_draft.py",
    "labels.json",
    "spec.json",
    "validation.json",
    "addon",
    "transcripts",
];

fn clear_workspace(ws: &Workspace) -> Result<(), CliError> {
    for rel in MANAGED {
        let path = ws.path(rel);
        let result = if path.is_dir() {
            fs::remove_dir_all(&path)
        } else if path.exists() {
            fs::remove_file(&path)
        } else {
            Ok(())
        };
        result.map_err(|source| StoreError::Io { path, source })?;
    }
    Ok(())
}

/// Assembles, validates and renders once every stage is fresh. Bumps the
/// spec version when the content changed since the last `spec.json`.
fn finish(ws: &Workspace, state: &PipelineState, stored: &mut StoredState) -> Result<ValidationReport, CliError> {
    let previous: Option<ScaffoldSpec> = ws.read_json(SPEC_FILE).ok();
    let mut spec = state.assemble_spec(stored.spec_version)?;
    if let Some(prev) = &previous {
        let same = ScaffoldSpec { version: prev.version, ..spec.clone() } == *prev;
        spec.version = if same { prev.version } else { prev.version + 1 };
    }
    stored.spec_version = spec.version;
    let options = ValidationOptions { lenient: stored.lenient };
    let report = validate(&spec, options);
    let addon = if report.passed() {
        let hash = spec.content_hash().map_err(PipelineError::from)?;
        Some(generate_addon(&spec, &hash, options)?)
    } else {
        None
    };
    ws.write_outputs(&spec, &report, addon.as_ref(), Some(generated_at()))?;
    ws.write_json(crate::store::STATE_FILE, stored)?;
    Ok(report)
}

fn print_report_path(ws: &Workspace, report: &ValidationReport) {
    if !report.passed() {
        println!("report: {}", ws.path(crate::store::VALIDATION_FILE).display());
    }
}

fn print_report(report: &ValidationReport) {
    for f in &report.findings {
        println!("{f}");
    }
    println!("validation: {}", if report.passed() { "passed" } else { "failed" });
}

/// `run-all`: a fresh run of every stage into `ws`.
pub fn cmd_run_all(
    ws: &Workspace,
    task: TaskDescription,
    profile: &SoftwareProfile,
    stored: &mut StoredState,
    transport: &mut dyn LlmTransport,
    retry: RetryPolicy,
) -> Result<ValidationReport, CliError> {
    clear_workspace(ws)?;
    ws.init(&task, profile, stored)?;
    let mut state = PipelineState::new(task);
    let mut ctx = PipelineContext::new(profile, transport);
    ctx.retry = retry;
    ctx.max_attempts = stored.max_attempts;
    for &kind in &StageKind::CHAIN {
        let result = state.run_stage(&mut ctx, kind);
        ws.save_state(&state, stored)?;
        report_stage(&result?);
    }
    finish(ws, &state, stored)
}

/// `stage`: acknowledges hand edits, then runs `kind` (or every stage the
/// edits affect) and rebuilds the outputs when the chain is complete.
pub fn cmd_stage(
    ws: &Workspace,
    transport: &mut dyn LlmTransport,
    retry: RetryPolicy,
    kind: Option<StageKind>,
    force: bool,
) -> Result<StageOutcome, CliError> {
    let mut stored = ws.load_stored()?;
    let mut state = ws.load_state(&stored)?;
    let profile = ws.load_profile()?;
    let edits = ws.detect_edits(&stored)?;

    let mut payloads = Vec::new();
    let mut missing = Vec::new();
    for edit in &edits {
        if edit.missing {
            missing.push(edit.stage);
        } else if let Some(payload) = ws.read_payload(edit.stage)? {
            log::info!("acknowledging edit to {}", crate::pipeline::artifact_path(edit.stage));
            payloads.push(payload);
        }
    }
    state.acknowledge_edits(payloads)?;
    for edit in edits.iter().filter(|e| !e.missing) {
        if let Some(hash) = ws.disk_hash(edit.stage)? {
            state.set_content_hash(edit.stage, hash);
        }
    }
    for &m in &missing {
        state.mark_stale(m);
    }

    let edited: Vec<StageKind> = edits.iter().filter(|e| !e.missing).map(|e| e.stage).collect();
    let mut plan: Vec<StageKind> = rerun_plan(&edited);
    plan.extend(state.stale().iter().copied());
    for &m in &missing {
        plan.push(m);
        plan.extend(m.downstream().iter().copied());
    }
    for &k in &StageKind::CHAIN {
        if state.artifact(k).is_none() {
            plan.push(k);
        }
    }
    plan.sort();
    plan.dedup();

    let to_run: Vec<StageKind> = match kind {
        Some(k) if plan.contains(&k) || force => vec![k],
        Some(k) => {
            ws.save_state(&state, &mut stored)?;
            return Err(CliError::NotInPlan { stage: k });
        }
        None => plan.clone(),
    };

    let mut ctx = PipelineContext::new(&profile, transport);
    ctx.retry = retry;
    ctx.max_attempts = stored.max_attempts;
    let mut reports = Vec::new();
    for k in to_run {
        let result = state.run_stage(&mut ctx, k);
        ws.save_state(&state, &mut stored)?;
        reports.push(result?);
    }
    ws.save_state(&state, &mut stored)?;
    let validation = if state.is_complete() { Some(finish(ws, &state, &mut stored)?) } else { None };
    Ok(StageOutcome { edits, plan, reports, validation, spec_version: stored.spec_version })
}

fn load_spec(ws_root: &Path) -> Result<ScaffoldSpec, CliError> {
    read_input(&ws_root.join(SPEC_FILE))
}

fn lenient_of(s: Strictness, stored: Option<&StoredState>) -> bool {
    if s.strict {
        false
    } else if s.lenient {
        true
    } else {
        stored.is_some_and(|st| st.lenient)
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::RunAll(args) => {
            let profile: SoftwareProfile = read_input(&args.profile)?;
            profile.check()?;
            let task = TaskDescription::new(args.task, profile.id())?;
            let config = match (&args.fixtures, args.live) {
                (Some(dir), _) => TransportConfig::Fixtures { dir: dir.clone() },
                (None, true) => TransportConfig::Live {
                    model: args.model.clone(),
                    endpoint: args.endpoint.clone(),
                    record: args.record.clone(),
                },
                (None, false) => return Err(CliError::NoTransport),
            };
            let mut transport = open_transport(&config)?;
            let ws = Workspace::open(&cli.workspace)?;
            let mut stored = StoredState {
                spec_version: 1,
                max_attempts: args.max_repairs + 1,
                lenient: args.strictness.lenient,
                transport: config,
                artifacts: Vec::new(),
            };
            let report = cmd_run_all(&ws, task, &profile, &mut stored, transport.as_mut(), RetryPolicy::default())?;
            print_report(&report);
            print_report_path(&ws, &report);
            println!("workspace: {}", ws.root().display());
            Ok(if report.passed() { EXIT_OK } else { EXIT_INVALID })
        }
        Command::Stage(args) => {
            let ws = Workspace::open_existing(&cli.workspace)?;
            let stored = ws.load_stored()?;
            let mut transport = open_transport(&stored.transport)?;
            let outcome = cmd_stage(&ws, transport.as_mut(), RetryPolicy::default(), args.kind, args.force)?;
            for e in &outcome.edits {
                println!(
                    "{} {}",
                    crate::pipeline::artifact_path(e.stage),
                    if e.missing { "missing" } else { "edited" }
                );
            }
            outcome.reports.iter().for_each(report_stage);
            if outcome.reports.is_empty() {
                println!("nothing to run");
            }
            match &outcome.validation {
                Some(report) => {
                    print_report(report);
                    print_report_path(&ws, report);
                    Ok(if report.passed() { EXIT_OK } else { EXIT_INVALID })
                }
                None => {
                    println!("pipeline incomplete; stale: {:?}", outcome.plan);
                    Ok(EXIT_OK)
                }
            }
        }
        Command::Validate(args) => {
            let stored = Workspace::open_existing(&cli.workspace)?.load_stored().ok();
            let spec = load_spec(&cli.workspace)?;
            let report = validate(&spec, ValidationOptions { lenient: lenient_of(args.strictness, stored.as_ref()) });
            print_report(&report);
            Ok(if report.passed() { EXIT_OK } else { EXIT_INVALID })
        }
        Command::Render(args) => {
            let ws = Workspace::open_existing(&cli.workspace)?;
            let stored = ws.load_stored().ok();
            let spec = load_spec(&cli.workspace)?;
            let options = ValidationOptions { lenient: lenient_of(args.strictness, stored.as_ref()) };
            let report = validate(&spec, options);
            print_report(&report);
            if !report.passed() {
                ws.write_json(crate::store::VALIDATION_FILE, &report)?;
                print_report_path(&ws, &report);
                return Ok(EXIT_INVALID);
            }
            let hash = spec.content_hash().map_err(PipelineError::from)?;
            let addon = generate_addon(&spec, &hash, options)?;
            ws.write_outputs(&spec, &report, Some(&addon), Some(generated_at()))?;
            println!("add-on written to {}", ws.path(crate::store::ADDON_DIR).display());
            Ok(EXIT_OK)
        }
        Command::Diff { old, new } => {
            let old: ScaffoldSpec = read_input(&old)?;
            let new: ScaffoldSpec = read_input(&new)?;
            print!("{}", crate::model::to_canonical_json(&diff(&old, &new)));
            Ok(EXIT_OK)
        }
        Command::Simulate { script, out } => {
            let spec = load_spec(&cli.workspace)?;
            let text = fs::read_to_string(&script).map_err(|e| CliError::Input { path: script.clone(), message: e.to_string() })?;
            let mut session = Session::new(&spec);
            session.run_script(&text)?;
            let log = crate::model::to_canonical_json(&session.event_log());
            if let Some(out) = out {
                fs::write(&out, &log).map_err(|e| CliError::Input { path: out.clone(), message: e.to_string() })?;
            }
            print!("{log}");
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            if let CliError::Pipeline(PipelineError::ParseExhausted { issues, .. }) = &err {
                for issue in issues {
                    eprintln!("  {issue}");
                }
            }
            err.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["scaffolder", "bogus"]), EXIT_ERROR);
        assert_eq!(run(["scaffolder", "--help"]), EXIT_OK);
        assert_eq!(
            run(["scaffolder", "run-all", "--profile", "p.json", "--strict", "--lenient", "t"]),
            EXIT_ERROR
        );
    }

    #[test]
    fn stage_kind_parses_from_cli() {
        let cli = Cli::try_parse_from(["scaffolder", "-w", "x", "stage", "tool-selection", "--force"]).unwrap();
        match cli.command {
            Command::Stage(args) => {
                assert_eq!(args.kind, Some(StageKind::ToolSelection));
                assert!(args.force);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exit_codes_by_error() {
        let exhausted = CliError::Pipeline(PipelineError::ParseExhausted {
            stage: StageKind::ToolSelection,
            attempts: 2,
            issues: vec![],
        });
        assert_eq!(exhausted.exit_code(), EXIT_PARSE);
        assert_eq!(CliError::Transport(TransportError::NotConfigured("x".into())).exit_code(), EXIT_TRANSPORT);
        assert_eq!(CliError::NoTransport.exit_code(), EXIT_ERROR);
    }
}
