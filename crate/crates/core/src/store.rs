//! On-disk workspace.
//!
//! Every stage artifact is a plain file a human can edit. `state.json` keeps
//! the content hash recorded when each artifact was last written or
//! acknowledged; a mismatch with the file on disk means the file was edited.
//!
//! ```text
//! task.json  profile.json  state.json
//! workflow.json  tools.json  functionality/<tool_id>.txt  ui_draft.py  labels.json
//! spec.json  validation.json  addon/scaffold_addon.py  addon/manifest.json
//! transcripts/NNNN_<stage>.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::{GeneratedAddon, ADDON_MODULE};
use crate::model::{to_canonical_json, ScaffoldSpec, SoftwareProfile, TaskDescription, ToolId};
use crate::pipeline::{artifact_path, hash_files, parse_ui_draft, Artifact, PipelineState, StagePayload, Transcript};
use crate::stage::StageKind;
use crate::validate::ValidationReport;

pub const LOCK_FILE: &str = ".scaffolder.lock";
pub const STATE_FILE: &str = "state.json";
pub const TASK_FILE: &str = "task.json";
pub const PROFILE_FILE: &str = "profile.json";
pub const SPEC_FILE: &str = "spec.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const ADDON_DIR: &str = "addon";
pub const MANIFEST_FILE: &str = "addon/manifest.json";
pub const TRANSCRIPT_DIR: &str = "transcripts";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("workspace {0} is locked by another run (remove {LOCK_FILE} if no run is active)")]
    Locked(PathBuf),
    #[error("{0} is not a scaffolder workspace (no {STATE_FILE})")]
    NotAWorkspace(PathBuf),
}

/// A workspace-relative path and its contents.
type FileBytes = (String, Vec<u8>);

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// How a workspace talks to the model; stored so `stage` can reuse it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TransportConfig {
    Fixtures {
        dir: PathBuf,
    },
    Live {
        model: String,
        endpoint: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        record: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub stage: StageKind,
    pub content_hash: String,
    pub stale: bool,
}

/// Contents of `state.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredState {
    pub spec_version: u64,
    pub max_attempts: u32,
    pub lenient: bool,
    pub transport: TransportConfig,
    pub artifacts: Vec<ArtifactRecord>,
}

/// An artifact whose file no longer matches its recorded hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edit {
    pub stage: StageKind,
    /// The file or directory is gone.
    pub missing: bool,
}

/// Stages strictly downstream of any edited stage, in chain order.
pub fn rerun_plan(edited: &[StageKind]) -> Vec<StageKind> {
    match edited.iter().min() {
        Some(first) => first.downstream().to_vec(),
        None => Vec::new(),
    }
}

/// An open workspace. Holds the lock file until dropped.
#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    /// Opens `root`, creating it when needed, and takes the lock.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let lock = root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => return Err(StoreError::Locked(root)),
            Err(e) => return Err(StoreError::Io { path: lock, source: e }),
        }
        Ok(Self { root })
    }

    /// Like [`Workspace::open`] but requires an existing `state.json`.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        if !root.join(STATE_FILE).is_file() {
            return Err(StoreError::NotAWorkspace(root));
        }
        Self::open(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes through a temporary file and a rename.
    pub fn write_atomic(&self, rel: &str, bytes: &[u8]) -> Result<(), StoreError> {
        let path = self.path(rel);
        let dir = path.parent().unwrap_or(&self.root).to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(&dir))?;
        tmp.write_all(bytes).map_err(io_err(&path))?;
        tmp.persist(&path).map_err(|e| StoreError::Io { path: path.clone(), source: e.error })?;
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> Result<(), StoreError> {
        self.write_atomic(rel, to_canonical_json(value).as_bytes())
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T, StoreError> {
        let path = self.path(rel);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt { path, message: e.to_string() })
    }

    pub fn load_task(&self) -> Result<TaskDescription, StoreError> {
        self.read_json(TASK_FILE)
    }

    pub fn load_profile(&self) -> Result<SoftwareProfile, StoreError> {
        self.read_json(PROFILE_FILE)
    }

    pub fn load_stored(&self) -> Result<StoredState, StoreError> {
        self.read_json(STATE_FILE)
    }

    /// The files of one artifact as currently on disk, or `None` if the
    /// artifact's path is gone.
    fn disk_files(&self, kind: StageKind) -> Result<Option<Vec<FileBytes>>, StoreError> {
        let rel = artifact_path(kind);
        let path = self.path(rel);
        if kind == StageKind::FunctionalityCodegen {
            if !path.is_dir() {
                return Ok(None);
            }
            let mut files = Vec::new();
            for entry in fs::read_dir(&path).map_err(io_err(&path))? {
                let entry = entry.map_err(io_err(&path))?;
                let name = entry.file_name().to_string_lossy().into_owned();
                if !name.ends_with(".txt") || !entry.path().is_file() {
                    continue;
                }
                let bytes = fs::read(entry.path()).map_err(io_err(&entry.path()))?;
                files.push((format!("{rel}/{name}"), bytes));
            }
            files.sort();
            return Ok(Some(files));
        }
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(vec![(rel.to_string(), bytes)])),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(StoreError::Io { path, source: e }),
        }
    }

    /// Hash of an artifact as it is on disk; `None` when missing.
    pub fn disk_hash(&self, kind: StageKind) -> Result<Option<String>, StoreError> {
        Ok(self.disk_files(kind)?.map(|files| hash_files(&files)))
    }

    /// Reads and parses an artifact from disk.
    pub fn read_payload(&self, kind: StageKind) -> Result<Option<StagePayload>, StoreError> {
        let Some(files) = self.disk_files(kind)? else { return Ok(None) };
        let corrupt = |rel: &str, message: String| StoreError::Corrupt { path: self.path(rel), message };
        let json = |files: &[(String, Vec<u8>)]| -> Result<serde_json::Value, StoreError> {
            let (rel, bytes) = &files[0];
            serde_json::from_slice(bytes).map_err(|e| corrupt(rel, e.to_string()))
        };
        let payload = match kind {
            StageKind::WorkflowAnalysis => StagePayload::Workflow(
                serde_json::from_value(json(&files)?).map_err(|e| corrupt(artifact_path(kind), e.to_string()))?,
            ),
            StageKind::ToolSelection => StagePayload::Tools(
                serde_json::from_value(json(&files)?).map_err(|e| corrupt(artifact_path(kind), e.to_string()))?,
            ),
            StageKind::ToolLabeling => StagePayload::Labels(
                serde_json::from_value(json(&files)?).map_err(|e| corrupt(artifact_path(kind), e.to_string()))?,
            ),
            StageKind::UiCodegen => {
                let (rel, bytes) = &files[0];
                let text = String::from_utf8(bytes.clone()).map_err(|e| corrupt(rel, e.to_string()))?;
                StagePayload::UiDraft(parse_ui_draft(&text))
            }
            StageKind::FunctionalityCodegen => {
                let mut map = BTreeMap::new();
                for (rel, bytes) in &files {
                    let name = rel.rsplit('/').next().unwrap_or(rel);
                    let id = name.trim_end_matches(".txt");
                    let code = String::from_utf8(bytes.clone()).map_err(|e| corrupt(rel, e.to_string()))?;
                    map.insert(ToolId::from(id), code);
                }
                StagePayload::Functionality(map)
            }
        };
        Ok(Some(payload))
    }

    /// Writes the task, profile and run settings of a fresh run.
    pub fn init(
        &self,
        task: &TaskDescription,
        profile: &SoftwareProfile,
        stored: &StoredState,
    ) -> Result<(), StoreError> {
        self.write_json(TASK_FILE, task)?;
        self.write_json(PROFILE_FILE, profile)?;
        self.write_json(STATE_FILE, stored)
    }

    /// Persists artifacts whose recorded hash differs from the disk, new
    /// transcripts and `state.json`. Files a human edited and that were then
    /// acknowledged are left alone because their hashes already agree.
    pub fn save_state(&self, state: &PipelineState, stored: &mut StoredState) -> Result<(), StoreError> {
        stored.artifacts.clear();
        for &kind in &StageKind::CHAIN {
            let Some(artifact) = state.artifact(kind) else { continue };
            if self.disk_hash(kind)?.as_deref() != Some(artifact.content_hash.as_str()) {
                self.write_artifact(&artifact.payload)?;
            }
            stored.artifacts.push(ArtifactRecord {
                stage: kind,
                content_hash: artifact.content_hash.clone(),
                stale: state.is_stale(kind),
            });
        }
        for t in state.transcripts() {
            let rel = format!("{TRANSCRIPT_DIR}/{}.json", t.response.transcript_id);
            if !self.path(&rel).exists() {
                self.write_json(&rel, t)?;
            }
        }
        self.write_json(STATE_FILE, stored)
    }

    fn write_artifact(&self, payload: &StagePayload) -> Result<(), StoreError> {
        if let StagePayload::Functionality(_) = payload {
            let dir = self.path(artifact_path(StageKind::FunctionalityCodegen));
            if dir.is_dir() {
                fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
            }
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        for (rel, text) in payload.to_files() {
            self.write_atomic(&rel, text.as_bytes())?;
        }
        Ok(())
    }

    /// Rebuilds the pipeline state from disk. Artifacts keep their recorded
    /// hashes, so edits stay detectable; missing artifacts are left out.
    pub fn load_state(&self, stored: &StoredState) -> Result<PipelineState, StoreError> {
        let mut state = PipelineState::new(self.load_task()?);
        for record in &stored.artifacts {
            if let Some(payload) = self.read_payload(record.stage)? {
                state.restore(
                    Artifact { payload, content_hash: record.content_hash.clone() },
                    record.stale,
                );
            }
        }
        for t in self.load_transcripts()? {
            state.push_transcript(t);
        }
        Ok(state)
    }

    fn load_transcripts(&self) -> Result<Vec<Transcript>, StoreError> {
        let dir = self.path(TRANSCRIPT_DIR);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".json"))
            .collect();
        names.sort();
        names
            .iter()
            .map(|n| self.read_json(&format!("{TRANSCRIPT_DIR}/{n}")))
            .collect()
    }

    /// Artifacts whose disk content differs from the recorded hash.
    pub fn detect_edits(&self, stored: &StoredState) -> Result<Vec<Edit>, StoreError> {
        let mut edits = Vec::new();
        for record in &stored.artifacts {
            match self.disk_hash(record.stage)? {
                None => {
                    log::warn!("{} is missing; {} will run again", artifact_path(record.stage), record.stage);
                    edits.push(Edit { stage: record.stage, missing: true });
                }
                Some(hash) if hash != record.content_hash => edits.push(Edit { stage: record.stage, missing: false }),
                Some(_) => {}
            }
        }
        Ok(edits)
    }

    /// Writes the assembled spec, its validation report and, when given, the
    /// add-on and manifest.
    pub fn write_outputs(
        &self,
        spec: &ScaffoldSpec,
        report: &ValidationReport,
        addon: Option<&GeneratedAddon>,
        generated_at: Option<String>,
    ) -> Result<(), StoreError> {
        self.write_atomic(SPEC_FILE, spec.to_canonical_json().as_bytes())?;
        self.write_json(VALIDATION_FILE, report)?;
        if let Some(addon) = addon {
            self.write_atomic(&format!("{ADDON_DIR}/{ADDON_MODULE}.py"), addon.source.as_bytes())?;
            let mut manifest = addon.manifest.clone();
            manifest.generated_at = generated_at;
            self.write_json(MANIFEST_FILE, &manifest)?;
        }
        Ok(())
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.root.join(LOCK_FILE));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ComplexityLevel, ToolSpec, WorkflowStage};

    fn stored() -> StoredState {
        StoredState {
            spec_version: 1,
            max_attempts: 2,
            lenient: false,
            transport: TransportConfig::Fixtures { dir: "f".into() },
            artifacts: Vec::new(),
        }
    }

    fn state() -> PipelineState {
        let mut state = PipelineState::new(TaskDescription::new("t", "blender").unwrap());
        let stages = vec![WorkflowStage { stage_id: 1, name: "S".into(), description: "d".into(), concepts: vec![] }];
        state.edit_artifact(StagePayload::Workflow(stages)).unwrap();
        let mut tool = ToolSpec::selected("A", 1, ComplexityLevel::Basic, "r");
        tool.tool_id = "s_a".into();
        state.edit_artifact(StagePayload::Tools(vec![tool])).unwrap();
        let mut code = BTreeMap::new();
        code.insert(ToolId::from("s_a"), "pass\n".to_string());
        state.edit_artifact(StagePayload::Functionality(code)).unwrap();
        state
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        assert!(matches!(Workspace::open(dir.path()), Err(StoreError::Locked(_))));
        drop(ws);
        Workspace::open(dir.path()).unwrap();
    }

    #[test]
    fn round_trip_and_edit_detection() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        let state = state();
        let mut st = stored();
        ws.init(&state.task, &SoftwareProfile {
            name: "Blender".into(),
            manual_refs: vec![],
            api_refs: vec![],
            example_layout_code: "x".into(),
        }, &st)
        .unwrap();
        ws.save_state(&state, &mut st).unwrap();
        assert!(ws.detect_edits(&st).unwrap().is_empty());
        let loaded = ws.load_state(&st).unwrap();
        assert_eq!(loaded.tools(), state.tools());

        // Reformatting JSON is not an edit; changing a value is.
        let text = fs::read_to_string(ws.path("tools.json")).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        fs::write(ws.path("tools.json"), serde_json::to_string(&value).unwrap()).unwrap();
        assert!(ws.detect_edits(&st).unwrap().is_empty());
        fs::write(ws.path("tools.json"), text.replace("\"basic\"", "\"advanced\"")).unwrap();
        fs::remove_file(ws.path("functionality/s_a.txt")).unwrap();
        fs::remove_dir(ws.path("functionality")).unwrap();
        let edits = ws.detect_edits(&st).unwrap();
        assert_eq!(
            edits,
            [
                Edit { stage: StageKind::ToolSelection, missing: false },
                Edit { stage: StageKind::FunctionalityCodegen, missing: true }
            ]
        );
    }

    #[test]
    fn plan_is_everything_after_the_earliest_edit() {
        assert_eq!(rerun_plan(&[]), []);
        assert_eq!(
            rerun_plan(&[StageKind::UiCodegen, StageKind::ToolSelection]),
            StageKind::ToolSelection.downstream()
        );
        assert_eq!(rerun_plan(&[StageKind::ToolLabeling]), []);
    }
}
