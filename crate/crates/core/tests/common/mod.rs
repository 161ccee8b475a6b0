//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use scaffolder::model::{SoftwareProfile, TaskDescription};
use scaffolder::stage::StageKind;
use scaffolder::transport::ScriptedTransport;

pub const UV_TASK: &str = "Perform UV unwrapping on the default cube so it can be textured without distortion";

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn profile_path() -> PathBuf {
    crate_dir().join("fixtures/profiles/blender.json")
}

pub fn profile() -> SoftwareProfile {
    serde_json::from_str(&fs::read_to_string(profile_path()).unwrap()).unwrap()
}

pub fn uv_task() -> TaskDescription {
    TaskDescription::new(UV_TASK, profile().id()).unwrap()
}

/// Hash-keyed recorded responses for the UV task.
pub fn uv_responses() -> PathBuf {
    crate_dir().join("fixtures/uv_unwrapping/responses")
}

pub fn golden_addon() -> PathBuf {
    crate_dir().join("tests/golden/uv_unwrapping_addon.py")
}

/// The hand-written answer for one stage of the UV task.
pub fn uv_script(kind: StageKind) -> String {
    let path = crate_dir().join(format!("fixtures/uv_unwrapping/script/{kind}.txt"));
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Serves the UV answers by stage, any number of times.
pub fn uv_scripted() -> ScriptedTransport {
    StageKind::CHAIN
        .iter()
        .fold(ScriptedTransport::new(), |t, &k| t.always(k, uv_script(k)))
}

/// Runs the binary entry point in-process.
pub fn cli<I: IntoIterator<Item = S>, S: AsRef<str>>(args: I) -> i32 {
    let mut argv = vec!["scaffolder".to_string()];
    argv.extend(args.into_iter().map(|s| s.as_ref().to_string()));
    scaffolder::cli::run(argv)
}

/// `run-all` over the recorded UV fixtures into `ws`, via the binary so its
/// output stays out of the test log. Returns the exit code.
pub fn uv_run_all(ws: &Path) -> i32 {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_scaffolder"))
        .args(["-w", ws.to_str().unwrap(), "run-all", "--profile", profile_path().to_str().unwrap()])
        .args(["--fixtures", uv_responses().to_str().unwrap(), UV_TASK])
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .unwrap();
    out.status.code().unwrap_or(-1)
}

/// Every file under `root` as (relative path, bytes), sorted.
pub fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

pub mod gen {
    //! Seeded random specs that pass strict validation.

    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use scaffolder::model::{
        canonicalize, ComplexityLevel, ControlKind, DomainConcept, NativeMapping, ScaffoldSpec, TaskDescription,
        ToolSpec, WorkflowStage,
    };

    const WORDS: &[&str] = &[
        "Mark", "Seam", "Unwrap", "Pack", "Islands", "Pin", "Bevel", "Loop", "Cut", "Extrude", "Key", "Pose",
        "Graph", "Curve", "Bake", "Normal", "A/B", "A B", "Édit", "UV", "Select", "Scale",
    ];
    const CONTROLS: [ControlKind; 6] = [
        ControlKind::Button,
        ControlKind::Dropdown,
        ControlKind::Radio,
        ControlKind::Toggle,
        ControlKind::Slider,
        ControlKind::TextField,
    ];
    const CODE: &[&str] = &[
        "bpy.ops.mesh.mark_seam(clear=False)\n",
        "x = '''quoted'''\n",
        "path = 'C:\\\\tmp\\\\'\n",
        "print(\"a\\\\\")\n\nprint('b')",
        "for o in context.selected_objects:\n    o.select_set(False)\n",
        "s = 'ends with quote'",
    ];

    fn phrase(rng: &mut ChaCha8Rng, max_words: usize) -> String {
        let n = rng.gen_range(1..=max_words);
        (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    }

    fn level(rng: &mut ChaCha8Rng) -> ComplexityLevel {
        ComplexityLevel::ALL[rng.gen_range(0..3)]
    }

    fn native(rng: &mut ChaCha8Rng) -> NativeMapping {
        loop {
            let shortcut = *["Ctrl+E", "U", "Alt+Click", "Shift+D"].choose(rng).unwrap();
            let menu = *["Edge > Mark Seam", "UV > Unwrap", "Select > All"].choose(rng).unwrap();
            let mouse = *["Drag", "Right click"].choose(rng).unwrap();
            let shortcut = rng.gen_bool(0.5).then(|| shortcut.to_string());
            let menu = rng.gen_bool(0.5).then(|| menu.to_string());
            let mouse = rng.gen_bool(0.5).then(|| mouse.to_string());
            if let Ok(n) = NativeMapping::new(shortcut, menu, mouse) {
                return n;
            }
        }
    }

    /// A canonical spec passing strict validation, fully determined by `seed`.
    pub fn valid_spec(seed: u64) -> ScaffoldSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_stages = rng.gen_range(1..=5);
        let mut stages = Vec::new();
        let mut tools = Vec::new();
        for s in 0..n_stages {
            let stage_id = s as u32 + 1;
            let concepts: Vec<DomainConcept> = (0..rng.gen_range(1..=3))
                .map(|c| DomainConcept {
                    term: format!("{} {s}.{c}", phrase(&mut rng, 2)),
                    explanation: format!("Explains {}", phrase(&mut rng, 4)),
                })
                .collect();
            for t in 0..rng.gen_range(1..=6) {
                let mut tool = ToolSpec::selected(
                    phrase(&mut rng, 3),
                    stage_id,
                    if t == 0 { ComplexityLevel::Basic } else { level(&mut rng) },
                    phrase(&mut rng, 5),
                );
                let k = rng.gen_range(1..=concepts.len());
                tool.concepts = concepts.choose_multiple(&mut rng, k).map(|c| c.term.clone()).collect();
                tool.native = Some(native(&mut rng));
                tool.control_kind = *CONTROLS.choose(&mut rng).unwrap();
                tool.functionality_code = CODE.choose(&mut rng).unwrap().to_string();
                tools.push(tool);
            }
            stages.push(WorkflowStage {
                stage_id,
                name: format!("Stage {stage_id} {}", phrase(&mut rng, 2)),
                description: phrase(&mut rng, 6),
                concepts,
            });
        }
        tools.shuffle(&mut rng);
        canonicalize(&ScaffoldSpec {
            task: TaskDescription::new(phrase(&mut rng, 6), "blender").unwrap(),
            stages,
            tools,
            version: rng.gen_range(1..20),
        })
        .unwrap()
    }
}
