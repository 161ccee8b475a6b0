//! Deterministic add-on generation.
//!
//! A validated spec compiles to one Python module for Blender 3.6 plus a JSON
//! manifest. The same spec always yields the same bytes; the only
//! time-dependent value, `generated_at`, lives in the manifest and is filled
//! in by the caller.

use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{canonicalize, slugify, ComplexityLevel, ControlKind, ScaffoldSpec, ToolId, ToolSpec};
use crate::validate::{validate, Finding, ValidationOptions};

/// Bumped whenever the generated Python changes shape.
pub const TEMPLATE_VERSION: u32 = 1;
pub const RUNTIME_VERSION: &str = "3.6.0";
pub const ADDON_MODULE: &str = "scaffold_addon";
pub const LEVEL_PROPERTY: &str = "scaffold_level";
pub const MAIN_PANEL: &str = "SCAFFOLD_PT_main";
const OPERATOR_NAMESPACE: &str = "scaffold";
const VALUE_NAMESPACE: &str = "scaffold_value";
/// Blender caps operator id names at 63 bytes.
const MAX_IDENTIFIER: usize = 56;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodegenError {
    #[error("spec is not canonical; canonicalize it before generating")]
    NotCanonical,
    #[error("spec fails validation:\n{}", .0.iter().map(|f| format!("  {f}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Finding>),
}

/// How the panel and runtime reach one tool. Shared by the generator, the
/// manifest and the interaction model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolIndexEntry {
    pub tool_id: ToolId,
    pub operator_id: String,
    pub class_name: String,
    pub panel_id: String,
    pub stage_id: u32,
    pub level: ComplexityLevel,
    pub control_kind: ControlKind,
    pub label_text: String,
    pub tooltip: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_property: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelEntry {
    pub panel_id: String,
    pub stage_id: u32,
    pub label: String,
}

/// Describes a generated add-on for the runtime harness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub addon_name: String,
    pub addon_version: String,
    pub spec_hash: String,
    pub template_version: u32,
    pub runtime_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    pub level_property: String,
    pub main_panel: String,
    pub panels: Vec<PanelEntry>,
    pub tool_index: Vec<ToolIndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedAddon {
    pub source: String,
    pub manifest: Manifest,
}

/// Concept lines `Term: Explanation` joined by `; `, then U+2014 and the
/// native mapping. Missing parts are left out.
pub fn tooltip(spec: &ScaffoldSpec, tool: &ToolSpec) -> String {
    let concepts: Vec<String> = tool
        .concepts
        .iter()
        .map(|term| match spec.concept(term) {
            Some(c) => format!("{}: {}", c.term, c.explanation),
            None => term.clone(),
        })
        .collect();
    let native = tool.native.as_ref().map(|n| n.display());
    match (concepts.is_empty(), native) {
        (false, Some(native)) => format!("{} \u{2014} {native}", concepts.join("; ")),
        (false, None) => concepts.join("; "),
        (true, Some(native)) => native,
        (true, None) => tool.label.clone(),
    }
}

/// Panel text for a tool: the label with its native mapping in parentheses.
pub fn label_text(tool: &ToolSpec) -> String {
    match &tool.native {
        Some(n) => format!("{} ({})", tool.label, n.display()),
        None => tool.label.clone(),
    }
}

/// `prefix_slug(name)` for each name, truncated for Blender and made unique
/// with `_2`, `_3`, ... in first-seen order.
pub fn mangle_identifiers(prefix: &str, names: &[&str]) -> Vec<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut taken = std::collections::HashSet::new();
    names
        .iter()
        .map(|name| {
            let slug = slugify(name);
            let slug = if slug.is_empty() { "item".to_string() } else { slug };
            let mut base = if prefix.is_empty() { slug } else { format!("{prefix}_{slug}") };
            base.truncate(MAX_IDENTIFIER);
            let base = base.trim_end_matches('_').to_string();
            let count = counts.entry(base.clone()).or_insert(0);
            loop {
                *count += 1;
                let id = if *count == 1 { base.clone() } else { format!("{base}_{count}") };
                if taken.insert(id.clone()) {
                    return id;
                }
            }
        })
        .collect()
}

pub fn stage_panel_id(stage_id: u32) -> String {
    format!("SCAFFOLD_PT_stage_{stage_id}")
}

/// Index entries in canonical tool order.
pub fn tool_index(spec: &ScaffoldSpec) -> Vec<ToolIndexEntry> {
    let ids: Vec<&str> = spec.tools.iter().map(|t| t.tool_id.as_str()).collect();
    let names = mangle_identifiers("", &ids);
    let values = mangle_identifiers(VALUE_NAMESPACE, &ids);
    spec.tools
        .iter()
        .zip(names)
        .zip(values)
        .map(|((tool, name), value)| ToolIndexEntry {
            tool_id: tool.tool_id.clone(),
            operator_id: format!("{OPERATOR_NAMESPACE}.{name}"),
            class_name: format!("SCAFFOLD_OT_{name}"),
            panel_id: stage_panel_id(tool.stage_id),
            stage_id: tool.stage_id,
            level: tool.complexity,
            control_kind: tool.control_kind,
            label_text: label_text(tool),
            tooltip: tooltip(spec, tool),
            value_property: has_value(tool.control_kind).then_some(value),
        })
        .collect()
}

fn has_value(kind: ControlKind) -> bool {
    matches!(kind, ControlKind::Toggle | ControlKind::Slider | ControlKind::TextField)
}

/// A double-quoted Python string literal.
pub fn py_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Raw triple-quoted literal when the code allows it, else an escaped one.
fn py_code(code: &str) -> String {
    let raw_ok = !code.contains("'''") && !code.ends_with('\\') && !code.ends_with('\'') && !code.contains('\r');
    if raw_ok {
        format!("r'''{code}'''")
    } else {
        py_str(code)
    }
}

fn level_const(level: ComplexityLevel) -> String {
    level.as_str().to_ascii_uppercase()
}

const PRELUDE: &str = r#"
LEVELS = (
    ("BASIC", "Basic", "Only the essential tools for each stage"),
    ("INTERMEDIATE", "Intermediate", "Add tools for refining the result"),
    ("ADVANCED", "Advanced", "Show every tool"),
)
LEVEL_RANK = {"BASIC": 0, "INTERMEDIATE": 1, "ADVANCED": 2}
"#;

const HELPERS: &str = r#"
def _visible(context, level):
    return LEVEL_RANK[level] <= LEVEL_RANK[context.scene.scaffold_level]


def _run_tool(operator, context, code, value=None):
    namespace = {"bpy": bpy, "context": context, "operator": operator, "value": value}
    try:
        exec(compile(code, operator.bl_idname, "exec"), namespace)
    except Exception as exc:
        operator.report({'ERROR'}, "%s failed: %s" % (operator.bl_label, exc))
        return {'CANCELLED'}
    return {'FINISHED'}


def _draw_stage(layout, context, stage_index):
    col = layout.column(align=True)
    for op_id, index, level, control, text, prop in TOOLS:
        if index != stage_index or not _visible(context, level):
            continue
        if prop:
            row = col.row(align=True)
            row.prop(context.scene, prop, text=text)
            row.operator(op_id, text="", icon='PLAY')
        else:
            col.operator(op_id, text=text)
"#;

/// Compiles a canonical, valid spec into add-on source and manifest.
pub fn generate_addon(
    spec: &ScaffoldSpec,
    spec_hash: &str,
    options: ValidationOptions,
) -> Result<GeneratedAddon, CodegenError> {
    if canonicalize(spec).map_or(true, |c| &c != spec) {
        return Err(CodegenError::NotCanonical);
    }
    let report = validate(spec, options);
    if !report.passed() {
        return Err(CodegenError::Invalid(report.errors().cloned().collect()));
    }
    let index = tool_index(spec);
    let source = render_source(spec, spec_hash, &index);
    let panels = spec
        .stages
        .iter()
        .map(|s| PanelEntry {
            panel_id: stage_panel_id(s.stage_id),
            stage_id: s.stage_id,
            label: format!("{}. {}", s.stage_id, s.name),
        })
        .collect();
    let manifest = Manifest {
        addon_name: ADDON_MODULE.to_string(),
        addon_version: format!("{}.0.0", spec.version),
        spec_hash: spec_hash.to_string(),
        template_version: TEMPLATE_VERSION,
        runtime_version: RUNTIME_VERSION.to_string(),
        generated_at: None,
        level_property: LEVEL_PROPERTY.to_string(),
        main_panel: MAIN_PANEL.to_string(),
        panels,
        tool_index: index,
    };
    Ok(GeneratedAddon { source, manifest })
}

fn render_source(spec: &ScaffoldSpec, spec_hash: &str, index: &[ToolIndexEntry]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Generated by scaffolder from spec {spec_hash}.");
    let _ = writeln!(s, "# Edit spec.json and run `scaffolder render` instead of editing this file.");
    s.push('\n');
    s.push_str("bl_info = {\n");
    let _ = writeln!(s, "    \"name\": {},", py_str(&format!("Scaffold: {}", spec.task.text.trim())));
    s.push_str("    \"author\": \"scaffolder\",\n");
    let _ = writeln!(s, "    \"version\": ({}, 0, 0),", spec.version);
    s.push_str("    \"blender\": (3, 6, 0),\n");
    s.push_str("    \"location\": \"View3D > Sidebar > Scaffold\",\n");
    s.push_str("    \"description\": \"Staged tool panel with adjustable complexity\",\n");
    s.push_str("    \"category\": \"Interface\",\n");
    s.push_str("}\n\nimport bpy\n");
    s.push_str(PRELUDE);

    s.push_str("\n# (operator id, stage index, level, control, label text, scene property)\nTOOLS = (\n");
    for entry in index {
        let _ = writeln!(
            s,
            "    ({}, {}, {}, {}, {}, {}),",
            py_str(&entry.operator_id),
            entry.stage_id,
            py_str(&level_const(entry.level)),
            py_str(entry.control_kind.as_str()),
            py_str(&entry.label_text),
            py_str(entry.value_property.as_deref().unwrap_or("")),
        );
    }
    s.push_str(")\n");
    s.push_str(HELPERS);

    for (tool, entry) in spec.tools.iter().zip(index) {
        s.push_str("\n\n");
        let _ = writeln!(s, "class {}(bpy.types.Operator):", entry.class_name);
        let _ = writeln!(s, "    bl_idname = {}", py_str(&entry.operator_id));
        let _ = writeln!(s, "    bl_label = {}", py_str(&tool.label));
        let _ = writeln!(s, "    bl_description = {}", py_str(&entry.tooltip));
        s.push_str("    bl_options = {'REGISTER', 'UNDO'}\n");
        let _ = writeln!(s, "    level = {}", py_str(&level_const(entry.level)));
        let _ = writeln!(s, "    code = {}", py_code(&tool.functionality_code));
        s.push_str("\n    @classmethod\n    def poll(cls, context):\n        return _visible(context, cls.level)\n\n");
        s.push_str("    def execute(self, context):\n");
        match &entry.value_property {
            Some(prop) => {
                let _ = writeln!(
                    s,
                    "        return _run_tool(self, context, self.code, getattr(context.scene, {}))",
                    py_str(prop)
                );
            }
            None => s.push_str("        return _run_tool(self, context, self.code)\n"),
        }
    }

    s.push_str("\n\nclass SCAFFOLD_PT_main(bpy.types.Panel):\n");
    let _ = writeln!(s, "    bl_idname = {}", py_str(MAIN_PANEL));
    s.push_str("    bl_label = \"Scaffold\"\n");
    s.push_str("    bl_space_type = 'VIEW_3D'\n    bl_region_type = 'UI'\n    bl_category = \"Scaffold\"\n\n");
    s.push_str("    def draw(self, context):\n        layout = self.layout\n");
    let _ = writeln!(s, "        layout.label(text={})", py_str(spec.task.text.trim()));
    let _ = writeln!(s, "        layout.prop(context.scene, {}, expand=True)", py_str(LEVEL_PROPERTY));

    for stage in &spec.stages {
        let panel = stage_panel_id(stage.stage_id);
        s.push_str("\n\n");
        let _ = writeln!(s, "class {panel}(bpy.types.Panel):");
        let _ = writeln!(s, "    bl_idname = {}", py_str(&panel));
        let _ = writeln!(s, "    bl_label = {}", py_str(&format!("{}. {}", stage.stage_id, stage.name)));
        s.push_str("    bl_space_type = 'VIEW_3D'\n    bl_region_type = 'UI'\n    bl_category = \"Scaffold\"\n");
        let _ = writeln!(s, "    bl_parent_id = {}", py_str(MAIN_PANEL));
        s.push_str("\n    def draw(self, context):\n");
        let _ = writeln!(s, "        _draw_stage(self.layout, context, {})", stage.stage_id);
    }

    s.push_str("\n\nCLASSES = (\n");
    for entry in index {
        let _ = writeln!(s, "    {},", entry.class_name);
    }
    s.push_str("    SCAFFOLD_PT_main,\n");
    for stage in &spec.stages {
        let _ = writeln!(s, "    {},", stage_panel_id(stage.stage_id));
    }
    s.push_str(")\n\n\ndef register():\n");
    let _ = writeln!(
        s,
        "    bpy.types.Scene.{LEVEL_PROPERTY} = bpy.props.EnumProperty(name=\"Level\", items=LEVELS, default=\"BASIC\")"
    );
    for (tool, entry) in spec.tools.iter().zip(index) {
        let Some(prop) = &entry.value_property else { continue };
        let name = py_str(&tool.label);
        let desc = py_str(&entry.tooltip);
        let decl = match tool.control_kind {
            ControlKind::Toggle => format!("BoolProperty(name={name}, description={desc}, default=False)"),
            ControlKind::Slider => format!(
                "FloatProperty(name={name}, description={desc}, default=0.0, min=0.0, max=1.0, subtype='FACTOR')"
            ),
            _ => format!("StringProperty(name={name}, description={desc}, default=\"\")"),
        };
        let _ = writeln!(s, "    bpy.types.Scene.{prop} = bpy.props.{decl}");
    }
    s.push_str("    for cls in CLASSES:\n        bpy.utils.register_class(cls)\n\n\ndef unregister():\n");
    s.push_str("    for cls in reversed(CLASSES):\n        bpy.utils.unregister_class(cls)\n");
    for entry in index.iter().rev() {
        if let Some(prop) = &entry.value_property {
            let _ = writeln!(s, "    del bpy.types.Scene.{prop}");
        }
    }
    let _ = writeln!(s, "    del bpy.types.Scene.{LEVEL_PROPERTY}");
    s.push_str("\n\nif __name__ == \"__main__\":\n    register()\n");
    s
}
