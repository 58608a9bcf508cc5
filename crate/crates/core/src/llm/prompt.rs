use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde_json::Value;

use super::{
    GenerationRequest, LlmError, PartInfo, RequestTask, SceneObjectInfo, SlotKind, TokenSlot, G_END, G_START,
    P_END, P_START,
};
use crate::geometry::{encode, encode_global, FeatureBackend, ObjectCloud};

/// Text with `{{name}}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: String,
    pub text: String,
    pub required_placeholders: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let mut required = BTreeSet::new();
        let mut rest = text.as_str();
        while let Some(open) = rest.find("{{") {
            let Some(close) = rest[open + 2..].find("}}") else { break };
            required.insert(rest[open + 2..open + 2 + close].trim().to_string());
            rest = &rest[open + 2 + close + 2..];
        }
        Self { name: name.into(), text, required_placeholders: required }
    }

    /// Single-pass substitution; inserted values are not re-scanned.
    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, LlmError> {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find("{{") {
            let Some(close) = rest[open + 2..].find("}}") else { break };
            let key = rest[open + 2..open + 2 + close].trim();
            let value = values.get(key).ok_or_else(|| LlmError::MissingPlaceholder {
                template: self.name.clone(),
                placeholder: key.to_string(),
            })?;
            out.push_str(&rest[..open]);
            out.push_str(value);
            rest = &rest[open + 2 + close + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

pub fn slot_marker(kind: SlotKind) -> String {
    match kind {
        SlotKind::Global => "<slot:global>".to_string(),
        SlotKind::Part(i) => format!("<slot:part:{i}>"),
    }
}

pub const URDF_SYSTEM: &str = "\
You are an expert in mechanical structure analysis and URDF modeling. You receive a static 3D object \
split into parts, one mesh file per part, and must describe how the parts move relative to each other.

Work as follows. Decide which part is the base link. Decide, for every other part, which part it \
hangs from and whether the connection is revolute, prismatic, or fixed, judging from shape, contact, \
symmetry, and plausible motion. When one part needs more than one motion, insert geometry-free helper \
links so that every joint is a single revolute, prismatic, or fixed joint.

Output exactly two blocks and nothing that could be mistaken for them:
1. Between <json_start> and <json_end>: the kinematic tree as JSON. Every node has \"part\" and \
\"joint_type\" (\"base\" for the root) and may have \"children\" and \"joint_name\". Do not include \
any numbers.
2. Between <urdf_start> and <urdf_end>: a complete URDF document. Name each link after its mesh file \
and give it one visual with that mesh. Declare all links before any joint. Every joint has a type, a \
parent, a child, and an origin; revolute and prismatic joints also have an axis and a limit with \
lower and upper. Leave out inertial and collision elements.";

const URDF_USER: &str = "\
Object: {{object_name}}
Part files, in link order: {{part_files}}

Geometry tokens (whole object, then parts in the order above):
{{global_slot}}
{{part_slots}}

Part bounding boxes in the object frame (center; extent):
{{structure}}

Answer with the <json_start>...<json_end> block followed by the <urdf_start>...<urdf_end> block.";

pub const SCENE_ID_SYSTEM: &str = "\
You review the objects of a 3D scene and pick out the ones that should have moving parts, such as \
doors, drawers, lids, or hinged panels. Only consider the listed objects and refer to them by their \
asset id.";

const SCENE_ID_USER: &str = "\
Scene objects (asset id: name. description):
{{objects}}

Reply with a JSON array of {\"asset_id\": ..., \"reason\": ...} entries, one per articulable object, \
between <json_start> and <json_end>. Reply with an empty array if none qualify.";

fn stem(file: &str) -> String {
    Path::new(file).file_stem().map_or_else(|| file.to_string(), |s| s.to_string_lossy().into_owned())
}

fn fmt3(v: [f64; 3]) -> String {
    format!("[{:.4}, {:.4}, {:.4}]", v[0], v[1], v[2])
}

/// Build the generation request for one object. `part_files` must list the
/// cloud's parts in the same order (compared by file stem).
pub fn build_urdf_prompt(
    object_name: &str,
    part_files: &[String],
    cloud: &ObjectCloud,
    encoder: &dyn FeatureBackend,
) -> Result<GenerationRequest, LlmError> {
    let expected: Vec<String> = cloud.parts.iter().map(|p| p.part_id.clone()).collect();
    let found: Vec<String> = part_files.iter().map(|f| stem(f)).collect();
    if part_files.is_empty() || found != expected {
        return Err(LlmError::OrderMismatch { expected, found });
    }

    let encoding = |e: crate::geometry::GeometryError| LlmError::Encoding(e.to_string());
    let mut token_slots = vec![TokenSlot { kind: SlotKind::Global, feature: encode_global(encoder, cloud).map_err(encoding)? }];
    let mut parts = Vec::with_capacity(part_files.len());
    for (i, (file, part)) in part_files.iter().zip(&cloud.parts).enumerate() {
        token_slots.push(TokenSlot { kind: SlotKind::Part(i), feature: encode(encoder, part).map_err(encoding)? });
        let bbox = part.denormalize().aabb().ok_or_else(|| LlmError::Encoding(format!("part {} is empty", part.part_id)))?;
        parts.push(PartInfo {
            file: file.clone(),
            link: part.part_id.clone(),
            min: bbox.min.coords.into(),
            max: bbox.max.coords.into(),
        });
    }

    let part_slots: String = (0..parts.len()).map(|i| slot_marker(SlotKind::Part(i))).collect();
    let structure: Vec<String> = parts
        .iter()
        .map(|p| format!("- {} ({}): {}; {}", p.link, p.file, fmt3(p.center()), fmt3(p.extent())))
        .collect();
    let values = BTreeMap::from([
        ("object_name", object_name.to_string()),
        ("part_files", part_files.join(", ")),
        ("global_slot", format!("{G_START}{}{G_END}", slot_marker(SlotKind::Global))),
        ("part_slots", format!("{P_START}{part_slots}{P_END}")),
        ("structure", structure.join("\n")),
    ]);
    let user = PromptTemplate::new("urdf_user", URDF_USER).render(&values)?;

    Ok(GenerationRequest {
        system: URDF_SYSTEM.to_string(),
        user,
        token_slots,
        max_output: GenerationRequest::DEFAULT_MAX_OUTPUT,
        temperature: 0.0,
        task: RequestTask::UrdfGeneration { object_name: object_name.to_string(), parts },
    })
}

fn scene_objects(scene_json: &str) -> Result<Vec<SceneObjectInfo>, LlmError> {
    let malformed = |m: String| LlmError::MalformedScene(m);
    let value: Value = serde_json::from_str(scene_json).map_err(|e| malformed(e.to_string()))?;
    let objects = value
        .get("objects")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("`objects` must be an array".into()))?;
    objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let text = |key: &str| o.get(key).and_then(Value::as_str).unwrap_or_default().to_string();
            match o.get("asset_id").and_then(Value::as_str) {
                Some(id) if !id.is_empty() => {
                    Ok(SceneObjectInfo { asset_id: id.to_string(), name: text("name"), description: text("description") })
                }
                _ => Err(malformed(format!("/objects/{i}: missing asset_id"))),
            }
        })
        .collect()
}

/// Build the request that asks which scene objects are articulable.
pub fn build_scene_id_prompt(scene_json: &str) -> Result<GenerationRequest, LlmError> {
    let objects = scene_objects(scene_json)?;
    let lines: Vec<String> =
        objects.iter().map(|o| format!("- {}: {}. {}", o.asset_id, o.name, o.description).trim_end().to_string()).collect();
    let values = BTreeMap::from([("objects", lines.join("\n"))]);
    let user = PromptTemplate::new("scene_id_user", SCENE_ID_USER).render(&values)?;
    Ok(GenerationRequest {
        system: SCENE_ID_SYSTEM.to_string(),
        user,
        token_slots: Vec::new(),
        max_output: GenerationRequest::DEFAULT_MAX_OUTPUT,
        temperature: 0.0,
        task: RequestTask::SceneIdentification { objects },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_object_cloud, StubBackend, TriangleMesh};
    use nalgebra::Point3;

    fn cloud() -> ObjectCloud {
        let tri = |z: f64| {
            TriangleMesh::new(
                vec![Point3::new(0.0, 0.0, z), Point3::new(1.0, 0.0, z), Point3::new(0.0, 1.0, z)],
                vec![[0, 1, 2]],
            )
            .unwrap()
        };
        build_object_cloud("box", &[("base".into(), tri(0.0)), ("lid".into(), tri(1.0))], 64, 64, 1).unwrap()
    }

    fn files(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn template_rendering() {
        let t = PromptTemplate::new("t", "a {{x}} b {{ y }}");
        assert_eq!(t.required_placeholders, BTreeSet::from(["x".to_string(), "y".to_string()]));
        let out = t.render(&BTreeMap::from([("x", "{{y}}".to_string()), ("y", "2".to_string())])).unwrap();
        assert_eq!(out, "a {{y}} b 2");
        assert!(matches!(t.render(&BTreeMap::new()), Err(LlmError::MissingPlaceholder { .. })));
    }

    #[test]
    fn urdf_prompt_layout() {
        let req = build_urdf_prompt("box", &files(&["base.ply", "lid.ply"]), &cloud(), &StubBackend).unwrap();
        assert_eq!(req.user.matches("<slot:global>").count(), 1);
        assert_eq!(req.user.matches("<slot:part:").count(), 2);
        assert!(req.user.contains("<g_start><slot:global><g_end>"));
        assert!(req.user.contains("<p_start><slot:part:0><slot:part:1><p_end>"));
        assert!(req.user.find("base.ply").unwrap() < req.user.find("lid.ply").unwrap());
        let kinds: Vec<_> = req.token_slots.iter().map(|s| s.kind).collect();
        assert_eq!(kinds, [SlotKind::Global, SlotKind::Part(0), SlotKind::Part(1)]);
        assert_eq!(req.temperature, 0.0);
        let again = build_urdf_prompt("box", &files(&["base.ply", "lid.ply"]), &cloud(), &StubBackend).unwrap();
        assert_eq!(req.hash(), again.hash());
    }

    #[test]
    fn order_is_checked() {
        let c = cloud();
        for bad in [files(&[]), files(&["lid.ply", "base.ply"]), files(&["base.ply"])] {
            assert!(matches!(build_urdf_prompt("box", &bad, &c, &StubBackend), Err(LlmError::OrderMismatch { .. })));
        }
    }

    #[test]
    fn scene_prompt() {
        let scene = r#"{"objects":[{"asset_id":"cab_1","name":"cabinet","description":"two doors"},{"asset_id":"apple_3","name":"apple"}]}"#;
        let req = build_scene_id_prompt(scene).unwrap();
        assert!(req.user.contains("- cab_1: cabinet. two doors"));
        assert!(req.user.contains("- apple_3: apple."));

        let empty = build_scene_id_prompt(r#"{"objects":[]}"#).unwrap();
        assert!(matches!(empty.task, RequestTask::SceneIdentification { ref objects } if objects.is_empty()));

        let missing = r#"{"objects":[{"name":"cabinet"}]}"#;
        assert!(matches!(build_scene_id_prompt(missing), Err(LlmError::MalformedScene(_))));
    }
}
