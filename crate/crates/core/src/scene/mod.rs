//! Scene-level orchestration: read a scene description, ask the backend which
//! objects should move, convert each of those into an articulated object, and
//! write URDFs plus a manifest that places them back at their original poses.

mod gt;
mod pipeline;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::kinematics::Pose;
use crate::llm::LlmError;

pub use gt::{load_gt, GtBundle};
pub use pipeline::{
    articulate_object, assemble, canonical_hash, identify_articulable, run_scene, ArticulationResult, AssembleError,
    Identification, MeshMode, Pipeline, PipelineConfig, PipelineError, SceneManifest, Stage, Status,
};

/// Version written to and accepted from scene files.
pub const SCENE_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scene schema: field `{field}` at {location}: {reason}")]
    Schema { field: String, location: String, reason: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("identification response unparseable: {0}")]
    ResponseUnparseable(String),
    #[error("ground truth: {0}")]
    GroundTruth(String),
}

impl SceneError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        SceneError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneObject {
    pub asset_id: String,
    pub name: String,
    pub description: String,
    /// Per-part mesh files, relative to the scene file, in link order.
    pub mesh_paths: Vec<String>,
    pub pose: Pose,
    pub scale: f64,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneDescription {
    pub schema_version: String,
    pub scene_id: String,
    pub objects: Vec<SceneObject>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
    /// Directory mesh paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SceneDescription {
    pub fn object(&self, asset_id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.asset_id == asset_id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn mesh_path(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }
}

fn schema(field: &str, location: String, reason: impl Into<String>) -> SceneError {
    SceneError::Schema { field: field.to_string(), location, reason: reason.into() }
}

fn take_string(obj: &mut Map<String, Value>, key: &str, at: &str, required: bool) -> Result<String, SceneError> {
    match obj.remove(key) {
        Some(Value::String(s)) if !(required && s.is_empty()) => Ok(s),
        None | Some(Value::Null) if !required => Ok(String::new()),
        None => Err(schema(key, at.to_string(), "missing")),
        Some(_) => Err(schema(key, format!("{at}/{key}"), "expected a non-empty string")),
    }
}

fn vec3(v: &Value, field: &str, at: String) -> Result<Vector3<f64>, SceneError> {
    let items = v.as_array().filter(|a| a.len() == 3).ok_or_else(|| schema(field, at.clone(), "expected 3 numbers"))?;
    let mut out = [0.0; 3];
    for (i, item) in items.iter().enumerate() {
        out[i] = item
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| schema(field, format!("{at}/{i}"), "expected a finite number"))?;
    }
    Ok(Vector3::from(out))
}

fn parse_pose(v: &Value, at: &str) -> Result<Pose, SceneError> {
    let obj = v.as_object().ok_or_else(|| schema("pose", at.to_string(), "expected an object"))?;
    let xyz = match obj.get("xyz") {
        Some(x) => vec3(x, "xyz", format!("{at}/xyz"))?,
        None => return Err(schema("xyz", at.to_string(), "missing")),
    };
    let rpy = match obj.get("rpy") {
        Some(r) => vec3(r, "rpy", format!("{at}/rpy"))?,
        None => Vector3::zeros(),
    };
    Ok(Pose::new(xyz, rpy))
}

fn parse_object(v: Value, at: &str) -> Result<SceneObject, SceneError> {
    let Value::Object(mut obj) = v else {
        return Err(schema("objects", at.to_string(), "expected an object"));
    };
    let asset_id = take_string(&mut obj, "asset_id", at, true)?;
    let name = take_string(&mut obj, "name", at, true)?;
    let description = take_string(&mut obj, "description", at, false)?;

    let mesh_paths = match obj.remove("mesh_paths") {
        Some(Value::Array(items)) if !items.is_empty() => items
            .into_iter()
            .enumerate()
            .map(|(i, p)| match p {
                Value::String(s) if !s.is_empty() => Ok(s),
                _ => Err(schema("mesh_paths", format!("{at}/mesh_paths/{i}"), "expected a path string")),
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(schema("mesh_paths", format!("{at}/mesh_paths"), "expected a non-empty array")),
        None => return Err(schema("mesh_paths", at.to_string(), "missing")),
    };
    let mut stems = HashSet::new();
    for (i, p) in mesh_paths.iter().enumerate() {
        let stem = Path::new(p).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if stem.is_empty() || !stems.insert(stem) {
            return Err(schema("mesh_paths", format!("{at}/mesh_paths/{i}"), "file stems name links and must be unique"));
        }
    }

    let pose = match obj.remove("pose") {
        Some(p) => parse_pose(&p, &format!("{at}/pose"))?,
        None => return Err(schema("pose", at.to_string(), "missing")),
    };
    let scale = match obj.remove("scale") {
        None | Some(Value::Null) => 1.0,
        Some(s) => s
            .as_f64()
            .filter(|x| x.is_finite() && *x > 0.0)
            .ok_or_else(|| schema("scale", format!("{at}/scale"), "expected a positive number"))?,
    };
    Ok(SceneObject { asset_id, name, description, mesh_paths, pose, scale, extra: obj })
}

/// Parse and validate scene JSON. Errors carry a JSON pointer to the
/// offending value. Unknown fields are kept in `extra`.
pub fn parse_scene(text: &str, base_dir: &Path) -> Result<SceneDescription, SceneError> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        schema("", format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    let Value::Object(mut root) = value else {
        return Err(schema("", String::new(), "scene must be a JSON object"));
    };
    let schema_version = match root.remove("schema_version") {
        None => SCENE_SCHEMA_VERSION.to_string(),
        Some(Value::String(v)) if v == SCENE_SCHEMA_VERSION => v,
        Some(_) => {
            return Err(schema("schema_version", "/schema_version".into(), format!("expected \"{SCENE_SCHEMA_VERSION}\"")))
        }
    };
    let scene_id = take_string(&mut root, "scene_id", "", true)?;
    let objects = match root.remove("objects") {
        Some(Value::Array(items)) => items,
        Some(_) => return Err(schema("objects", "/objects".into(), "expected an array")),
        None => return Err(schema("objects", String::new(), "missing")),
    };
    let mut seen = HashSet::new();
    let mut parsed = Vec::with_capacity(objects.len());
    for (i, o) in objects.into_iter().enumerate() {
        let at = format!("/objects/{i}");
        let obj = parse_object(o, &at)?;
        if !seen.insert(obj.asset_id.clone()) {
            return Err(schema("asset_id", format!("{at}/asset_id"), format!("duplicate asset id {:?}", obj.asset_id)));
        }
        parsed.push(obj);
    }
    Ok(SceneDescription { schema_version, scene_id, objects: parsed, extra: root, base_dir: base_dir.to_path_buf() })
}

pub fn load_scene(path: &Path) -> Result<SceneDescription, SceneError> {
    let text = fs::read_to_string(path).map_err(|e| SceneError::io(path, e))?;
    parse_scene(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"{
        "scene_id": "kitchen",
        "objects": [{
            "asset_id": "cab_1", "name": "cabinet", "mesh_paths": ["cab/body.ply", "cab/door.ply"],
            "pose": {"xyz": [1, 2, 0], "rpy": [0, 0, 1.5]}, "scale": 2, "room": "A"
        }],
        "lighting": "dim"
    }"#;

    #[test]
    fn minimal_scene() {
        let s = parse_scene(ONE, Path::new("/data")).unwrap();
        assert_eq!(s.objects.len(), 1);
        let o = &s.objects[0];
        assert_eq!(o.pose.xyz, Vector3::new(1.0, 2.0, 0.0));
        assert_eq!(o.scale, 2.0);
        assert_eq!(o.extra["room"], "A");
        assert_eq!(s.extra["lighting"], "dim");
        assert_eq!(s.mesh_path(&o.mesh_paths[1]), Path::new("/data/cab/door.ply"));
        let again = parse_scene(&s.to_json(), Path::new("/data")).unwrap();
        assert_eq!(again, s);
    }

    fn field_of(text: &str) -> (String, String) {
        match parse_scene(text, Path::new(".")) {
            Err(SceneError::Schema { field, location, .. }) => (field, location),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn schema_errors() {
        let no_pose = ONE.replace(r#""pose": {"xyz": [1, 2, 0], "rpy": [0, 0, 1.5]},"#, "");
        assert_eq!(field_of(&no_pose), ("pose".into(), "/objects/0".into()));

        let v: Value = serde_json::from_str(ONE).unwrap();
        let obj = v["objects"][0].clone();
        let dup = serde_json::json!({"scene_id": "k", "objects": [obj.clone(), obj]}).to_string();
        assert_eq!(field_of(&dup), ("asset_id".into(), "/objects/1/asset_id".into()));

        let bad_xyz = ONE.replace("[1, 2, 0]", "[1, \"x\", 0]");
        assert_eq!(field_of(&bad_xyz), ("xyz".into(), "/objects/0/pose/xyz/1".into()));

        let same_stem = ONE.replace("cab/door.ply", "other/body.obj");
        assert_eq!(field_of(&same_stem).0, "mesh_paths");

        assert_eq!(field_of(r#"{"objects": []}"#).0, "scene_id");
    }
}
