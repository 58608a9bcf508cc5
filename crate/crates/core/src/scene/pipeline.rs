use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{GtBundle, SceneDescription, SceneError, SceneObject};
use crate::chain::{repair_chain, ChainError, Inconsistency, ReasoningChain, RepairPolicy, JSON_END, JSON_START};
use crate::geometry::{build_object_cloud, load_mesh, FeatureBackend, GeometryError, MeshFormat, PartGeometry, DEFAULT_SAMPLES};
use crate::kinematics::{ArticulatedObject, KinematicTree, Pose, TreeError};
use crate::llm::{build_scene_id_prompt, build_urdf_prompt, complete, ChatBackend, LlmError, Usage};
use crate::metrics::{evaluate_objects, scene_report, MetricConfig, MetricReport, SceneReport, METRICS_VERSION};
use crate::urdf::emit_urdf;

/// How output URDFs point at part meshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshMode {
    /// Copy meshes to `meshes/<asset_id>/` next to the URDF.
    #[default]
    Copy,
    /// Reference the scene's own mesh files by relative path.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub n_global: usize,
    pub n_part: usize,
    pub seed: u64,
    pub repair_policy: RepairPolicy,
    /// Inconsistencies tolerated before an object fails.
    pub max_inconsistencies: usize,
    pub metrics: MetricConfig,
    pub mesh_mode: MeshMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_global: DEFAULT_SAMPLES,
            n_part: DEFAULT_SAMPLES,
            seed: 0,
            repair_policy: RepairPolicy::Bounded,
            max_inconsistencies: 0,
            metrics: MetricConfig::default(),
            mesh_mode: MeshMode::Copy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Sample,
    Prompt,
    Generate,
    Parse,
    Consistency,
    Assemble,
}

#[derive(Debug, Error)]
pub enum AssembleError {
    #[error("link {0:?} has no geometry")]
    MissingGeometry(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("JSON tree and URDF disagree: {}", list(.0))]
    Inconsistent(Vec<Inconsistency>),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
}

fn list(items: &[Inconsistency]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn variant_name(e: &impl Debug) -> String {
    let s = format!("{e:?}");
    s.split(|c: char| !c.is_alphanumeric() && c != '_').next().unwrap_or_default().to_string()
}

impl PipelineError {
    /// Short machine-readable error name, e.g. `Timeout` or `JointTypeMismatch`.
    pub fn kind(&self) -> String {
        match self {
            PipelineError::Geometry(GeometryError::Io { .. }) => "IoError".into(),
            PipelineError::Geometry(e) => variant_name(e),
            PipelineError::Llm(e) => variant_name(e),
            PipelineError::Chain(ChainError::Urdf(e)) => variant_name(e),
            PipelineError::Chain(e) => variant_name(e),
            PipelineError::Inconsistent(items) => items.first().map_or("Inconsistent", |i| i.kind()).into(),
            PipelineError::Assemble(e) => variant_name(e),
        }
    }
}

#[derive(Debug)]
pub enum Status {
    Ok,
    IdentifiedNotConverted { stage: Stage, error: PipelineError },
    NotArticulable,
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::IdentifiedNotConverted { .. } => "identified_not_converted",
            Status::NotArticulable => "not_articulable",
        }
    }
}

#[derive(Debug)]
pub struct ArticulationResult {
    pub asset_id: String,
    pub status: Status,
    /// Present once the response parsed, even if later stages failed.
    pub chain: Option<ReasoningChain>,
    /// Present iff the status is `Ok`.
    pub object: Option<ArticulatedObject>,
    pub metrics: Option<MetricReport>,
    pub latency_ms: Option<f64>,
    pub usage: Option<Usage>,
}

impl ArticulationResult {
    fn new(asset_id: &str, status: Status) -> Self {
        Self { asset_id: asset_id.to_string(), status, chain: None, object: None, metrics: None, latency_ms: None, usage: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Identification {
    pub ids: BTreeSet<String>,
    pub reasons: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct SceneManifest {
    pub scene_id: String,
    pub manifest_path: PathBuf,
    pub urdf_dir: PathBuf,
    pub identification: Identification,
    pub results: Vec<ArticulationResult>,
    pub report: Option<SceneReport>,
    pub canonical_hash: String,
    pub json: Value,
}

/// Bind part geometry to the tree. Every mesh-bearing link needs an entry
/// in `parts`; its URDF mesh reference is replaced by the part's reference.
pub fn assemble(
    mut parts: BTreeMap<String, PartGeometry>,
    tree: KinematicTree,
    root_pose: Pose,
    scale: f64,
) -> Result<ArticulatedObject, AssembleError> {
    if let Some(missing) = tree.links().iter().find(|l| !l.is_virtual() && !parts.contains_key(l.name())) {
        return Err(AssembleError::MissingGeometry(missing.name().to_string()));
    }
    let tree = tree.map_links(|l| match parts.get(l.name()).and_then(PartGeometry::reference) {
        Some(r) if !l.is_virtual() => l.remeshed(r),
        _ => l.clone(),
    })?;
    parts.retain(|name, _| tree.link(name).is_some());
    Ok(ArticulatedObject { tree, parts, root_pose, scale })
}

fn parse_identification(text: &str, scene: &SceneDescription) -> Result<Identification, SceneError> {
    let unparseable = |m: &str| SceneError::ResponseUnparseable(m.to_string());
    let start = text.find(JSON_START).ok_or_else(|| unparseable("no <json_start>"))?;
    let body = &text[start + JSON_START.len()..];
    let end = body.find(JSON_END).ok_or_else(|| unparseable("no <json_end>"))?;
    let value: Value = serde_json::from_str(body[..end].trim()).map_err(|e| unparseable(&e.to_string()))?;
    let items = value.as_array().ok_or_else(|| unparseable("expected a JSON array"))?;

    let mut out = Identification::default();
    for item in items {
        let (id, reason) = match item {
            Value::String(id) => (id.as_str(), ""),
            Value::Object(o) => (
                o.get("asset_id").and_then(Value::as_str).ok_or_else(|| unparseable("entry without asset_id"))?,
                o.get("reason").and_then(Value::as_str).unwrap_or_default(),
            ),
            _ => return Err(unparseable("entries must be objects")),
        };
        if scene.object(id).is_some() {
            out.ids.insert(id.to_string());
            out.reasons.insert(id.to_string(), reason.to_string());
        } else {
            let msg = format!("identified asset {id:?} is not in the scene; dropped");
            log::warn!("{msg}");
            out.warnings.push(msg);
        }
    }
    Ok(out)
}

/// Ask the backend which objects should be articulated.
pub fn identify_articulable(scene: &SceneDescription, backend: &dyn ChatBackend) -> Result<Identification, SceneError> {
    let request = build_scene_id_prompt(&scene.to_json())?;
    let response = complete(backend, &request)?;
    parse_identification(&response.text, scene)
}

fn file_name(p: &str) -> String {
    Path::new(p).file_name().map_or_else(|| p.to_string(), |f| f.to_string_lossy().into_owned())
}

fn stem(p: &str) -> String {
    Path::new(p).file_stem().map_or_else(|| p.to_string(), |f| f.to_string_lossy().into_owned())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs the per-object chain and the scene loop with fixed backends.
pub struct Pipeline<'a> {
    pub backend: &'a dyn ChatBackend,
    pub encoder: &'a dyn FeatureBackend,
    pub config: PipelineConfig,
}

impl Pipeline<'_> {
    fn mesh_reference(&self, scene: &SceneDescription, obj: &SceneObject, rel: &str, urdf_dir: Option<&Path>) -> String {
        let copied = format!("meshes/{}/{}", obj.asset_id, file_name(rel));
        match (self.config.mesh_mode, urdf_dir) {
            (MeshMode::Reference, Some(dir)) => {
                let source = std::path::absolute(scene.mesh_path(rel));
                let dir = std::path::absolute(dir);
                match (source, dir) {
                    (Ok(s), Ok(d)) => pathdiff::diff_paths(s, d)
                        .map_or(copied, |p| p.to_string_lossy().replace('\\', "/")),
                    _ => copied,
                }
            }
            _ => copied,
        }
    }

    /// Load, sample, prompt, generate, parse, check, assemble. Failures are
    /// reported in the result status.
    pub fn articulate(&self, scene: &SceneDescription, obj: &SceneObject, urdf_dir: Option<&Path>) -> ArticulationResult {
        let mut result = ArticulationResult::new(&obj.asset_id, Status::Ok);
        match self.try_articulate(scene, obj, urdf_dir, &mut result) {
            Ok(object) => result.object = Some(object),
            Err((stage, error)) => result.status = Status::IdentifiedNotConverted { stage, error },
        }
        result
    }

    fn try_articulate(
        &self,
        scene: &SceneDescription,
        obj: &SceneObject,
        urdf_dir: Option<&Path>,
        result: &mut ArticulationResult,
    ) -> Result<ArticulatedObject, (Stage, PipelineError)> {
        let at = |stage: Stage| move |e: PipelineError| (stage, e);

        let mut meshes = Vec::with_capacity(obj.mesh_paths.len());
        for rel in &obj.mesh_paths {
            let path = scene.mesh_path(rel);
            let mesh = MeshFormat::from_path(&path).and_then(|f| load_mesh(&path, f)).map_err(|e| at(Stage::Load)(e.into()))?;
            meshes.push((stem(rel), mesh));
        }

        let cloud = build_object_cloud(&obj.asset_id, &meshes, self.config.n_global, self.config.n_part, self.config.seed)
            .map_err(|e| at(Stage::Sample)(e.into()))?;
        let files: Vec<String> = obj.mesh_paths.iter().map(|p| file_name(p)).collect();
        let request = build_urdf_prompt(&obj.name, &files, &cloud, self.encoder).map_err(|e| at(Stage::Prompt)(e.into()))?;
        let response = complete(self.backend, &request).map_err(|e| at(Stage::Generate)(e.into()))?;
        result.latency_ms = Some(response.latency_ms);
        result.usage = Some(response.usage);

        let chain = repair_chain(&response.text, self.config.repair_policy).map_err(|e| at(Stage::Parse)(e.into()))?;
        let inconsistencies = chain.inconsistencies.clone();
        let tree = chain.urdf.tree.clone();
        result.chain = Some(chain);
        if inconsistencies.len() > self.config.max_inconsistencies {
            return Err((Stage::Consistency, PipelineError::Inconsistent(inconsistencies)));
        }

        let parts = obj
            .mesh_paths
            .iter()
            .zip(meshes)
            .map(|(rel, (link, mesh))| {
                (link, PartGeometry::Mesh { reference: self.mesh_reference(scene, obj, rel, urdf_dir), mesh })
            })
            .collect();
        assemble(parts, tree, obj.pose, obj.scale).map_err(|e| at(Stage::Assemble)(e.into()))
    }

    pub fn identify(&self, scene: &SceneDescription) -> Result<Identification, SceneError> {
        identify_articulable(scene, self.backend)
    }

    fn convert_all(&self, scene: &SceneDescription, targets: &[&SceneObject], urdf_dir: &Path) -> Vec<ArticulationResult> {
        if targets.is_empty() {
            return Vec::new();
        }
        let mut workers = self.backend.max_in_flight().unwrap_or(targets.len()).clamp(1, targets.len());
        if !self.encoder.concurrent() {
            workers = 1;
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<ArticulationResult>>> = targets.iter().map(|_| Mutex::new(None)).collect();
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(obj) = targets.get(i) else { break };
                    let r = self.articulate(scene, obj, Some(urdf_dir));
                    *slots[i].lock().expect("result slot") = Some(r);
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().expect("result slot").expect("every target converted")).collect()
    }

    /// Identify, convert, write `<out>/<scene_id>/<asset_id>.urdf` and
    /// `manifest.json`, and score against `gt` when given.
    pub fn run(&self, scene: &SceneDescription, gt: Option<&GtBundle>, out_dir: &Path) -> Result<SceneManifest, SceneError> {
        let identification = self.identify(scene)?;
        let urdf_dir = out_dir.join(&scene.scene_id);
        fs::create_dir_all(&urdf_dir).map_err(|e| SceneError::io(&urdf_dir, e))?;

        let targets: Vec<&SceneObject> = scene.objects.iter().filter(|o| identification.ids.contains(&o.asset_id)).collect();
        let mut converted: BTreeMap<String, ArticulationResult> =
            self.convert_all(scene, &targets, &urdf_dir).into_iter().map(|r| (r.asset_id.clone(), r)).collect();
        let mut results: Vec<ArticulationResult> = scene
            .objects
            .iter()
            .map(|o| converted.remove(&o.asset_id).unwrap_or_else(|| ArticulationResult::new(&o.asset_id, Status::NotArticulable)))
            .collect();
        results.sort_by(|a, b| a.asset_id.cmp(&b.asset_id));

        let mut warnings = identification.warnings.clone();
        if let Some(gt) = gt {
            for r in &mut results {
                let (Some(pred), Some(truth)) = (&r.object, gt.object(scene, &r.asset_id)) else { continue };
                match evaluate_objects(pred, &truth, &self.config.metrics) {
                    Ok(m) => r.metrics = Some(m),
                    Err(e) => warnings.push(format!("{}: metrics unavailable: {e}", r.asset_id)),
                }
            }
        }
        let report = gt.map(|gt| {
            let reports = results.iter().filter_map(|r| Some((r.asset_id.clone(), r.metrics.clone()?))).collect();
            scene_report(&identification.ids, &gt.articulable, &reports)
        });

        let mut entries = Vec::with_capacity(results.len());
        for r in &results {
            let obj = scene.object(&r.asset_id).expect("result for a scene object");
            let urdf = match &r.object {
                Some(object) => Some(self.write_object(scene, obj, object, &urdf_dir)?),
                None => None,
            };
            entries.push(result_json(r, obj, urdf));
        }

        let mut manifest = json!({
            "schema_version": super::SCENE_SCHEMA_VERSION,
            "metrics_version": METRICS_VERSION,
            "scene_id": scene.scene_id,
            "urdf_dir": ".",
            "config": self.config,
            "identified": identification.ids,
            "identification_reasons": identification.reasons,
            "warnings": warnings,
            "results": entries,
            "report": report,
        });
        let canonical_hash = canonical_hash(&manifest);
        manifest["canonical_hash"] = json!(canonical_hash);

        let manifest_path = urdf_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&manifest_path, text).map_err(|e| SceneError::io(&manifest_path, e))?;
        Ok(SceneManifest {
            scene_id: scene.scene_id.clone(),
            manifest_path,
            urdf_dir,
            identification,
            results,
            report,
            canonical_hash,
            json: manifest,
        })
    }

    /// Returns (file name, sha256 of the URDF text).
    fn write_object(
        &self,
        scene: &SceneDescription,
        obj: &SceneObject,
        object: &ArticulatedObject,
        urdf_dir: &Path,
    ) -> Result<(String, String), SceneError> {
        if self.config.mesh_mode == MeshMode::Copy {
            let mesh_dir = urdf_dir.join("meshes").join(&obj.asset_id);
            fs::create_dir_all(&mesh_dir).map_err(|e| SceneError::io(&mesh_dir, e))?;
            for rel in &obj.mesh_paths {
                let src = scene.mesh_path(rel);
                fs::copy(&src, mesh_dir.join(file_name(rel))).map_err(|e| SceneError::io(&src, e))?;
            }
        }
        let name = format!("{}.urdf", obj.asset_id);
        let path = urdf_dir.join(&name);
        let text = emit_urdf(&object.tree);
        fs::write(&path, &text).map_err(|e| SceneError::io(&path, e))?;
        Ok((name, sha256_hex(text.as_bytes())))
    }
}

fn result_json(r: &ArticulationResult, obj: &SceneObject, urdf: Option<(String, String)>) -> Value {
    let error = match &r.status {
        Status::IdentifiedNotConverted { stage, error } => {
            json!({ "stage": stage, "kind": error.kind(), "message": error.to_string() })
        }
        _ => Value::Null,
    };
    let (urdf, sha) = urdf.unzip();
    json!({
        "asset_id": r.asset_id,
        "name": obj.name,
        "status": r.status.label(),
        "error": error,
        "urdf": urdf,
        "urdf_sha256": sha,
        "pose": obj.pose,
        "scale": obj.scale,
        "repairs": r.chain.as_ref().map(|c| &c.repairs),
        "inconsistencies": r.chain.as_ref().map(|c| &c.inconsistencies),
        "chain_warnings": r.chain.as_ref().map(|c| &c.warnings),
        "metrics": r.metrics,
        "usage": r.usage,
        "latency_ms": r.latency_ms,
    })
}

/// SHA-256 of the compact, key-sorted manifest with latencies and the hash
/// field itself removed.
pub fn canonical_hash(manifest: &Value) -> String {
    let mut v = manifest.clone();
    if let Some(obj) = v.as_object_mut() {
        obj.remove("canonical_hash");
    }
    if let Some(results) = v.get_mut("results").and_then(Value::as_array_mut) {
        for r in results {
            if let Some(o) = r.as_object_mut() {
                o.remove("latency_ms");
            }
        }
    }
    sha256_hex(serde_json::to_string(&v).expect("json").as_bytes())
}

pub fn articulate_object(
    scene: &SceneDescription,
    obj: &SceneObject,
    backend: &dyn ChatBackend,
    encoder: &dyn FeatureBackend,
    config: PipelineConfig,
) -> ArticulationResult {
    Pipeline { backend, encoder, config }.articulate(scene, obj, None)
}

pub fn run_scene(
    scene: &SceneDescription,
    backend: &dyn ChatBackend,
    encoder: &dyn FeatureBackend,
    gt: Option<&GtBundle>,
    out_dir: &Path,
    config: PipelineConfig,
) -> Result<SceneManifest, SceneError> {
    Pipeline { backend, encoder, config }.run(scene, gt, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PartCloud, StubBackend};
    use crate::kinematics::{build_tree, JointSpec, LinkSpec};
    use crate::llm::MockBackend;
    use crate::scene::parse_scene;
    use nalgebra::{Point3, Vector3};

    fn tree() -> KinematicTree {
        build_tree(
            "box",
            vec![LinkSpec::with_mesh("base", "base.ply"), LinkSpec::virtual_link("helper"), LinkSpec::with_mesh("lid", "lid.ply")],
            vec![
                JointSpec::fixed("f", "base", "helper", Pose::identity()).unwrap(),
                JointSpec::revolute("r", "helper", "lid", Pose::identity(), Vector3::x(), 0.0, 1.0).unwrap(),
            ],
        )
        .unwrap()
    }

    fn cloud_part(id: &str) -> PartGeometry {
        PartGeometry::Cloud(PartCloud::raw(id, vec![Point3::origin()]))
    }

    #[test]
    fn assemble_requires_mesh_links_only() {
        let parts: BTreeMap<_, _> = [("base".to_string(), cloud_part("base")), ("lid".to_string(), cloud_part("lid"))].into();
        let obj = assemble(parts.clone(), tree(), Pose::identity(), 1.0).unwrap();
        assert_eq!(obj.parts.len(), 2);

        let mut missing = parts;
        missing.remove("lid");
        assert!(matches!(assemble(missing, tree(), Pose::identity(), 1.0), Err(AssembleError::MissingGeometry(l)) if l == "lid"));
    }

    fn scene_with(ids: &[&str]) -> SceneDescription {
        let objects: Vec<Value> = ids
            .iter()
            .map(|id| json!({"asset_id": id, "name": id, "mesh_paths": [format!("{id}.ply")], "pose": {"xyz": [0, 0, 0]}}))
            .collect();
        parse_scene(&json!({"scene_id": "s", "objects": objects}).to_string(), Path::new(".")).unwrap()
    }

    #[test]
    fn identification_parsing() {
        let scene = scene_with(&["cabinet", "apple"]);
        let ok = parse_identification("<json_start>[{\"asset_id\":\"cabinet\",\"reason\":\"doors\"}]<json_end>", &scene).unwrap();
        assert_eq!(ok.ids, BTreeSet::from(["cabinet".to_string()]));

        let stranger = parse_identification("<json_start>[\"sofa\"]<json_end>", &scene).unwrap();
        assert!(stranger.ids.is_empty());
        assert_eq!(stranger.warnings.len(), 1);

        assert!(matches!(parse_identification("cabinet", &scene), Err(SceneError::ResponseUnparseable(_))));
        assert!(matches!(
            parse_identification("<json_start>{}<json_end>", &scene),
            Err(SceneError::ResponseUnparseable(_))
        ));
    }

    #[test]
    fn unreadable_mesh_is_confined_to_the_object() {
        let scene = scene_with(&["cabinet"]);
        let r = articulate_object(&scene, &scene.objects[0], &MockBackend::with_rules(), &StubBackend, PipelineConfig::default());
        match &r.status {
            Status::IdentifiedNotConverted { stage: Stage::Load, error } => assert_eq!(error.kind(), "IoError"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(r.object.is_none());
    }

    #[test]
    fn variant_names() {
        assert_eq!(PipelineError::Llm(LlmError::Timeout).kind(), "Timeout");
        assert_eq!(PipelineError::Chain(ChainError::BlocksOutOfOrder).kind(), "BlocksOutOfOrder");
        assert_eq!(PipelineError::Llm(LlmError::BackendError("x".into())).kind(), "BackendError");
    }
}
