use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::Deserialize;
use serde_json::json;

use super::{word_count, ChatBackend, GenerationRequest, LlmError, PartInfo, RequestTask, SceneObjectInfo, Usage};
use crate::chain::{render_blocks, JSON_END, JSON_START};
use crate::kinematics::{build_tree, JointSpec, LinkSpec, Pose};
use crate::urdf::emit_urdf;

/// Failure a [`MockBackend`] reports for URDF generation requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Timeout,
    RateLimited,
    Unauthorized,
    BackendError,
}

impl FailureKind {
    fn error(self) -> LlmError {
        match self {
            FailureKind::Timeout => LlmError::Timeout,
            FailureKind::RateLimited => LlmError::RateLimited { retry_after: None },
            FailureKind::Unauthorized => LlmError::Unauthorized,
            FailureKind::BackendError => LlmError::BackendError("injected failure".into()),
        }
    }
}

/// Deterministic offline backend.
///
/// Lookup order: a canned response registered under the request hash, then
/// (if enabled) a keyword rule on the structured task, else an error.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    canned: BTreeMap<String, String>,
    rules: bool,
    fail_generation: Option<FailureKind>,
}

impl MockBackend {
    /// Rules on, nothing canned.
    pub fn with_rules() -> Self {
        Self { rules: true, ..Self::default() }
    }

    /// Canned responses only.
    pub fn canned_only() -> Self {
        Self::default()
    }

    pub fn set_rules(mut self, on: bool) -> Self {
        self.rules = on;
        self
    }

    pub fn failing_generation(mut self, kind: FailureKind) -> Self {
        self.fail_generation = Some(kind);
        self
    }

    pub fn register(&mut self, request: &GenerationRequest, response: impl Into<String>) {
        self.canned.insert(request.hash(), response.into());
    }

    pub fn register_hash(&mut self, hash: impl Into<String>, response: impl Into<String>) {
        self.canned.insert(hash.into(), response.into());
    }

    /// Load every `<hash>.txt` file in `dir`.
    pub fn load_dir(mut self, dir: &Path) -> Result<Self, LlmError> {
        let io = |e: std::io::Error| LlmError::Config(format!("{}: {e}", dir.display()));
        for entry in fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().is_some_and(|e| e == "txt") {
                if let Some(stem) = path.file_stem() {
                    let text = fs::read_to_string(&path).map_err(io)?;
                    self.canned.insert(stem.to_string_lossy().into_owned(), text);
                }
            }
        }
        Ok(self)
    }
}

impl ChatBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn max_in_flight(&self) -> Option<usize> {
        None
    }

    fn generate(&self, request: &GenerationRequest) -> Result<(String, Usage), LlmError> {
        let is_generation = matches!(request.task, RequestTask::UrdfGeneration { .. });
        if let (true, Some(kind)) = (is_generation, self.fail_generation) {
            return Err(kind.error());
        }
        let text = match self.canned.get(&request.hash()) {
            Some(text) => text.clone(),
            None if self.rules => match &request.task {
                RequestTask::UrdfGeneration { object_name, parts } => rule_urdf(object_name, parts)?,
                RequestTask::SceneIdentification { objects } => rule_identify(objects),
            },
            None => return Err(LlmError::BackendError(format!("no canned response for {}", request.hash()))),
        };
        let usage = Usage {
            input_tokens: word_count(&request.system) + word_count(&request.user),
            output_tokens: word_count(&text),
        };
        Ok((text, usage))
    }
}

const ARTICULABLE_WORDS: &[&str] = &[
    "cabinet", "drawer", "door", "lid", "hinge", "hinged", "fridge", "refrigerator", "microwave", "oven",
    "wardrobe", "dishwasher", "laptop", "dresser", "cupboard",
];

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(|w| {
        let w = w.to_lowercase();
        match w.strip_suffix('s') {
            Some(stem) if ARTICULABLE_WORDS.contains(&stem) => stem.to_string(),
            _ => w,
        }
    })
}

fn rule_identify(objects: &[SceneObjectInfo]) -> String {
    let picks: Vec<_> = objects
        .iter()
        .filter_map(|o| {
            let hit = words(&o.name).chain(words(&o.description)).find(|w| ARTICULABLE_WORDS.contains(&w.as_str()))?;
            Some(json!({ "asset_id": o.asset_id, "reason": format!("mentions {hit}") }))
        })
        .collect();
    format!("{JSON_START}\n{}\n{JSON_END}\n", serde_json::to_string_pretty(&picks).expect("json"))
}

fn round4(v: f64) -> f64 {
    let r = (v * 1e4).round() / 1e4;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(round4(a[0]), round4(a[1]), round4(a[2]))
}

/// Keyword rule: the first part is the base and every other part hangs from
/// it. Frame convention: z up, object front towards -y.
///
/// - `drawer`: prismatic along the dominant horizontal offset from the base
///   center, origin at the part center, range 0 to 0.8 of its extent there
/// - `door`: revolute about -z through the part's min-x edge, 0 to pi/2
/// - `lid`: revolute about -x through the part's back (max-y) bottom edge,
///   0 to pi/2
/// - anything else: fixed
fn rule_urdf(object_name: &str, parts: &[PartInfo]) -> Result<String, LlmError> {
    let Some((base, rest)) = parts.split_first() else {
        return Err(LlmError::BackendError("no parts in request".into()));
    };
    let links: Vec<LinkSpec> = parts.iter().map(|p| LinkSpec::with_mesh(&p.link, &p.file)).collect();
    let mut joints = Vec::new();
    let mut children = Vec::new();
    for p in rest {
        let name = format!("joint_{}", p.link);
        let lower = p.link.to_lowercase();
        let (c, mn, mx, ext) = (p.center(), p.min, p.max, p.extent());
        let joint = if lower.contains("drawer") {
            let bc = base.center();
            let (dx, dy) = (c[0] - bc[0], c[1] - bc[1]);
            let (axis, reach) = if dx.abs() > dy.abs() {
                (Vector3::new(dx.signum(), 0.0, 0.0), ext[0])
            } else {
                (Vector3::new(0.0, if dy < 0.0 { -1.0 } else { 1.0 }, 0.0), ext[1])
            };
            JointSpec::prismatic(&name, &base.link, &p.link, Pose::new(v3(c), Vector3::zeros()), axis, 0.0, round4(0.8 * reach))
        } else if lower.contains("door") {
            let origin = v3([mn[0], c[1], c[2]]);
            JointSpec::revolute(&name, &base.link, &p.link, Pose::new(origin, Vector3::zeros()), -Vector3::z(), 0.0, round4(FRAC_PI_2))
        } else if lower.contains("lid") {
            let origin = v3([c[0], mx[1], mn[2]]);
            JointSpec::revolute(&name, &base.link, &p.link, Pose::new(origin, Vector3::zeros()), -Vector3::x(), 0.0, round4(FRAC_PI_2))
        } else {
            JointSpec::fixed(&name, &base.link, &p.link, Pose::new(v3(c), Vector3::zeros()))
        };
        let joint = joint.map_err(|e| LlmError::BackendError(e.to_string()))?;
        children.push(json!({
            "part": p.link,
            "joint_type": joint.joint_type().as_str(),
            "joint_name": name,
        }));
        joints.push(joint);
    }
    let tree = build_tree(object_name, links, joints).map_err(|e| LlmError::BackendError(e.to_string()))?;
    let json_tree = json!({ "part": base.link, "joint_type": "base", "children": children });
    let json_text = serde_json::to_string_pretty(&json_tree).expect("json");
    Ok(render_blocks(&json_text, emit_urdf(&tree).trim_end()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{repair_chain, RepairPolicy};
    use crate::geometry::FeatureVector;
    use crate::kinematics::JointType;
    use crate::llm::{complete, SlotKind, TokenSlot};

    fn part(link: &str, min: [f64; 3], max: [f64; 3]) -> PartInfo {
        PartInfo { file: format!("{link}.ply"), link: link.into(), min, max }
    }

    fn request(parts: Vec<PartInfo>) -> GenerationRequest {
        GenerationRequest {
            system: "s".into(),
            user: "u".into(),
            token_slots: vec![TokenSlot { kind: SlotKind::Global, feature: FeatureVector { values: vec![0.5] } }],
            max_output: 100,
            temperature: 0.0,
            task: RequestTask::UrdfGeneration { object_name: "box".into(), parts },
        }
    }

    #[test]
    fn two_part_rule_round_trips_through_the_chain() {
        let req = request(vec![part("base", [0.0; 3], [1.0; 3]), part("lid", [0.0, 0.0, 1.0], [1.0, 1.0, 1.1])]);
        let resp = complete(&MockBackend::with_rules(), &req).unwrap();
        let chain = repair_chain(&resp.text, RepairPolicy::None).unwrap();
        assert!(chain.inconsistencies.is_empty());
        assert!(chain.warnings.is_empty());
        let joints = chain.urdf.tree.movable_joints();
        assert_eq!(joints.len(), 1);
        assert_eq!(joints[0].joint_type(), JointType::Revolute);
        assert_eq!(joints[0].origin().xyz, Vector3::new(0.5, 1.0, 1.0));
        // Deterministic across calls.
        assert_eq!(resp.text, complete(&MockBackend::with_rules(), &req).unwrap().text);
    }

    #[test]
    fn canned_takes_precedence() {
        let req = request(vec![part("base", [0.0; 3], [1.0; 3])]);
        let mut mock = MockBackend::with_rules();
        mock.register(&req, "hello");
        assert_eq!(complete(&mock, &req).unwrap().text, "hello");
        assert!(matches!(complete(&MockBackend::canned_only(), &req), Err(LlmError::BackendError(_))));
    }

    #[test]
    fn canned_directory() {
        let req = request(vec![part("base", [0.0; 3], [1.0; 3])]);
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(format!("{}.txt", req.hash())), "from disk").unwrap();
        let mock = MockBackend::canned_only().load_dir(dir.path()).unwrap();
        assert_eq!(complete(&mock, &req).unwrap().text, "from disk");
    }

    #[test]
    fn identification_rule() {
        let objects = vec![
            SceneObjectInfo { asset_id: "c1".into(), name: "Kitchen cabinet".into(), description: String::new() },
            SceneObjectInfo { asset_id: "a1".into(), name: "apple".into(), description: "red fruit".into() },
            SceneObjectInfo { asset_id: "b1".into(), name: "box".into(), description: "with two Drawers".into() },
        ];
        let text = rule_identify(&objects);
        assert!(text.contains("\"c1\"") && text.contains("\"b1\"") && !text.contains("\"a1\""));
    }

    #[test]
    fn injected_failure_only_hits_generation() {
        let mock = MockBackend::with_rules().failing_generation(FailureKind::Timeout);
        let req = request(vec![part("base", [0.0; 3], [1.0; 3])]);
        assert_eq!(complete(&mock, &req), Err(LlmError::Timeout));
    }
}
