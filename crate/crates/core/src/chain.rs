//! Parsing of the two-block model response: a parameter-free JSON kinematic
//! tree between `<json_start>`/`<json_end>`, followed by a URDF document
//! between `<urdf_start>`/`<urdf_end>`.
//!
//! Delimiters are literal, case-sensitive substrings. Ingestion can apply a
//! fixed, enumerated list of repairs ([`RepairPolicy::Bounded`]); every repair
//! that fires is recorded on the resulting [`ReasoningChain`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::kinematics::{JointType, KinematicTree};
use crate::urdf::{parse_urdf, Strictness, UrdfDocument, UrdfError};

pub const JSON_START: &str = "<json_start>";
pub const JSON_END: &str = "<json_end>";
pub const URDF_START: &str = "<urdf_start>";
pub const URDF_END: &str = "<urdf_end>";

/// Name given to a robot whose `<robot>` tag lacks one.
pub const DEFAULT_ROBOT_NAME: &str = "object";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Json,
    Urdf,
}

impl BlockKind {
    fn delimiters(self) -> (&'static str, &'static str) {
        match self {
            BlockKind::Json => (JSON_START, JSON_END),
            BlockKind::Urdf => (URDF_START, URDF_END),
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::Json => "json",
            BlockKind::Urdf => "urdf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("missing {0} block")]
    MissingBlock(BlockKind),
    #[error("more than one {0} block")]
    DuplicateBlock(BlockKind),
    #[error("urdf block appears before the json block ends")]
    BlocksOutOfOrder,
    #[error("unterminated {0} block")]
    UnterminatedBlock(BlockKind),
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    JsonMalformed { line: usize, column: usize, message: String },
    #[error("unknown joint type {0:?}")]
    UnknownJointType(String),
    #[error("duplicate part {0:?}")]
    DuplicatePart(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{field}` is invalid: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("part {0:?} uses joint type \"base\" below the root")]
    MisplacedBase(String),
    #[error("root must have joint type \"base\", found {0:?}")]
    RootNotBase(String),
    #[error("part {0:?} carries numeric parameters")]
    NumericParameter(String),
    #[error(transparent)]
    Urdf(#[from] UrdfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JsonJointType {
    Base,
    Revolute,
    Prismatic,
    Fixed,
}

impl JsonJointType {
    pub fn as_joint_type(self) -> Option<JointType> {
        match self {
            JsonJointType::Base => None,
            JsonJointType::Revolute => Some(JointType::Revolute),
            JsonJointType::Prismatic => Some(JointType::Prismatic),
            JsonJointType::Fixed => Some(JointType::Fixed),
        }
    }
}

impl From<JointType> for JsonJointType {
    fn from(t: JointType) -> Self {
        match t {
            JointType::Revolute => JsonJointType::Revolute,
            JointType::Prismatic => JsonJointType::Prismatic,
            JointType::Fixed => JsonJointType::Fixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JsonTreeNode {
    pub part: String,
    pub joint_type: JsonJointType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_name: Option<String>,
    pub children: Vec<JsonTreeNode>,
}

impl JsonTreeNode {
    /// Pre-order walk yielding `(node, parent part)`.
    pub fn walk(&self) -> Vec<(&JsonTreeNode, Option<&str>)> {
        let mut out = Vec::new();
        let mut stack = vec![(self, None)];
        while let Some((node, parent)) = stack.pop() {
            out.push((node, parent));
            for c in node.children.iter().rev() {
                stack.push((c, Some(node.part.as_str())));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }
}

// ---------------------------------------------------------------- blocks

fn find_all(haystack: &str, needle: &str) -> Vec<usize> {
    haystack.match_indices(needle).map(|(i, _)| i).collect()
}

fn locate(raw: &str, kind: BlockKind) -> Result<(usize, usize), ChainError> {
    let (open, close) = kind.delimiters();
    let starts = find_all(raw, open);
    let ends = find_all(raw, close);
    if starts.len() > 1 || ends.len() > 1 {
        return Err(ChainError::DuplicateBlock(kind));
    }
    match (starts.first(), ends.first()) {
        (None, _) => Err(ChainError::MissingBlock(kind)),
        (Some(_), None) => Err(ChainError::UnterminatedBlock(kind)),
        (Some(&s), Some(&e)) if e < s => Err(ChainError::UnterminatedBlock(kind)),
        (Some(&s), Some(&e)) => Ok((s, e)),
    }
}

/// Inner text of the JSON and URDF blocks, trimmed. Prose around the blocks
/// is ignored.
pub fn extract_blocks(raw: &str) -> Result<(String, String), ChainError> {
    let (js, je) = locate(raw, BlockKind::Json)?;
    let (us, ue) = locate(raw, BlockKind::Urdf)?;
    if us < je + JSON_END.len() {
        return Err(ChainError::BlocksOutOfOrder);
    }
    let json = raw[js + JSON_START.len()..je].trim().to_string();
    let urdf = raw[us + URDF_START.len()..ue].trim().to_string();
    Ok((json, urdf))
}

/// Inverse of [`extract_blocks`] for texts without delimiter strings.
pub fn render_blocks(json_text: &str, urdf_text: &str) -> String {
    format!("{JSON_START}\n{json_text}\n{JSON_END}\n{URDF_START}\n{urdf_text}\n{URDF_END}\n")
}

// ---------------------------------------------------------------- JSON tree

pub fn parse_json_tree(json_text: &str) -> Result<JsonTreeNode, ChainError> {
    let value: Value = serde_json::from_str(json_text).map_err(|e| ChainError::JsonMalformed {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut seen = HashSet::new();
    node_from_value(&value, true, &mut seen)
}

fn contains_number(v: &Value) -> bool {
    match v {
        Value::Number(_) => true,
        Value::Array(items) => items.iter().any(contains_number),
        Value::Object(map) => map.values().any(contains_number),
        _ => false,
    }
}

fn node_from_value(v: &Value, is_root: bool, seen: &mut HashSet<String>) -> Result<JsonTreeNode, ChainError> {
    let obj = v.as_object().ok_or_else(|| ChainError::InvalidField {
        field: "node".into(),
        reason: "tree nodes must be JSON objects".into(),
    })?;
    let part = match obj.get("part") {
        None | Some(Value::Null) => return Err(ChainError::MissingField("part".into())),
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(_) => {
            return Err(ChainError::InvalidField { field: "part".into(), reason: "expected a non-empty string".into() })
        }
    };
    if obj.iter().any(|(k, field)| k != "children" && contains_number(field)) {
        return Err(ChainError::NumericParameter(part));
    }
    if !seen.insert(part.clone()) {
        return Err(ChainError::DuplicatePart(part));
    }

    let raw_type = match obj.get("joint_type") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.as_str()),
        Some(_) => {
            return Err(ChainError::InvalidField { field: "joint_type".into(), reason: "expected a string".into() })
        }
    };
    let joint_type = match (is_root, raw_type) {
        (true, None | Some("base")) => JsonJointType::Base,
        (true, Some(other)) => return Err(ChainError::RootNotBase(other.to_string())),
        (false, None) => return Err(ChainError::MissingField("joint_type".into())),
        (false, Some("base")) => return Err(ChainError::MisplacedBase(part)),
        (false, Some(s)) => {
            JsonJointType::from(s.parse::<JointType>().map_err(|_| ChainError::UnknownJointType(s.to_string()))?)
        }
    };
    let joint_name = match obj.get("joint_name") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            return Err(ChainError::InvalidField { field: "joint_name".into(), reason: "expected a string".into() })
        }
    };
    let children = match obj.get("children") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => {
            items.iter().map(|c| node_from_value(c, false, seen)).collect::<Result<_, _>>()?
        }
        Some(_) => {
            return Err(ChainError::InvalidField { field: "children".into(), reason: "expected an array".into() })
        }
    };
    Ok(JsonTreeNode { part, joint_type, joint_name, children })
}

// ---------------------------------------------------------------- consistency

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Inconsistency {
    /// A JSON part with no mesh-bearing URDF link of that name.
    MissingLink { part: String },
    /// A mesh-bearing URDF link the JSON does not mention.
    ExtraLink { link: String },
    ParentMismatch { part: String, json_parent: Option<String>, urdf_parent: Option<String> },
    JointTypeMismatch { part: String, json: JsonJointType, urdf: Vec<JointType> },
    /// Several movable joints on one contracted edge, none of the JSON type.
    CompoundJoint { part: String, json: JsonJointType, urdf: Vec<JointType> },
}

impl Inconsistency {
    pub fn kind(&self) -> &'static str {
        match self {
            Inconsistency::MissingLink { .. } => "MissingLink",
            Inconsistency::ExtraLink { .. } => "ExtraLink",
            Inconsistency::ParentMismatch { .. } => "ParentMismatch",
            Inconsistency::JointTypeMismatch { .. } => "JointTypeMismatch",
            Inconsistency::CompoundJoint { .. } => "CompoundJoint",
        }
    }
}

impl fmt::Display for Inconsistency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Inconsistency::MissingLink { part } => write!(f, "MissingLink({part})"),
            Inconsistency::ExtraLink { link } => write!(f, "ExtraLink({link})"),
            Inconsistency::ParentMismatch { part, .. } => write!(f, "ParentMismatch({part})"),
            Inconsistency::JointTypeMismatch { part, .. } => write!(f, "JointTypeMismatch({part})"),
            Inconsistency::CompoundJoint { part, .. } => write!(f, "CompoundJoint({part})"),
        }
    }
}

/// The URDF edge into `link` with virtual helpers contracted away: nearest
/// mesh-bearing ancestor plus the joint types passed on the way, top-down.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractedEdge {
    pub parent: Option<String>,
    pub joints: Vec<JointType>,
    pub joint_names: Vec<String>,
}

pub fn contracted_edge(tree: &KinematicTree, link: &str) -> ContractedEdge {
    let mut joints = Vec::new();
    let mut joint_names = Vec::new();
    let mut cur = link;
    let parent = loop {
        let Some(j) = tree.parent_joint(cur) else {
            break None;
        };
        joints.push(j.joint_type());
        joint_names.push(j.name().to_string());
        let p = j.parent();
        if tree.link(p).is_some_and(|l| !l.is_virtual()) {
            break Some(p.to_string());
        }
        cur = p;
    };
    joints.reverse();
    joint_names.reverse();
    ContractedEdge { parent, joints, joint_names }
}

pub fn check_consistency(json_tree: &JsonTreeNode, tree: &KinematicTree) -> Vec<Inconsistency> {
    let mut out = Vec::new();
    let nodes = json_tree.walk();
    let parts: HashSet<&str> = nodes.iter().map(|(n, _)| n.part.as_str()).collect();

    for (node, json_parent) in &nodes {
        if !tree.link(&node.part).is_some_and(|l| !l.is_virtual()) {
            out.push(Inconsistency::MissingLink { part: node.part.clone() });
            continue;
        }
        let edge = contracted_edge(tree, &node.part);
        if edge.parent.as_deref() != *json_parent {
            out.push(Inconsistency::ParentMismatch {
                part: node.part.clone(),
                json_parent: json_parent.map(str::to_string),
                urdf_parent: edge.parent.clone(),
            });
            continue;
        }
        let Some(expected) = node.joint_type.as_joint_type() else {
            continue;
        };
        let movable: Vec<JointType> = edge.joints.iter().copied().filter(|t| t.is_movable()).collect();
        let ok = match (expected, movable.len()) {
            (JointType::Fixed, n) => n == 0,
            (_, 0) => false,
            (t, _) => movable.contains(&t),
        };
        if !ok {
            let (part, json, urdf) = (node.part.clone(), node.joint_type, edge.joints.clone());
            out.push(if movable.len() > 1 {
                Inconsistency::CompoundJoint { part, json, urdf }
            } else {
                Inconsistency::JointTypeMismatch { part, json, urdf }
            });
        }
    }

    for link in tree.links().iter().filter(|l| !l.is_virtual()) {
        if !parts.contains(link.name()) {
            out.push(Inconsistency::ExtraLink { link: link.name().to_string() });
        }
    }
    out
}

/// JSON joint names that disagree with the URDF joint on the same edge.
/// These are reported, never treated as inconsistencies.
pub fn joint_name_warnings(json_tree: &JsonTreeNode, tree: &KinematicTree) -> Vec<String> {
    json_tree
        .walk()
        .into_iter()
        .filter_map(|(node, _)| {
            let name = node.joint_name.as_deref()?;
            tree.link(&node.part)?;
            let edge = contracted_edge(tree, &node.part);
            (!edge.joint_names.is_empty() && !edge.joint_names.iter().any(|n| n == name)).then(|| {
                format!(
                    "part {:?}: JSON joint_name {:?} does not match URDF joint(s) {:?}",
                    node.part, name, edge.joint_names
                )
            })
        })
        .collect()
}

// ---------------------------------------------------------------- repairs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RepairPolicy {
    /// Parse the text exactly as given.
    None,
    /// Apply the enumerated repairs, in order, where they are needed.
    #[default]
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Repair {
    FenceStripped { block: BlockKind },
    TrailingCommasRemoved { count: usize },
    TagClosed { tag: String },
    RobotNameSynthesized { name: String },
}

impl fmt::Display for Repair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Repair::FenceStripped { block } => write!(f, "FenceStripped({block})"),
            Repair::TrailingCommasRemoved { count } => write!(f, "TrailingCommasRemoved({count})"),
            Repair::TagClosed { tag } => write!(f, "TagClosed({tag})"),
            Repair::RobotNameSynthesized { name } => write!(f, "RobotNameSynthesized({name})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReasoningChain {
    pub raw: String,
    pub json_tree: JsonTreeNode,
    pub urdf: UrdfDocument,
    pub repairs: Vec<Repair>,
    pub inconsistencies: Vec<Inconsistency>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct ChainReport<'a> {
    json_tree: &'a JsonTreeNode,
    urdf_text: &'a str,
    repairs: &'a [Repair],
    inconsistencies: &'a [Inconsistency],
    warnings: &'a [String],
}

impl ReasoningChain {
    /// Audit record of the chain as a JSON value.
    pub fn report(&self) -> Value {
        serde_json::to_value(ChainReport {
            json_tree: &self.json_tree,
            urdf_text: &self.urdf.text,
            repairs: &self.repairs,
            inconsistencies: &self.inconsistencies,
            warnings: &self.warnings,
        })
        .expect("report serializes")
    }
}

/// Removes a leading ```lang line and a trailing ``` line.
fn strip_fences(text: &str) -> Option<String> {
    let t = text.trim();
    if !t.starts_with("```") {
        return None;
    }
    let body = t.split_once('\n').map_or("", |(_, rest)| rest);
    let body = body.trim_end();
    let body = body.strip_suffix("```").unwrap_or(body);
    Some(body.trim().to_string())
}

/// Drops commas that directly precede `}` or `]`, ignoring string contents.
fn trim_trailing_commas(json: &str) -> Option<(String, usize)> {
    let bytes = json.as_bytes();
    let mut out = String::with_capacity(json.len());
    let mut removed = 0;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in json.char_indices() {
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
        } else if c == '"' {
            in_string = true;
        } else if c == ',' {
            let next = bytes[i + 1..].iter().find(|b| !b.is_ascii_whitespace());
            if matches!(next, Some(b'}') | Some(b']')) {
                removed += 1;
                continue;
            }
        }
        out.push(c);
    }
    (removed > 0).then_some((out, removed))
}

/// Element names left open at the end of `xml`, or `None` if the markup
/// cannot be scanned (unterminated tag, mismatched close, unterminated
/// comment).
fn open_elements(xml: &str) -> Option<Vec<String>> {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = xml;
    while let Some(lt) = rest.find('<') {
        rest = &rest[lt..];
        let skip_to = |r: &str, end: &str| r.find(end).map(|i| i + end.len());
        let consumed = if rest.starts_with("<!--") {
            skip_to(rest, "-->")?
        } else if rest.starts_with("<![CDATA[") {
            skip_to(rest, "]]>")?
        } else if rest.starts_with("<?") {
            skip_to(rest, "?>")?
        } else if rest.starts_with("<!") {
            skip_to(rest, ">")?
        } else {
            let mut quote = None;
            let mut end = None;
            for (i, c) in rest.char_indices().skip(1) {
                match (quote, c) {
                    (Some(q), c) if c == q => quote = None,
                    (Some(_), _) => {}
                    (None, '"' | '\'') => quote = Some(c),
                    (None, '>') => {
                        end = Some(i);
                        break;
                    }
                    _ => {}
                }
            }
            let end = end?;
            let tag = &rest[1..end];
            if let Some(name) = tag.strip_prefix('/') {
                if stack.pop()? != name.trim() {
                    return None;
                }
            } else if !tag.ends_with('/') {
                let name = tag.split(|c: char| c.is_whitespace() || c == '/').next().unwrap_or("");
                stack.push(name.to_string());
            }
            end + 1
        };
        rest = &rest[consumed..];
    }
    Some(stack)
}

fn close_final_tag(urdf: &str) -> Option<(String, String)> {
    if roxmltree::Document::parse(urdf).is_ok() {
        return None;
    }
    match open_elements(urdf)?.as_slice() {
        [only] => Some((format!("{}\n</{only}>", urdf.trim_end()), only.clone())),
        _ => None,
    }
}

fn synthesize_robot_name(urdf: &str) -> Option<String> {
    let doc = roxmltree::Document::parse(urdf).ok()?;
    let root = doc.root_element();
    if root.tag_name().name() != "robot" || root.attribute("name").is_some() {
        return None;
    }
    let at = root.range().start + "<robot".len();
    Some(format!("{} name=\"{DEFAULT_ROBOT_NAME}\"{}", &urdf[..at], &urdf[at..]))
}

/// Extract, optionally repair, parse, and cross-check a model response.
/// The URDF block is parsed in strict mode.
pub fn repair_chain(raw: &str, policy: RepairPolicy) -> Result<ReasoningChain, ChainError> {
    let (mut json_text, mut urdf_text) = extract_blocks(raw)?;
    let mut repairs = Vec::new();

    if policy == RepairPolicy::Bounded {
        for (block, text) in [(BlockKind::Json, &mut json_text), (BlockKind::Urdf, &mut urdf_text)] {
            if let Some(stripped) = strip_fences(text) {
                *text = stripped;
                repairs.push(Repair::FenceStripped { block });
            }
        }
        if let Some((fixed, count)) = trim_trailing_commas(&json_text) {
            json_text = fixed;
            repairs.push(Repair::TrailingCommasRemoved { count });
        }
        if let Some((fixed, tag)) = close_final_tag(&urdf_text) {
            urdf_text = fixed;
            repairs.push(Repair::TagClosed { tag });
        }
        if let Some(fixed) = synthesize_robot_name(&urdf_text) {
            urdf_text = fixed;
            repairs.push(Repair::RobotNameSynthesized { name: DEFAULT_ROBOT_NAME.into() });
        }
    }

    let json_tree = parse_json_tree(&json_text)?;
    let urdf = parse_urdf(&urdf_text, Strictness::Strict)?;
    let inconsistencies = check_consistency(&json_tree, &urdf.tree);
    let warnings = joint_name_warnings(&json_tree, &urdf.tree);
    Ok(ReasoningChain { raw: raw.to_string(), json_tree, urdf, repairs, inconsistencies, warnings })
}

/// Part names in JSON pre-order, mapped to their JSON parent.
pub fn json_parents(json_tree: &JsonTreeNode) -> BTreeMap<String, Option<String>> {
    json_tree.walk().into_iter().map(|(n, p)| (n.part.clone(), p.map(str::to_string))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_NODE: &str = r#"{"part":"base","joint_type":"base","children":[{"part":"door","joint_type":"revolute","children":[]}]}"#;

    fn urdf(door_type: &str) -> String {
        let extra = if door_type == "fixed" { "" } else { r#"<axis xyz="0 0 1"/><limit lower="0" upper="1"/>"# };
        format!(
            r#"<robot name="cab">
  <link name="base"><visual><geometry><mesh filename="base.ply"/></geometry></visual></link>
  <link name="door"><visual><geometry><mesh filename="door.ply"/></geometry></visual></link>
  <joint name="j" type="{door_type}"><parent link="base"/><child link="door"/>{extra}</joint>
</robot>"#
        )
    }

    #[test]
    fn extract_both_blocks() {
        let raw = format!("reasoning... {JSON_START}{{}}{JSON_END} and then {URDF_START}<robot/>{URDF_END} done");
        assert_eq!(extract_blocks(&raw).unwrap(), ("{}".to_string(), "<robot/>".to_string()));
    }

    #[test]
    fn block_errors() {
        let two = format!("{JSON_START}a{JSON_END}{JSON_START}b{JSON_END}{URDF_START}c{URDF_END}");
        assert_eq!(extract_blocks(&two), Err(ChainError::DuplicateBlock(BlockKind::Json)));
        let open = format!("{JSON_START}a{JSON_END}{URDF_START}c");
        assert_eq!(extract_blocks(&open), Err(ChainError::UnterminatedBlock(BlockKind::Urdf)));
        let missing = format!("{JSON_START}a{JSON_END}");
        assert_eq!(extract_blocks(&missing), Err(ChainError::MissingBlock(BlockKind::Urdf)));
        let swapped = format!("{URDF_START}c{URDF_END}{JSON_START}a{JSON_END}");
        assert_eq!(extract_blocks(&swapped), Err(ChainError::BlocksOutOfOrder));
        let upper = format!("<JSON_START>a<JSON_END>{URDF_START}c{URDF_END}");
        assert_eq!(extract_blocks(&upper), Err(ChainError::MissingBlock(BlockKind::Json)));
    }

    #[test]
    fn json_tree_parsing() {
        let t = parse_json_tree(TWO_NODE).unwrap();
        assert_eq!(t.walk().len(), 2);
        assert_eq!(t.children[0].joint_type, JsonJointType::Revolute);

        let hinge = TWO_NODE.replace("\"revolute\"", "\"hinge\"");
        assert_eq!(parse_json_tree(&hinge), Err(ChainError::UnknownJointType("hinge".into())));

        let dup = r#"{"part":"base","children":[{"part":"door","joint_type":"revolute"},{"part":"door","joint_type":"fixed"}]}"#;
        assert_eq!(parse_json_tree(dup), Err(ChainError::DuplicatePart("door".into())));

        let nameless = r#"{"joint_type":"base"}"#;
        assert_eq!(parse_json_tree(nameless), Err(ChainError::MissingField("part".into())));

        let numeric = r#"{"part":"base","children":[{"part":"door","joint_type":"revolute","axis":[0,0,1]}]}"#;
        assert_eq!(parse_json_tree(numeric), Err(ChainError::NumericParameter("door".into())));

        assert!(matches!(parse_json_tree("{\"part\": "), Err(ChainError::JsonMalformed { .. })));
    }

    #[test]
    fn root_type_variants() {
        for root in [r#"{"part":"b"}"#, r#"{"part":"b","joint_type":null}"#, r#"{"part":"b","joint_type":"base"}"#] {
            assert_eq!(parse_json_tree(root).unwrap().joint_type, JsonJointType::Base);
        }
        assert!(matches!(parse_json_tree(r#"{"part":"b","joint_type":"fixed"}"#), Err(ChainError::RootNotBase(_))));
        let nested_base = r#"{"part":"b","children":[{"part":"c","joint_type":"base"}]}"#;
        assert_eq!(parse_json_tree(nested_base), Err(ChainError::MisplacedBase("c".into())));
    }

    #[test]
    fn consistency_cases() {
        let json = parse_json_tree(TWO_NODE).unwrap();
        let ok = parse_urdf(&urdf("revolute"), Strictness::Strict).unwrap().tree;
        assert!(check_consistency(&json, &ok).is_empty());

        let wrong = parse_urdf(&urdf("prismatic"), Strictness::Strict).unwrap().tree;
        let found = check_consistency(&json, &wrong);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].to_string(), "JointTypeMismatch(door)");
    }

    #[test]
    fn virtual_helper_contracts() {
        // base -(fixed)-> helper -(revolute)-> door
        let text = r#"<robot name="cab">
  <link name="base"><visual><geometry><mesh filename="base.ply"/></geometry></visual></link>
  <link name="helper"/>
  <link name="door"><visual><geometry><mesh filename="door.ply"/></geometry></visual></link>
  <joint name="h" type="fixed"><parent link="base"/><child link="helper"/></joint>
  <joint name="j" type="revolute"><parent link="helper"/><child link="door"/><axis xyz="0 0 1"/><limit lower="0" upper="1"/></joint>
</robot>"#;
        let tree = parse_urdf(text, Strictness::Strict).unwrap().tree;
        let edge = contracted_edge(&tree, "door");
        assert_eq!(edge.parent.as_deref(), Some("base"));
        assert_eq!(edge.joints, [JointType::Fixed, JointType::Revolute]);
        let json = parse_json_tree(TWO_NODE).unwrap();
        assert!(check_consistency(&json, &tree).is_empty());
    }

    #[test]
    fn compound_edges() {
        let text = r#"<robot name="cab">
  <link name="base"><visual><geometry><mesh filename="base.ply"/></geometry></visual></link>
  <link name="slider"/>
  <link name="door"><visual><geometry><mesh filename="door.ply"/></geometry></visual></link>
  <joint name="p" type="prismatic"><parent link="base"/><child link="slider"/><axis xyz="1 0 0"/><limit lower="0" upper="1"/></joint>
  <joint name="r" type="revolute"><parent link="slider"/><child link="door"/><axis xyz="0 0 1"/><limit lower="0" upper="1"/></joint>
</robot>"#;
        let tree = parse_urdf(text, Strictness::Strict).unwrap().tree;
        for ty in ["revolute", "prismatic"] {
            let json = parse_json_tree(&TWO_NODE.replace("revolute", ty)).unwrap();
            assert!(check_consistency(&json, &tree).is_empty(), "{ty}");
        }
        let fixed = parse_json_tree(&TWO_NODE.replace("revolute", "fixed")).unwrap();
        assert_eq!(check_consistency(&fixed, &tree)[0].kind(), "CompoundJoint");
        let three = text.replace(
            "<joint name=\"r\" type=\"revolute\">",
            "<joint name=\"r\" type=\"prismatic\">",
        );
        let tree = parse_urdf(&three, Strictness::Strict).unwrap().tree;
        let json = parse_json_tree(TWO_NODE).unwrap();
        assert_eq!(check_consistency(&json, &tree)[0].kind(), "CompoundJoint");
    }

    #[test]
    fn set_and_parent_mismatches() {
        let json = parse_json_tree(
            r#"{"part":"base","children":[{"part":"lid","joint_type":"revolute"}]}"#,
        )
        .unwrap();
        let tree = parse_urdf(&urdf("revolute"), Strictness::Strict).unwrap().tree;
        let kinds: Vec<_> = check_consistency(&json, &tree).iter().map(|i| i.kind()).collect();
        assert_eq!(kinds, ["MissingLink", "ExtraLink"]);

        let flipped = parse_json_tree(r#"{"part":"door","children":[{"part":"base","joint_type":"revolute"}]}"#).unwrap();
        let kinds: Vec<_> = check_consistency(&flipped, &tree).iter().map(|i| i.kind()).collect();
        assert_eq!(kinds, ["ParentMismatch", "ParentMismatch"]);
    }

    #[test]
    fn repairs_fire_only_when_needed() {
        let clean = render_blocks(TWO_NODE, &urdf("revolute"));
        let chain = repair_chain(&clean, RepairPolicy::Bounded).unwrap();
        assert!(chain.repairs.is_empty());
        assert!(chain.inconsistencies.is_empty());

        let fenced = render_blocks(&format!("```json\n{TWO_NODE}\n```"), &urdf("revolute"));
        let chain = repair_chain(&fenced, RepairPolicy::Bounded).unwrap();
        assert_eq!(chain.repairs, [Repair::FenceStripped { block: BlockKind::Json }]);
        assert!(matches!(repair_chain(&fenced, RepairPolicy::None), Err(ChainError::JsonMalformed { .. })));

        let commas = render_blocks(&TWO_NODE.replace("[]}]}", "[],},]}"), &urdf("revolute"));
        let chain = repair_chain(&commas, RepairPolicy::Bounded).unwrap();
        assert_eq!(chain.repairs, [Repair::TrailingCommasRemoved { count: 2 }]);

        let truncated = urdf("revolute").replace("</robot>", "");
        let chain = repair_chain(&render_blocks(TWO_NODE, &truncated), RepairPolicy::Bounded).unwrap();
        assert_eq!(chain.repairs, [Repair::TagClosed { tag: "robot".into() }]);

        let anonymous = urdf("revolute").replace("<robot name=\"cab\">", "<robot>");
        let chain = repair_chain(&render_blocks(TWO_NODE, &anonymous), RepairPolicy::Bounded).unwrap();
        assert_eq!(chain.urdf.tree.robot_name(), DEFAULT_ROBOT_NAME);
        assert_eq!(chain.repairs, [Repair::RobotNameSynthesized { name: "object".into() }]);

        let missing = format!("{JSON_START}{TWO_NODE}{JSON_END}");
        assert_eq!(
            repair_chain(&missing, RepairPolicy::Bounded).unwrap_err(),
            ChainError::MissingBlock(BlockKind::Urdf)
        );
    }

    #[test]
    fn comma_trimming_respects_strings() {
        assert_eq!(trim_trailing_commas(r#"{"a":",}"}"#), None);
        assert_eq!(trim_trailing_commas("[1,2, ]").unwrap(), ("[1,2 ]".to_string(), 1));
    }

    #[test]
    fn two_unclosed_tags_are_not_repaired() {
        let text = "<robot name=\"x\"><link name=\"a\">";
        assert_eq!(open_elements(text).unwrap(), ["robot", "link"]);
        assert_eq!(close_final_tag(text), None);
    }

    #[test]
    fn joint_name_mismatch_is_a_warning() {
        let json = parse_json_tree(
            r#"{"part":"base","children":[{"part":"door","joint_type":"revolute","joint_name":"hinge"}]}"#,
        )
        .unwrap();
        let tree = parse_urdf(&urdf("revolute"), Strictness::Strict).unwrap().tree;
        assert!(check_consistency(&json, &tree).is_empty());
        assert_eq!(joint_name_warnings(&json, &tree).len(), 1);
    }
}
