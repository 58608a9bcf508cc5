//! Reader and writer for the constrained URDF subset used for generated
//! objects, plus a lenient reader for full dataset URDFs.
//!
//! The strict subset: `<robot name>` containing only `<link>` and `<joint>`
//! elements, all links before the first joint. A link has at most one
//! `<visual>` holding exactly one `<geometry><mesh filename/></geometry>`;
//! a link without a visual is a virtual helper. Joint children are limited
//! to `parent`, `child`, `origin`, `axis` and `limit`, with `origin`
//! defaulting to zero. Movable joints need both `axis` and `limit`; fixed
//! joints carry neither.
//!
//! Lenient mode accepts PartNet-Mobility style files: inertial, collision,
//! dynamics, mimic and unknown elements are skipped, `continuous` joints
//! become revolute with limits (-pi, pi).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::Vector3;
use roxmltree::{Document, Node, ParsingOptions};
use thiserror::Error;

use crate::kinematics::{
    build_tree, canonicalize_axis, JointLimit, JointSpec, JointType, KinematicTree, LinkSpec, Pose,
    TreeError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UrdfError {
    #[error("malformed XML at byte {position}: {message}")]
    XmlMalformed { position: usize, message: String },
    #[error("<{element}> at byte {position} violates the URDF subset: {reason}")]
    SubsetViolation { element: String, position: usize, reason: String },
    #[error("<{element}> at byte {position} is missing attribute `{attribute}`")]
    MissingAttribute { element: String, attribute: String, position: usize },
    #[error("<{element}> at byte {position} is missing child <{child}>")]
    MissingElement { element: String, child: String, position: usize },
    #[error("bad numeric value {value:?} in <{element}> at byte {position}")]
    BadNumber { element: String, value: String, position: usize },
    #[error("unknown joint type {value:?} at byte {position}")]
    UnknownJointType { value: String, position: usize },
    #[error("{source} (at byte {position})")]
    Tree { source: TreeError, position: usize },
}

impl UrdfError {
    /// Byte offset into the parsed text.
    pub fn position(&self) -> usize {
        match self {
            UrdfError::XmlMalformed { position, .. }
            | UrdfError::SubsetViolation { position, .. }
            | UrdfError::MissingAttribute { position, .. }
            | UrdfError::MissingElement { position, .. }
            | UrdfError::BadNumber { position, .. }
            | UrdfError::UnknownJointType { position, .. }
            | UrdfError::Tree { position, .. } => *position,
        }
    }
}

/// Byte ranges of each link and joint element, parallel to the tree's lists.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpanIndex {
    pub links: Vec<Range<usize>>,
    pub joints: Vec<Range<usize>>,
}

#[derive(Debug, Clone)]
pub struct UrdfDocument {
    pub text: String,
    pub tree: KinematicTree,
    pub spans: SpanIndex,
}

pub fn parse_urdf(text: &str, strictness: Strictness) -> Result<UrdfDocument, UrdfError> {
    let opts = ParsingOptions { allow_dtd: true, ..ParsingOptions::default() };
    let doc = Document::parse_with_options(text, opts).map_err(|e| {
        let p = e.pos();
        UrdfError::XmlMalformed {
            position: byte_offset(text, p.row as usize, p.col as usize),
            message: e.to_string(),
        }
    })?;
    let parser = Parser { strict: strictness == Strictness::Strict };
    let root = doc.root_element();
    if root.tag_name().name() != "robot" {
        return Err(UrdfError::XmlMalformed {
            position: root.range().start,
            message: format!("root element is <{}>, expected <robot>", root.tag_name().name()),
        });
    }
    let robot_name = required_attr(root, "name")?;

    let mut links = Vec::new();
    let mut joints = Vec::new();
    let mut spans = SpanIndex::default();
    let mut seen_joint = false;
    for node in root.children().filter(Node::is_element) {
        match node.tag_name().name() {
            "link" => {
                if parser.strict && seen_joint {
                    return Err(violation(node, "links must be declared before any joint"));
                }
                links.push(parser.link(node)?);
                spans.links.push(node.range());
            }
            "joint" => {
                seen_joint = true;
                joints.push(parser.joint(node)?);
                spans.joints.push(node.range());
            }
            _ if parser.strict => return Err(violation(node, "only <link> and <joint> are allowed")),
            _ => {}
        }
    }

    let position = |err: &TreeError| tree_error_position(err, &links, &joints, &spans, root.range().start);
    let tree = build_tree(robot_name, links.clone(), joints.clone())
        .map_err(|source| UrdfError::Tree { position: position(&source), source })?;
    Ok(UrdfDocument { text: text.to_string(), tree, spans })
}

struct Parser {
    strict: bool,
}

impl Parser {
    fn link(&self, node: Node) -> Result<LinkSpec, UrdfError> {
        let name = required_attr(node, "name")?;
        let mut mesh = None;
        let mut visuals = 0;
        for child in node.children().filter(Node::is_element) {
            match child.tag_name().name() {
                "visual" => {
                    visuals += 1;
                    if self.strict && visuals > 1 {
                        return Err(violation(child, "a link may have at most one <visual>"));
                    }
                    if mesh.is_none() {
                        mesh = self.visual_mesh(child)?;
                    }
                }
                _ if self.strict => {
                    return Err(violation(child, "links may only contain a single <visual>"));
                }
                _ => {}
            }
        }
        Ok(match mesh {
            Some(m) => LinkSpec::with_mesh(name, m),
            None => LinkSpec::virtual_link(name),
        })
    }

    fn visual_mesh(&self, visual: Node) -> Result<Option<String>, UrdfError> {
        if !self.strict {
            let mesh = visual
                .children()
                .filter(|n| n.has_tag_name("geometry"))
                .flat_map(|g| g.children())
                .find(|n| n.has_tag_name("mesh"));
            return Ok(mesh.and_then(|m| m.attribute("filename")).map(str::to_string));
        }

        let mut geometry = None;
        for child in visual.children().filter(Node::is_element) {
            match child.tag_name().name() {
                "geometry" if geometry.is_none() => geometry = Some(child),
                "origin" => {
                    let pose = origin(child)?;
                    if pose != Pose::identity() {
                        return Err(violation(child, "visual origins must be zero"));
                    }
                }
                _ => return Err(violation(child, "<visual> holds exactly one <geometry>")),
            }
        }
        let geometry = geometry.ok_or_else(|| missing_element(visual, "geometry"))?;
        let mut shapes = geometry.children().filter(Node::is_element);
        let mesh = match (shapes.next(), shapes.next()) {
            (Some(m), None) if m.has_tag_name("mesh") => m,
            (Some(other), None) => return Err(violation(other, "geometry must be a <mesh>")),
            (Some(_), Some(extra)) => return Err(violation(extra, "geometry holds exactly one <mesh>")),
            (None, _) => return Err(missing_element(geometry, "mesh")),
        };
        if let Some(scale) = mesh.attribute("scale") {
            if triple(mesh, scale)? != Vector3::new(1.0, 1.0, 1.0) {
                return Err(violation(mesh, "mesh scale must be 1 1 1"));
            }
        }
        Ok(Some(required_attr(mesh, "filename")?))
    }

    fn joint(&self, node: Node) -> Result<JointSpec, UrdfError> {
        let name = required_attr(node, "name")?;
        let type_str = required_attr(node, "type")?;
        let mut continuous = false;
        let joint_type = match type_str.as_str() {
            "continuous" if self.strict => {
                return Err(violation(node, "continuous joints are outside the subset"));
            }
            "continuous" => {
                continuous = true;
                JointType::Revolute
            }
            other => other.parse::<JointType>().map_err(|_| UrdfError::UnknownJointType {
                value: other.to_string(),
                position: node.range().start,
            })?,
        };

        let mut found: HashMap<&str, Node> = HashMap::new();
        for child in node.children().filter(Node::is_element) {
            let tag = child.tag_name().name();
            let known = matches!(tag, "parent" | "child" | "origin" | "axis" | "limit");
            if !known {
                if self.strict {
                    return Err(violation(child, "joints may only contain parent, child, origin, axis, limit"));
                }
                continue;
            }
            if found.insert(tag, child).is_some() && self.strict {
                return Err(violation(child, "duplicate element"));
            }
        }

        let link_ref = |tag: &str| -> Result<String, UrdfError> {
            let el = found.get(tag).ok_or_else(|| missing_element(node, tag))?;
            required_attr(*el, "link")
        };
        let parent = link_ref("parent")?;
        let child = link_ref("child")?;
        let pose = found.get("origin").map(|n| origin(*n)).transpose()?.unwrap_or_default();

        let (mut axis, mut limit) = (None, None);
        if joint_type.is_movable() {
            axis = match found.get("axis") {
                Some(n) => match (n.attribute("xyz"), self.strict) {
                    (Some(v), _) => Some(triple(*n, v)?),
                    (None, true) => return Err(missing_attr(*n, "xyz")),
                    (None, false) => Some(Vector3::x()),
                },
                None if self.strict => return Err(violation(node, format!("{type_str} joint needs an <axis>"))),
                None => Some(Vector3::x()),
            };
            limit = match (found.get("limit"), continuous) {
                (_, true) => Some(JointLimit::new(-PI, PI)),
                (Some(n), false) => {
                    let bound = |attr: &str| match n.attribute(attr) {
                        Some(v) => number(*n, v),
                        None if self.strict => Err(missing_attr(*n, attr)),
                        None => Ok(0.0),
                    };
                    Some(JointLimit::new(bound("lower")?, bound("upper")?))
                }
                (None, false) if self.strict => {
                    return Err(violation(node, format!("{type_str} joint needs a <limit>")));
                }
                (None, false) if joint_type == JointType::Revolute => Some(JointLimit::new(-PI, PI)),
                (None, false) => None,
            };
        } else if self.strict {
            if let Some(extra) = found.get("axis").or_else(|| found.get("limit")) {
                return Err(violation(*extra, "fixed joints carry no axis or limit"));
            }
        }

        JointSpec::new(name, joint_type, parent, child, pose, axis, limit)
            .map_err(|source| UrdfError::Tree { source, position: node.range().start })
    }
}

fn violation(node: Node, reason: impl Into<String>) -> UrdfError {
    UrdfError::SubsetViolation {
        element: node.tag_name().name().to_string(),
        position: node.range().start,
        reason: reason.into(),
    }
}

fn missing_element(node: Node, child: &str) -> UrdfError {
    UrdfError::MissingElement {
        element: node.tag_name().name().to_string(),
        child: child.to_string(),
        position: node.range().start,
    }
}

fn missing_attr(node: Node, attribute: &str) -> UrdfError {
    UrdfError::MissingAttribute {
        element: node.tag_name().name().to_string(),
        attribute: attribute.to_string(),
        position: node.range().start,
    }
}

fn required_attr(node: Node, name: &str) -> Result<String, UrdfError> {
    node.attribute(name).map(str::to_string).ok_or_else(|| missing_attr(node, name))
}

/// Integer, decimal, or scientific literal; NaN and infinities are rejected.
fn number(node: Node, s: &str) -> Result<f64, UrdfError> {
    let bad = || UrdfError::BadNumber {
        element: node.tag_name().name().to_string(),
        value: s.to_string(),
        position: node.range().start,
    };
    let t = s.trim();
    let digits_only = t.bytes().all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b));
    if !digits_only {
        return Err(bad());
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad)
}

fn triple(node: Node, s: &str) -> Result<Vector3<f64>, UrdfError> {
    let parts: Vec<f64> = s.split_whitespace().map(|p| number(node, p)).collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, z] => Ok(Vector3::new(x, y, z)),
        _ => Err(UrdfError::BadNumber {
            element: node.tag_name().name().to_string(),
            value: s.to_string(),
            position: node.range().start,
        }),
    }
}

fn origin(node: Node) -> Result<Pose, UrdfError> {
    let get = |attr| node.attribute(attr).map(|v| triple(node, v)).transpose();
    Ok(Pose::new(get("xyz")?.unwrap_or_default(), get("rpy")?.unwrap_or_default()))
}

/// Converts a 1-based (row, column-in-chars) position to a byte offset.
fn byte_offset(text: &str, row: usize, col: usize) -> usize {
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if i + 1 == row {
            return offset + line.char_indices().nth(col.saturating_sub(1)).map_or(line.len(), |(b, _)| b);
        }
        offset += line.len();
    }
    text.len()
}

fn tree_error_position(
    err: &TreeError,
    links: &[LinkSpec],
    joints: &[JointSpec],
    spans: &SpanIndex,
    fallback: usize,
) -> usize {
    let link_at = |name: &str, nth: usize| {
        links.iter().enumerate().filter(|(_, l)| l.name() == name).nth(nth).map(|(i, _)| spans.links[i].start)
    };
    let joint_where = |pred: &dyn Fn(&JointSpec) -> bool, nth: usize| {
        joints.iter().enumerate().filter(|(_, j)| pred(j)).nth(nth).map(|(i, _)| spans.joints[i].start)
    };
    let pos = match err {
        TreeError::DuplicateLink(name) => link_at(name, 1),
        TreeError::UnknownLinkReference { joint, link } => {
            joint_where(&|j| j.name() == joint && (j.parent() == link || j.child() == link), 0)
        }
        TreeError::MultipleParents(child) => joint_where(&|j| j.child() == child, 1),
        TreeError::CycleDetected(path) => joint_where(
            &|j| path.iter().any(|p| p == j.child()) && path.iter().any(|p| p == j.parent()),
            0,
        ),
        TreeError::MultipleBaseLinks(names) => names.get(1).and_then(|n| link_at(n, 0)),
        TreeError::DisconnectedLink(name) => link_at(name, 0),
        _ => None,
    };
    pos.unwrap_or(fallback)
}

// ---------------------------------------------------------------- emit

fn num(v: f64) -> String {
    // -0 prints as "-0"; fold it so equal trees give equal bytes.
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

fn vec3(v: &Vector3<f64>) -> String {
    format!("{} {} {}", num(v.x), num(v.y), num(v.z))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Serializes a tree in the strict subset. Output is deterministic: links then
/// joints in declaration order, two-space indentation, LF line endings, and
/// shortest round-trip decimals.
pub fn emit_urdf(tree: &KinematicTree) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\"?>\n");
    let _ = writeln!(out, "<robot name=\"{}\">", escape(tree.robot_name()));
    for link in tree.links() {
        match link.mesh() {
            None => {
                let _ = writeln!(out, "  <link name=\"{}\"/>", escape(link.name()));
            }
            Some(mesh) => {
                let _ = writeln!(out, "  <link name=\"{}\">", escape(link.name()));
                out.push_str("    <visual>\n      <geometry>\n");
                let _ = writeln!(out, "        <mesh filename=\"{}\"/>", escape(mesh));
                out.push_str("      </geometry>\n    </visual>\n  </link>\n");
            }
        }
    }
    for joint in tree.joints() {
        let _ = writeln!(
            out,
            "  <joint name=\"{}\" type=\"{}\">",
            escape(joint.name()),
            joint.joint_type()
        );
        let _ = writeln!(out, "    <parent link=\"{}\"/>", escape(joint.parent()));
        let _ = writeln!(out, "    <child link=\"{}\"/>", escape(joint.child()));
        let o = joint.origin();
        let _ = writeln!(out, "    <origin xyz=\"{}\" rpy=\"{}\"/>", vec3(&o.xyz), vec3(&o.rpy));
        if let Some(axis) = joint.axis() {
            let _ = writeln!(out, "    <axis xyz=\"{}\"/>", vec3(&axis));
        }
        if let Some(l) = joint.limit() {
            let _ = writeln!(out, "    <limit lower=\"{}\" upper=\"{}\"/>", num(l.lower), num(l.upper));
        }
        out.push_str("  </joint>\n");
    }
    out.push_str("</robot>\n");
    out
}

// ---------------------------------------------------------------- equality

/// Structural equality up to `tol`. Joints are keyed by (parent, child);
/// names are not compared. Axes and limits are compared after sign
/// canonicalization, so an axis `-a` with limits `(l, u)` equals `a` with
/// `(-u, -l)`.
pub fn tree_equal(a: &KinematicTree, b: &KinematicTree, tol: f64) -> bool {
    if a.robot_name() != b.robot_name() {
        return false;
    }
    let link_set = |t: &KinematicTree| {
        let mut v: Vec<_> = t.links().iter().map(|l| (l.name().to_string(), l.mesh().map(str::to_string))).collect();
        v.sort();
        v
    };
    if link_set(a) != link_set(b) || a.joints().len() != b.joints().len() {
        return false;
    }
    let close = |x: f64, y: f64| (x - y).abs() <= tol;
    let close3 = |x: &Vector3<f64>, y: &Vector3<f64>| x.iter().zip(y.iter()).all(|(p, q)| close(*p, *q));

    let keyed: HashMap<(&str, &str), &JointSpec> = b.joints().iter().map(|j| ((j.parent(), j.child()), j)).collect();
    a.joints().iter().all(|ja| {
        let Some(jb) = keyed.get(&(ja.parent(), ja.child())) else {
            return false;
        };
        if ja.joint_type() != jb.joint_type()
            || !close3(&ja.origin().xyz, &jb.origin().xyz)
            || !close3(&ja.origin().rpy, &jb.origin().rpy)
        {
            return false;
        }
        match (ja.axis(), jb.axis()) {
            (None, None) => true,
            (Some(x), Some(y)) => {
                let (x, lx) = canonicalize_axis(x, ja.limit());
                let (y, ly) = canonicalize_axis(y, jb.limit());
                let limits_close = match (lx, ly) {
                    (Some(p), Some(q)) => close(p.lower, q.lower) && close(p.upper, q.upper),
                    (None, None) => true,
                    _ => false,
                };
                close3(&x, &y) && limits_close
            }
            _ => false,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOX: &str = r#"<?xml version="1.0"?>
<robot name="box">
  <link name="base">
    <visual><geometry><mesh filename="base.ply"/></geometry></visual>
  </link>
  <link name="lid">
    <visual><geometry><mesh filename="lid.ply"/></geometry></visual>
  </link>
  <joint name="hinge" type="revolute">
    <parent link="base"/>
    <child link="lid"/>
    <axis xyz="0 1 0"/>
    <limit lower="0" upper="1.5708"/>
  </joint>
</robot>
"#;

    #[test]
    fn minimal_revolute() {
        let doc = parse_urdf(BOX, Strictness::Strict).unwrap();
        let j = &doc.tree.joints()[0];
        assert_eq!(j.joint_type(), JointType::Revolute);
        assert_eq!(j.limit(), Some(JointLimit::new(0.0, 1.5708)));
        assert_eq!(j.origin(), &Pose::identity());
        assert_eq!(&BOX[doc.spans.joints[0].clone()][..13], "<joint name=\"");
    }

    #[test]
    fn joint_before_link_is_strict_only() {
        let text = r#"<robot name="x">
  <link name="a"/>
  <joint name="j" type="fixed"><parent link="a"/><child link="b"/></joint>
  <link name="b"/>
</robot>"#;
        let err = parse_urdf(text, Strictness::Strict).unwrap_err();
        assert!(matches!(err, UrdfError::SubsetViolation { ref element, .. } if element == "link"));
        assert_eq!(err.position(), text.find("<link name=\"b\"").unwrap());
        assert!(parse_urdf(text, Strictness::Lenient).is_ok());
    }

    #[test]
    fn lenient_drops_dataset_extras() {
        let text = r#"<?xml version="1.0"?>
<!-- exported -->
<robot name="cab">
  <link name="base">
    <inertial><mass value="1"/></inertial>
    <visual name="v0"><origin xyz="0 0 0"/><geometry><mesh filename="a.obj"/></geometry></visual>
    <visual name="v1"><geometry><mesh filename="b.obj"/></geometry></visual>
    <collision><geometry><mesh filename="a.obj"/></geometry></collision>
  </link>
  <link name="door"><visual><geometry><mesh filename="d.obj"/></geometry></visual></link>
  <link name="knob"><visual><geometry><mesh filename="k.obj"/></geometry></visual></link>
  <joint name="j0" type="continuous">
    <parent link="base"/><child link="door"/><axis xyz="0 0 -1"/>
    <dynamics damping="0.1"/>
  </joint>
  <joint name="j1" type="revolute">
    <parent link="door"/><child link="knob"/><axis xyz="1 0 0"/>
    <limit lower="-0.5" upper="0.5" effort="10" velocity="1"/>
    <mimic joint="j0"/>
  </joint>
</robot>"#;
        assert!(matches!(parse_urdf(text, Strictness::Strict), Err(UrdfError::SubsetViolation { .. })));
        let doc = parse_urdf(text, Strictness::Lenient).unwrap();
        assert_eq!(doc.tree.link("base").unwrap().mesh(), Some("a.obj"));
        let j0 = &doc.tree.joints()[0];
        assert_eq!(j0.limit(), Some(JointLimit::new(-PI, PI)));
        assert_eq!(doc.tree.joints()[1].limit(), Some(JointLimit::new(-0.5, 0.5)));
    }

    #[test]
    fn emitted_text_shape() {
        let doc = parse_urdf(BOX, Strictness::Strict).unwrap();
        let text = emit_urdf(&doc.tree);
        let expected = r#"<?xml version="1.0"?>
<robot name="box">
  <link name="base">
    <visual>
      <geometry>
        <mesh filename="base.ply"/>
      </geometry>
    </visual>
  </link>
  <link name="lid">
    <visual>
      <geometry>
        <mesh filename="lid.ply"/>
      </geometry>
    </visual>
  </link>
  <joint name="hinge" type="revolute">
    <parent link="base"/>
    <child link="lid"/>
    <origin xyz="0 0 0" rpy="0 0 0"/>
    <axis xyz="0 1 0"/>
    <limit lower="0" upper="1.5708"/>
  </joint>
</robot>
"#;
        assert_eq!(text, expected);
        let again = parse_urdf(&text, Strictness::Strict).unwrap();
        assert!(tree_equal(&again.tree, &doc.tree, 0.0));
    }

    #[test]
    fn virtual_link_is_self_closing() {
        let tree = build_tree(
            "o",
            vec![LinkSpec::with_mesh("a", "a.ply"), LinkSpec::virtual_link("helper")],
            vec![JointSpec::fixed("j", "a", "helper", Pose::identity()).unwrap()],
        )
        .unwrap();
        let text = emit_urdf(&tree);
        assert!(text.contains("  <link name=\"helper\"/>\n"));
        assert!(!text.contains("<axis"));
    }

    #[test]
    fn numbers() {
        let bad = BOX.replace("upper=\"1.5708\"", "upper=\"NaN\"");
        assert!(matches!(parse_urdf(&bad, Strictness::Strict), Err(UrdfError::BadNumber { .. })));
        let inf = BOX.replace("upper=\"1.5708\"", "upper=\"inf\"");
        assert!(matches!(parse_urdf(&inf, Strictness::Lenient), Err(UrdfError::BadNumber { .. })));
        let sci = BOX.replace("upper=\"1.5708\"", "upper=\"1.5e0\"");
        let doc = parse_urdf(&sci, Strictness::Strict).unwrap();
        assert_eq!(doc.tree.joints()[0].limit().unwrap().upper, 1.5);
    }

    #[test]
    fn malformed_xml_reports_byte_offset() {
        let text = "<robot name=\"x\">\n  <link name=\"a\">\n</robot>";
        match parse_urdf(text, Strictness::Lenient).unwrap_err() {
            UrdfError::XmlMalformed { position, .. } => assert!(position > 16 && position <= text.len()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_robot_name() {
        let err = parse_urdf("<robot><link name=\"a\"/></robot>", Strictness::Strict).unwrap_err();
        assert!(matches!(err, UrdfError::MissingAttribute { ref attribute, .. } if attribute == "name"));
    }

    #[test]
    fn unknown_joint_type() {
        let text = BOX.replace("type=\"revolute\"", "type=\"floating\"");
        assert!(matches!(parse_urdf(&text, Strictness::Lenient), Err(UrdfError::UnknownJointType { .. })));
    }

    #[test]
    fn tree_equal_tolerance() {
        let a = parse_urdf(BOX, Strictness::Strict).unwrap().tree;
        assert!(tree_equal(&a, &a, 0.0));
        let tol = 1e-6;
        let b = a.map_joints(|j| j.with_origin(Pose::from_xyz(2.0 * tol, 0.0, 0.0))).unwrap();
        assert!(!tree_equal(&a, &b, tol));
        assert!(tree_equal(&a, &b, 3.0 * tol));
        let flipped = a.map_joints(|j| Ok(j.flipped())).unwrap();
        assert!(tree_equal(&a, &flipped, 0.0));
    }
}
