//! Kinematic-tree data model: links, joints, and the validated tree that ties
//! them together.
//!
//! Every type here is immutable once built. [`build_tree`] is the only way to
//! obtain a [`KinematicTree`], so holding one means the tree property holds:
//! one base link, every other link the child of exactly one joint, no cycles.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PartGeometry;

/// Errors raised while constructing joints or trees.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("robot name must be non-empty")]
    EmptyRobotName,
    #[error("tree has no links")]
    EmptyTree,
    #[error("link or joint name must be non-empty")]
    EmptyName,
    #[error("duplicate link `{0}`")]
    DuplicateLink(String),
    #[error("joint `{joint}` references unknown link `{link}`")]
    UnknownLinkReference { joint: String, link: String },
    #[error("link `{0}` is the child of more than one joint")]
    MultipleParents(String),
    #[error("cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("multiple base links: {}", .0.join(", "))]
    MultipleBaseLinks(Vec<String>),
    #[error("link `{0}` is not connected to the rest of the tree")]
    DisconnectedLink(String),
    #[error("joint `{joint}`: bad axis ({reason})")]
    BadAxis { joint: String, reason: String },
    #[error("joint `{joint}`: bad limit ({reason})")]
    BadLimit { joint: String, reason: String },
    #[error("joint `{joint}`: non-finite {field}")]
    NonFinite { joint: String, field: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown joint type `{0}`")]
pub struct UnknownJointType(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointType {
    pub fn is_movable(self) -> bool {
        !matches!(self, JointType::Fixed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JointType::Revolute => "revolute",
            JointType::Prismatic => "prismatic",
            JointType::Fixed => "fixed",
        }
    }
}

impl fmt::Display for JointType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JointType {
    type Err = UnknownJointType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "revolute" => Ok(JointType::Revolute),
            "prismatic" => Ok(JointType::Prismatic),
            "fixed" => Ok(JointType::Fixed),
            other => Err(UnknownJointType(other.to_string())),
        }
    }
}

/// Rigid placement: translation plus roll-pitch-yaw (radians).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub xyz: Vector3<f64>,
    pub rpy: Vector3<f64>,
}

impl Pose {
    pub fn new(xyz: Vector3<f64>, rpy: Vector3<f64>) -> Self {
        Self { xyz, rpy }
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), Vector3::zeros())
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.xyz.iter().chain(self.rpy.iter()).all(|v| v.is_finite())
    }

    /// Rotation `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_euler_angles(self.rpy.x, self.rpy.y, self.rpy.z)
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.xyz), self.rotation())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimit {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    /// The same motion range seen through a negated axis.
    pub fn mirrored(self) -> Self {
        Self { lower: -self.upper, upper: -self.lower }
    }

    pub fn width(self) -> f64 {
        self.upper - self.lower
    }
}

/// Below this magnitude a component does not decide the sign of an axis.
pub const AXIS_SIGN_EPS: f64 = 1e-12;

/// Flip `axis` so its first non-negligible component is positive, mirroring
/// `limit` whenever the axis is flipped. The pair describes the same motion
/// before and after.
pub fn canonicalize_axis(
    axis: Vector3<f64>,
    limit: Option<JointLimit>,
) -> (Vector3<f64>, Option<JointLimit>) {
    let leading = axis.iter().copied().find(|c| c.abs() > AXIS_SIGN_EPS);
    match leading {
        Some(c) if c < 0.0 => (-axis, limit.map(JointLimit::mirrored)),
        _ => (axis, limit),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointSpec {
    name: String,
    joint_type: JointType,
    parent: String,
    child: String,
    origin: Pose,
    axis: Option<Vector3<f64>>,
    limit: Option<JointLimit>,
}

impl JointSpec {
    /// Validating constructor. Movable joints need an axis and a limit, fixed
    /// joints must have neither; the axis is stored normalized.
    pub fn new(
        name: impl Into<String>,
        joint_type: JointType,
        parent: impl Into<String>,
        child: impl Into<String>,
        origin: Pose,
        axis: Option<Vector3<f64>>,
        limit: Option<JointLimit>,
    ) -> Result<Self, TreeError> {
        let name = name.into();
        let parent = parent.into();
        let child = child.into();
        if name.is_empty() || parent.is_empty() || child.is_empty() {
            return Err(TreeError::EmptyName);
        }
        if parent == child {
            return Err(TreeError::CycleDetected(vec![parent, child]));
        }
        if !origin.is_finite() {
            return Err(TreeError::NonFinite { joint: name, field: "origin" });
        }

        let axis = match (joint_type.is_movable(), axis) {
            (true, None) => {
                return Err(TreeError::BadAxis {
                    joint: name,
                    reason: format!("{joint_type} joint requires an axis"),
                })
            }
            (false, Some(_)) => {
                return Err(TreeError::BadAxis {
                    joint: name,
                    reason: "fixed joint cannot carry an axis".into(),
                })
            }
            (_, None) => None,
            (_, Some(v)) => {
                if !v.iter().all(|c| c.is_finite()) {
                    return Err(TreeError::NonFinite { joint: name, field: "axis" });
                }
                let norm = v.norm();
                if norm == 0.0 || !norm.is_finite() {
                    return Err(TreeError::BadAxis { joint: name, reason: "zero-length axis".into() });
                }
                // Already unit up to rounding: keep as is, so emit/parse is a fixed point.
                if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
                    Some(v)
                } else {
                    Some(v / norm)
                }
            }
        };

        match (joint_type.is_movable(), limit) {
            (true, None) => {
                return Err(TreeError::BadLimit {
                    joint: name,
                    reason: format!("{joint_type} joint requires a limit"),
                })
            }
            (false, Some(_)) => {
                return Err(TreeError::BadLimit {
                    joint: name,
                    reason: "fixed joint cannot carry a limit".into(),
                })
            }
            (_, Some(l)) => {
                if !(l.lower.is_finite() && l.upper.is_finite()) {
                    return Err(TreeError::NonFinite { joint: name, field: "limit" });
                }
                if l.lower > l.upper {
                    return Err(TreeError::BadLimit {
                        joint: name,
                        reason: format!("lower {} exceeds upper {}", l.lower, l.upper),
                    });
                }
            }
            (_, None) => {}
        }

        Ok(Self { name, joint_type, parent, child, origin, axis, limit })
    }

    pub fn revolute(
        name: impl Into<String>,
        parent: impl Into<String>,
        child: impl Into<String>,
        origin: Pose,
        axis: Vector3<f64>,
        lower: f64,
        upper: f64,
    ) -> Result<Self, TreeError> {
        Self::new(
            name,
            JointType::Revolute,
            parent,
            child,
            origin,
            Some(axis),
            Some(JointLimit::new(lower, upper)),
        )
    }

    pub fn prismatic(
        name: impl Into<String>,
        parent: impl Into<String>,
        child: impl Into<String>,
        origin: Pose,
        axis: Vector3<f64>,
        lower: f64,
        upper: f64,
    ) -> Result<Self, TreeError> {
        Self::new(
            name,
            JointType::Prismatic,
            parent,
            child,
            origin,
            Some(axis),
            Some(JointLimit::new(lower, upper)),
        )
    }

    pub fn fixed(
        name: impl Into<String>,
        parent: impl Into<String>,
        child: impl Into<String>,
        origin: Pose,
    ) -> Result<Self, TreeError> {
        Self::new(name, JointType::Fixed, parent, child, origin, None, None)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joint_type(&self) -> JointType {
        self.joint_type
    }

    pub fn parent(&self) -> &str {
        &self.parent
    }

    pub fn child(&self) -> &str {
        &self.child
    }

    pub fn origin(&self) -> &Pose {
        &self.origin
    }

    pub fn axis(&self) -> Option<Vector3<f64>> {
        self.axis
    }

    pub fn limit(&self) -> Option<JointLimit> {
        self.limit
    }

    /// Physically identical joint with the axis negated and the limits mirrored.
    pub fn flipped(&self) -> Self {
        Self {
            axis: self.axis.map(|a| -a),
            limit: self.limit.map(JointLimit::mirrored),
            ..self.clone()
        }
    }

    /// Same joint with a different origin. Fails only on non-finite input.
    pub fn with_origin(&self, origin: Pose) -> Result<Self, TreeError> {
        if !origin.is_finite() {
            return Err(TreeError::NonFinite { joint: self.name.clone(), field: "origin" });
        }
        Ok(Self { origin, ..self.clone() })
    }

    /// Same joint with a different limit, validated like the constructor.
    pub fn with_limit(&self, limit: Option<JointLimit>) -> Result<Self, TreeError> {
        Self::new(
            self.name.clone(),
            self.joint_type,
            self.parent.clone(),
            self.child.clone(),
            self.origin,
            self.axis,
            limit,
        )
    }

    /// Same joint with a different axis (normalized like the constructor).
    pub fn with_axis(&self, axis: Option<Vector3<f64>>) -> Result<Self, TreeError> {
        Self::new(
            self.name.clone(),
            self.joint_type,
            self.parent.clone(),
            self.child.clone(),
            self.origin,
            axis,
            self.limit,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkSpec {
    name: String,
    mesh: Option<String>,
}

impl LinkSpec {
    pub fn with_mesh(name: impl Into<String>, mesh: impl Into<String>) -> Self {
        Self { name: name.into(), mesh: Some(mesh.into()) }
    }

    /// A geometry-less helper link.
    pub fn virtual_link(name: impl Into<String>) -> Self {
        Self { name: name.into(), mesh: None }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mesh(&self) -> Option<&str> {
        self.mesh.as_deref()
    }

    pub fn is_virtual(&self) -> bool {
        self.mesh.is_none()
    }

    pub fn remeshed(&self, mesh: impl Into<String>) -> Self {
        Self { name: self.name.clone(), mesh: Some(mesh.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KinematicTree {
    robot_name: String,
    links: Vec<LinkSpec>,
    joints: Vec<JointSpec>,
    #[serde(skip)]
    base: usize,
    #[serde(skip)]
    link_index: HashMap<String, usize>,
    #[serde(skip)]
    parent_joint: HashMap<String, usize>,
}

/// Validate links and joints and assemble them into a tree.
pub fn build_tree(
    robot_name: impl Into<String>,
    links: Vec<LinkSpec>,
    joints: Vec<JointSpec>,
) -> Result<KinematicTree, TreeError> {
    let robot_name = robot_name.into();
    if robot_name.is_empty() {
        return Err(TreeError::EmptyRobotName);
    }
    if links.is_empty() {
        return Err(TreeError::EmptyTree);
    }

    let mut link_index = HashMap::with_capacity(links.len());
    for (i, link) in links.iter().enumerate() {
        if link.name.is_empty() {
            return Err(TreeError::EmptyName);
        }
        if link_index.insert(link.name.clone(), i).is_some() {
            return Err(TreeError::DuplicateLink(link.name.clone()));
        }
    }

    let mut parent_joint = HashMap::with_capacity(joints.len());
    for (j, joint) in joints.iter().enumerate() {
        for link in [&joint.parent, &joint.child] {
            if !link_index.contains_key(link) {
                return Err(TreeError::UnknownLinkReference {
                    joint: joint.name.clone(),
                    link: link.clone(),
                });
            }
        }
        if parent_joint.insert(joint.child.clone(), j).is_some() {
            return Err(TreeError::MultipleParents(joint.child.clone()));
        }
    }

    // Each link has at most one parent, so walking parent pointers either
    // terminates at a root or revisits a link.
    let mut state = vec![0u8; links.len()]; // 0 unseen, 1 on current walk, 2 done
    for start in 0..links.len() {
        let mut walk: Vec<usize> = Vec::new();
        let mut cur = start;
        loop {
            match state[cur] {
                2 => break,
                1 => {
                    let from = walk.iter().position(|&l| l == cur).unwrap_or(0);
                    let mut cycle: Vec<String> =
                        walk[from..].iter().rev().map(|&l| links[l].name.clone()).collect();
                    cycle.push(links[cur].name.clone());
                    return Err(TreeError::CycleDetected(cycle));
                }
                _ => {}
            }
            state[cur] = 1;
            walk.push(cur);
            match parent_joint.get(&links[cur].name) {
                Some(&j) => cur = link_index[&joints[j].parent],
                None => break,
            }
        }
        for l in walk {
            state[l] = 2;
        }
    }

    let roots: Vec<usize> =
        (0..links.len()).filter(|&i| !parent_joint.contains_key(&links[i].name)).collect();
    if roots.len() > 1 {
        let has_joint = |name: &str| joints.iter().any(|j| j.parent == name || j.child == name);
        // An isolated link next to a real subtree is reported as disconnected;
        // several subtrees (or only isolated links) as competing bases.
        let lonely = roots.iter().find(|&&r| !has_joint(&links[r].name));
        if let (Some(&lonely), true) = (lonely, !joints.is_empty()) {
            return Err(TreeError::DisconnectedLink(links[lonely].name.clone()));
        }
        return Err(TreeError::MultipleBaseLinks(
            roots.iter().map(|&r| links[r].name.clone()).collect(),
        ));
    }
    let base = roots[0];

    Ok(KinematicTree { robot_name, links, joints, base, link_index, parent_joint })
}

impl KinematicTree {
    pub fn robot_name(&self) -> &str {
        &self.robot_name
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn link(&self, name: &str) -> Option<&LinkSpec> {
        self.link_index.get(name).map(|&i| &self.links[i])
    }

    /// The joint whose child is `link`, or `None` for the base.
    pub fn parent_joint(&self, link: &str) -> Option<&JointSpec> {
        self.parent_joint.get(link).map(|&j| &self.joints[j])
    }

    /// Joints whose parent is `link`, in declaration order.
    pub fn child_joints<'a>(&'a self, link: &'a str) -> impl Iterator<Item = &'a JointSpec> + 'a {
        self.joints.iter().filter(move |j| j.parent == link)
    }

    pub fn base_link(&self) -> &str {
        &self.links[self.base].name
    }

    /// Breadth-first from the base; siblings follow joint declaration order.
    pub fn topological_order(&self) -> Vec<&str> {
        let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for j in &self.joints {
            children.entry(j.parent.as_str()).or_default().push(j.child.as_str());
        }
        let mut order = Vec::with_capacity(self.links.len());
        let mut queue = VecDeque::from([self.base_link()]);
        while let Some(link) = queue.pop_front() {
            order.push(link);
            if let Some(kids) = children.get(link) {
                queue.extend(kids.iter().copied());
            }
        }
        order
    }

    pub fn movable_joints(&self) -> Vec<&JointSpec> {
        self.joints.iter().filter(|j| j.joint_type.is_movable()).collect()
    }

    /// Rebuild with the same links and a transformed joint list.
    pub fn map_joints<F>(&self, f: F) -> Result<KinematicTree, TreeError>
    where
        F: FnMut(&JointSpec) -> Result<JointSpec, TreeError>,
    {
        let joints = self.joints.iter().map(f).collect::<Result<Vec<_>, _>>()?;
        build_tree(self.robot_name.clone(), self.links.clone(), joints)
    }

    /// Rebuild with the same joints and a transformed link list.
    pub fn map_links<F>(&self, f: F) -> Result<KinematicTree, TreeError>
    where
        F: FnMut(&LinkSpec) -> LinkSpec,
    {
        let links = self.links.iter().map(f).collect();
        build_tree(self.robot_name.clone(), links, self.joints.clone())
    }

    pub fn into_parts(self) -> (String, Vec<LinkSpec>, Vec<JointSpec>) {
        (self.robot_name, self.links, self.joints)
    }
}

/// Free-function forms of the tree queries.
pub fn base_link(tree: &KinematicTree) -> &str {
    tree.base_link()
}

pub fn topological_order(tree: &KinematicTree) -> Vec<&str> {
    tree.topological_order()
}

pub fn movable_joints(tree: &KinematicTree) -> Vec<&JointSpec> {
    tree.movable_joints()
}

/// A kinematic tree bound to part geometry and placed in a scene.
#[derive(Debug, Clone)]
pub struct ArticulatedObject {
    pub tree: KinematicTree,
    pub parts: BTreeMap<String, PartGeometry>,
    pub root_pose: Pose,
    pub scale: f64,
}

impl ArticulatedObject {
    /// Scene position of a point given in the object's raw frame, with every
    /// joint at zero displacement: uniform scale, then the root pose.
    pub fn to_scene(&self, p: &Point3<f64>) -> Point3<f64> {
        self.root_pose.isometry() * Point3::from(p.coords * self.scale)
    }
}
