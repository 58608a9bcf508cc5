use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Isometry3, Vector3};
use serde::Serialize;

use crate::kinematics::{canonicalize_axis, JointLimit, JointType, KinematicTree};

/// Joints are identified across trees by their (parent, child) link names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct JointKey {
    pub parent: String,
    pub child: String,
}

impl JointKey {
    pub fn new(parent: impl Into<String>, child: impl Into<String>) -> Self {
        Self { parent: parent.into(), child: child.into() }
    }
}

impl fmt::Display for JointKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.parent, self.child)
    }
}

/// A joint expressed in the base-link frame at zero displacement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointFrame {
    pub joint_type: JointType,
    pub origin: Vector3<f64>,
    /// Unit axis, sign-canonical. `None` for fixed joints.
    pub axis: Option<Vector3<f64>>,
    /// Limits matching the canonical axis sign.
    pub limit: Option<JointLimit>,
}

/// Compose origins from the base down, then rotate each axis into the base
/// frame and canonicalize its sign together with the limits.
pub fn world_joint_frames(tree: &KinematicTree) -> BTreeMap<JointKey, JointFrame> {
    let mut link_pose: BTreeMap<&str, Isometry3<f64>> = BTreeMap::new();
    link_pose.insert(tree.base_link(), Isometry3::identity());
    let mut out = BTreeMap::new();
    for link in tree.topological_order() {
        let parent_pose = link_pose[link];
        for joint in tree.child_joints(link) {
            let pose = parent_pose * joint.origin().isometry();
            link_pose.insert(joint.child(), pose);
            let (axis, limit) = match joint.axis() {
                Some(a) => {
                    let (axis, limit) = canonicalize_axis(pose.rotation * a, joint.limit());
                    (Some(axis), limit)
                }
                None => (None, joint.limit()),
            };
            out.insert(
                JointKey::new(joint.parent(), joint.child()),
                JointFrame { joint_type: joint.joint_type(), origin: pose.translation.vector, axis, limit },
            );
        }
    }
    out
}
