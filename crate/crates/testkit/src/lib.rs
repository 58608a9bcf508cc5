//! Test-only generators and reference oracles.
//!
//! The oracles here are written independently of the library code they
//! check: forward kinematics uses explicitly composed rotation matrices and
//! Rodrigues' formula, projection to the JSON tree walks the tree top-down,
//! and assignment is solved by enumeration.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use artikit::chain::{JsonJointType, JsonTreeNode};
use artikit::geometry::TriangleMesh;
use artikit::kinematics::{build_tree, JointSpec, JointType, KinematicTree, LinkSpec, Pose};
use nalgebra::{Matrix3, Point3, Vector3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_axis<R: Rng>(rng: &mut R) -> Vector3<f64> {
    // Mix axis-aligned (either sign) and general directions.
    if rng.random_bool(0.3) {
        let mut a = Vector3::zeros();
        a[rng.random_range(0..3)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        a
    } else {
        loop {
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() > 0.1 {
                return v;
            }
        }
    }
}

fn random_pose<R: Rng>(rng: &mut R) -> Pose {
    let xyz = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let rpy = if rng.random_bool(0.3) {
        Vector3::zeros()
    } else {
        Vector3::new(rng.random_range(-PI..PI), rng.random_range(-PI / 2.0..PI / 2.0), rng.random_range(-PI..PI))
    };
    Pose::new(xyz, rpy)
}

/// A valid tree with 1..=`max_links` links. The base is always mesh-bearing;
/// other links are virtual with probability 1/4. Joint types are uniform,
/// and links and joints are declared in shuffled order.
pub fn random_tree<R: Rng>(rng: &mut R, max_links: usize) -> KinematicTree {
    let n = rng.random_range(1..=max_links.max(1));
    let names: Vec<String> = (0..n).map(|i| format!("part_{i}")).collect();
    let mut links: Vec<LinkSpec> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            if i > 0 && rng.random_bool(0.25) {
                LinkSpec::virtual_link(name)
            } else {
                LinkSpec::with_mesh(name, format!("{name}.ply"))
            }
        })
        .collect();
    let mut joints: Vec<JointSpec> = (1..n)
        .map(|i| {
            let parent = &names[rng.random_range(0..i)];
            let child = &names[i];
            let jname = format!("joint_{i}");
            let origin = random_pose(rng);
            match rng.random_range(0..3) {
                0 => {
                    let lower = rng.random_range(-PI..0.0);
                    let upper = lower + rng.random_range(0.0..PI);
                    JointSpec::revolute(jname, parent, child, origin, random_axis(rng), lower, upper)
                }
                1 => {
                    let lower = rng.random_range(-0.5..0.0);
                    let upper = lower + rng.random_range(0.0..1.0);
                    JointSpec::prismatic(jname, parent, child, origin, random_axis(rng), lower, upper)
                }
                _ => JointSpec::fixed(jname, parent, child, origin),
            }
            .expect("generated joint is valid")
        })
        .collect();
    links.shuffle(rng);
    joints.shuffle(rng);
    build_tree(format!("robot_{n}"), links, joints).expect("generated tree is valid")
}

/// Proptest strategy over [`random_tree`] seeds.
pub fn arb_tree(max_links: usize) -> impl Strategy<Value = KinematicTree> {
    any::<u64>().prop_map(move |seed| random_tree(&mut rng(seed), max_links))
}

/// The parameter-free JSON tree a correct model would write for `tree`:
/// virtual links are skipped, and each part's joint type is the first
/// movable joint on the path from its nearest mesh-bearing ancestor (fixed
/// if there is none). The base must be mesh-bearing.
pub fn project_json(tree: &KinematicTree) -> JsonTreeNode {
    fn descend(tree: &KinematicTree, link: &str, path: Vec<JointType>, out: &mut Vec<JsonTreeNode>) {
        for j in tree.joints().iter().filter(|j| j.parent() == link) {
            let mut p = path.clone();
            p.push(j.joint_type());
            let child = tree.links().iter().find(|l| l.name() == j.child()).expect("child link");
            if child.mesh().is_some() {
                let ty = p.iter().copied().find(|t| *t != JointType::Fixed).unwrap_or(JointType::Fixed);
                let mut node = JsonTreeNode {
                    part: child.name().to_string(),
                    joint_type: match ty {
                        JointType::Revolute => JsonJointType::Revolute,
                        JointType::Prismatic => JsonJointType::Prismatic,
                        JointType::Fixed => JsonJointType::Fixed,
                    },
                    joint_name: None,
                    children: Vec::new(),
                };
                descend(tree, child.name(), Vec::new(), &mut node.children);
                out.push(node);
            } else {
                descend(tree, child.name(), p, out);
            }
        }
    }
    let root = tree
        .links()
        .iter()
        .find(|l| !tree.joints().iter().any(|j| j.child() == l.name()))
        .expect("a root");
    assert!(root.mesh().is_some(), "project_json needs a mesh-bearing base");
    let mut children = Vec::new();
    descend(tree, root.name(), Vec::new(), &mut children);
    JsonTreeNode { part: root.name().to_string(), joint_type: JsonJointType::Base, joint_name: None, children }
}

/// Minimum total cost over all one-to-one assignments of
/// `min(rows, cols)` pairs, by enumeration. Sums are accumulated in row
/// order.
pub fn brute_force_min_cost(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    fn rec(cost: &[Vec<f64>], r: usize, used: &mut Vec<bool>, rows_left: usize, cols_left: usize, acc: f64, best: &mut f64) {
        if r == cost.len() {
            *best = best.min(acc);
            return;
        }
        // A row may stay unassigned only while there are more rows than columns.
        if rows_left > cols_left {
            rec(cost, r + 1, used, rows_left - 1, cols_left, acc, best);
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                rec(cost, r + 1, used, rows_left - 1, cols_left - 1, acc + cost[r][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, 0, &mut vec![false; cols], rows, cols, 0.0, &mut best);
    best
}

/// Survival function of the chi-square distribution with 2 degrees of
/// freedom.
pub fn chi_square_sf_df2(x: f64) -> f64 {
    (-x / 2.0).exp()
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rpy_matrix(rpy: &Vector3<f64>) -> Matrix3<f64> {
    rot_z(rpy.z) * rot_y(rpy.y) * rot_x(rpy.x)
}

/// Rotation by `angle` about unit `axis` (Rodrigues).
pub fn axis_angle_matrix(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = axis.normalize();
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

/// Rigid transform as (rotation, translation).
pub type Frame = (Matrix3<f64>, Vector3<f64>);

/// Pose of every link in the base frame with joint values `q` (by joint
/// name; missing joints sit at 0).
pub fn forward_kinematics(tree: &KinematicTree, q: &BTreeMap<String, f64>) -> BTreeMap<String, Frame> {
    let mut frames = BTreeMap::new();
    let root = tree.links().iter().find(|l| !tree.joints().iter().any(|j| j.child() == l.name())).expect("root");
    frames.insert(root.name().to_string(), (Matrix3::identity(), Vector3::zeros()));
    let mut stack = vec![root.name().to_string()];
    while let Some(link) = stack.pop() {
        let (r_parent, t_parent) = frames[&link];
        for j in tree.joints().iter().filter(|j| j.parent() == link) {
            let o = j.origin();
            let r_joint = r_parent * rpy_matrix(&o.rpy);
            let t_joint = t_parent + r_parent * o.xyz;
            let v = q.get(j.name()).copied().unwrap_or(0.0);
            let (r, t) = match (j.joint_type(), j.axis()) {
                (JointType::Revolute, Some(a)) => (r_joint * axis_angle_matrix(&a, v), t_joint),
                (JointType::Prismatic, Some(a)) => (r_joint, t_joint + r_joint * (a.normalize() * v)),
                _ => (r_joint, t_joint),
            };
            frames.insert(j.child().to_string(), (r, t));
            stack.push(j.child().to_string());
        }
    }
    frames
}

/// Axis-aligned box as 12 triangles.
pub fn box_mesh(min: [f64; 3], max: [f64; 3]) -> TriangleMesh {
    let v: Vec<Point3<f64>> = (0..8)
        .map(|i| {
            Point3::new(
                if i & 1 == 0 { min[0] } else { max[0] },
                if i & 2 == 0 { min[1] } else { max[1] },
                if i & 4 == 0 { min[2] } else { max[2] },
            )
        })
        .collect();
    let faces = [
        [0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5],
    ];
    let tris = faces.iter().flat_map(|f| [[f[0], f[1], f[2]], [f[0], f[2], f[3]]]).collect();
    TriangleMesh::new(v, tris).expect("box mesh")
}

/// ASCII PLY text for a mesh.
pub fn mesh_to_ply(mesh: &TriangleMesh) -> String {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.triangles().len()
    );
    for p in mesh.vertices() {
        s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    for t in mesh.triangles() {
        s.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    s
}
