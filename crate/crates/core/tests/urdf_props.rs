use std::collections::BTreeMap;

use artikit::kinematics::{build_tree, JointSpec, JointType, KinematicTree, LinkSpec, Pose};
use artikit::urdf::{emit_urdf, parse_urdf, tree_equal, Strictness};
use artikit_testkit as tk;
use nalgebra::Vector3;
use proptest::prelude::*;

fn flip_all(tree: &KinematicTree) -> KinematicTree {
    tree.map_joints(|j| Ok(j.flipped())).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn emit_parse_round_trip(tree in tk::arb_tree(12)) {
        let text = emit_urdf(&tree);
        let back = parse_urdf(&text, Strictness::Strict).unwrap();
        prop_assert!(tree_equal(&back.tree, &tree, 1e-9));
        // Emission is a fixed point after one round trip.
        prop_assert_eq!(emit_urdf(&back.tree), text);
    }

    #[test]
    fn lenient_accepts_what_strict_accepts(tree in tk::arb_tree(8)) {
        let text = emit_urdf(&tree);
        let strict = parse_urdf(&text, Strictness::Strict).unwrap();
        let lenient = parse_urdf(&text, Strictness::Lenient).unwrap();
        prop_assert!(tree_equal(&strict.tree, &lenient.tree, 0.0));
    }

    /// A flipped axis with mirrored joint values reaches the same link poses,
    /// which is what lets tree_equal ignore axis sign.
    #[test]
    fn flip_is_kinematically_neutral(tree in tk::arb_tree(10), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = tk::rng(seed);
        let q: BTreeMap<String, f64> = tree
            .movable_joints()
            .iter()
            .map(|j| (j.name().to_string(), rng.random_range(-1.0..1.0)))
            .collect();
        let mirrored: BTreeMap<String, f64> = q.iter().map(|(k, v)| (k.clone(), -v)).collect();
        let flipped = flip_all(&tree);
        let a = tk::forward_kinematics(&tree, &q);
        let b = tk::forward_kinematics(&flipped, &mirrored);
        for (link, (ra, ta)) in &a {
            let (rb, tb) = &b[link];
            prop_assert!((ra - rb).amax() < 1e-12 && (ta - tb).amax() < 1e-12, "{link}");
        }
        prop_assert!(tree_equal(&flipped, &tree, 1e-12));
    }

    /// Link poses from the parsed tree agree with the oracle evaluated on
    /// the original tree.
    #[test]
    fn forward_kinematics_survive_round_trip(tree in tk::arb_tree(10)) {
        let back = parse_urdf(&emit_urdf(&tree), Strictness::Strict).unwrap().tree;
        let q: BTreeMap<String, f64> = tree.movable_joints().iter().map(|j| (j.name().to_string(), 0.3)).collect();
        let a = tk::forward_kinematics(&tree, &q);
        let b = tk::forward_kinematics(&back, &q);
        for (link, (ra, ta)) in &a {
            let (rb, tb) = &b[link];
            prop_assert!((ra - rb).amax() < 1e-9 && (ta - tb).amax() < 1e-9);
        }
    }
}

#[test]
fn pose_rotation_matches_rpy_oracle() {
    let mut rng = tk::rng(11);
    use rand::Rng;
    for _ in 0..500 {
        let rpy = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0));
        let lib = Pose::new(Vector3::zeros(), rpy).rotation().to_rotation_matrix().into_inner();
        assert!((lib - tk::rpy_matrix(&rpy)).amax() < 1e-12);
    }
}

#[test]
fn tree_equal_distinguishes_real_changes() {
    let tree = build_tree(
        "box",
        vec![LinkSpec::with_mesh("base", "base.ply"), LinkSpec::with_mesh("lid", "lid.ply")],
        vec![JointSpec::revolute("hinge", "base", "lid", Pose::from_xyz(0.0, 0.1, 0.2), Vector3::x(), 0.0, 1.0).unwrap()],
    )
    .unwrap();
    let moved = tree.map_joints(|j| j.with_origin(Pose::from_xyz(0.0, 0.1, 0.2 + 1e-6))).unwrap();
    assert!(!tree_equal(&tree, &moved, 1e-9));
    assert!(tree_equal(&tree, &moved, 1e-5));
    // Flipping the axis without mirroring the limits is a different joint.
    let half_flip = tree.map_joints(|j| j.with_axis(j.axis().map(|a| -a))).unwrap();
    assert!(!tree_equal(&tree, &half_flip, 1e-9));
    let retyped = tree
        .map_joints(|j| JointSpec::new(j.name(), JointType::Prismatic, j.parent(), j.child(), *j.origin(), j.axis(), j.limit()))
        .unwrap();
    assert!(!tree_equal(&tree, &retyped, 1e-9));
}

#[test]
fn thousand_trees_round_trip_quickly() {
    let start = std::time::Instant::now();
    let mut rng = tk::rng(1000);
    for _ in 0..1000 {
        let tree = tk::random_tree(&mut rng, 12);
        let back = parse_urdf(&emit_urdf(&tree), Strictness::Strict).unwrap();
        assert!(tree_equal(&back.tree, &tree, 1e-9));
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}
