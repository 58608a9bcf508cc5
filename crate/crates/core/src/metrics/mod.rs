//! Joint-level evaluation of a predicted kinematic tree against ground truth.
//!
//! Both trees are first brought into a shared frame ([`normalize_pair`]):
//! translated by the ground-truth bounding-box center and divided by its
//! diagonal. Joints are then matched one-to-one, by child link name first and
//! by minimum-cost assignment for the rest, and each matched pair is compared.
//!
//! Units: angles in radians, lengths as fractions of the ground-truth
//! bounding-box diagonal.

mod assignment;
mod frames;
mod scene;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;

use nalgebra::Vector3;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{Aabb, GeometryError};
use crate::kinematics::{ArticulatedObject, JointLimit, JointType, KinematicTree, TreeError};

pub use assignment::{assignment_cost, min_cost_assignment};
pub use frames::{world_joint_frames, JointFrame, JointKey};
pub use scene::{aggregate_scenes, scene_report, Count, ObjectEntry, SceneReport};

/// Stamped into every report; bump when a definition changes.
pub const METRICS_VERSION: &str = "1.0";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("ground-truth bounding box is degenerate (diagonal {diagonal})")]
    DegenerateBBox { diagonal: f64 },
    #[error("ground truth has no geometry")]
    NoGeometry,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchWeights {
    pub origin: f64,
    pub axis: f64,
    pub joint_type: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self { origin: 1.0, axis: 1.0, joint_type: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Max origin distance, fraction of the gt diagonal.
    pub origin: f64,
    /// Max axis angle, radians.
    pub axis: f64,
    /// Min interval IoU of the motion ranges.
    pub range_iou: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { origin: 0.1, axis: 15f64.to_radians(), range_iou: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricConfig {
    pub weights: MatchWeights,
    pub cost_cutoff: f64,
    pub thresholds: Thresholds,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { weights: MatchWeights::default(), cost_cutoff: 2.0, thresholds: Thresholds::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointMatch {
    pub pred: JointKey,
    pub gt: JointKey,
    pub cost: f64,
    pub by_name: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointDiff {
    #[serde(rename = "match")]
    pub matched: JointMatch,
    pub pred_type: JointType,
    pub gt_type: JointType,
    pub type_ok: bool,
    pub axis_angle: Option<f64>,
    pub origin_dist: f64,
    pub angle_limit_err: Option<f64>,
    pub dist_limit_err: Option<f64>,
    /// IoU of the motion ranges for same-type movable pairs.
    pub range_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub version: &'static str,
    pub tc: f64,
    pub apd: Option<f64>,
    pub opd: Option<f64>,
    pub ald: Option<f64>,
    pub dld: Option<f64>,
    pub diffs: Vec<JointDiff>,
    pub unmatched_pred: Vec<JointKey>,
    pub unmatched_gt: Vec<JointKey>,
    pub usable: bool,
    pub config: MetricConfig,
}

/// Angle between two lines, in `[0, pi/2]`.
pub fn line_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b).abs())
}

fn pair_cost(p: &JointFrame, g: &JointFrame, w: &MatchWeights) -> f64 {
    let angle = match (p.axis, g.axis) {
        (Some(a), Some(b)) => line_angle(&a, &b),
        _ => FRAC_PI_4,
    };
    let mismatch = if p.joint_type == g.joint_type { 0.0 } else { 1.0 };
    w.origin * (p.origin - g.origin).norm() + w.axis * angle + w.joint_type * mismatch
}

fn match_frames(
    pred: &BTreeMap<JointKey, JointFrame>,
    gt: &BTreeMap<JointKey, JointFrame>,
    config: &MetricConfig,
) -> Vec<JointMatch> {
    let gt_by_child: BTreeMap<&str, &JointKey> = gt.keys().map(|k| (k.child.as_str(), k)).collect();
    let mut matches = Vec::new();
    let mut rest_pred = Vec::new();
    let mut taken_gt = Vec::new();
    for (pk, pf) in pred {
        match gt_by_child.get(pk.child.as_str()) {
            Some(&gk) => {
                let cost = pair_cost(pf, &gt[gk], &config.weights);
                matches.push(JointMatch { pred: pk.clone(), gt: gk.clone(), cost, by_name: true });
                taken_gt.push(gk);
            }
            None => rest_pred.push(pk),
        }
    }
    let rest_gt: Vec<&JointKey> = gt.keys().filter(|k| !taken_gt.contains(k)).collect();

    let cost: Vec<Vec<f64>> = rest_pred
        .iter()
        .map(|pk| rest_gt.iter().map(|gk| pair_cost(&pred[*pk], &gt[*gk], &config.weights)).collect())
        .collect();
    for (r, c) in min_cost_assignment(&cost).into_iter().enumerate() {
        if let Some(c) = c {
            if cost[r][c] <= config.cost_cutoff {
                matches.push(JointMatch {
                    pred: rest_pred[r].clone(),
                    gt: rest_gt[c].clone(),
                    cost: cost[r][c],
                    by_name: false,
                });
            }
        }
    }
    matches
}

/// One-to-one joint matching; see the module docs. Both trees should already
/// be in the shared frame.
pub fn match_joints(pred: &KinematicTree, gt: &KinematicTree, config: &MetricConfig) -> Vec<JointMatch> {
    match_frames(&world_joint_frames(pred), &world_joint_frames(gt), config)
}

/// Intersection over union of two closed intervals. Two identical points
/// count as full overlap.
pub fn interval_iou(a: JointLimit, b: JointLimit) -> f64 {
    let inter = (a.upper.min(b.upper) - a.lower.max(b.lower)).max(0.0);
    let union = a.upper.max(b.upper) - a.lower.min(b.lower);
    if union > 0.0 {
        inter / union
    } else if a == b {
        1.0
    } else {
        0.0
    }
}

fn limit_err(a: JointLimit, b: JointLimit) -> f64 {
    ((a.lower - b.lower).abs() + (a.upper - b.upper).abs()) / 2.0
}

fn diff(m: JointMatch, p: &JointFrame, g: &JointFrame) -> JointDiff {
    let type_ok = p.joint_type == g.joint_type;
    let mut axis_angle = None;
    let mut limits = None;
    if let (Some(pa), Some(ga)) = (p.axis, g.axis) {
        axis_angle = Some(line_angle(&pa, &ga));
        // Read the predicted range along the ground-truth axis direction.
        let pl = if pa.dot(&ga) < 0.0 { p.limit.map(JointLimit::mirrored) } else { p.limit };
        limits = pl.zip(g.limit);
    }
    let same_movable = |t: JointType| p.joint_type == t && g.joint_type == t;
    JointDiff {
        pred_type: p.joint_type,
        gt_type: g.joint_type,
        type_ok,
        axis_angle,
        origin_dist: (p.origin - g.origin).norm(),
        angle_limit_err: limits.filter(|_| same_movable(JointType::Revolute)).map(|(a, b)| limit_err(a, b)),
        dist_limit_err: limits.filter(|_| same_movable(JointType::Prismatic)).map(|(a, b)| limit_err(a, b)),
        range_iou: limits.filter(|_| type_ok).map(|(a, b)| interval_iou(a, b)),
        matched: m,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Compare two trees that are already in the shared frame.
pub fn evaluate(pred: &KinematicTree, gt: &KinematicTree, config: &MetricConfig) -> MetricReport {
    let pf = world_joint_frames(pred);
    let gf = world_joint_frames(gt);
    let mut diffs: Vec<JointDiff> = match_frames(&pf, &gf, config)
        .into_iter()
        .map(|m| {
            let (p, g) = (&pf[&m.pred], &gf[&m.gt]);
            diff(m, p, g)
        })
        .collect();
    diffs.sort_by(|a, b| a.matched.gt.cmp(&b.matched.gt));

    let unmatched_pred = pf.keys().filter(|k| !diffs.iter().any(|d| &d.matched.pred == *k)).cloned().collect();
    let unmatched_gt = gf.keys().filter(|k| !diffs.iter().any(|d| &d.matched.gt == *k)).cloned().collect();

    let tc = if gf.is_empty() {
        if pf.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        diffs.iter().filter(|d| d.type_ok).count() as f64 / gf.len() as f64
    };

    let mut report = MetricReport {
        version: METRICS_VERSION,
        tc,
        apd: mean(diffs.iter().filter_map(|d| d.axis_angle)),
        opd: mean(diffs.iter().map(|d| d.origin_dist)),
        ald: mean(diffs.iter().filter_map(|d| d.angle_limit_err)),
        dld: mean(diffs.iter().filter_map(|d| d.dist_limit_err)),
        diffs,
        unmatched_pred,
        unmatched_gt,
        usable: false,
        config: *config,
    };
    report.usable = usability(&report, &config.thresholds);
    report
}

/// Whether a single matched joint is within all thresholds.
pub fn joint_usable(d: &JointDiff, t: &Thresholds) -> bool {
    if !d.type_ok || d.origin_dist > t.origin {
        return false;
    }
    if !d.gt_type.is_movable() {
        return true;
    }
    d.axis_angle.is_some_and(|a| a <= t.axis) && d.range_iou.is_some_and(|iou| iou >= t.range_iou)
}

/// Every gt joint matched, and every match within the thresholds.
pub fn usability(report: &MetricReport, thresholds: &Thresholds) -> bool {
    report.unmatched_gt.is_empty() && report.diffs.iter().all(|d| joint_usable(d, thresholds))
}

/// Bounding box of all ground-truth part geometry in the object frame.
pub fn gt_bbox(gt: &ArticulatedObject) -> Result<Aabb, MetricsError> {
    let mut boxes = gt.parts.values().map(|p| p.aabb());
    let first = boxes.next().ok_or(MetricsError::NoGeometry)??;
    boxes.try_fold(first, |acc, b| Ok(acc.union(&b?)))
}

/// Express a tree in the frame centered on `center` with unit length `diag`.
pub fn rescale_tree(tree: &KinematicTree, center: &Vector3<f64>, diag: f64) -> Result<KinematicTree, TreeError> {
    let base = tree.base_link().to_string();
    tree.map_joints(|j| {
        let mut origin = *j.origin();
        if j.parent() == base {
            origin.xyz -= center;
        }
        origin.xyz /= diag;
        let j = j.with_origin(origin)?;
        match (j.joint_type(), j.limit()) {
            (JointType::Prismatic, Some(l)) => j.with_limit(Some(JointLimit::new(l.lower / diag, l.upper / diag))),
            _ => Ok(j),
        }
    })
}

/// Both trees in the gt frame: centered on the gt bounding box and divided by
/// its diagonal. The pred geometry is not consulted, so a mis-scaled
/// prediction shows up in the metrics.
pub fn normalize_pair(
    pred: &ArticulatedObject,
    gt: &ArticulatedObject,
) -> Result<(KinematicTree, KinematicTree), MetricsError> {
    let bbox = gt_bbox(gt)?;
    let diagonal = bbox.diagonal();
    if !(diagonal > 1e-12) {
        return Err(MetricsError::DegenerateBBox { diagonal });
    }
    let center = bbox.center().coords;
    Ok((rescale_tree(&pred.tree, &center, diagonal)?, rescale_tree(&gt.tree, &center, diagonal)?))
}

/// [`normalize_pair`] followed by [`evaluate`].
pub fn evaluate_objects(
    pred: &ArticulatedObject,
    gt: &ArticulatedObject,
    config: &MetricConfig,
) -> Result<MetricReport, MetricsError> {
    let (p, g) = normalize_pair(pred, gt)?;
    Ok(evaluate(&p, &g, config))
}
