use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use artikit::geometry::PartGeometry;
use artikit::kinematics::{ArticulatedObject, KinematicTree, Pose};
use artikit::metrics::{evaluate, evaluate_objects, Count, MetricConfig, MetricReport};
use artikit::urdf::{parse_urdf, Strictness};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize)]
pub struct ObjectRow {
    pub object: String,
    /// False if the rows' metrics come from unnormalized trees (gt meshes
    /// were not readable).
    pub normalized: bool,
    pub error: Option<String>,
    pub report: Option<MetricReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub split: String,
    pub objects: usize,
    pub failed: usize,
    pub tc: Option<f64>,
    pub apd: Option<f64>,
    pub opd: Option<f64>,
    pub ald: Option<f64>,
    pub dld: Option<f64>,
    pub usable: Count,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub objects: Vec<ObjectRow>,
    pub aggregates: Vec<Aggregate>,
    pub warnings: Vec<String>,
    pub config: MetricConfig,
}

impl EvalReport {
    pub fn any_failed(&self) -> bool {
        self.objects.iter().any(|o| o.error.is_some())
    }
}

/// Object names per split, matched against URDF file stems.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    #[serde(default)]
    pub id: Vec<String>,
    #[serde(default)]
    pub ood: Vec<String>,
}

fn urdf_stems(dir: &Path) -> std::io::Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "urdf") {
            if let Some(stem) = path.file_stem() {
                out.insert(stem.to_string_lossy().into_owned(), path);
            }
        }
    }
    Ok(out)
}

fn load_tree(path: &Path) -> Result<KinematicTree, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_urdf(&text, Strictness::Lenient).map(|d| d.tree).map_err(|e| format!("{}: {e}", path.display()))
}

fn as_object(tree: KinematicTree, dir: &Path) -> ArticulatedObject {
    let parts = tree
        .links()
        .iter()
        .filter_map(|l| Some((l.name().to_string(), PartGeometry::MeshFile(dir.join(l.mesh()?)))))
        .collect();
    ArticulatedObject { tree, parts, root_pose: Pose::identity(), scale: 1.0 }
}

fn evaluate_pair(pred: &Path, gt: &Path, config: &MetricConfig, warnings: &mut Vec<String>) -> ObjectRow {
    let object = gt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let trees = load_tree(pred).and_then(|p| Ok((p, load_tree(gt)?)));
    let (p, g) = match trees {
        Ok(t) => t,
        Err(e) => return ObjectRow { object, normalized: false, error: Some(e), report: None },
    };
    let gt_dir = gt.parent().unwrap_or(Path::new("."));
    let pred_obj = as_object(p.clone(), pred.parent().unwrap_or(Path::new(".")));
    match evaluate_objects(&pred_obj, &as_object(g.clone(), gt_dir), config) {
        Ok(report) => ObjectRow { object, normalized: true, error: None, report: Some(report) },
        Err(e) => {
            warnings.push(format!("{object}: not normalized ({e})"));
            ObjectRow { object, normalized: false, error: None, report: Some(evaluate(&p, &g, config)) }
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Pooled over joints: TC counts type-correct matches over all gt joints,
/// the distance columns average over every matched joint that has them.
fn aggregate(split: &str, rows: &[&ObjectRow]) -> Aggregate {
    let reports: Vec<&MetricReport> = rows.iter().filter_map(|r| r.report.as_ref()).collect();
    let gt_joints: usize = reports.iter().map(|r| r.diffs.len() + r.unmatched_gt.len()).sum();
    let type_ok: usize = reports.iter().map(|r| r.diffs.iter().filter(|d| d.type_ok).count()).sum();
    let diffs = || reports.iter().flat_map(|r| r.diffs.iter());
    Aggregate {
        split: split.to_string(),
        objects: rows.len(),
        failed: rows.iter().filter(|r| r.error.is_some()).count(),
        tc: (gt_joints > 0).then(|| type_ok as f64 / gt_joints as f64),
        apd: mean(diffs().filter_map(|d| d.axis_angle)),
        opd: mean(diffs().map(|d| d.origin_dist)),
        ald: mean(diffs().filter_map(|d| d.angle_limit_err)),
        dld: mean(diffs().filter_map(|d| d.dist_limit_err)),
        // A failed object counts as not usable.
        usable: Count::new(reports.iter().filter(|r| r.usable).count(), rows.len()),
    }
}

pub fn run_eval(pred_dir: &Path, gt_dir: &Path, split: Option<&SplitFile>, config: &MetricConfig) -> std::io::Result<EvalReport> {
    let preds = urdf_stems(pred_dir)?;
    let gts = urdf_stems(gt_dir)?;
    let mut warnings = Vec::new();
    for stem in preds.keys().filter(|s| !gts.contains_key(*s)) {
        warnings.push(format!("UnpairedFile: {stem}.urdf has no ground truth"));
    }
    for stem in gts.keys().filter(|s| !preds.contains_key(*s)) {
        warnings.push(format!("UnpairedFile: {stem}.urdf has no prediction"));
    }
    let objects: Vec<ObjectRow> = gts
        .iter()
        .filter_map(|(stem, gt)| Some(evaluate_pair(preds.get(stem)?, gt, config, &mut warnings)))
        .collect();

    let mut aggregates = vec![aggregate("ALL", &objects.iter().collect::<Vec<_>>())];
    if let Some(split) = split {
        for (name, members) in [("ID", &split.id), ("OOD", &split.ood)] {
            let members: BTreeSet<&String> = members.iter().collect();
            let rows: Vec<&ObjectRow> = objects.iter().filter(|o| members.contains(&o.object)).collect();
            aggregates.push(aggregate(name, &rows));
        }
    }
    Ok(EvalReport { objects, aggregates, warnings, config: *config })
}

fn cell(v: Option<f64>, percent: bool) -> String {
    match v {
        Some(v) if percent => format!("{:.1}%", v * 100.0),
        Some(v) => format!("{v:.4}"),
        None => "-".into(),
    }
}

pub fn markdown(report: &EvalReport) -> String {
    let mut s = String::from("| Object | TC | APD | OPD | ALD | DLD | Usable |\n|---|---|---|---|---|---|---|\n");
    for o in &report.objects {
        match (&o.report, &o.error) {
            (Some(r), _) => {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} | {} |",
                    o.object,
                    cell(Some(r.tc), true),
                    cell(r.apd, false),
                    cell(r.opd, false),
                    cell(r.ald, false),
                    cell(r.dld, false),
                    if r.usable { "yes" } else { "no" }
                );
            }
            (None, e) => {
                let _ = writeln!(s, "| {} | failed: {} | | | | | no |", o.object, e.as_deref().unwrap_or("?"));
            }
        }
    }
    for a in &report.aggregates {
        let _ = writeln!(
            s,
            "| **{}** ({} objects) | {} | {} | {} | {} | {} | {} |",
            a.split,
            a.objects,
            cell(a.tc, true),
            cell(a.apd, false),
            cell(a.opd, false),
            cell(a.ald, false),
            cell(a.dld, false),
            a.usable
        );
    }
    for w in &report.warnings {
        let _ = writeln!(s, "\nwarning: {w}");
    }
    s
}
