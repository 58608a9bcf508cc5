use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::{MetricReport, METRICS_VERSION};

/// `hit` out of `total`, rendered like `15/25(60%)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Count {
    pub hit: usize,
    pub total: usize,
}

impl Count {
    pub fn new(hit: usize, total: usize) -> Self {
        Self { hit, total }
    }

    pub fn fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hit as f64 / self.total as f64)
    }

    pub fn add(self, other: Count) -> Count {
        Count::new(self.hit + other.hit, self.total + other.total)
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.fraction() {
            Some(p) => write!(f, "{}/{}({:.0}%)", self.hit, self.total, p * 100.0),
            None => write!(f, "0/0(n/a)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectEntry {
    pub object_id: String,
    pub predicted: bool,
    pub articulable: bool,
    /// Prediction agrees with ground truth.
    pub identified: bool,
    pub report: Option<MetricReport>,
}

impl ObjectEntry {
    pub fn usable(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.usable)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneReport {
    pub version: &'static str,
    pub per_object: Vec<ObjectEntry>,
    /// Objects whose identification agrees with ground truth.
    pub sim_id_objects: Count,
    /// Usable objects among those both identified and articulable.
    pub sim_us_objects: Count,
    pub sim_id_scene: bool,
    pub sim_us_scene: bool,
}

/// Objects are those named in either set or in `reports`. An object missing
/// from `reports` (not converted) is not usable.
pub fn scene_report(
    identified: &BTreeSet<String>,
    gt_articulable: &BTreeSet<String>,
    reports: &BTreeMap<String, MetricReport>,
) -> SceneReport {
    let ids: BTreeSet<&String> = identified.iter().chain(gt_articulable).chain(reports.keys()).collect();
    let per_object: Vec<ObjectEntry> = ids
        .into_iter()
        .map(|id| {
            let predicted = identified.contains(id);
            let articulable = gt_articulable.contains(id);
            ObjectEntry {
                object_id: id.clone(),
                predicted,
                articulable,
                identified: predicted == articulable,
                report: reports.get(id).cloned(),
            }
        })
        .collect();

    let sim_id_objects = Count::new(per_object.iter().filter(|o| o.identified).count(), per_object.len());
    let both: Vec<&ObjectEntry> = per_object.iter().filter(|o| o.predicted && o.articulable).collect();
    let sim_us_objects = Count::new(both.iter().filter(|o| o.usable()).count(), both.len());
    SceneReport {
        version: METRICS_VERSION,
        sim_id_scene: sim_id_objects.hit == sim_id_objects.total,
        sim_us_scene: sim_us_objects.hit == sim_us_objects.total,
        sim_id_objects,
        sim_us_objects,
        per_object,
    }
}

/// Scene-granularity counts over several scenes: (Sim-Id, Sim-Us).
pub fn aggregate_scenes(scenes: &[SceneReport]) -> (Count, Count) {
    let n = scenes.len();
    (
        Count::new(scenes.iter().filter(|s| s.sim_id_scene).count(), n),
        Count::new(scenes.iter().filter(|s| s.sim_us_scene).count(), n),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{build_tree, LinkSpec};
    use crate::metrics::{evaluate, MetricConfig};

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn usable_report() -> MetricReport {
        let t = build_tree("o", vec![LinkSpec::with_mesh("a", "a.ply")], vec![]).unwrap();
        evaluate(&t, &t, &MetricConfig::default())
    }

    #[test]
    fn count_format() {
        assert_eq!(Count::new(15, 25).to_string(), "15/25(60%)");
        assert_eq!(Count::new(19, 25).to_string(), "19/25(76%)");
        assert_eq!(Count::new(0, 0).to_string(), "0/0(n/a)");
    }

    #[test]
    fn perfect_scene() {
        let ids = set(&["cab", "box"]);
        let reports = ids.iter().map(|id| (id.clone(), usable_report())).collect();
        let r = scene_report(&ids, &ids, &reports);
        assert!(r.sim_id_scene && r.sim_us_scene);
        assert_eq!(r.sim_us_objects, Count::new(2, 2));
    }

    #[test]
    fn missed_object() {
        let reports = [("cab".to_string(), usable_report())].into_iter().collect();
        let r = scene_report(&set(&["cab"]), &set(&["cab", "box"]), &reports);
        assert!(!r.sim_id_scene);
        assert!(r.sim_us_scene);
        assert_eq!(r.sim_id_objects, Count::new(1, 2));
        assert_eq!(r.sim_us_objects, Count::new(1, 1));
        assert_eq!(aggregate_scenes(&[r.clone(), r]).0, Count::new(0, 2));
    }
}
