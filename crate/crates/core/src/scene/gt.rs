use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{SceneDescription, SceneError};
use crate::geometry::PartGeometry;
use crate::kinematics::{ArticulatedObject, KinematicTree};
use crate::urdf::{parse_urdf, Strictness};

/// Ground truth for one scene: the set of articulable asset ids and a URDF
/// per articulable object.
#[derive(Debug, Clone)]
pub struct GtBundle {
    pub articulable: BTreeSet<String>,
    pub trees: BTreeMap<String, KinematicTree>,
}

#[derive(Deserialize)]
struct GtIndex {
    articulable: Vec<String>,
}

/// Read `gt.json` (`{"articulable": [...]}`) and `<asset_id>.urdf` for each
/// listed id from `dir`. URDFs are parsed leniently.
pub fn load_gt(dir: &Path) -> Result<GtBundle, SceneError> {
    let index_path = dir.join("gt.json");
    let text = fs::read_to_string(&index_path).map_err(|e| SceneError::io(&index_path, e))?;
    let index: GtIndex = serde_json::from_str(&text)
        .map_err(|e| SceneError::GroundTruth(format!("{}: {e}", index_path.display())))?;
    let mut trees = BTreeMap::new();
    for id in &index.articulable {
        let path = dir.join(format!("{id}.urdf"));
        let text = fs::read_to_string(&path).map_err(|e| SceneError::io(&path, e))?;
        let doc = parse_urdf(&text, Strictness::Lenient)
            .map_err(|e| SceneError::GroundTruth(format!("{}: {e}", path.display())))?;
        trees.insert(id.clone(), doc.tree);
    }
    Ok(GtBundle { articulable: index.articulable.into_iter().collect(), trees })
}

impl GtBundle {
    /// The gt object for `asset_id`, with geometry taken from the scene's
    /// mesh files (matched to links by file stem).
    pub fn object(&self, scene: &SceneDescription, asset_id: &str) -> Option<ArticulatedObject> {
        let tree = self.trees.get(asset_id)?.clone();
        let entry = scene.object(asset_id)?;
        let parts = entry
            .mesh_paths
            .iter()
            .filter_map(|p| {
                let stem = Path::new(p).file_stem()?.to_string_lossy().into_owned();
                tree.link(&stem)?;
                Some((stem, PartGeometry::MeshFile(scene.mesh_path(p))))
            })
            .collect();
        Some(ArticulatedObject { tree, parts, root_pose: entry.pose, scale: entry.scale })
    }
}
