//! Part geometry: triangle meshes, sampled point clouds, per-part
//! normalization, and the feature-encoder interface.

mod features;
mod io;
mod sampling;

use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use serde::Serialize;
use thiserror::Error;

pub use features::{encode, encode_global, FeatureBackend, RemoteFeatureBackend, StubBackend};
pub use io::{load_mesh, parse_obj, parse_ply, write_cloud_ply, MeshFormat};
pub use sampling::{build_object_cloud, normalize_part, sample_surface};

/// Default number of surface samples per part and for the whole object.
pub const DEFAULT_SAMPLES: usize = 8192;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error at byte {position}: {message}")]
    Format { position: usize, message: String },
    #[error("unsupported mesh format for {0}")]
    UnsupportedFormat(PathBuf),
    #[error("triangle {triangle} references vertex {index}, but only {count} vertices exist")]
    IndexOutOfRange { triangle: usize, index: usize, count: usize },
    #[error("mesh has no non-degenerate triangles")]
    EmptyMesh,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("cloud `{0}` is already normalized")]
    AlreadyNormalized(String),
    #[error("object needs at least one part")]
    NoParts,
    #[error("feature backend unavailable: {0}")]
    BackendUnavailable(String),
}

impl GeometryError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        GeometryError::Io { path: path.to_path_buf(), source }
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn from_points<'a, I: IntoIterator<Item = &'a Point3<f64>>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        Some(it.fold(Aabb { min: first, max: first }, |b, p| b.including(p)))
    }

    pub fn including(self, p: &Point3<f64>) -> Self {
        Aabb { min: self.min.inf(p), max: self.max.sup(p) }
    }

    pub fn union(self, other: &Aabb) -> Self {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extents(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extents().norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, dropping zero-area triangles. Fails if an index is out
    /// of range or nothing survives the filter.
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        let count = vertices.len();
        let mut kept = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.into_iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i as usize >= count) {
                return Err(GeometryError::IndexOutOfRange { triangle: t, index: bad as usize, count });
            }
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            if !is_degenerate(&a, &b, &c) {
                kept.push(tri);
            }
        }
        if kept.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        Ok(Self { vertices, triangles: kept })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn corners(&self, t: usize) -> [Point3<f64>; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_areas(&self) -> Vec<f64> {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .collect()
    }

    pub fn area(&self) -> f64 {
        self.triangle_areas().iter().sum()
    }

    /// Bounding box of the vertices actually used by triangles.
    pub fn aabb(&self) -> Aabb {
        let used = self.triangles.iter().flatten().map(|&i| &self.vertices[i as usize]);
        Aabb::from_points(used).expect("mesh has at least one triangle")
    }

    /// Concatenation of several meshes into one.
    pub fn merged<'a, I: IntoIterator<Item = &'a TriangleMesh>>(meshes: I) -> Result<Self, GeometryError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for m in meshes {
            let offset = vertices.len() as u32;
            vertices.extend_from_slice(&m.vertices);
            triangles.extend(m.triangles.iter().map(|t| t.map(|i| i + offset)));
        }
        Self::new(vertices, triangles)
    }

    pub fn map_vertices<F: Fn(&Point3<f64>) -> Point3<f64>>(&self, f: F) -> Self {
        Self { vertices: self.vertices.iter().map(f).collect(), triangles: self.triangles.clone() }
    }
}

fn is_degenerate(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> bool {
    let (e1, e2) = (b - a, c - a);
    let cross = e1.cross(&e2).norm();
    let scale = e1.norm_squared().max(e2.norm_squared());
    !(cross.is_finite() && cross > 1e-12 * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CloudFrame {
    Raw,
    /// `raw = normalized * scale + center`
    Normalized { center: Vector3<f64>, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartCloud {
    pub part_id: String,
    pub points: Vec<Point3<f64>>,
    pub frame: CloudFrame,
}

impl PartCloud {
    pub fn raw(part_id: impl Into<String>, points: Vec<Point3<f64>>) -> Self {
        Self { part_id: part_id.into(), points, frame: CloudFrame::Raw }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.points.len() as f64))
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }

    /// The cloud expressed back in its source frame.
    pub fn denormalize(&self) -> PartCloud {
        match self.frame {
            CloudFrame::Raw => self.clone(),
            CloudFrame::Normalized { center, scale } => PartCloud::raw(
                self.part_id.clone(),
                self.points.iter().map(|p| Point3::from(p.coords * scale + center)).collect(),
            ),
        }
    }
}

/// Whole-object samples plus per-part normalized clouds in canonical token order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectCloud {
    pub object_id: String,
    pub global: PartCloud,
    pub parts: Vec<PartCloud>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Geometry bound to a link.
#[derive(Debug, Clone, PartialEq)]
pub enum PartGeometry {
    /// Mesh on disk, loaded on demand.
    MeshFile(PathBuf),
    /// Loaded mesh plus the path the URDF should reference.
    Mesh { reference: String, mesh: TriangleMesh },
    Cloud(PartCloud),
}

impl PartGeometry {
    /// Bounding box in the object's raw frame.
    pub fn aabb(&self) -> Result<Aabb, GeometryError> {
        match self {
            PartGeometry::MeshFile(path) => Ok(load_mesh(path, MeshFormat::from_path(path)?)?.aabb()),
            PartGeometry::Mesh { mesh, .. } => Ok(mesh.aabb()),
            PartGeometry::Cloud(cloud) => cloud.denormalize().aabb().ok_or(GeometryError::EmptyCloud),
        }
    }

    /// What a URDF `<mesh filename>` should say for this geometry.
    pub fn reference(&self) -> Option<String> {
        match self {
            PartGeometry::MeshFile(path) => Some(path.to_string_lossy().replace('\\', "/")),
            PartGeometry::Mesh { reference, .. } => Some(reference.clone()),
            PartGeometry::Cloud(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_triangles_are_dropped() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ];
        let m = TriangleMesh::new(v.clone(), vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(m.triangles().len(), 1);
        assert!(matches!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]), Err(GeometryError::EmptyMesh)));
        assert!(matches!(
            TriangleMesh::new(v, vec![[0, 1, 9]]),
            Err(GeometryError::IndexOutOfRange { index: 9, .. })
        ));
    }

    #[test]
    fn aabb_basics() {
        let b = Aabb::from_points(&[Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 2.0, 2.0)]).unwrap();
        assert_eq!(b.diagonal(), 3.0);
        assert_eq!(b.center(), Point3::new(0.5, 1.0, 1.0));
    }
}
