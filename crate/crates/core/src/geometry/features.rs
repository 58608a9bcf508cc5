//! Point-cloud feature encoders. The neural encoder is not part of this crate;
//! [`StubBackend`] gives deterministic hand-built descriptors and
//! [`RemoteFeatureBackend`] forwards clouds to an external service.

use std::time::Duration;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{normalize_part, FeatureVector, GeometryError, ObjectCloud, PartCloud};

pub trait FeatureBackend: Send + Sync {
    /// Output dimension, fixed for the lifetime of the backend.
    fn dim(&self) -> usize;

    fn encode(&self, cloud: &PartCloud) -> Result<FeatureVector, GeometryError>;

    /// Whether `encode` may be called from several threads at once.
    fn concurrent(&self) -> bool;
}

pub fn encode(backend: &dyn FeatureBackend, cloud: &PartCloud) -> Result<FeatureVector, GeometryError> {
    backend.encode(cloud)
}

/// Encodes the whole-object cloud after normalizing it with its own
/// centroid and radius.
pub fn encode_global(backend: &dyn FeatureBackend, cloud: &ObjectCloud) -> Result<FeatureVector, GeometryError> {
    backend.encode(&normalize_part(&cloud.global)?)
}

/// 16-dim descriptor: centroid (3), bbox extents (3), max radius from the
/// centroid (1), per-axis standard deviation (3), point count * 1e-4 (1),
/// zero padding (5).
#[derive(Debug, Clone, Copy, Default)]
pub struct StubBackend;

impl StubBackend {
    pub const DIM: usize = 16;
}

impl FeatureBackend for StubBackend {
    fn dim(&self) -> usize {
        Self::DIM
    }

    fn encode(&self, cloud: &PartCloud) -> Result<FeatureVector, GeometryError> {
        let centroid = cloud.centroid().ok_or(GeometryError::EmptyCloud)?.coords;
        let bbox = cloud.aabb().ok_or(GeometryError::EmptyCloud)?;
        let n = cloud.points.len() as f64;
        let mut radius: f64 = 0.0;
        let mut var = Vector3::zeros();
        for p in &cloud.points {
            let d = p.coords - centroid;
            radius = radius.max(d.norm());
            var += d.component_mul(&d);
        }
        let std = (var / n).map(f64::sqrt);

        let mut values = Vec::with_capacity(Self::DIM);
        values.extend(centroid.iter());
        values.extend(bbox.extents().iter());
        values.push(radius);
        values.extend(std.iter());
        values.push(n * 1e-4);
        values.resize(Self::DIM, 0.0);
        Ok(FeatureVector { values })
    }

    fn concurrent(&self) -> bool {
        true
    }
}

/// Sends `{"points": [[x, y, z], ...]}` to `endpoint` and expects
/// `{"features": [...]}` of length `dim` back.
#[derive(Debug, Clone)]
pub struct RemoteFeatureBackend {
    endpoint: String,
    dim: usize,
    timeout: Duration,
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    points: Vec<[f64; 3]>,
    part_id: &'a str,
}

#[derive(Deserialize)]
struct EncodeResponse {
    features: Vec<f64>,
}

impl RemoteFeatureBackend {
    pub fn new(endpoint: impl Into<String>, dim: usize, timeout: Duration) -> Self {
        Self { endpoint: endpoint.into(), dim, timeout }
    }
}

impl FeatureBackend for RemoteFeatureBackend {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, cloud: &PartCloud) -> Result<FeatureVector, GeometryError> {
        let unavailable = |e: &dyn std::fmt::Display| GeometryError::BackendUnavailable(e.to_string());
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| unavailable(&e))?;
        let body = EncodeRequest {
            points: cloud.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            part_id: &cloud.part_id,
        };
        let resp = client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| unavailable(&e))?;
        let parsed: EncodeResponse = resp.json().map_err(|e| unavailable(&e))?;
        if parsed.features.len() != self.dim || !parsed.features.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::BackendUnavailable(format!(
                "expected {} finite features, got {}",
                self.dim,
                parsed.features.len()
            )));
        }
        Ok(FeatureVector { values: parsed.features })
    }

    fn concurrent(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_surface, TriangleMesh};
    use nalgebra::Point3;

    #[test]
    fn stub_on_normalized_cloud() {
        let mesh = TriangleMesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(4.0, 0.0, 0.0), Point3::new(0.0, 3.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let cloud = normalize_part(&sample_surface(&mesh, 2000, 5).unwrap()).unwrap();
        let f = StubBackend.encode(&cloud).unwrap();
        assert_eq!(f.dim(), 16);
        assert!(f.values[..3].iter().all(|c| c.abs() < 1e-6));
        assert!((f.values[6] - 1.0).abs() < 1e-9);
        assert!((f.values[10] - 0.2).abs() < 1e-12);
        assert!(f.values[11..].iter().all(|&v| v == 0.0));
        assert_eq!(f, StubBackend.encode(&cloud).unwrap());
    }

    #[test]
    fn unreachable_remote_is_unavailable() {
        // Port 9 on loopback (discard) is closed in the test environment.
        let backend = RemoteFeatureBackend::new("http://127.0.0.1:9/encode", 16, Duration::from_millis(500));
        let cloud = PartCloud::raw("p", vec![Point3::origin()]);
        assert!(matches!(backend.encode(&cloud), Err(GeometryError::BackendUnavailable(_))));
    }
}
