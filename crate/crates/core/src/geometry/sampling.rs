use nalgebra::Point3;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CloudFrame, GeometryError, ObjectCloud, PartCloud, TriangleMesh};

/// Area-weighted uniform samples on the mesh surface.
///
/// Triangles are picked with probability proportional to area, then a point
/// is drawn with the square-root barycentric map
/// `(1 - sqrt(r1)) A + sqrt(r1) (1 - r2) B + sqrt(r1) r2 C`.
/// The generator is ChaCha8 seeded from `seed`, so the output depends only
/// on `(mesh, n, seed)`.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PartCloud, GeometryError> {
    if n == 0 {
        return Err(GeometryError::ZeroSamples);
    }
    let areas = mesh.triangle_areas();
    let picker = WeightedIndex::new(&areas).map_err(|_| GeometryError::EmptyMesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let [a, b, c] = mesh.corners(picker.sample(&mut rng));
            let s = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            Point3::from(a.coords * (1.0 - s) + b.coords * (s * (1.0 - r2)) + c.coords * (s * r2))
        })
        .collect();
    Ok(PartCloud::raw(String::new(), points))
}

/// Center on the centroid and scale so the farthest point sits on the unit
/// sphere. A cloud with zero spread keeps scale 1.
pub fn normalize_part(cloud: &PartCloud) -> Result<PartCloud, GeometryError> {
    if cloud.frame != CloudFrame::Raw {
        return Err(GeometryError::AlreadyNormalized(cloud.part_id.clone()));
    }
    let center = cloud.centroid().ok_or(GeometryError::EmptyCloud)?.coords;
    let radius = cloud.points.iter().map(|p| (p.coords - center).norm()).fold(0.0, f64::max);
    let scale = if radius > 0.0 { radius } else { 1.0 };
    let points = cloud.points.iter().map(|p| Point3::from((p.coords - center) / scale)).collect();
    Ok(PartCloud {
        part_id: cloud.part_id.clone(),
        points,
        frame: CloudFrame::Normalized { center, scale },
    })
}

/// Sample a whole object: the global cloud comes from all parts jointly
/// (area-weighted across parts, raw frame), each part cloud from its own mesh
/// and is then normalized. Every draw uses `seed`, so a part's cloud does not
/// depend on where it sits in the list.
pub fn build_object_cloud(
    object_id: &str,
    parts: &[(String, TriangleMesh)],
    n_global: usize,
    n_part: usize,
    seed: u64,
) -> Result<ObjectCloud, GeometryError> {
    if parts.is_empty() {
        return Err(GeometryError::NoParts);
    }
    let union = TriangleMesh::merged(parts.iter().map(|(_, m)| m))?;
    let mut global = sample_surface(&union, n_global, seed)?;
    global.part_id = object_id.to_string();
    let parts = parts
        .iter()
        .map(|(id, mesh)| {
            let mut raw = sample_surface(mesh, n_part, seed)?;
            raw.part_id = id.clone();
            normalize_part(&raw)
        })
        .collect::<Result<_, _>>()?;
    Ok(ObjectCloud { object_id: object_id.to_string(), global, parts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![Point3::new(0.3, -1.0, 2.0), Point3::new(1.7, 0.4, -0.5), Point3::new(-0.2, 2.2, 1.1)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn points_stay_on_the_triangle_plane() {
        let mesh = triangle();
        let [a, b, c] = mesh.corners(0);
        let normal: Vector3<f64> = (b - a).cross(&(c - a)).normalize();
        let cloud = sample_surface(&mesh, 500, 3).unwrap();
        for p in &cloud.points {
            assert!((p - a).dot(&normal).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_surface(&triangle(), 100, 42).unwrap();
        let b = sample_surface(&triangle(), 100, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_surface(&triangle(), 100, 43).unwrap();
        assert_ne!(a, c);
        assert!(matches!(sample_surface(&triangle(), 0, 1), Err(GeometryError::ZeroSamples)));
    }

    #[test]
    fn two_point_normalization() {
        let cloud = PartCloud::raw("p", vec![Point3::origin(), Point3::new(2.0, 0.0, 0.0)]);
        let n = normalize_part(&cloud).unwrap();
        assert_eq!(n.points, vec![Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)]);
        assert_eq!(n.frame, CloudFrame::Normalized { center: Vector3::new(1.0, 0.0, 0.0), scale: 1.0 });
        assert_eq!(n.denormalize().points, cloud.points);
    }

    #[test]
    fn normalization_preconditions() {
        let single = PartCloud::raw("p", vec![Point3::new(1.0, 2.0, 3.0)]);
        let n = normalize_part(&single).unwrap();
        assert_eq!(n.points, vec![Point3::origin()]);
        assert!(matches!(n.frame, CloudFrame::Normalized { scale, .. } if scale == 1.0));
        assert!(matches!(normalize_part(&n), Err(GeometryError::AlreadyNormalized(_))));
        assert!(matches!(normalize_part(&PartCloud::raw("e", vec![])), Err(GeometryError::EmptyCloud)));
    }

    #[test]
    fn single_part_global_equals_part_samples() {
        let mesh = triangle();
        let oc = build_object_cloud("obj", &[("t".into(), mesh.clone())], 256, 256, 9).unwrap();
        let raw = sample_surface(&mesh, 256, 9).unwrap();
        assert_eq!(oc.global.points, raw.points);
        assert_eq!(oc.parts[0].denormalize().points.len(), 256);
    }
}
