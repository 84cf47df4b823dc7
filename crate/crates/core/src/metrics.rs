//! Reconstruction quality measures: chamfer distance, F-score, and normal
//! consistency between sampled surfaces.
//!
//! Nearest-neighbor lookups run through the kd-tree but sums stay in input
//! order, so the results are bit-identical to the naive double loop they
//! replace.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::KdTree;
use crate::mesh::TriMesh;

/// Points with unit normals, as produced by mesh sampling.
#[derive(Debug, Clone)]
pub struct OrientedSamples {
    pub points: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FScore {
    pub f: f64,
    pub precision: f64,
    pub recall: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub chamfer: f64,
    pub fscore: FScore,
    pub normal_consistency: Option<f64>,
}

fn check_nonempty(a: &[Point3<f64>], b: &[Point3<f64>]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(())
}

/// Nearest-neighbor distance from every point of `from` into `to`,
/// in input order.
fn nearest_distances(from: &[Point3<f64>], to_tree: &KdTree) -> Vec<f64> {
    from.par_iter()
        .map(|p| to_tree.knn(p, 1, None)[0].1)
        .collect()
}

/// Symmetric chamfer distance: the two directed mean nearest-neighbor
/// distances, averaged.
pub fn chamfer(a: &[Point3<f64>], b: &[Point3<f64>]) -> Result<f64> {
    check_nonempty(a, b)?;
    let ta = KdTree::build(a);
    let tb = KdTree::build(b);
    let d_ab: f64 = nearest_distances(a, &tb).iter().sum::<f64>() / a.len() as f64;
    let d_ba: f64 = nearest_distances(b, &ta).iter().sum::<f64>() / b.len() as f64;
    Ok(0.5 * d_ab + 0.5 * d_ba)
}

/// Precision, recall, and F-score at distance threshold `tau` (closed:
/// a point exactly at `tau` counts as matched).
pub fn fscore(a: &[Point3<f64>], b: &[Point3<f64>], tau: f64) -> Result<FScore> {
    check_nonempty(a, b)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("fscore threshold must be positive"));
    }
    let ta = KdTree::build(a);
    let tb = KdTree::build(b);
    let hits = |dists: &[f64]| dists.iter().filter(|d| **d <= tau).count() as f64;
    let precision = hits(&nearest_distances(a, &tb)) / a.len() as f64;
    let recall = hits(&nearest_distances(b, &ta)) / b.len() as f64;
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(FScore {
        f,
        precision,
        recall,
        tau,
    })
}

/// Mean absolute cosine between each sample's normal and its nearest
/// neighbor's normal in the other set, symmetrized. Orientation-agnostic:
/// flipped surfaces still score 1.
pub fn normal_consistency(a: &OrientedSamples, b: &OrientedSamples) -> Result<f64> {
    check_nonempty(&a.points, &b.points)?;
    for s in [a, b] {
        if s.normals.len() != s.points.len() {
            return Err(Error::invalid("sample normals must match points"));
        }
        if s.normals.iter().any(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::invalid("sample normals must be unit length"));
        }
    }
    let directed = |from: &OrientedSamples, to: &OrientedSamples| -> f64 {
        let tree = KdTree::build(&to.points);
        let cs: Vec<f64> = from
            .points
            .par_iter()
            .zip(&from.normals)
            .map(|(p, n)| {
                let (j, _) = tree.knn(p, 1, None)[0];
                n.dot(&to.normals[j]).abs()
            })
            .collect();
        cs.iter().sum::<f64>() / cs.len() as f64
    };
    Ok(0.5 * directed(a, b) + 0.5 * directed(b, a))
}

/// Draws `n` points uniformly by area from a mesh, each carrying its face
/// normal. Deterministic for a fixed seed.
pub fn sample_mesh(mesh: &TriMesh, n: usize, seed: u64) -> Result<OrientedSamples> {
    if n == 0 {
        return Err(Error::invalid("cannot sample zero points"));
    }
    if mesh.faces.is_empty() {
        return Err(Error::Degenerate("mesh has no faces to sample".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Degenerate("mesh has zero total area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * total;
        let f = cumulative.partition_point(|c| *c < r).min(mesh.faces.len() - 1);
        let [pa, pb, pc] = mesh.face_points(f);
        // Square-root trick for uniform barycentric coordinates.
        let su = rng.random::<f64>().sqrt();
        let w = rng.random::<f64>();
        let (ba, bb, bc) = (1.0 - su, su * (1.0 - w), su * w);
        points.push(Point3::from(
            pa.coords * ba + pb.coords * bb + pc.coords * bc,
        ));
        normals.push(mesh.face_normal(f)?);
    }
    Ok(OrientedSamples { points, normals })
}

/// Bundles the three measures for two sampled surfaces.
pub fn compare_sampled(
    pred: &OrientedSamples,
    gt: &OrientedSamples,
    tau: f64,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        chamfer: chamfer(&pred.points, &gt.points)?,
        fscore: fscore(&pred.points, &gt.points, tau)?,
        normal_consistency: Some(normal_consistency(pred, gt)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_points(n: usize, seed: u64, scale: f64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-scale..scale),
                    rng.random_range(-scale..scale),
                    rng.random_range(-scale..scale),
                )
            })
            .collect()
    }

    fn brute_chamfer(a: &[Point3<f64>], b: &[Point3<f64>]) -> f64 {
        let directed = |x: &[Point3<f64>], y: &[Point3<f64>]| {
            x.iter()
                .map(|p| {
                    y.iter()
                        .map(|q| (p - q).norm())
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / x.len() as f64
        };
        0.5 * directed(a, b) + 0.5 * directed(b, a)
    }

    #[test]
    fn chamfer_matches_double_loop_exactly() {
        for seed in 0..5 {
            let a = random_points(257, seed, 2.0);
            let b = random_points(301, seed + 100, 2.0);
            let fast = chamfer(&a, &b).unwrap();
            let slow = brute_chamfer(&a, &b);
            assert_eq!(fast, slow, "seed {seed}");
        }
    }

    #[test]
    fn chamfer_identical_sets_is_zero() {
        let a = random_points(100, 7, 1.0);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_is_symmetric() {
        let a = random_points(120, 8, 1.0);
        let b = random_points(90, 9, 1.0);
        assert_eq!(chamfer(&a, &b).unwrap(), chamfer(&b, &a).unwrap());
    }

    #[test]
    fn chamfer_of_shifted_singletons_is_the_shift() {
        let a = vec![Point3::origin()];
        let b = vec![Point3::new(0.0, 3.0, 4.0)];
        assert!((chamfer(&a, &b).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn fscore_handmade_counts() {
        // a: two points on b, one far away. b: the two matched plus one far.
        let a = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(50.0, 0.0, 0.0),
        ];
        let b = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-50.0, 0.0, 0.0),
        ];
        let s = fscore(&a, &b, 0.5).unwrap();
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fscore_perfect_on_identical_sets() {
        let a = random_points(64, 10, 1.0);
        let s = fscore(&a, &a, 1e-9).unwrap();
        assert_eq!(s.f, 1.0);
    }

    #[test]
    fn fscore_zero_when_nothing_matches() {
        let a = vec![Point3::origin()];
        let b = vec![Point3::new(100.0, 0.0, 0.0)];
        let s = fscore(&a, &b, 0.1).unwrap();
        assert_eq!(s.f, 0.0);
        assert_eq!(s.precision, 0.0);
    }

    #[test]
    fn fscore_threshold_is_closed() {
        let a = vec![Point3::origin()];
        let b = vec![Point3::new(1.0, 0.0, 0.0)];
        assert_eq!(fscore(&a, &b, 1.0).unwrap().f, 1.0);
    }

    #[test]
    fn fscore_is_monotone_in_tau() {
        let a = random_points(150, 11, 1.0);
        let b = random_points(170, 12, 1.0);
        let mut prev = 0.0;
        for i in 1..=40 {
            let tau = i as f64 * 0.05;
            let s = fscore(&a, &b, tau).unwrap();
            assert!(
                s.f >= prev - 1e-15,
                "tau {tau}: f {} dropped below {prev}",
                s.f
            );
            assert!(s.precision >= 0.0 && s.precision <= 1.0);
            prev = s.f;
        }
        assert_eq!(prev, 1.0, "large tau must match everything");
    }

    fn with_normals(points: Vec<Point3<f64>>, n: Vector3<f64>) -> OrientedSamples {
        let normals = vec![n; points.len()];
        OrientedSamples { points, normals }
    }

    #[test]
    fn normal_consistency_ignores_sign() {
        let a = with_normals(random_points(50, 13, 1.0), Vector3::z());
        let mut b = a.clone();
        b.normals.iter_mut().for_each(|n| *n = -*n);
        assert!((normal_consistency(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_consistency_orthogonal_is_zero() {
        let pts = random_points(50, 14, 1.0);
        let a = with_normals(pts.clone(), Vector3::z());
        let b = with_normals(pts, Vector3::x());
        assert!(normal_consistency(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn normal_consistency_rejects_unnormalized() {
        let a = with_normals(random_points(5, 15, 1.0), Vector3::z() * 2.0);
        let b = with_normals(random_points(5, 16, 1.0), Vector3::z());
        assert!(normal_consistency(&a, &b).is_err());
    }

    fn square_pair() -> TriMesh {
        // One huge triangle (area 50) and one tiny (area 0.02).
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(10.0, 0.0, 0.0),
            Point3::new(0.0, 10.0, 0.0),
            Point3::new(-0.2, 0.0, 0.0),
            Point3::new(-0.2, -0.2, 0.0),
            Point3::new(0.0, -0.2, 0.0),
        ];
        TriMesh::new(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap()
    }

    #[test]
    fn sampling_follows_area() {
        let m = square_pair();
        let s = sample_mesh(&m, 20_000, 99).unwrap();
        let tiny = s
            .points
            .iter()
            .filter(|p| p.x < 0.0 || p.y < 0.0)
            .count() as f64;
        let frac = tiny / 20_000.0;
        let expect = 0.02 / 50.02;
        assert!(
            (frac - expect).abs() < 0.01,
            "tiny-face fraction {frac}, expected about {expect}"
        );
        // Samples stay on the z = 0 plane of both faces.
        assert!(s.points.iter().all(|p| p.z == 0.0));
        assert!(s.normals.iter().all(|n| (n.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let m = square_pair();
        let a = sample_mesh(&m, 500, 4).unwrap();
        let b = sample_mesh(&m, 500, 4).unwrap();
        let c = sample_mesh(&m, 500, 5).unwrap();
        assert_eq!(a.points, b.points);
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn zero_area_mesh_is_rejected() {
        let v = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ];
        let m = TriMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(sample_mesh(&m, 10, 0).is_err());
    }
}
