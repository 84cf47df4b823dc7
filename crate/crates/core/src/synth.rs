//! Synthetic test clouds: a sphere with a bright intensity channel, a flat
//! plane built from bands of differing color and sampling density, and a
//! set of corruption models for robustness experiments.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Uniformly distributed points on a sphere of `radius` around the origin,
/// with a bright scattered "intensity" channel.
pub fn gen_sphere(n: usize, radius: f64, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::invalid("sphere radius must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for _ in 0..n {
        // Uniform area element: z uniform, azimuth uniform.
        let z = rng.random_range(-1.0..=1.0);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let r_xy = (1.0f64 - z * z).max(0.0).sqrt();
        pts.push(Point3::new(
            radius * r_xy * phi.cos(),
            radius * r_xy * phi.sin(),
            radius * z,
        ));
        intensity.push(rng.random_range(0.75..0.95));
    }
    PointCloud::new(pts)?.with_attribute("intensity", intensity)
}

/// One stripe of the banded plane: covers x up to `x_end` with its own
/// grid pitch and constant intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneBand {
    pub x_end: f64,
    pub intensity: f64,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSpec {
    pub x_start: f64,
    pub y_extent: f64,
    pub bands: Vec<PlaneBand>,
    /// Neighbor count for the per-point density channel.
    pub density_k: usize,
}

impl Default for PlaneSpec {
    fn default() -> Self {
        PlaneSpec {
            x_start: 0.0,
            y_extent: 1.0,
            bands: vec![
                PlaneBand {
                    x_end: 1.0,
                    intensity: 0.8,
                    spacing: 0.02,
                },
                PlaneBand {
                    x_end: 2.0,
                    intensity: 0.2,
                    spacing: 0.04,
                },
            ],
            density_k: 8,
        }
    }
}

/// Flat z = 0 cloud made of x-bands, carrying "intensity" (per band) and
/// "density" (1 / mean-neighbor-distance cubed) channels. The density
/// channel makes sampling-rate transitions visible to attribute
/// separability even where geometry is featureless.
pub fn gen_colored_plane(spec: &PlaneSpec) -> Result<PointCloud> {
    if spec.bands.is_empty() {
        return Err(Error::invalid("plane needs at least one band"));
    }
    if !(spec.y_extent > 0.0) {
        return Err(Error::invalid("plane y extent must be positive"));
    }
    let mut x_lo = spec.x_start;
    let mut pts = Vec::new();
    let mut intensity = Vec::new();
    for band in &spec.bands {
        if !(band.spacing > 0.0) || band.x_end <= x_lo {
            return Err(Error::invalid(
                "plane bands need positive spacing and increasing x_end",
            ));
        }
        let nx = ((band.x_end - x_lo) / band.spacing).floor() as usize;
        let ny = (spec.y_extent / band.spacing).floor() as usize + 1;
        for ix in 0..nx {
            let x = x_lo + (ix as f64 + 0.5) * band.spacing;
            for iy in 0..ny {
                pts.push(Point3::new(x, iy as f64 * band.spacing, 0.0));
                intensity.push(band.intensity);
            }
        }
        x_lo = band.x_end;
    }
    let cloud = PointCloud::new(pts)?.with_attribute("intensity", intensity)?;
    let density: Result<Vec<f64>> = (0..cloud.len())
        .map(|i| {
            let d = cloud.mean_knn_distance(i, spec.density_k)?;
            Ok(1.0 / (d * d * d))
        })
        .collect();
    cloud.with_attribute("density", density?)
}

/// Appends one Gaussian-perturbed copy of every point: the cloud doubles
/// and half of it lies. Duplicates keep their source point's attribute
/// values. `sigma` is a fraction of the bounding-box diagonal, so `sigma=0`
/// duplicates coincide with their originals.
pub fn add_duplicated_outliers(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid("outlier sigma must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = normal_dist(sigma * cloud.bounding_box().diagonal())?;
    let mut positions = Vec::with_capacity(cloud.len() * 2);
    positions.extend_from_slice(cloud.positions());
    for i in 0..cloud.len() {
        positions.push(
            cloud.position(i)
                + Vector3::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                ),
        );
    }
    let names: Vec<String> = cloud.attribute_names().map(String::from).collect();
    let mut out = PointCloud::new(positions)?;
    for name in names {
        let channel = cloud.attribute(&name).unwrap();
        let mut doubled = channel.to_vec();
        doubled.extend_from_slice(channel);
        out = out.with_attribute(name, doubled)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    /// Perturb every point in place with isotropic Gaussian noise.
    GaussianNoise,
    /// Add displaced copies of random points.
    DuplicatedOutliers,
    /// Add dense blobs far outside the cloud.
    RegionOutliers,
    /// Add copies pushed outward from the centroid, a crust of false
    /// surface just above the real one.
    SurfaceOutliers,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// Noise scale as a fraction of the bounding-box diagonal.
    pub sigma: f64,
    /// Added points as a fraction of the input size; ignored when `count`
    /// is nonzero or for in-place noise.
    pub ratio: f64,
    pub count: usize,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn noise(sigma: f64, seed: u64) -> Self {
        CorruptionSpec {
            kind: CorruptionKind::GaussianNoise,
            sigma,
            ratio: 0.0,
            count: 0,
            seed,
        }
    }

    pub fn added(kind: CorruptionKind, sigma: f64, ratio: f64, seed: u64) -> Self {
        CorruptionSpec {
            kind,
            sigma,
            ratio,
            count: 0,
            seed,
        }
    }

    fn added_count(&self, n: usize) -> usize {
        if self.count > 0 {
            self.count
        } else {
            (self.ratio * n as f64).round() as usize
        }
    }
}

/// Returns a corrupted copy of the cloud. Added points carry a dark
/// "intensity" (outliers are unlit in the scenarios this models); other
/// attribute channels copy their source point, or the channel mean when
/// there is no source.
pub fn corrupt(cloud: &PointCloud, spec: &CorruptionSpec) -> Result<PointCloud> {
    if !(spec.sigma.is_finite() && spec.sigma >= 0.0) {
        return Err(Error::invalid("corruption sigma must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let diag = cloud.bounding_box().diagonal();
    let sigma_abs = spec.sigma * diag;
    let names: Vec<String> = cloud.attribute_names().map(String::from).collect();

    let mut positions = cloud.positions().to_vec();
    let mut channels: Vec<Vec<f64>> = names
        .iter()
        .map(|n| cloud.attribute(n).unwrap().to_vec())
        .collect();

    match spec.kind {
        CorruptionKind::GaussianNoise => {
            let normal = normal_dist(sigma_abs)?;
            for p in &mut positions {
                *p += Vector3::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                );
            }
        }
        CorruptionKind::DuplicatedOutliers => {
            let normal = normal_dist(sigma_abs)?;
            for _ in 0..spec.added_count(cloud.len()) {
                let src = rng.random_range(0..cloud.len());
                let p = cloud.position(src)
                    + Vector3::new(
                        normal.sample(&mut rng),
                        normal.sample(&mut rng),
                        normal.sample(&mut rng),
                    );
                positions.push(p);
                push_added_attributes(&names, &mut channels, cloud, Some(src), &mut rng);
            }
        }
        CorruptionKind::RegionOutliers => {
            let center = cloud.bounding_box().center();
            let dirs = [
                Vector3::new(1.0, 0.3, 0.1).normalize(),
                Vector3::new(-0.4, 1.0, -0.2).normalize(),
                Vector3::new(0.2, -0.5, -1.0).normalize(),
            ];
            let blob = normal_dist(0.05 * diag)?;
            let total = spec.added_count(cloud.len());
            for i in 0..total {
                let c = center + dirs[i % dirs.len()] * (1.2 * diag);
                positions.push(
                    c + Vector3::new(
                        blob.sample(&mut rng),
                        blob.sample(&mut rng),
                        blob.sample(&mut rng),
                    ),
                );
                push_added_attributes(&names, &mut channels, cloud, None, &mut rng);
            }
        }
        CorruptionKind::SurfaceOutliers => {
            let centroid = Point3::from(
                cloud
                    .positions()
                    .iter()
                    .map(|p| p.coords)
                    .sum::<Vector3<f64>>()
                    / cloud.len() as f64,
            );
            let normal = normal_dist(sigma_abs)?;
            for _ in 0..spec.added_count(cloud.len()) {
                let src = rng.random_range(0..cloud.len());
                let p = cloud.position(src);
                let radial = p - centroid;
                let dir = if radial.norm() > 0.0 {
                    radial.normalize()
                } else {
                    Vector3::z()
                };
                let lift: f64 = normal.sample(&mut rng);
                positions.push(p + dir * lift.abs());
                push_added_attributes(&names, &mut channels, cloud, Some(src), &mut rng);
            }
        }
    }

    let mut out = PointCloud::new(positions)?;
    for (name, values) in names.into_iter().zip(channels) {
        out = out.with_attribute(name, values)?;
    }
    Ok(out)
}

fn normal_dist(sigma: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sigma).map_err(|e| Error::invalid(format!("bad noise sigma: {e}")))
}

fn push_added_attributes(
    names: &[String],
    channels: &mut [Vec<f64>],
    cloud: &PointCloud,
    src: Option<usize>,
    rng: &mut ChaCha8Rng,
) {
    for (name, channel) in names.iter().zip(channels.iter_mut()) {
        let v = if name == "intensity" {
            rng.random_range(0.05..0.35)
        } else if let Some(s) = src {
            cloud.attribute(name).unwrap()[s]
        } else {
            let vals = cloud.attribute(name).unwrap();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        channel.push(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_points_have_exact_radius() {
        let c = gen_sphere(2000, 1.5, 3).unwrap();
        for p in c.positions() {
            assert!((p.coords.norm() - 1.5).abs() < 1e-12);
        }
        let i = c.attribute("intensity").unwrap();
        assert!(i.iter().all(|v| (0.75..0.95).contains(v)));
    }

    #[test]
    fn sphere_is_roughly_uniform() {
        let c = gen_sphere(20_000, 1.0, 4).unwrap();
        let mean = c
            .positions()
            .iter()
            .map(|p| p.coords)
            .sum::<Vector3<f64>>()
            / c.len() as f64;
        assert!(mean.norm() < 0.02, "centroid drifted to {mean:?}");
        // Octant occupancy within 20% of the uniform share.
        let octant = c
            .positions()
            .iter()
            .filter(|p| p.x > 0.0 && p.y > 0.0 && p.z > 0.0)
            .count() as f64
            / c.len() as f64;
        assert!((octant - 0.125).abs() < 0.025);
    }

    #[test]
    fn sphere_is_seed_deterministic() {
        let a = gen_sphere(100, 1.0, 7).unwrap();
        let b = gen_sphere(100, 1.0, 7).unwrap();
        let c = gen_sphere(100, 1.0, 8).unwrap();
        assert_eq!(a.positions(), b.positions());
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn plane_bands_carry_their_intensity_and_density() {
        let spec = PlaneSpec::default();
        let c = gen_colored_plane(&spec).unwrap();
        assert!(c.positions().iter().all(|p| p.z == 0.0));
        let intensity = c.attribute("intensity").unwrap();
        let density = c.attribute("density").unwrap();
        let mut fine = Vec::new();
        let mut coarse = Vec::new();
        for (p, (i, d)) in c
            .positions()
            .iter()
            .zip(intensity.iter().zip(density.iter()))
        {
            if p.x < 1.0 {
                assert_eq!(*i, 0.8);
                fine.push(*d);
            } else {
                assert_eq!(*i, 0.2);
                coarse.push(*d);
            }
        }
        assert!(!fine.is_empty() && !coarse.is_empty());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        // Half the pitch means roughly 8x the cubic density.
        let ratio = mean(&fine) / mean(&coarse);
        assert!(ratio > 4.0, "density contrast only {ratio}");
    }

    #[test]
    fn plane_rejects_bad_bands() {
        let mut spec = PlaneSpec::default();
        spec.bands[1].x_end = 0.5;
        assert!(gen_colored_plane(&spec).is_err());
        let mut spec2 = PlaneSpec::default();
        spec2.bands[0].spacing = 0.0;
        assert!(gen_colored_plane(&spec2).is_err());
    }

    #[test]
    fn gaussian_noise_keeps_count_and_attributes() {
        let c = gen_sphere(500, 1.0, 1).unwrap();
        let spec = CorruptionSpec::noise(0.01, 2);
        let noisy = corrupt(&c, &spec).unwrap();
        assert_eq!(noisy.len(), c.len());
        assert_eq!(
            noisy.attribute("intensity").unwrap(),
            c.attribute("intensity").unwrap()
        );
        let moved = c
            .positions()
            .iter()
            .zip(noisy.positions())
            .filter(|(a, b)| a != b)
            .count();
        assert!(moved > 490);
    }

    #[test]
    fn duplicated_outliers_sit_near_sources_with_dark_intensity() {
        let c = gen_sphere(400, 1.0, 5).unwrap();
        let spec = CorruptionSpec::added(CorruptionKind::DuplicatedOutliers, 0.02, 0.25, 6);
        let out = corrupt(&c, &spec).unwrap();
        assert_eq!(out.len(), 500);
        let diag = c.bounding_box().diagonal();
        let intensity = out.attribute("intensity").unwrap();
        for id in 400..500 {
            let p = out.position(id);
            // Within a few sigma of the sphere surface.
            assert!((p.coords.norm() - 1.0).abs() < 6.0 * 0.02 * diag);
            assert!(intensity[id] < 0.35);
        }
    }

    #[test]
    fn region_outliers_land_far_outside() {
        let c = gen_sphere(300, 1.0, 9).unwrap();
        let spec = CorruptionSpec {
            kind: CorruptionKind::RegionOutliers,
            sigma: 0.0,
            ratio: 0.0,
            count: 90,
            seed: 10,
        };
        let out = corrupt(&c, &spec).unwrap();
        assert_eq!(out.len(), 390);
        for id in 300..390 {
            assert!(out.position(id).coords.norm() > 1.5);
        }
    }

    #[test]
    fn surface_outliers_move_outward() {
        let c = gen_sphere(300, 1.0, 11).unwrap();
        let spec = CorruptionSpec::added(CorruptionKind::SurfaceOutliers, 0.02, 0.2, 12);
        let out = corrupt(&c, &spec).unwrap();
        assert_eq!(out.len(), 360);
        for id in 300..360 {
            assert!(out.position(id).coords.norm() >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn corruption_is_seed_deterministic() {
        let c = gen_sphere(200, 1.0, 13).unwrap();
        let spec = CorruptionSpec::added(CorruptionKind::DuplicatedOutliers, 0.05, 0.5, 14);
        let a = corrupt(&c, &spec).unwrap();
        let b = corrupt(&c, &spec).unwrap();
        assert_eq!(a.positions(), b.positions());
        assert_eq!(a.attribute("intensity"), b.attribute("intensity"));
    }

    #[test]
    fn duplicated_outliers_double_the_cloud() {
        let c = gen_sphere(150, 1.0, 15).unwrap();
        let out = add_duplicated_outliers(&c, 0.1, 16).unwrap();
        assert_eq!(out.len(), 300);
        // Originals keep position and attributes; duplicates copy the
        // attributes of their source row.
        let int_in = c.attribute("intensity").unwrap();
        let int_out = out.attribute("intensity").unwrap();
        for i in 0..150 {
            assert_eq!(out.position(i), c.position(i));
            assert_eq!(int_out[i], int_in[i]);
            assert_eq!(int_out[150 + i], int_in[i]);
        }
    }

    #[test]
    fn duplicated_outliers_sigma_zero_coincide() {
        let c = gen_sphere(80, 1.0, 17).unwrap();
        let out = add_duplicated_outliers(&c, 0.0, 18).unwrap();
        for i in 0..80 {
            assert_eq!(out.position(80 + i), c.position(i));
        }
    }

    #[test]
    fn duplicated_outliers_seed_swings_the_noise() {
        let c = gen_sphere(80, 1.0, 19).unwrap();
        let a = add_duplicated_outliers(&c, 0.05, 20).unwrap();
        let b = add_duplicated_outliers(&c, 0.05, 20).unwrap();
        let d = add_duplicated_outliers(&c, 0.05, 21).unwrap();
        assert_eq!(a.positions(), b.positions());
        assert_ne!(a.positions(), d.positions());
    }
}
