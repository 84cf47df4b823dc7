//! Scratch experiments; not part of the suite.

use std::time::Instant;

use nalgebra::{Point3, Vector3};
use sepmembrane::metrics::{chamfer, fscore};
use sepmembrane::synth::{add_duplicated_outliers, corrupt, gen_sphere, CorruptionKind, CorruptionSpec};
use sepmembrane::{reconstruct, DensityMode, MembraneConfig, PointCloud, SeparabilityWeights};

fn sphere_truth(n: usize, seed: u64) -> Vec<Point3<f64>> {
    gen_sphere(n, 1.0, seed).unwrap().positions().to_vec()
}

fn surface_points(mesh_cfg: &MembraneConfig, cloud: &PointCloud) -> (Vec<Point3<f64>>, f64, usize) {
    let t0 = Instant::now();
    let rec = reconstruct(cloud, mesh_cfg).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let grid = rec.surface.sample_grid(256, 128).unwrap();
    (grid.points, secs, rec.trace.records.len())
}

fn crit5_config() -> MembraneConfig {
    MembraneConfig {
        init_grid: (8, 8),
        max_grid: (8, 8),
        search_extents: [0.15, 0.07, 0.07],
        beta: 0.7,
        n_splits: 65,
        sample_override: Some((32, 32)),
        patience: 25,
        max_iterations: 120,
        deterministic: true,
        ..MembraneConfig::default()
    }
}

#[test]
#[ignore]
fn probe_outliers() {
    let truth = sphere_truth(100_000, 99);
    let tau = 0.01 * (2.0f64 * 3.0f64.sqrt());
    let clean = gen_sphere(1000, 1.0, 5).unwrap();
    for (k, ff) in [(3usize, 0.04), (3, 0.06), (4, 0.04), (4, 0.06)] {
        println!("k{k} f{ff}:");
        for sigma in [0.0, 0.1, 0.25] {
            let cloud = add_duplicated_outliers(&clean, sigma, 17).unwrap();
            let cfg = MembraneConfig {
                search_extents: [0.10, ff, ff],
                n_splits: 65,
                patience: 30,
                max_iterations: 300,
                density_mode: DensityMode::PerRegion,
                k,
                ..crit5_config()
            };
            let rec = reconstruct(&cloud, &cfg).unwrap();
            let grid = rec.surface.sample_grid(256, 128).unwrap();
            let radii: Vec<f64> = grid.points.iter().map(|p| p.coords.norm()).collect();
            let mean = radii.iter().sum::<f64>() / radii.len() as f64;
            let min = radii.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = radii.iter().cloned().fold(0.0f64, f64::max);
            let pts = grid.points;
            let cd = chamfer(&pts, &truth).unwrap();
            let f = fscore(&pts, &truth, tau).unwrap();
            println!(
                "  sigma {sigma}: cd {cd:.4} f {:.4} (p {:.3} r {:.3}) r[{min:.2} {mean:.2} {max:.2}] its {}",
                f.f,
                f.precision,
                f.recall,
                rec.trace.records.len()
            );
        }
    }
}

#[test]
#[ignore]
fn probe_window() {
    use sepmembrane::{Cuboid, SeparabilityEvaluator};
    let clean = gen_sphere(1000, 1.0, 5).unwrap();
    for sigma in [0.1, 0.25] {
        let cloud = add_duplicated_outliers(&clean, sigma, 17).unwrap();
        let diag = cloud.bounding_box().diagonal();
        println!("sigma {sigma} diag {diag:.2}");
        for k in [3, 4, 6, 8] {
            let ev = SeparabilityEvaluator::new(
                &cloud,
                SeparabilityWeights::point_only(),
                DensityMode::PerRegion,
                k,
            )
            .unwrap();
            for (df, ff) in [(0.10, 0.04), (0.10, 0.06)] {
                let ext = [df * diag, ff * diag, ff * diag];
                print!("  k{k} d{df} f{ff}: ");
                for rc in [0.9, 1.0, 1.1, 1.2, 1.4, 1.8, 2.5] {
                    let c = Cuboid::new(
                        Point3::new(rc, 0.0, 0.0),
                        [Vector3::x(), Vector3::y(), Vector3::z()],
                        ext,
                    )
                    .unwrap();
                    let s = ev.max_split(&c, 129).unwrap();
                    print!("{rc}:{:+.2}/{:.2} ", s.split_offset, s.eta_star);
                }
                println!();
            }
        }
    }
}

fn lobed_cloud(n: usize, seed: u64) -> PointCloud {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let lobe1 = Vector3::new(1.0, 0.0, 0.0);
    let lobe2 = Vector3::new(-0.5, 0.8, 0.0).normalize();
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = rng.random_range(-1.0..=1.0);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let r_xy = (1.0 - z * z).max(0.0).sqrt();
        let dir = Vector3::new(r_xy * phi.cos(), r_xy * phi.sin(), z);
        let base = 1.0 / ((dir.x / 1.0).powi(2) + (dir.y / 0.75).powi(2) + (dir.z / 0.65).powi(2))
            .sqrt();
        let bump = 0.35 * (8.0 * (dir.dot(&lobe1) - 1.0)).exp()
            + 0.3 * (8.0 * (dir.dot(&lobe2) - 1.0)).exp();
        pts.push(Point3::from(dir * (base * (1.0 + bump))));
    }
    PointCloud::new(pts).unwrap()
}

#[test]
#[ignore]
fn probe_lobes() {
    let cloud = lobed_cloud(2000, 11);
    let truth = lobed_cloud(100_000, 12).positions().to_vec();
    let base = MembraneConfig {
        search_extents: [0.15, 0.07, 0.07],
        beta: 0.7,
        n_splits: 65,
        sample_override: Some((32, 32)),
        patience: 25,
        max_iterations: 120,
        deterministic: true,
        ..MembraneConfig::default()
    };
    let configs = [
        (
            "static small",
            MembraneConfig {
                init_grid: (8, 5),
                max_grid: (8, 5),
                ..base.clone()
            },
        ),
        (
            "static max  ",
            MembraneConfig {
                init_grid: (14, 10),
                max_grid: (14, 10),
                ..base.clone()
            },
        ),
        (
            "adaptive    ",
            MembraneConfig {
                init_grid: (8, 5),
                max_grid: (14, 10),
                refine_increment: (2, 2),
                patience: 6,
                ..base.clone()
            },
        ),
    ];
    for (name, cfg) in configs {
        let (pts, secs, iters) = surface_points(&cfg, &cloud);
        let cd = chamfer(&pts, &truth).unwrap();
        println!("{name}: cd {cd:.4} iters {iters} {secs:.2}s");
    }
}

#[test]
#[ignore]
fn probe_dark_outliers() {
    let truth = sphere_truth(100_000, 99);
    let tau = 0.01 * (2.0f64 * 3.0f64.sqrt());
    let clean = gen_sphere(1500, 1.0, 5).unwrap();
    let n_clean = clean.len();
    let fuzzed = corrupt(
        &clean,
        &CorruptionSpec::added(CorruptionKind::DuplicatedOutliers, 0.025, 0.3, 21),
    )
    .unwrap();
    // Same crust of duplicates, but dark against a bright sphere.
    let mut intensity = fuzzed.attribute("intensity").unwrap().to_vec();
    for v in intensity.iter_mut().skip(n_clean) {
        *v = 0.1;
    }
    let cloud = PointCloud::new(fuzzed.positions().to_vec())
        .unwrap()
        .with_attribute("intensity", intensity)
        .unwrap();
    for (name, weights) in [
        ("spatial  ", SeparabilityWeights::point_only()),
        (
            "intensity",
            SeparabilityWeights {
                point: 1.0,
                attributes: vec![("intensity".to_string(), 1.0)],
            },
        ),
    ] {
        let cfg = MembraneConfig {
            weights,
            ..crit5_config()
        };
        let (pts, secs, iters) = surface_points(&cfg, &cloud);
        let cd = chamfer(&pts, &truth).unwrap();
        let f = fscore(&pts, &truth, tau).unwrap();
        println!(
            "{name}: cd {cd:.4} f {:.4} (p {:.3} r {:.3}) iters {iters} {secs:.1}s",
            f.f, f.precision, f.recall
        );
    }
}
