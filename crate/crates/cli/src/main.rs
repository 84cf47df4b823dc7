//! Command-line front end: synthetic clouds in, meshes, traces, separability
//! maps, and metric reports out.
//!
//! Exit codes tell scripts what went wrong: 0 success, 1 bad usage, 2
//! unusable input data, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{Point3, Vector3};
use sepmembrane::metrics::{self, OrientedSamples};
use sepmembrane::synth::{self, CorruptionKind, CorruptionSpec, PlaneSpec};
use sepmembrane::{
    io, reconstruct, CloudFormat, Error, Geometry, GridSpec, MeshFormat, PointCloud, RunConfig,
    SeparabilityEvaluator, SeparabilityWeights,
};

#[derive(Parser)]
#[command(name = "sepmembrane", version, about = "Point-cloud surface reconstruction by separability maximization")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a closed surface to a point cloud and write the mesh.
    Reconstruct {
        /// Input cloud (.ply, .obj, or .xyz).
        input: PathBuf,
        /// Output mesh (.ply or .obj).
        #[arg(short, long)]
        output: PathBuf,
        /// key=value run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Iteration history CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep a split window over a grid and write eta per cell as CSV.
    Sepmap {
        /// Input cloud.
        input: PathBuf,
        /// Output CSV (x,y,z,eta).
        #[arg(short, long)]
        output: PathBuf,
        /// Window normal, e.g. 1,0,0.
        #[arg(long, value_parser = parse_triple)]
        direction: [f64; 3],
        /// Window extent along the normal and the two cross axes.
        #[arg(long, value_parser = parse_triple)]
        window: [f64; 3],
        /// Grid resolution per axis; flat axes collapse to one cell.
        #[arg(long, value_parser = parse_counts, default_value = "32,32,32")]
        cells: [usize; 3],
        /// Neighbour count for the density estimate.
        #[arg(long, default_value_t = 8)]
        k: usize,
        /// Occupancy channel weight.
        #[arg(long, default_value_t = 1.0)]
        weight_point: f64,
        /// Attribute channel weight, name=w; repeatable.
        #[arg(long = "weight", value_parser = parse_weight)]
        weights: Vec<(String, f64)>,
    },
    /// Generate a synthetic cloud.
    Synth {
        #[command(subcommand)]
        shape: SynthShape,
    },
    /// Score a predicted surface against a reference.
    Eval {
        /// Predicted mesh or cloud.
        #[arg(long)]
        pred: PathBuf,
        /// Reference mesh or cloud.
        #[arg(long)]
        gt: PathBuf,
        /// F-score distance threshold as a percentage of the reference
        /// bounding-box diagonal.
        #[arg(long, default_value_t = 1.0)]
        tau_pct: f64,
        /// Surface sample count for mesh inputs.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum SynthShape {
    /// Uniformly sampled sphere with an intensity channel.
    Sphere {
        #[arg(short = 'n', long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[command(flatten)]
        common: SynthCommon,
    },
    /// Flat sheet with intensity and density bands.
    Plane {
        #[command(flatten)]
        common: SynthCommon,
    },
}

#[derive(Args)]
struct SynthCommon {
    /// Output cloud (.ply or .xyz).
    #[arg(short, long)]
    output: PathBuf,
    /// Damage to apply, kind:sigma[,ratio] with kind one of noise,
    /// duplicated, region, surface. Sigma is a fraction of the
    /// bounding-box diagonal, ratio the added-point fraction.
    #[arg(long, value_parser = parse_corrupt)]
    corrupt: Option<CorruptArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug)]
struct CorruptArg {
    kind: CorruptionKind,
    sigma: f64,
    ratio: f64,
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got `{s}`"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("bad number `{p}`"))?;
    }
    Ok(out)
}

fn parse_counts(s: &str) -> Result<[usize; 3], String> {
    let t = parse_triple(s)?;
    let mut out = [0usize; 3];
    for (o, v) in out.iter_mut().zip(t) {
        if v.fract() != 0.0 || v < 1.0 {
            return Err(format!("cell counts must be whole and positive, got `{s}`"));
        }
        *o = v as usize;
    }
    Ok(out)
}

fn parse_weight(s: &str) -> Result<(String, f64), String> {
    let (name, w) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=weight, got `{s}`"))?;
    let w = w
        .trim()
        .parse::<f64>()
        .map_err(|_| format!("bad weight `{s}`"))?;
    Ok((name.trim().to_string(), w))
}

fn parse_corrupt(s: &str) -> Result<CorruptArg, String> {
    let (kind, params) = s.split_once(':').unwrap_or((s, ""));
    let kind = match kind {
        "noise" => CorruptionKind::GaussianNoise,
        "duplicated" => CorruptionKind::DuplicatedOutliers,
        "region" => CorruptionKind::RegionOutliers,
        "surface" => CorruptionKind::SurfaceOutliers,
        _ => {
            return Err(format!(
                "unknown corruption `{kind}` (noise, duplicated, region, surface)"
            ))
        }
    };
    let mut nums = params.split(',').filter(|p| !p.is_empty());
    let mut next = |what: &str, default: f64| -> Result<f64, String> {
        match nums.next() {
            Some(p) => p
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("bad {what} `{p}`")),
            None => Ok(default),
        }
    };
    let sigma = next("sigma", 0.0)?;
    let ratio = next("ratio", 0.3)?;
    if nums.next().is_some() {
        return Err(format!("too many parameters in `{s}`"));
    }
    Ok(CorruptArg { kind, sigma, ratio })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version land here too; only real usage mistakes
            // should exit nonzero.
            let code: u8 = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_data_error() { 2 } else { 3 })
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Reconstruct {
            input,
            output,
            config,
            trace,
        } => cmd_reconstruct(&input, &output, config.as_deref(), trace.as_deref()),
        Cmd::Sepmap {
            input,
            output,
            direction,
            window,
            cells,
            k,
            weight_point,
            weights,
        } => cmd_sepmap(&input, &output, direction, window, cells, k, weight_point, weights),
        Cmd::Synth { shape } => cmd_synth(shape),
        Cmd::Eval {
            pred,
            gt,
            tau_pct,
            samples,
            seed,
        } => cmd_eval(&pred, &gt, tau_pct, samples, seed),
    }
}

fn load_cloud(path: &Path) -> Result<PointCloud, Error> {
    let (cloud, dropped) = io::read_cloud(path)?;
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} non-finite rows from {}", path.display());
    }
    Ok(cloud)
}

fn cmd_reconstruct(
    input: &Path,
    output: &Path,
    config: Option<&Path>,
    trace: Option<&Path>,
) -> Result<(), Error> {
    // Probe the output format before the expensive part.
    let format = MeshFormat::from_path(output)?;
    let run_cfg = match config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let cloud = load_cloud(input)?;
    let result = reconstruct(&cloud, &run_cfg.membrane)?;
    io::write_mesh(&result.mesh, output, format)?;
    // The flag wins over the config file.
    if let Some(path) = trace.or(run_cfg.trace.as_deref()) {
        io::write_trace(&result.trace, path)?;
    }
    let last = result.trace.records.last();
    println!(
        "{} iterations, final eta {:.4}, grid {}x{}",
        result.trace.records.len(),
        last.map_or(0.0, |r| r.eta_g),
        last.map_or(0, |r| r.m),
        last.map_or(0, |r| r.l),
    );
    println!(
        "wrote {} ({} vertices, {} faces)",
        output.display(),
        result.mesh.vertices.len(),
        result.mesh.faces.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sepmap(
    input: &Path,
    output: &Path,
    direction: [f64; 3],
    window: [f64; 3],
    cells: [usize; 3],
    k: usize,
    weight_point: f64,
    weights: Vec<(String, f64)>,
) -> Result<(), Error> {
    let cloud = load_cloud(input)?;
    let weights = SeparabilityWeights {
        point: weight_point,
        attributes: weights,
    };
    let eval = SeparabilityEvaluator::new(&cloud, weights, Default::default(), k)?;
    let bb = cloud.bounding_box();
    let mut counts = cells;
    let mut step = Vector3::zeros();
    let mut origin = Point3::origin();
    for a in 0..3 {
        let extent = bb.max[a] - bb.min[a];
        if extent <= 0.0 {
            counts[a] = 1;
        }
        step[a] = extent / counts[a] as f64;
        origin[a] = bb.min[a] + step[a] / 2.0;
    }
    let grid = GridSpec {
        origin,
        step,
        counts,
    };
    let map = eval.separability_map(&grid, &Vector3::from(direction), window)?;
    io::write_separability_map(&map, output)?;
    println!(
        "wrote {} ({} cells)",
        output.display(),
        map.values.len()
    );
    Ok(())
}

fn cmd_synth(shape: SynthShape) -> Result<(), Error> {
    let (cloud, common) = match shape {
        SynthShape::Sphere {
            count,
            radius,
            common,
        } => (synth::gen_sphere(count, radius, common.seed)?, common),
        SynthShape::Plane { common } => (synth::gen_colored_plane(&PlaneSpec::default())?, common),
    };
    let cloud = match common.corrupt {
        Some(c) => {
            let spec = match c.kind {
                CorruptionKind::GaussianNoise => CorruptionSpec::noise(c.sigma, common.seed + 1),
                kind => CorruptionSpec::added(kind, c.sigma, c.ratio, common.seed + 1),
            };
            synth::corrupt(&cloud, &spec)?
        }
        None => cloud,
    };
    io::write_cloud(&cloud, &common.output, CloudFormat::from_path(&common.output)?)?;
    println!("wrote {} ({} points)", common.output.display(), cloud.len());
    Ok(())
}

/// Mesh inputs are sampled with normals; clouds are taken as-is, which
/// leaves normal consistency undefined.
fn load_samples(path: &Path, n: usize, seed: u64) -> Result<OrientedSamples, Error> {
    match io::read_geometry(path)? {
        Geometry::Mesh(mesh) => metrics::sample_mesh(&mesh, n, seed),
        Geometry::Cloud(cloud, dropped) => {
            if dropped > 0 {
                eprintln!(
                    "warning: dropped {dropped} non-finite rows from {}",
                    path.display()
                );
            }
            Ok(OrientedSamples {
                points: cloud.positions().to_vec(),
                normals: Vec::new(),
            })
        }
    }
}

fn cmd_eval(pred: &Path, gt: &Path, tau_pct: f64, samples: usize, seed: u64) -> Result<(), Error> {
    if !(tau_pct.is_finite() && tau_pct > 0.0) {
        return Err(Error::invalid("tau-pct must be positive"));
    }
    let pred_s = load_samples(pred, samples, seed)?;
    let gt_s = load_samples(gt, samples, seed.wrapping_add(1))?;
    let diag = {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &gt_s.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (hi - lo).norm()
    };
    let tau = tau_pct / 100.0 * diag;
    let chamfer = metrics::chamfer(&pred_s.points, &gt_s.points)?;
    let f = metrics::fscore(&pred_s.points, &gt_s.points, tau)?;
    let nc = if pred_s.normals.is_empty() || gt_s.normals.is_empty() {
        None
    } else {
        Some(metrics::normal_consistency(&pred_s, &gt_s)?)
    };
    println!("chamfer             {chamfer:.6}");
    println!(
        "f-score (tau {tau:.4})  {:.4}  precision {:.4}  recall {:.4}",
        f.f, f.precision, f.recall
    );
    match nc {
        Some(v) => println!("normal consistency  {v:.4}"),
        None => println!("normal consistency  n/a (cloud input carries no normals)"),
    }
    let nc_json = nc.map_or("null".to_string(), |v| format!("{v}"));
    println!(
        "{{\"chamfer\":{chamfer},\"f_score\":{},\"precision\":{},\"recall\":{},\"tau\":{tau},\"normal_consistency\":{nc_json}}}",
        f.f, f.precision, f.recall
    );
    Ok(())
}
