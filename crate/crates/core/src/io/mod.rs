//! File formats and run artifacts: clouds and meshes in, meshes, traces,
//! and separability maps out.
//!
//! Binary PLY round-trips coordinates bit-exactly; the text formats write
//! shortest exact decimal representations, so they round-trip too. XYZ
//! carries positions plus at most an intensity column, OBJ positions only;
//! channels a format cannot hold are dropped on write.

mod config;
mod ply;

pub use config::RunConfig;

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::membrane::RunTrace;
use crate::mesh::TriMesh;
use crate::separability::SeparabilityMap;

/// On-disk point-cloud encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinary,
    Obj,
    Xyz,
}

impl CloudFormat {
    /// Format implied by the file extension; `.ply` means binary.
    pub fn from_path(path: &Path) -> Result<CloudFormat> {
        match extension(path).as_deref() {
            Some("ply") => Ok(CloudFormat::PlyBinary),
            Some("obj") => Ok(CloudFormat::Obj),
            Some("xyz") | Some("txt") => Ok(CloudFormat::Xyz),
            _ => Err(Error::invalid(format!(
                "cannot tell a cloud format from `{}` (use .ply, .obj, or .xyz)",
                path.display()
            ))),
        }
    }
}

/// On-disk mesh encodings. PLY meshes carry per-vertex normals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    PlyAscii,
    PlyBinary,
    Obj,
}

impl MeshFormat {
    /// Format implied by the file extension; `.ply` means binary.
    pub fn from_path(path: &Path) -> Result<MeshFormat> {
        match extension(path).as_deref() {
            Some("ply") => Ok(MeshFormat::PlyBinary),
            Some("obj") => Ok(MeshFormat::Obj),
            _ => Err(Error::invalid(format!(
                "cannot tell a mesh format from `{}` (use .ply or .obj)",
                path.display()
            ))),
        }
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_lowercase())
}

fn perr(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// A ply body starts with its magic regardless of what the file is named.
fn looks_like_ply(bytes: &[u8]) -> bool {
    bytes.starts_with(b"ply\n") || bytes.starts_with(b"ply\r\n")
}

/// Reads a point cloud, returning it together with the number of rows
/// dropped for non-finite values.
pub fn read_cloud(path: &Path) -> Result<(PointCloud, usize)> {
    let bytes = fs::read(path)?;
    if looks_like_ply(&bytes) {
        return ply::read_cloud(path, &bytes);
    }
    match CloudFormat::from_path(path)? {
        CloudFormat::PlyAscii | CloudFormat::PlyBinary => ply::read_cloud(path, &bytes),
        CloudFormat::Obj => read_cloud_obj(path, &bytes),
        CloudFormat::Xyz => read_cloud_xyz(path, &bytes),
    }
}

pub fn write_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let mut out = Vec::new();
    match format {
        CloudFormat::PlyAscii => ply::write_cloud(cloud, true, &mut out)?,
        CloudFormat::PlyBinary => ply::write_cloud(cloud, false, &mut out)?,
        CloudFormat::Obj => {
            for p in cloud.positions() {
                writeln!(out, "v {} {} {}", p.x, p.y, p.z).expect("write to vec");
            }
        }
        CloudFormat::Xyz => {
            let intensity = cloud.attribute("intensity");
            for (i, p) in cloud.positions().iter().enumerate() {
                match intensity {
                    Some(vals) => writeln!(out, "{} {} {} {}", p.x, p.y, p.z, vals[i]),
                    None => writeln!(out, "{} {} {}", p.x, p.y, p.z),
                }
                .expect("write to vec");
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    let bytes = fs::read(path)?;
    if looks_like_ply(&bytes) {
        return ply::read_mesh(path, &bytes);
    }
    match MeshFormat::from_path(path)? {
        MeshFormat::PlyAscii | MeshFormat::PlyBinary => ply::read_mesh(path, &bytes),
        MeshFormat::Obj => read_mesh_obj(path, &bytes),
    }
}

/// Writes a watertight mesh; an open or doubled surface is refused because
/// every consumer downstream assumes a closed boundary.
pub fn write_mesh(mesh: &TriMesh, path: &Path, format: MeshFormat) -> Result<()> {
    if !mesh.is_watertight() {
        return Err(Error::invalid("refusing to write a non-watertight mesh"));
    }
    let mut out = Vec::new();
    match format {
        MeshFormat::PlyAscii => ply::write_mesh(mesh, true, &mut out)?,
        MeshFormat::PlyBinary => ply::write_mesh(mesh, false, &mut out)?,
        MeshFormat::Obj => {
            for p in &mesh.vertices {
                writeln!(out, "v {} {} {}", p.x, p.y, p.z).expect("write to vec");
            }
            // OBJ counts from one.
            for f in &mesh.faces {
                writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).expect("write to vec");
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Either shape a geometry file can hold, for callers that accept both.
#[derive(Debug, Clone)]
pub enum Geometry {
    Mesh(TriMesh),
    /// Cloud plus its dropped-row count.
    Cloud(PointCloud, usize),
}

/// Reads a file as a mesh when it declares faces and as a cloud otherwise.
pub fn read_geometry(path: &Path) -> Result<Geometry> {
    let bytes = fs::read(path)?;
    let is_ply = looks_like_ply(&bytes)
        || matches!(extension(path).as_deref(), Some("ply"));
    let has_faces = if is_ply {
        ply::has_faces(path, &bytes)?
    } else if matches!(extension(path).as_deref(), Some("obj")) {
        obj_lines(&bytes).any(|(_, l)| l.starts_with("f ") || l == "f")
    } else {
        false
    };
    if has_faces {
        read_mesh(path).map(Geometry::Mesh)
    } else {
        read_cloud(path).map(|(c, d)| Geometry::Cloud(c, d))
    }
}

/// Iteration-by-iteration run history as CSV.
pub fn write_trace(trace: &RunTrace, path: &Path) -> Result<()> {
    let mut out = String::from("iteration,eta_g,M,L,u_n,v_n,chamfer,seconds\n");
    use std::fmt::Write as _;
    for r in &trace.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iteration, r.eta_g, r.m, r.l, r.u_n, r.v_n, r.chamfer, r.seconds
        )
        .expect("write to string");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Separability field as CSV, one grid sample per row.
pub fn write_separability_map(map: &SeparabilityMap, path: &Path) -> Result<()> {
    let mut out = String::from("x,y,z,eta\n");
    use std::fmt::Write as _;
    for (p, eta) in map.grid.points().zip(&map.values) {
        writeln!(out, "{},{},{},{}", p.x, p.y, p.z, eta).expect("write to string");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Lines of a text body with 1-based numbers, comments and blanks skipped.
fn obj_lines(bytes: &[u8]) -> impl Iterator<Item = (usize, &str)> {
    bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .filter_map(|(i, raw)| {
            let line = std::str::from_utf8(raw).ok()?.trim();
            if line.is_empty() || line.starts_with('#') {
                None
            } else {
                Some((i + 1, line))
            }
        })
}

fn parse_vertex_line(path: &Path, line_no: usize, rest: &str) -> Result<Point3<f64>> {
    let mut it = rest.split_whitespace();
    let mut num = || -> Result<f64> {
        let tok = it
            .next()
            .ok_or_else(|| perr(path, line_no, "vertex line needs 3 coordinates"))?;
        tok.parse::<f64>()
            .map_err(|_| perr(path, line_no, format!("bad number `{tok}`")))
    };
    Ok(Point3::new(num()?, num()?, num()?))
}

fn read_cloud_obj(path: &Path, bytes: &[u8]) -> Result<(PointCloud, usize)> {
    if std::str::from_utf8(bytes).is_err() {
        return Err(perr(path, 0, "file is not valid UTF-8"));
    }
    let mut pts = Vec::new();
    let mut dropped = 0;
    for (line_no, line) in obj_lines(bytes) {
        let Some(rest) = line.strip_prefix("v ") else {
            continue;
        };
        let p = parse_vertex_line(path, line_no, rest)?;
        if p.coords.iter().all(|c| c.is_finite()) {
            pts.push(p);
        } else {
            dropped += 1;
        }
    }
    Ok((PointCloud::new(pts)?, dropped))
}

fn read_mesh_obj(path: &Path, bytes: &[u8]) -> Result<TriMesh> {
    if std::str::from_utf8(bytes).is_err() {
        return Err(perr(path, 0, "file is not valid UTF-8"));
    }
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (line_no, line) in obj_lines(bytes) {
        if let Some(rest) = line.strip_prefix("v ") {
            vertices.push(parse_vertex_line(path, line_no, rest)?);
        } else if let Some(rest) = line.strip_prefix("f ") {
            let mut ids = Vec::new();
            for tok in rest.split_whitespace() {
                // Faces may reference texture/normal ids after slashes;
                // only the leading vertex id matters here.
                let v = tok.split('/').next().unwrap_or("");
                let raw = v
                    .parse::<i64>()
                    .map_err(|_| perr(path, line_no, format!("bad face index `{tok}`")))?;
                // Positive ids count from one, negative from the end.
                let id = if raw > 0 {
                    raw - 1
                } else if raw < 0 {
                    vertices.len() as i64 + raw
                } else {
                    return Err(perr(path, line_no, "face index 0 (obj counts from 1)"));
                };
                if id < 0 || id >= vertices.len() as i64 {
                    return Err(perr(path, line_no, format!("face index `{tok}` out of range")));
                }
                ids.push(id as usize);
            }
            if ids.len() < 3 {
                return Err(perr(path, line_no, "face with fewer than 3 vertices"));
            }
            for i in 1..ids.len() - 1 {
                faces.push([ids[0], ids[i], ids[i + 1]]);
            }
        }
    }
    TriMesh::new(vertices, faces)
}

fn read_cloud_xyz(path: &Path, bytes: &[u8]) -> Result<(PointCloud, usize)> {
    if std::str::from_utf8(bytes).is_err() {
        return Err(perr(path, 0, "file is not valid UTF-8"));
    }
    let mut pts = Vec::new();
    let mut intensity = Vec::new();
    let mut dropped = 0;
    // 3 columns is bare positions, 4 adds intensity; the first row decides
    // and the rest must agree.
    let mut width: Option<usize> = None;
    for (line_no, line) in obj_lines(bytes) {
        let vals = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| perr(path, line_no, format!("bad number `{tok}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None if vals.len() == 3 || vals.len() == 4 => width = Some(vals.len()),
            None => {
                return Err(perr(
                    path,
                    line_no,
                    format!("expected 3 or 4 columns, found {}", vals.len()),
                ));
            }
            Some(w) if w != vals.len() => {
                return Err(perr(
                    path,
                    line_no,
                    format!("row has {} columns, earlier rows had {w}", vals.len()),
                ));
            }
            Some(_) => {}
        }
        if vals.iter().any(|v| !v.is_finite()) {
            dropped += 1;
            continue;
        }
        pts.push(Point3::new(vals[0], vals[1], vals[2]));
        if vals.len() == 4 {
            intensity.push(vals[3]);
        }
    }
    let mut cloud = PointCloud::new(pts)?;
    if width == Some(4) {
        cloud = cloud.with_attribute("intensity", intensity)?;
    }
    Ok((cloud, dropped))
}
