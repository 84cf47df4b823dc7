//! PLY reading and writing, ascii and binary little-endian.
//!
//! The reader covers the subset of the format that survives in the wild:
//! scalar vertex properties in any order, one index list per face, other
//! elements skipped. Big-endian files are rejected rather than byte-swapped.

use std::path::Path;

use nalgebra::Point3;

use super::perr;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::mesh::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn from_word(w: &str) -> Option<Scalar> {
        Some(match w {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct ElementDecl {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    encoding: Encoding,
    elements: Vec<ElementDecl>,
    /// Offset of the first data byte.
    body_start: usize,
    /// Lines consumed by the header, so ascii row errors report absolute
    /// line numbers.
    header_lines: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<ElementDecl> = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| {
            perr(path, line_no + 1, "header not terminated by end_header")
        })?;
        let raw = &rest[..nl];
        pos += nl + 1;
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| perr(path, line_no, "header is not valid UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        if line_no == 1 {
            if line != "ply" {
                return Err(perr(path, 1, "missing ply magic"));
            }
            continue;
        }
        let mut words = line.split_whitespace();
        match words.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                encoding = Some(match words.next().unwrap_or("") {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    "binary_big_endian" => {
                        return Err(perr(path, line_no, "big-endian ply is not supported"))
                    }
                    other => {
                        return Err(perr(path, line_no, format!("unknown ply format `{other}`")))
                    }
                });
            }
            Some("element") => {
                let name = words
                    .next()
                    .ok_or_else(|| perr(path, line_no, "element needs a name and a count"))?;
                let count = words
                    .next()
                    .and_then(|w| w.parse::<usize>().ok())
                    .ok_or_else(|| perr(path, line_no, "element needs a numeric count"))?;
                elements.push(ElementDecl {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| perr(path, line_no, "property before any element"))?;
                let ty = words
                    .next()
                    .ok_or_else(|| perr(path, line_no, "property needs a type"))?;
                if ty == "list" {
                    let mut scalar = |what: &str| {
                        words.next().and_then(Scalar::from_word).ok_or_else(|| {
                            perr(path, line_no, format!("list property needs a {what} type"))
                        })
                    };
                    let count = scalar("count")?;
                    let item = scalar("item")?;
                    el.props.push(Property::List { count, item });
                } else {
                    let ty = Scalar::from_word(ty).ok_or_else(|| {
                        perr(path, line_no, format!("unknown property type `{ty}`"))
                    })?;
                    let name = words
                        .next()
                        .ok_or_else(|| perr(path, line_no, "property needs a name"))?;
                    el.props.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            Some("end_header") => {
                let encoding =
                    encoding.ok_or_else(|| perr(path, line_no, "header has no format line"))?;
                return Ok(Header {
                    encoding,
                    elements,
                    body_start: pos,
                    header_lines: line_no,
                });
            }
            Some(other) => {
                return Err(perr(path, line_no, format!("unknown header keyword `{other}`")))
            }
        }
    }
}

/// One decoded property of one row. List payloads only matter for faces, so
/// scalar rows stay allocation-free.
enum Val {
    Num(f64),
    List(Vec<f64>),
}

enum Body<'a> {
    Ascii { rest: &'a str, line_no: usize },
    Binary { bytes: &'a [u8], pos: usize },
}

impl<'a> Body<'a> {
    fn new(path: &Path, header: &Header, bytes: &'a [u8]) -> Result<Body<'a>> {
        let data = &bytes[header.body_start..];
        match header.encoding {
            Encoding::Ascii => {
                let rest = std::str::from_utf8(data).map_err(|e| {
                    let line = header.header_lines
                        + 1
                        + data[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count();
                    perr(path, line, "data is not valid UTF-8")
                })?;
                Ok(Body::Ascii {
                    rest,
                    line_no: header.header_lines,
                })
            }
            Encoding::BinaryLe => Ok(Body::Binary { bytes: data, pos: 0 }),
        }
    }

    /// Reads one row of `props` into `out` (cleared first).
    fn row(&mut self, path: &Path, props: &[Property], out: &mut Vec<Val>) -> Result<()> {
        out.clear();
        match self {
            Body::Ascii { rest, line_no } => {
                let line = loop {
                    if rest.is_empty() {
                        return Err(perr(path, *line_no + 1, "unexpected end of file"));
                    }
                    let (line, tail) = rest.split_once('\n').unwrap_or((*rest, ""));
                    *rest = tail;
                    *line_no += 1;
                    let line = line.trim();
                    if !line.is_empty() {
                        break line;
                    }
                };
                let mut toks = line.split_whitespace();
                {
                    let mut num = |what: &str| -> Result<f64> {
                        let tok = toks.next().ok_or_else(|| {
                            perr(path, *line_no, format!("row is missing {what}"))
                        })?;
                        tok.parse::<f64>()
                            .map_err(|_| perr(path, *line_no, format!("bad number `{tok}`")))
                    };
                    for prop in props {
                        match prop {
                            Property::Scalar { name, .. } => out.push(Val::Num(num(name)?)),
                            Property::List { .. } => {
                                let n = num("a list count")?;
                                if !(n.is_finite() && n >= 0.0 && n.fract() == 0.0) {
                                    return Err(perr(path, *line_no, "bad list count"));
                                }
                                let vals = (0..n as usize)
                                    .map(|_| num("a list item"))
                                    .collect::<Result<Vec<f64>>>()?;
                                out.push(Val::List(vals));
                            }
                        }
                    }
                }
                if toks.next().is_some() {
                    return Err(perr(path, *line_no, "row has more values than declared"));
                }
            }
            Body::Binary { bytes, pos } => {
                let mut take = |ty: Scalar| -> Result<f64> {
                    let end = *pos + ty.size();
                    if end > bytes.len() {
                        return Err(perr(
                            path,
                            0,
                            format!("unexpected end of binary data at byte {pos}"),
                        ));
                    }
                    let v = ty.read_le(&bytes[*pos..end]);
                    *pos = end;
                    Ok(v)
                };
                for prop in props {
                    match prop {
                        Property::Scalar { ty, .. } => out.push(Val::Num(take(*ty)?)),
                        Property::List { count, item } => {
                            let n = take(*count)?;
                            if !(n >= 0.0) {
                                return Err(perr(path, 0, "negative list count"));
                            }
                            let vals = (0..n as usize)
                                .map(|_| take(*item))
                                .collect::<Result<Vec<f64>>>()?;
                            out.push(Val::List(vals));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Line of the row most recently read; 0 in binary bodies.
    fn line(&self) -> usize {
        match self {
            Body::Ascii { line_no, .. } => *line_no,
            Body::Binary { .. } => 0,
        }
    }

    fn skip_element(&mut self, path: &Path, el: &ElementDecl) -> Result<()> {
        let mut row = Vec::new();
        for _ in 0..el.count {
            self.row(path, &el.props, &mut row)?;
        }
        Ok(())
    }
}

/// Column indices of the scalar vertex properties a cloud keeps. Positions
/// are required; every other scalar becomes an attribute channel under its
/// own name, except that red/green/blue collapse into a derived intensity,
/// itself shadowed by an explicit intensity property when both appear.
struct VertexCols {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    /// (channel name, column).
    attrs: Vec<(String, usize)>,
}

fn vertex_cols(path: &Path, line: usize, el: &ElementDecl) -> Result<VertexCols> {
    let mut names = Vec::with_capacity(el.props.len());
    for p in &el.props {
        match p {
            Property::Scalar { name, .. } => names.push(name.as_str()),
            Property::List { .. } => {
                return Err(perr(path, line, "list property in vertex element"));
            }
        }
    }
    let col = |name: &str| names.iter().position(|n| *n == name);
    let xyz = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => return Err(perr(path, line, "vertex element lacks x, y, z")),
    };
    let rgb = match (col("red"), col("green"), col("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let has_intensity = col("intensity").is_some();
    let mut attrs = Vec::new();
    for (i, name) in names.iter().enumerate() {
        if xyz.contains(&i) || rgb.is_some_and(|c| c.contains(&i)) {
            continue;
        }
        attrs.push((name.to_string(), i));
    }
    Ok(VertexCols {
        xyz,
        rgb: if has_intensity { None } else { rgb },
        attrs,
    })
}

pub(super) fn read_cloud(path: &Path, bytes: &[u8]) -> Result<(PointCloud, usize)> {
    let header = parse_header(path, bytes)?;
    let mut body = Body::new(path, &header, bytes)?;
    for el in &header.elements {
        if el.name != "vertex" {
            body.skip_element(path, el)?;
            continue;
        }
        let cols = vertex_cols(path, header.header_lines, el)?;
        let mut pts = Vec::with_capacity(el.count);
        let mut channels: Vec<(String, Vec<f64>)> = cols
            .attrs
            .iter()
            .map(|(name, _)| (name.clone(), Vec::with_capacity(el.count)))
            .collect();
        if cols.rgb.is_some() {
            channels.push(("intensity".to_string(), Vec::with_capacity(el.count)));
        }
        let mut dropped = 0;
        let mut row = Vec::new();
        for _ in 0..el.count {
            body.row(path, &el.props, &mut row)?;
            let get = |i: usize| match row[i] {
                Val::Num(v) => v,
                Val::List(_) => unreachable!("vertex props are scalar"),
            };
            let p = Point3::new(get(cols.xyz[0]), get(cols.xyz[1]), get(cols.xyz[2]));
            let mut vals: Vec<f64> = cols.attrs.iter().map(|(_, i)| get(*i)).collect();
            if let Some([r, g, b]) = cols.rgb {
                vals.push((get(r) + get(g) + get(b)) / 3.0 / 255.0);
            }
            if !p.coords.iter().all(|c| c.is_finite()) || !vals.iter().all(|v| v.is_finite()) {
                dropped += 1;
                continue;
            }
            pts.push(p);
            for (ch, v) in channels.iter_mut().zip(&vals) {
                ch.1.push(*v);
            }
        }
        let mut cloud = PointCloud::new(pts)?;
        for (name, vals) in channels {
            cloud = cloud.with_attribute(name, vals)?;
        }
        return Ok((cloud, dropped));
    }
    Err(perr(path, header.header_lines, "no vertex element"))
}

pub(super) fn read_mesh(path: &Path, bytes: &[u8]) -> Result<TriMesh> {
    let header = parse_header(path, bytes)?;
    let mut body = Body::new(path, &header, bytes)?;
    let mut vertices: Option<Vec<Point3<f64>>> = None;
    let mut faces: Option<Vec<[usize; 3]>> = None;
    for el in &header.elements {
        match el.name.as_str() {
            "vertex" => {
                let cols = vertex_cols(path, header.header_lines, el)?;
                let mut pts = Vec::with_capacity(el.count);
                let mut row = Vec::new();
                for _ in 0..el.count {
                    body.row(path, &el.props, &mut row)?;
                    let get = |i: usize| match row[i] {
                        Val::Num(v) => v,
                        Val::List(_) => unreachable!("vertex props are scalar"),
                    };
                    pts.push(Point3::new(
                        get(cols.xyz[0]),
                        get(cols.xyz[1]),
                        get(cols.xyz[2]),
                    ));
                }
                vertices = Some(pts);
            }
            "face" => {
                let list_at = el
                    .props
                    .iter()
                    .position(|p| matches!(p, Property::List { .. }))
                    .ok_or_else(|| {
                        perr(path, header.header_lines, "face element has no index list")
                    })?;
                let mut tris = Vec::with_capacity(el.count);
                let mut row = Vec::new();
                for _ in 0..el.count {
                    body.row(path, &el.props, &mut row)?;
                    let ids = match &row[list_at] {
                        Val::List(v) => v,
                        Val::Num(_) => unreachable!("position checked above"),
                    };
                    push_fan(path, body.line(), ids, &mut tris)?;
                }
                faces = Some(tris);
            }
            _ => body.skip_element(path, el)?,
        }
        if vertices.is_some() && faces.is_some() {
            break;
        }
    }
    match (vertices, faces) {
        (Some(v), Some(f)) => TriMesh::new(v, f),
        _ => Err(perr(
            path,
            header.header_lines,
            "mesh needs vertex and face elements",
        )),
    }
}

/// Fan-triangulates one polygon's vertex ids onto `tris`. Values arrive as
/// f64 straight from the decoder and must be non-negative integers.
fn push_fan(path: &Path, line: usize, ids: &[f64], tris: &mut Vec<[usize; 3]>) -> Result<()> {
    if ids.len() < 3 {
        return Err(perr(path, line, "face with fewer than 3 vertices"));
    }
    if ids.iter().any(|v| !(v.fract() == 0.0 && *v >= 0.0)) {
        return Err(perr(path, line, "face indices must be non-negative integers"));
    }
    for i in 1..ids.len() - 1 {
        tris.push([ids[0] as usize, ids[i] as usize, ids[i + 1] as usize]);
    }
    Ok(())
}

/// Writable property names: anything whitespace-ish would corrupt the header.
fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_graphic()) {
        return Err(Error::invalid(format!(
            "attribute name `{name}` cannot be a ply property"
        )));
    }
    Ok(())
}

fn push_f64(out: &mut Vec<u8>, ascii: bool, first: bool, v: f64) {
    use std::io::Write;
    if ascii {
        if !first {
            out.push(b' ');
        }
        write!(out, "{v}").expect("write to vec");
    } else {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn header_common(out: &mut Vec<u8>, ascii: bool, vertex_count: usize, props: &[&str]) {
    use std::io::Write;
    out.extend_from_slice(b"ply\n");
    out.extend_from_slice(if ascii {
        b"format ascii 1.0\n".as_slice()
    } else {
        b"format binary_little_endian 1.0\n".as_slice()
    });
    writeln!(out, "element vertex {vertex_count}").expect("write to vec");
    for p in props {
        writeln!(out, "property double {p}").expect("write to vec");
    }
}

pub(super) fn write_cloud(cloud: &PointCloud, ascii: bool, out: &mut Vec<u8>) -> Result<()> {
    let names: Vec<&str> = cloud.attribute_names().collect();
    for n in &names {
        check_name(n)?;
    }
    let mut props = vec!["x", "y", "z"];
    props.extend_from_slice(&names);
    header_common(out, ascii, cloud.len(), &props);
    out.extend_from_slice(b"end_header\n");
    let channels: Vec<&[f64]> = names
        .iter()
        .map(|n| cloud.attribute(n).expect("listed name"))
        .collect();
    for (i, p) in cloud.positions().iter().enumerate() {
        for (j, c) in p.coords.iter().enumerate() {
            push_f64(out, ascii, j == 0, *c);
        }
        for ch in &channels {
            push_f64(out, ascii, false, ch[i]);
        }
        if ascii {
            out.push(b'\n');
        }
    }
    Ok(())
}

pub(super) fn write_mesh(mesh: &TriMesh, ascii: bool, out: &mut Vec<u8>) -> Result<()> {
    use std::io::Write;
    let normals = mesh.vertex_normals()?;
    header_common(
        out,
        ascii,
        mesh.vertices.len(),
        &["x", "y", "z", "nx", "ny", "nz"],
    );
    writeln!(out, "element face {}", mesh.faces.len()).expect("write to vec");
    out.extend_from_slice(b"property list uchar uint vertex_indices\n");
    out.extend_from_slice(b"end_header\n");
    for (p, n) in mesh.vertices.iter().zip(&normals) {
        for (j, v) in p.coords.iter().chain(n.iter()).enumerate() {
            push_f64(out, ascii, j == 0, *v);
        }
        if ascii {
            out.push(b'\n');
        }
    }
    for f in &mesh.faces {
        if ascii {
            writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).expect("write to vec");
        } else {
            out.push(3);
            for v in f {
                out.extend_from_slice(&(*v as u32).to_le_bytes());
            }
        }
    }
    Ok(())
}

/// True when the header declares a non-empty face element, meaning the file
/// carries a mesh rather than a bare cloud.
pub(super) fn has_faces(path: &Path, bytes: &[u8]) -> Result<bool> {
    let header = parse_header(path, bytes)?;
    Ok(header
        .elements
        .iter()
        .any(|el| el.name == "face" && el.count > 0))
}
