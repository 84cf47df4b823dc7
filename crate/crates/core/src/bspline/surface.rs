//! Tensor-product cubic B-spline surfaces.
//!
//! The membrane configuration is periodic in u (a closed tube) with clamped
//! v whose first and last control rows are each collapsed to a single point,
//! closing the tube into a topological sphere. The type itself stays general
//! enough for open patches, which the fitting tests use.

use nalgebra::{Point3, Vector3};

use super::basis::KnotBasis;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Parametric direction selector for refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    U,
    V,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BSplineSurface {
    basis_u: KnotBasis,
    basis_v: KnotBasis,
    /// Control grid, index `j * m + i` for column i of row j.
    ctrl: Vec<Point3<f64>>,
    m: usize,
    l: usize,
    pole_rows: bool,
    flip_normals: bool,
}

/// Surface samples on a parameter grid, index `j * u_n + i`.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub u_n: usize,
    pub v_n: usize,
    pub params: Vec<(f64, f64)>,
    pub points: Vec<Point3<f64>>,
    /// Unit normals; entries flagged in `degenerate` were reconstructed
    /// from neighbors rather than evaluated.
    pub normals: Vec<Vector3<f64>>,
    pub degenerate: Vec<bool>,
}

impl BSplineSurface {
    pub fn new(
        basis_u: KnotBasis,
        basis_v: KnotBasis,
        ctrl: Vec<Point3<f64>>,
        pole_rows: bool,
        flip_normals: bool,
    ) -> Result<Self> {
        let m = basis_u.n_ctrl();
        let l = basis_v.n_ctrl();
        if ctrl.len() != m * l {
            return Err(Error::invalid(format!(
                "control grid is {} points, basis wants {m} x {l}",
                ctrl.len()
            )));
        }
        if ctrl
            .iter()
            .any(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::invalid("control points must be finite"));
        }
        if pole_rows {
            if !basis_u.is_periodic() || basis_v.is_periodic() {
                return Err(Error::invalid(
                    "pole rows need a periodic u basis and a clamped v basis",
                ));
            }
            for j in [0, l - 1] {
                let first = ctrl[j * m];
                if ctrl[j * m..(j + 1) * m].iter().any(|p| *p != first) {
                    return Err(Error::invalid(format!(
                        "pole row {j} is not collapsed to a single point"
                    )));
                }
            }
        }
        Ok(BSplineSurface {
            basis_u,
            basis_v,
            ctrl,
            m,
            l,
            pole_rows,
            flip_normals,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn basis_u(&self) -> &KnotBasis {
        &self.basis_u
    }

    pub fn basis_v(&self) -> &KnotBasis {
        &self.basis_v
    }

    pub fn has_pole_rows(&self) -> bool {
        self.pole_rows
    }

    pub fn normals_flipped(&self) -> bool {
        self.flip_normals
    }

    pub fn set_flip_normals(&mut self, flip: bool) {
        self.flip_normals = flip;
    }

    /// Topologically a sphere: closed around u and capped by pole rows.
    pub fn is_closed(&self) -> bool {
        self.basis_u.is_periodic() && self.pole_rows
    }

    pub fn ctrl_points(&self) -> &[Point3<f64>] {
        &self.ctrl
    }

    pub fn ctrl_point(&self, i: usize, j: usize) -> Point3<f64> {
        self.ctrl[j * self.m + i]
    }

    /// Rebuilds with a new control grid of identical layout.
    pub fn with_ctrl(&self, ctrl: Vec<Point3<f64>>) -> Result<Self> {
        BSplineSurface::new(
            self.basis_u.clone(),
            self.basis_v.clone(),
            ctrl,
            self.pole_rows,
            self.flip_normals,
        )
    }

    /// Applies a point map to every control point. Equal inputs map to
    /// equal outputs, so pole rows stay collapsed.
    pub fn map_ctrl(&self, f: impl Fn(Point3<f64>) -> Point3<f64>) -> Result<Self> {
        self.with_ctrl(self.ctrl.iter().map(|p| f(*p)).collect())
    }

    pub fn scale_about(&self, center: Point3<f64>, s: f64) -> Result<Self> {
        self.map_ctrl(|p| center + (p - center) * s)
    }

    pub fn evaluate(&self, u: f64, v: f64) -> Result<Point3<f64>> {
        let (ub, wu) = self.basis_u.active(u)?;
        let (vb, wv) = self.basis_v.active(v)?;
        let mut acc = Vector3::zeros();
        for (b, wvb) in wv.iter().enumerate() {
            let j = self.basis_v.ctrl_index(vb + b as isize);
            let row = j * self.m;
            for (a, wua) in wu.iter().enumerate() {
                let i = self.basis_u.ctrl_index(ub + a as isize);
                acc += self.ctrl[row + i].coords * (wua * wvb);
            }
        }
        Ok(Point3::from(acc))
    }

    /// Point plus first partials.
    pub fn derivatives(&self, u: f64, v: f64) -> Result<(Point3<f64>, Vector3<f64>, Vector3<f64>)> {
        let (ub, wu, du) = self.basis_u.active_with_deriv(u)?;
        let (vb, wv, dv) = self.basis_v.active_with_deriv(v)?;
        let mut p = Vector3::zeros();
        let mut su = Vector3::zeros();
        let mut sv = Vector3::zeros();
        for b in 0..4 {
            let j = self.basis_v.ctrl_index(vb + b as isize);
            let row = j * self.m;
            for a in 0..4 {
                let i = self.basis_u.ctrl_index(ub + a as isize);
                let c = self.ctrl[row + i].coords;
                p += c * (wu[a] * wv[b]);
                su += c * (du[a] * wv[b]);
                sv += c * (wu[a] * dv[b]);
            }
        }
        Ok((Point3::from(p), su, sv))
    }

    /// Unit normal from the parametric cross product, honoring the
    /// orientation flag. Errors where the parameterization collapses
    /// (poles, degenerate control layouts).
    pub fn normal(&self, u: f64, v: f64) -> Result<Vector3<f64>> {
        let (_, su, sv) = self.derivatives(u, v)?;
        let cross = su.cross(&sv);
        let n = cross.norm();
        if !(n > 1e-14 * (1.0 + su.norm() * sv.norm())) {
            return Err(Error::Degenerate(format!(
                "surface normal vanishes at ({u}, {v})"
            )));
        }
        Ok(cross / n * if self.flip_normals { -1.0 } else { 1.0 })
    }

    fn grid_params(&self, u_n: usize, v_n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            span_spread(&self.basis_u, u_n)?,
            span_spread(&self.basis_v, v_n)?,
        ))
    }

    /// Parameter sweep with points and unit normals. On a surface with pole
    /// rows the first and last v rows sit on the poles; their normals are
    /// degenerate there, filled from grid neighbors and flagged.
    pub fn sample_grid(&self, u_n: usize, v_n: usize) -> Result<SampleGrid> {
        let (us, vs) = self.grid_params(u_n, v_n)?;
        let count = u_n * v_n;
        let mut params = Vec::with_capacity(count);
        let mut points = Vec::with_capacity(count);
        let mut normals = Vec::with_capacity(count);
        let mut degenerate = Vec::with_capacity(count);
        for (j, v) in vs.iter().enumerate() {
            // Rows on the poles are degenerate by construction. A refit can
            // leave the pole controls fractionally spread, which would make
            // `normal` return a junk direction instead of failing, so do not
            // even ask it there.
            let on_pole = self.pole_rows && (j == 0 || j + 1 == vs.len());
            for u in &us {
                params.push((*u, *v));
                if on_pole {
                    points.push(self.evaluate(*u, *v)?);
                    normals.push(Vector3::zeros());
                    degenerate.push(true);
                    continue;
                }
                match self.normal(*u, *v) {
                    Ok(n) => {
                        points.push(self.evaluate(*u, *v)?);
                        normals.push(n);
                        degenerate.push(false);
                    }
                    Err(Error::Degenerate(_)) => {
                        points.push(self.evaluate(*u, *v)?);
                        normals.push(Vector3::zeros());
                        degenerate.push(true);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if degenerate.iter().any(|d| *d) {
            fill_degenerate_normals(
                &mut normals,
                &degenerate,
                u_n,
                v_n,
                self.basis_u.is_periodic(),
            )?;
        }
        Ok(SampleGrid {
            u_n,
            v_n,
            params,
            points,
            normals,
            degenerate,
        })
    }

    /// Inserts a midpoint knot in one direction, reproducing the exact same
    /// surface with one more control row or column.
    pub fn refine(&self, dir: Dir, span: usize) -> Result<BSplineSurface> {
        match dir {
            Dir::U => {
                let (basis, maps) = self.basis_u.insert_midpoint(span)?;
                let m2 = self.m + 1;
                let mut ctrl = Vec::with_capacity(m2 * self.l);
                for j in 0..self.l {
                    let row = &self.ctrl[j * self.m..(j + 1) * self.m];
                    for map in &maps {
                        let mut acc = Vector3::zeros();
                        for (i, c) in map {
                            acc += row[*i].coords * *c;
                        }
                        ctrl.push(Point3::from(acc));
                    }
                }
                if self.pole_rows {
                    // Blends of identical points can drift a ulp; re-collapse.
                    for j in [0, self.l - 1] {
                        let first = ctrl[j * m2];
                        for p in &mut ctrl[j * m2..(j + 1) * m2] {
                            *p = first;
                        }
                    }
                }
                BSplineSurface::new(
                    basis,
                    self.basis_v.clone(),
                    ctrl,
                    self.pole_rows,
                    self.flip_normals,
                )
            }
            Dir::V => {
                let (basis, maps) = self.basis_v.insert_midpoint(span)?;
                let l2 = self.l + 1;
                let mut ctrl = vec![Point3::origin(); self.m * l2];
                for (j2, map) in maps.iter().enumerate() {
                    for i in 0..self.m {
                        let mut acc = Vector3::zeros();
                        for (j, c) in map {
                            acc += self.ctrl[j * self.m + i].coords * *c;
                        }
                        ctrl[j2 * self.m + i] = Point3::from(acc);
                    }
                }
                BSplineSurface::new(
                    self.basis_u.clone(),
                    basis,
                    ctrl,
                    self.pole_rows,
                    self.flip_normals,
                )
            }
        }
    }

    /// Triangulates a closed surface: `u_n * v_n` ring vertices on interior
    /// rows plus one vertex per pole, fans at the caps. Face orientation
    /// follows `normal`.
    pub fn to_mesh(&self, u_n: usize, v_n: usize) -> Result<TriMesh> {
        if !self.is_closed() {
            return Err(Error::invalid("only closed surfaces can be meshed"));
        }
        if u_n < 3 || v_n < 2 {
            return Err(Error::invalid("mesh needs u_n >= 3 and v_n >= 2"));
        }
        // Rings stay strictly between the poles; the caps are the two fan
        // vertices, so a ring at v = 0 or 1 would collapse to a point.
        let us = span_spread(&self.basis_u, u_n)?;
        let vs = span_centers(&self.basis_v, v_n)?;
        let (v_lo, v_hi) = self.basis_v.domain();
        let mut verts = Vec::with_capacity(u_n * v_n + 2);
        verts.push(self.evaluate(0.0, v_lo)?);
        for v in &vs {
            for u in &us {
                verts.push(self.evaluate(*u, *v)?);
            }
        }
        verts.push(self.evaluate(0.0, v_hi)?);
        let bottom = 0usize;
        let top = verts.len() - 1;
        let ring = |i: usize, j: usize| 1 + j * u_n + i % u_n;

        let mut faces = Vec::with_capacity(2 * u_n * v_n);
        for i in 0..u_n {
            faces.push([bottom, ring(i + 1, 0), ring(i, 0)]);
        }
        for j in 0..v_n - 1 {
            for i in 0..u_n {
                let (a, b) = (ring(i, j), ring(i + 1, j));
                let (c, d) = (ring(i + 1, j + 1), ring(i, j + 1));
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
        for i in 0..u_n {
            faces.push([top, ring(i, v_n - 1), ring(i + 1, v_n - 1)]);
        }
        let mut mesh = TriMesh::new(verts, faces)?;
        // Lateral quads wind along du x dv, the unflipped normal direction.
        if self.flip_normals {
            mesh.flip_orientation();
        }
        Ok(mesh)
    }
}

// Positions are spread evenly over the knot spans rather than the raw
// parameter: with a uniform knot vector the two agree, but once refinement
// has packed short spans into one region, even coverage per span is what
// keeps every control constrained in a refit.
fn place_in_spans(basis: &KnotBasis, x: f64) -> f64 {
    let spans = basis.span_count();
    let scaled = x * spans as f64;
    let s = (scaled.floor() as usize).min(spans - 1);
    let f = scaled - s as f64;
    let (a, b) = basis.span_bounds(s).expect("span index in range");
    a + (b - a) * f
}

// Periodic: n positions around the loop, seam excluded. Open: n positions
// including both endpoints, so pole rows on a closed surface are sampled
// too and a fit anchors the caps instead of leaving them to extrapolation.
fn span_spread(basis: &KnotBasis, n: usize) -> Result<Vec<f64>> {
    if basis.is_periodic() {
        if n < 1 {
            return Err(Error::invalid("need at least one sample around a loop"));
        }
        Ok((0..n)
            .map(|i| place_in_spans(basis, i as f64 / n as f64))
            .collect())
    } else {
        if n < 2 {
            return Err(Error::invalid("need at least two samples on an open axis"));
        }
        Ok((0..n)
            .map(|j| place_in_spans(basis, j as f64 / (n - 1) as f64))
            .collect())
    }
}

// Cell centers, strictly inside the domain.
fn span_centers(basis: &KnotBasis, n: usize) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::invalid("need at least one sample row"));
    }
    Ok((0..n)
        .map(|j| place_in_spans(basis, (j as f64 + 0.5) / n as f64))
        .collect())
}

fn fill_degenerate_normals(
    normals: &mut [Vector3<f64>],
    degenerate: &[bool],
    u_n: usize,
    v_n: usize,
    wrap_u: bool,
) -> Result<()> {
    let idx = |i: usize, j: usize| j * u_n + i;
    let mut fixed = normals.to_vec();
    // A fully degenerate row is a pole: every sample sits on one point. Give
    // the whole row a single normal, the mean over the adjacent rings, whose
    // lateral parts cancel around the loop so the fill comes out axial.
    let mut row_filled = vec![false; v_n];
    for j in 0..v_n {
        if (0..u_n).any(|i| !degenerate[idx(i, j)]) {
            continue;
        }
        let mut acc = Vector3::zeros();
        for jj in [j.wrapping_sub(1), j + 1] {
            if jj >= v_n {
                continue;
            }
            for i in 0..u_n {
                if !degenerate[idx(i, jj)] {
                    acc += normals[idx(i, jj)];
                }
            }
        }
        let n = acc.norm();
        if n > 0.0 {
            for i in 0..u_n {
                fixed[idx(i, j)] = acc / n;
            }
            row_filled[j] = true;
        }
    }
    for j in 0..v_n {
        if row_filled[j] {
            continue;
        }
        for i in 0..u_n {
            if !degenerate[idx(i, j)] {
                continue;
            }
            let mut acc = Vector3::zeros();
            let mut push = |ii: isize, jj: isize| {
                if jj < 0 || jj >= v_n as isize {
                    return;
                }
                let ii = if wrap_u {
                    ii.rem_euclid(u_n as isize)
                } else if ii < 0 || ii >= u_n as isize {
                    return;
                } else {
                    ii
                };
                let k = idx(ii as usize, jj as usize);
                if !degenerate[k] {
                    acc += normals[k];
                }
            };
            push(i as isize - 1, j as isize);
            push(i as isize + 1, j as isize);
            push(i as isize, j as isize - 1);
            push(i as isize, j as isize + 1);
            let n = acc.norm();
            if n <= 0.0 {
                return Err(Error::Degenerate(
                    "cannot reconstruct sample normals from neighbors".into(),
                ));
            }
            fixed[idx(i, j)] = acc / n;
        }
    }
    normals.copy_from_slice(&fixed);
    Ok(())
}
