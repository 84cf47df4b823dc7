//! Linear least-squares fitting of surface control points to target points
//! at fixed parameters.
//!
//! The system is tiny in bandwidth (at most 16 active basis products per
//! sample) but the unknown count grows with the control grid, so the normal
//! equations are accumulated sparsely per sample into a dense matrix and
//! solved by Cholesky. When both pole rows are collapsed, each pole row is
//! a single unknown; partition of unity in u makes its column weight just
//! the v basis value, and the solved system reproduces exactly collapsed
//! rows by construction.

use nalgebra::{Cholesky, DMatrix, Point3};

use super::basis::KnotBasis;
use super::surface::BSplineSurface;
use crate::error::{Error, Result};

struct UnknownLayout {
    m: usize,
    l: usize,
    pole_rows: bool,
}

impl UnknownLayout {
    fn count(&self) -> usize {
        if self.pole_rows {
            2 + (self.l - 2) * self.m
        } else {
            self.m * self.l
        }
    }

    /// Unknown id for control (i, j).
    fn id(&self, i: usize, j: usize) -> usize {
        if self.pole_rows {
            if j == 0 {
                0
            } else if j == self.l - 1 {
                1
            } else {
                2 + (j - 1) * self.m + i
            }
        } else {
            j * self.m + i
        }
    }
}

impl BSplineSurface {
    /// Solves for the control grid minimizing the sum of squared distances
    /// between the surface at `params` and `targets`.
    pub fn fit(
        basis_u: KnotBasis,
        basis_v: KnotBasis,
        pole_rows: bool,
        flip_normals: bool,
        params: &[(f64, f64)],
        targets: &[Point3<f64>],
    ) -> Result<BSplineSurface> {
        Self::fit_weighted(basis_u, basis_v, pole_rows, flip_normals, params, targets, None)
    }

    /// `fit` with an optional per-sample weight on each squared residual.
    /// Weights must be positive; use a small weight, not zero, to keep a
    /// sample from dominating while still pinning rank.
    pub fn fit_weighted(
        basis_u: KnotBasis,
        basis_v: KnotBasis,
        pole_rows: bool,
        flip_normals: bool,
        params: &[(f64, f64)],
        targets: &[Point3<f64>],
        weights: Option<&[f64]>,
    ) -> Result<BSplineSurface> {
        if params.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} parameter pairs for {} targets",
                params.len(),
                targets.len()
            )));
        }
        if let Some(w) = weights {
            if w.len() != params.len() {
                return Err(Error::invalid(format!(
                    "{} weights for {} samples",
                    w.len(),
                    params.len()
                )));
            }
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::invalid("fit weights must be positive and finite"));
            }
        }
        let layout = UnknownLayout {
            m: basis_u.n_ctrl(),
            l: basis_v.n_ctrl(),
            pole_rows,
        };
        if pole_rows && (!basis_u.is_periodic() || basis_v.is_periodic()) {
            return Err(Error::invalid(
                "pole rows need a periodic u basis and a clamped v basis",
            ));
        }
        let n_unknowns = layout.count();
        check_coverage(params, layout.m, layout.l, n_unknowns)?;
        if targets
            .iter()
            .any(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::invalid("fit targets must be finite"));
        }

        let mut ata = DMatrix::<f64>::zeros(n_unknowns, n_unknowns);
        let mut atb = DMatrix::<f64>::zeros(n_unknowns, 3);
        // Scratch row reused across samples: (unknown id, coefficient).
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(16);
        for (k, ((u, v), target)) in params.iter().zip(targets).enumerate() {
            let w = weights.map_or(1.0, |w| w[k]);
            row.clear();
            let (ub, wu) = basis_u.active(*u)?;
            let (vb, wv) = basis_v.active(*v)?;
            for (b, wvb) in wv.iter().enumerate() {
                let j = basis_v.ctrl_index(vb + b as isize);
                for (a, wua) in wu.iter().enumerate() {
                    let i = basis_u.ctrl_index(ub + a as isize);
                    let id = layout.id(i, j);
                    let c = wua * wvb;
                    // Pole unknowns collect all four u contributions.
                    match row.iter_mut().find(|(rid, _)| *rid == id) {
                        Some((_, rc)) => *rc += c,
                        None => row.push((id, c)),
                    }
                }
            }
            for (p, cp) in &row {
                for (q, cq) in &row {
                    ata[(*p, *q)] += w * cp * cq;
                }
                for d in 0..3 {
                    atb[(*p, d)] += w * cp * target.coords[d];
                }
            }
        }

        let solution = match Cholesky::new(ata.clone()) {
            Some(chol) => chol.solve(&atb),
            None => {
                // Rank trouble: nudge the diagonal once before giving up.
                let ridge = 1e-10 * ata.trace() / n_unknowns as f64;
                for d in 0..n_unknowns {
                    ata[(d, d)] += ridge;
                }
                match Cholesky::new(ata) {
                    Some(chol) => chol.solve(&atb),
                    None => {
                        return Err(Error::Numerical(
                            "normal equations are not positive definite".into(),
                        ))
                    }
                }
            }
        };

        let mut ctrl = Vec::with_capacity(layout.m * layout.l);
        for j in 0..layout.l {
            for i in 0..layout.m {
                let id = layout.id(i, j);
                ctrl.push(Point3::new(
                    solution[(id, 0)],
                    solution[(id, 1)],
                    solution[(id, 2)],
                ));
            }
        }
        BSplineSurface::new(basis_u, basis_v, ctrl, pole_rows, flip_normals)
    }

    /// Refits this surface's control grid to new targets, keeping knots,
    /// topology, and orientation.
    pub fn refit(&self, params: &[(f64, f64)], targets: &[Point3<f64>]) -> Result<BSplineSurface> {
        self.refit_weighted(params, targets, None)
    }

    /// `refit` with optional per-sample weights.
    pub fn refit_weighted(
        &self,
        params: &[(f64, f64)],
        targets: &[Point3<f64>],
        weights: Option<&[f64]>,
    ) -> Result<BSplineSurface> {
        BSplineSurface::fit_weighted(
            self.basis_u().clone(),
            self.basis_v().clone(),
            self.has_pole_rows(),
            self.normals_flipped(),
            params,
            targets,
            weights,
        )
    }
}

/// Cheap necessary conditions with a readable error; the Cholesky factor
/// is the true rank authority.
fn check_coverage(params: &[(f64, f64)], m: usize, l: usize, n_unknowns: usize) -> Result<()> {
    if params.len() < n_unknowns {
        return Err(Error::InsufficientSamples {
            got: params.len(),
            need: n_unknowns,
        });
    }
    let mut us: Vec<f64> = params.iter().map(|(u, _)| *u).collect();
    let mut vs: Vec<f64> = params.iter().map(|(_, v)| *v).collect();
    us.sort_by(f64::total_cmp);
    us.dedup();
    vs.sort_by(f64::total_cmp);
    vs.dedup();
    if us.len() < m {
        return Err(Error::InsufficientSamples {
            got: us.len(),
            need: m,
        });
    }
    if vs.len() < l {
        return Err(Error::InsufficientSamples {
            got: vs.len(),
            need: l,
        });
    }
    Ok(())
}
