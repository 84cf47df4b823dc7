//! Cubic B-spline basis evaluation over clamped and periodic knot vectors.
//!
//! Everything here is degree 3. The periodic variant stores one period of
//! knots in [0, 1) and wraps both parameters and control indices, which is
//! what lets a surface close seamlessly around its u direction.

use crate::error::{Error, Result};

/// Affine recipe for one new control point after knot insertion:
/// `new = sum(coeff * old[idx])`, coefficients summing to 1.
pub type CtrlMap = Vec<(usize, f64)>;

const DEGREE: usize = 3;

/// Knot configuration for one parametric direction.
#[derive(Debug, Clone, PartialEq)]
pub enum KnotBasis {
    /// Open curve on [first, last]. Knots are `n_ctrl + 4` values, first and
    /// last repeated 4 times, interior strictly increasing.
    Clamped { knots: Vec<f64> },
    /// Closed curve on [0, 1). One period of knots, strictly increasing,
    /// starting at exactly 0; the sequence repeats with period 1.
    Periodic { knots: Vec<f64> },
}

impl KnotBasis {
    /// Clamped basis with `n` control points and uniform interior knots
    /// spanning [0, 1].
    pub fn clamped_uniform(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::invalid("clamped cubic basis needs >= 4 controls"));
        }
        let segs = (n - DEGREE) as f64;
        let mut knots = vec![0.0; 4];
        for i in 1..n - DEGREE {
            knots.push(i as f64 / segs);
        }
        knots.extend_from_slice(&[1.0; 4]);
        KnotBasis::clamped(knots)
    }

    /// Periodic basis with `n` control points and uniform knots.
    pub fn periodic_uniform(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::invalid("periodic cubic basis needs >= 4 controls"));
        }
        let knots = (0..n).map(|i| i as f64 / n as f64).collect();
        KnotBasis::periodic(knots)
    }

    pub fn clamped(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 8 {
            return Err(Error::invalid("clamped cubic basis needs >= 8 knots"));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::invalid("knots must be finite"));
        }
        let n = knots.len();
        let head = knots[0];
        let tail = knots[n - 1];
        if knots[..4].iter().any(|k| *k != head) || knots[n - 4..].iter().any(|k| *k != tail) {
            return Err(Error::invalid(
                "clamped basis needs 4-fold end knots on both sides",
            ));
        }
        // Interior knots strictly increasing keeps every span nonempty and
        // the curve C2, which the refinement bookkeeping relies on.
        if knots[3..n - 3].windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "clamped interior knots must be strictly increasing",
            ));
        }
        Ok(KnotBasis::Clamped { knots })
    }

    pub fn periodic(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 4 {
            return Err(Error::invalid("periodic cubic basis needs >= 4 knots"));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::invalid("knots must be finite"));
        }
        if knots[0] != 0.0 {
            return Err(Error::invalid("periodic knots must start at 0"));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) || *knots.last().unwrap() >= 1.0 {
            return Err(Error::invalid(
                "periodic knots must be strictly increasing within [0, 1)",
            ));
        }
        Ok(KnotBasis::Periodic { knots })
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, KnotBasis::Periodic { .. })
    }

    pub fn n_ctrl(&self) -> usize {
        match self {
            KnotBasis::Clamped { knots } => knots.len() - 4,
            KnotBasis::Periodic { knots } => knots.len(),
        }
    }

    /// Parameter range carrying the curve: [a, b] closed for clamped,
    /// [0, 1) half-open for periodic.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            KnotBasis::Clamped { knots } => (knots[3], knots[knots.len() - 4]),
            KnotBasis::Periodic { .. } => (0.0, 1.0),
        }
    }

    pub fn span_count(&self) -> usize {
        match self {
            KnotBasis::Clamped { knots } => knots.len() - 7,
            KnotBasis::Periodic { knots } => knots.len(),
        }
    }

    /// Half-open parameter interval of one span.
    pub fn span_bounds(&self, span: usize) -> Result<(f64, f64)> {
        if span >= self.span_count() {
            return Err(Error::invalid(format!(
                "span {span} out of range ({} spans)",
                self.span_count()
            )));
        }
        Ok(match self {
            KnotBasis::Clamped { knots } => (knots[span + 3], knots[span + 4]),
            KnotBasis::Periodic { knots } => {
                let hi = if span + 1 < knots.len() {
                    knots[span + 1]
                } else {
                    1.0
                };
                (knots[span], hi)
            }
        })
    }

    /// Span id containing `t` (periodic wraps, clamped maps the right end
    /// into the last span).
    pub fn span_of(&self, t: f64) -> Result<usize> {
        match self {
            KnotBasis::Clamped { knots } => Ok(find_clamped_span(knots, t)? - 3),
            KnotBasis::Periodic { knots } => {
                if !t.is_finite() {
                    return Err(Error::OutOfDomain { u: t, v: f64::NAN });
                }
                Ok(periodic_span(knots, wrap_unit(t)))
            }
        }
    }

    /// Wraps or checks a control index delivered by `active`.
    pub fn ctrl_index(&self, raw: isize) -> usize {
        match self {
            KnotBasis::Clamped { .. } => raw as usize,
            KnotBasis::Periodic { knots } => raw.rem_euclid(knots.len() as isize) as usize,
        }
    }

    /// The four basis values at `t`, weighting controls
    /// `ctrl_index(base + 0..4)`.
    pub fn active(&self, t: f64) -> Result<(isize, [f64; 4])> {
        let (base, win, te) = self.window(t)?;
        let (vals, _) = basis_funs(&win, te);
        Ok((base, vals))
    }

    /// Basis values and first derivatives at `t`.
    pub fn active_with_deriv(&self, t: f64) -> Result<(isize, [f64; 4], [f64; 4])> {
        let (base, win, te) = self.window(t)?;
        let (vals, n2) = basis_funs(&win, te);
        let mut ders = [0.0; 4];
        // Quadratic values live at window slots 1..=3; anything outside is
        // identically zero on this span.
        let q = |slot: usize| {
            if (1..=3).contains(&slot) {
                n2[slot - 1]
            } else {
                0.0
            }
        };
        for (il, d) in ders.iter_mut().enumerate() {
            let d1 = win[il + 3] - win[il];
            let d2 = win[il + 4] - win[il + 1];
            let a = if d1 > 0.0 { q(il) / d1 } else { 0.0 };
            let b = if d2 > 0.0 { q(il + 1) / d2 } else { 0.0 };
            *d = DEGREE as f64 * (a - b);
        }
        Ok((base, vals, ders))
    }

    /// Inserts the midpoint of `span` as a new knot. Returns the refined
    /// basis plus, per new control index, the affine combination of old
    /// controls that reproduces the identical curve.
    pub fn insert_midpoint(&self, span: usize) -> Result<(KnotBasis, Vec<CtrlMap>)> {
        let (lo, hi) = self.span_bounds(span)?;
        let tbar = 0.5 * (lo + hi);
        match self {
            KnotBasis::Clamped { knots } => {
                let n_ctrl = self.n_ctrl();
                let k = span + 3;
                let mut new_knots = knots.clone();
                new_knots.insert(k + 1, tbar);
                let mut maps = Vec::with_capacity(n_ctrl + 1);
                for i in 0..=n_ctrl {
                    maps.push(if i + 3 <= k {
                        vec![(i, 1.0)]
                    } else if i <= k {
                        let alpha = (tbar - knots[i]) / (knots[i + 3] - knots[i]);
                        vec![(i - 1, 1.0 - alpha), (i, alpha)]
                    } else {
                        vec![(i - 1, 1.0)]
                    });
                }
                Ok((KnotBasis::clamped(new_knots)?, maps))
            }
            KnotBasis::Periodic { knots } => {
                let n = knots.len();
                let s = span as isize;
                let ni = n as isize;
                let ext = |j: isize| knots[j.rem_euclid(ni) as usize] + j.div_euclid(ni) as f64;
                let mut new_knots = knots.clone();
                new_knots.insert(span + 1, tbar);
                let mut maps = vec![Vec::new(); n + 1];
                // One period of new controls, representatives s-2 ..= s+n-2:
                // three blended around the insertion, the rest shifted copies.
                for j in s - 2..=s + ni - 2 {
                    let new_idx = j.rem_euclid(ni + 1) as usize;
                    let prev = (j - 1).rem_euclid(ni) as usize;
                    maps[new_idx] = if j <= s {
                        let alpha = (tbar - ext(j)) / (ext(j + 3) - ext(j));
                        vec![(prev, 1.0 - alpha), (j.rem_euclid(ni) as usize, alpha)]
                    } else {
                        vec![(prev, 1.0)]
                    };
                }
                Ok((KnotBasis::periodic(new_knots)?, maps))
            }
        }
    }

    /// 8-knot window centered on the span of `t`: local slots 0..8 hold the
    /// knots for global indices span-3 ..= span+4, and the returned
    /// parameter lies in [window[3], window[4]].
    fn window(&self, t: f64) -> Result<(isize, [f64; 8], f64)> {
        match self {
            KnotBasis::Clamped { knots } => {
                let span = find_clamped_span(knots, t)?;
                let mut win = [0.0; 8];
                win.copy_from_slice(&knots[span - 3..span + 5]);
                Ok((span as isize - 3, win, t))
            }
            KnotBasis::Periodic { knots } => {
                if !t.is_finite() {
                    return Err(Error::OutOfDomain { u: t, v: f64::NAN });
                }
                let tw = wrap_unit(t);
                let n = knots.len() as isize;
                let s = periodic_span(knots, tw) as isize;
                let mut win = [0.0; 8];
                for (off, w) in win.iter_mut().enumerate() {
                    let j = s - 3 + off as isize;
                    *w = knots[j.rem_euclid(n) as usize] + j.div_euclid(n) as f64;
                }
                Ok((s - 3, win, tw))
            }
        }
    }
}

fn wrap_unit(t: f64) -> f64 {
    let w = t.rem_euclid(1.0);
    // rem_euclid of a tiny negative can land exactly on 1.0.
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Largest period-span index s with knots[s] <= t, for t in [0, 1).
fn periodic_span(knots: &[f64], t: f64) -> usize {
    knots.partition_point(|k| *k <= t) - 1
}

/// Knot index k with knots[k] <= t < knots[k+1]; the right domain end maps
/// into the final span.
fn find_clamped_span(knots: &[f64], t: f64) -> Result<usize> {
    let n = knots.len();
    let (lo, hi) = (knots[3], knots[n - 4]);
    if !(t >= lo && t <= hi) {
        return Err(Error::OutOfDomain { u: t, v: f64::NAN });
    }
    if t == hi {
        return Ok(n - 5);
    }
    let mut a = 3;
    let mut b = n - 5;
    while a < b {
        let mid = (a + b + 1) / 2;
        if knots[mid] <= t {
            a = mid;
        } else {
            b = mid - 1;
        }
    }
    Ok(a)
}

/// Triangular Cox-de Boor recursion on an 8-knot window with the active
/// span at local slot 3. Returns the four cubic values plus the three
/// quadratic values (for global functions span-2 ..= span) the derivative
/// formula needs.
fn basis_funs(win: &[f64; 8], t: f64) -> ([f64; 4], [f64; 3]) {
    let mut vals = [0.0; 4];
    vals[0] = 1.0;
    let mut left = [0.0; 4];
    let mut right = [0.0; 4];
    let mut quad = [0.0; 3];
    for j in 1..=DEGREE {
        left[j] = t - win[3 + 1 - j];
        right[j] = win[3 + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom != 0.0 { vals[r] / denom } else { 0.0 };
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
        if j == 2 {
            quad.copy_from_slice(&vals[..3]);
        }
    }
    (vals, quad)
}

/// Single cubic-or-lower basis function by the textbook recursion, half-open
/// spans with the global right end closed. Slow and allocation-free on
/// purpose: this is the reference the fast evaluator is checked against.
pub fn basis(knots: &[f64], i: usize, p: usize, t: f64) -> Result<f64> {
    if knots.len() < 2 || i + p + 1 >= knots.len() {
        return Err(Error::invalid(format!(
            "basis index {i} degree {p} needs {} knots, got {}",
            i + p + 2,
            knots.len()
        )));
    }
    if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("knots must be finite and nondecreasing"));
    }
    if !t.is_finite() {
        return Err(Error::OutOfDomain { u: t, v: f64::NAN });
    }
    Ok(basis_rec(knots, i, p, t, *knots.last().unwrap()))
}

fn basis_rec(knots: &[f64], i: usize, p: usize, t: f64, last: f64) -> f64 {
    if p == 0 {
        let closes_end = t == knots[i + 1] && knots[i + 1] == last && knots[i] < knots[i + 1];
        return if (knots[i] <= t && t < knots[i + 1]) || closes_end {
            1.0
        } else {
            0.0
        };
    }
    let mut v = 0.0;
    let d1 = knots[i + p] - knots[i];
    if d1 > 0.0 {
        v += (t - knots[i]) / d1 * basis_rec(knots, i, p - 1, t, last);
    }
    let d2 = knots[i + p + 1] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + p + 1] - t) / d2 * basis_rec(knots, i + 1, p - 1, t, last);
    }
    v
}
