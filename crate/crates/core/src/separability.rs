//! Fisher-ratio separability between regions of a point cloud.
//!
//! Two regions are compared on occupancy (how full each region is relative
//! to its volume and the local point spacing) and on any number of scalar
//! attribute channels. Every measure is a between-class over total variance
//! ratio, so results live in [0, 1]: 0 means indistinguishable, 1 means
//! perfectly separated.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Cuboid, PointCloud};

/// Occupancy tally for one region: `actual` observed points plus `nondata`
/// synthesized empty slots standing in for unoccupied volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionCounts {
    pub actual: u64,
    pub nondata: u64,
}

impl RegionCounts {
    pub fn total(&self) -> u64 {
        self.actual + self.nondata
    }
}

/// How the characteristic spacing used for non-data counts is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DensityMode {
    /// One spacing for the whole cloud. Right for uniformly sampled data and
    /// much cheaper.
    #[default]
    Global,
    /// Spacing re-estimated from the members of each region pair. Use for
    /// clouds whose sampling density varies.
    PerRegion,
}

/// Channel weights for the combined separability measure. Index 0 of the
/// combined vector is always the occupancy (point) channel; attribute
/// channels follow in the order listed here.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityWeights {
    pub point: f64,
    pub attributes: Vec<(String, f64)>,
}

impl SeparabilityWeights {
    /// Occupancy-only weighting, the default for plain geometric clouds.
    pub fn point_only() -> Self {
        SeparabilityWeights {
            point: 1.0,
            attributes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut all = vec![self.point];
        all.extend(self.attributes.iter().map(|(_, w)| *w));
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("separability weights must be >= 0"));
        }
        if all.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("separability weights must not all be zero"));
        }
        Ok(())
    }

    pub fn as_vec(&self) -> Vec<f64> {
        let mut v = vec![self.point];
        v.extend(self.attributes.iter().map(|(_, w)| *w));
        v
    }

    pub fn channel_count(&self) -> usize {
        1 + self.attributes.len()
    }
}

/// Result of sweeping an internal boundary through a search cuboid.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    /// Best weighted separability found, in [0, 1].
    pub eta_star: f64,
    /// Depth offset of the best boundary relative to the cuboid center;
    /// |offset| < depth extent / 2. Zero when the cuboid holds no points.
    pub split_offset: f64,
    /// Per-channel separability at the best offset (occupancy first).
    pub per_channel: Vec<f64>,
    /// Cloud points inside the whole search cuboid.
    pub members: usize,
}

/// Combined separability of one region pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSeparability {
    pub eta: f64,
    /// Occupancy channel first, then attributes in weight order.
    pub per_channel: Vec<f64>,
    /// True when neither region held a single actual point, in which case
    /// `eta` is 0 by definition rather than by measurement.
    pub no_evidence: bool,
}

/// Sample lattice for `separability_map`: points at
/// `origin + (i*step.x, j*step.y, k*step.z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub origin: Point3<f64>,
    pub step: Vector3<f64>,
    pub counts: [usize; 3],
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1] * self.counts[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        self.origin
            + Vector3::new(
                self.step.x * i as f64,
                self.step.y * j as f64,
                self.step.z * k as f64,
            )
    }

    /// Iteration order of the flat value vector: x fastest, then y, then z.
    pub fn points(&self) -> impl Iterator<Item = Point3<f64>> + '_ {
        let [nx, ny, nz] = self.counts;
        (0..nz).flat_map(move |k| {
            (0..ny).flat_map(move |j| (0..nx).map(move |i| self.point(i, j, k)))
        })
    }
}

/// Scalar separability field sampled on a grid.
#[derive(Debug, Clone)]
pub struct SeparabilityMap {
    pub grid: GridSpec,
    /// Values in `GridSpec::points` order.
    pub values: Vec<f64>,
}

/// Fisher ratio between two scalar samples: between-class variance over
/// total variance around the pooled mean. Zero total variance (all values
/// identical) is defined as 0.
pub fn attribute_separability(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let sum1: f64 = a.iter().sum();
    let sum2: f64 = b.iter().sum();
    let m1 = sum1 / n1;
    let m2 = sum2 / n2;
    let m = (sum1 + sum2) / (n1 + n2);
    let between = n1 * (m1 - m) * (m1 - m) + n2 * (m2 - m) * (m2 - m);
    let total: f64 = a
        .iter()
        .chain(b.iter())
        .map(|v| (v - m) * (v - m))
        .sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    Ok((between / total).clamp(0.0, 1.0))
}

/// Number of empty slots a region of `volume` can hold at characteristic
/// spacing `delta`, after subtracting the `actual` points present. Clamped
/// at zero: a region denser than the estimate contributes no empty slots.
pub fn nondata_count(volume: f64, delta: f64, actual: u64) -> Result<u64> {
    if !(volume.is_finite() && volume > 0.0) {
        return Err(Error::invalid("region volume must be positive"));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid("spacing delta must be positive"));
    }
    // Guard the cast: degenerate spacing can push the capacity beyond what
    // u64 arithmetic downstream should see.
    let capacity = (volume / (delta * delta * delta)).floor().min(1e15) as u64;
    Ok(capacity.saturating_sub(actual))
}

/// Occupancy separability from counts alone. Equivalent to running
/// `attribute_separability` on binary indicator vectors (1 per actual point,
/// 0 per non-data slot), but in closed form.
pub fn point_separability(r1: RegionCounts, r2: RegionCounts) -> Result<f64> {
    let n1 = r1.total() as f64;
    let n2 = r2.total() as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::EmptyRegion);
    }
    let mu1 = r1.actual as f64 / n1;
    let mu2 = r2.actual as f64 / n2;
    let n = n1 + n2;
    let mu = (r1.actual + r2.actual) as f64 / n;
    if mu <= 0.0 || mu >= 1.0 {
        // All slots occupied or all empty: nothing to separate.
        return Ok(0.0);
    }
    let between = n1 * (mu1 - mu) * (mu1 - mu) + n2 * (mu2 - mu) * (mu2 - mu);
    let total = n * mu * (1.0 - mu);
    Ok((between / total).clamp(0.0, 1.0))
}

/// Weighted mean of per-channel separabilities.
pub fn weighted_separability(etas: &[f64], weights: &[f64]) -> Result<f64> {
    if etas.len() != weights.len() || etas.is_empty() {
        return Err(Error::invalid(format!(
            "got {} separability values for {} weights",
            etas.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("separability weights must be >= 0"));
    }
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return Err(Error::invalid("separability weights must not all be zero"));
    }
    let acc: f64 = etas.iter().zip(weights).map(|(e, w)| e * w).sum();
    Ok((acc / wsum).clamp(0.0, 1.0))
}

/// Shared setup for region-pair queries against one cloud: weight
/// validation, attribute lookup, and (in global mode) the one-off spacing
/// estimate.
pub struct SeparabilityEvaluator<'a> {
    cloud: &'a PointCloud,
    weights: SeparabilityWeights,
    density_mode: DensityMode,
    k: usize,
    global_delta: Option<f64>,
    point_spacing: Option<Vec<f64>>,
}

impl<'a> SeparabilityEvaluator<'a> {
    pub fn new(
        cloud: &'a PointCloud,
        weights: SeparabilityWeights,
        density_mode: DensityMode,
        k: usize,
    ) -> Result<Self> {
        weights.validate()?;
        for (name, _) in &weights.attributes {
            if cloud.attribute(name).is_none() {
                return Err(Error::invalid(format!(
                    "cloud has no attribute channel '{name}'"
                )));
            }
        }
        if k + 1 > cloud.len() {
            return Err(Error::KTooLarge {
                k,
                available: cloud.len().saturating_sub(1),
            });
        }
        // Per-region mode averages each member's k-NN spacing; windows
        // overlap heavily, so the per-point spacings are computed once here
        // instead of re-running the same queries window after window.
        let (global_delta, point_spacing) = match density_mode {
            DensityMode::Global => (Some(cloud.global_density(k)?), None),
            DensityMode::PerRegion => {
                let mut spacing = Vec::with_capacity(cloud.len());
                for id in 0..cloud.len() {
                    spacing.push(cloud.mean_knn_distance(id, k)?);
                }
                (None, Some(spacing))
            }
        };
        Ok(SeparabilityEvaluator {
            cloud,
            weights,
            density_mode,
            k,
            global_delta,
            point_spacing,
        })
    }

    pub fn weights(&self) -> &SeparabilityWeights {
        &self.weights
    }

    fn delta_for(&self, union_ids: &[usize]) -> Result<f64> {
        match self.density_mode {
            DensityMode::Global => Ok(self.global_delta.unwrap()),
            DensityMode::PerRegion => {
                if union_ids.is_empty() {
                    return Err(Error::EmptyRegion);
                }
                let spacing = self.point_spacing.as_ref().unwrap();
                let sum: f64 = union_ids.iter().map(|&id| spacing[id]).sum();
                Ok(sum / union_ids.len() as f64)
            }
        }
    }

    /// Separability of two adjacent regions. Both cuboids use closed
    /// containment, so a point exactly on the shared face contributes to
    /// both counts; that tie rule is deterministic and measure-zero for
    /// generic data.
    pub fn region_pair(&self, c1: &Cuboid, c2: &Cuboid) -> Result<PairSeparability> {
        let (o1, ids1) = self.cloud.points_in_cuboid(c1);
        let (o2, ids2) = self.cloud.points_in_cuboid(c2);
        let channels = self.weights.channel_count();
        if o1 == 0 && o2 == 0 {
            return Ok(PairSeparability {
                eta: 0.0,
                per_channel: vec![0.0; channels],
                no_evidence: true,
            });
        }
        let union: Vec<usize> = merge_unique(&ids1, &ids2);
        let delta = self.delta_for(&union)?;
        let b1 = nondata_count(c1.volume(), delta, o1 as u64)?;
        let b2 = nondata_count(c2.volume(), delta, o2 as u64)?;
        let r1 = RegionCounts {
            actual: o1 as u64,
            nondata: b1,
        };
        let r2 = RegionCounts {
            actual: o2 as u64,
            nondata: b2,
        };
        let mut per_channel = Vec::with_capacity(channels);
        // A region with zero total slots carries no occupancy information.
        let eta_p = if r1.total() == 0 || r2.total() == 0 {
            0.0
        } else {
            point_separability(r1, r2)?
        };
        per_channel.push(eta_p);
        for (name, _) in &self.weights.attributes {
            let channel = self.cloud.attribute(name).unwrap();
            // Attribute statistics come from actual points only; an empty
            // region contributes zero separability for the channel.
            let eta = if ids1.is_empty() || ids2.is_empty() {
                0.0
            } else {
                let v1: Vec<f64> = ids1.iter().map(|&i| channel[i]).collect();
                let v2: Vec<f64> = ids2.iter().map(|&i| channel[i]).collect();
                attribute_separability(&v1, &v2)?
            };
            per_channel.push(eta);
        }
        let eta = weighted_separability(&per_channel, &self.weights.as_vec())?;
        Ok(PairSeparability {
            eta,
            per_channel,
            no_evidence: false,
        })
    }

    /// Sweeps `n_splits` equispaced internal boundaries through the search
    /// cuboid (strictly inside its depth range) and returns the offset
    /// maximizing the weighted separability between the deeper region and
    /// the shallower one. Ties prefer the offset nearest zero, then the
    /// outward one of a mirrored pair. A cuboid with no points at all
    /// yields `eta_star = 0` at offset 0.
    ///
    /// Semantically each boundary position is a `region_pair` call on the
    /// two depth slabs, but the cuboid members are gathered once and
    /// partitioned by their depth coordinate per offset (closed on both
    /// sides, so a point exactly on a boundary counts in both regions,
    /// matching the closed-face containment of the slab pair). The slabs'
    /// union is the whole cuboid at every offset, so the per-region spacing
    /// estimate is shared too.
    pub fn max_split(&self, search: &Cuboid, n_splits: usize) -> Result<SplitResult> {
        if n_splits < 2 {
            return Err(Error::invalid("n_splits must be at least 2"));
        }
        let channels = self.weights.channel_count();
        let (_, ids) = self.cloud.points_in_cuboid(search);
        if ids.is_empty() {
            return Ok(SplitResult {
                eta_star: 0.0,
                split_offset: 0.0,
                per_channel: vec![0.0; channels],
                members: 0,
            });
        }
        let depths: Vec<f64> = ids
            .iter()
            .map(|&i| search.depth_coordinate(&self.cloud.position(i)))
            .collect();
        let delta = self.delta_for(&ids)?;
        let [depth_ext, h, w] = search.extents();
        let half = depth_ext / 2.0;
        let attr_channels: Vec<&[f64]> = self
            .weights
            .attributes
            .iter()
            .map(|(name, _)| self.cloud.attribute(name).unwrap())
            .collect();
        let wvec = self.weights.as_vec();
        let mut best: Option<(f64, f64, Vec<f64>)> = None;
        for i in 1..=n_splits {
            // Centered form keeps mirrored offsets exactly symmetric, so an
            // eta tie between +-t is a real dead heat for the tie rule
            // instead of drifting on rounding noise.
            let t = depth_ext * (i as f64 - 0.5 * (n_splits as f64 + 1.0))
                / (n_splits as f64 + 1.0);
            let mut inner = Vec::new();
            let mut outer = Vec::new();
            for (&id, &d) in ids.iter().zip(&depths) {
                if d <= t {
                    inner.push(id);
                }
                if d >= t {
                    outer.push(id);
                }
            }
            let r1 = RegionCounts {
                actual: inner.len() as u64,
                nondata: nondata_count((t + half) * h * w, delta, inner.len() as u64)?,
            };
            let r2 = RegionCounts {
                actual: outer.len() as u64,
                nondata: nondata_count((half - t) * h * w, delta, outer.len() as u64)?,
            };
            let mut per_channel = Vec::with_capacity(channels);
            per_channel.push(if r1.total() == 0 || r2.total() == 0 {
                0.0
            } else {
                point_separability(r1, r2)?
            });
            for channel in &attr_channels {
                per_channel.push(if inner.is_empty() || outer.is_empty() {
                    0.0
                } else {
                    let v1: Vec<f64> = inner.iter().map(|&id| channel[id]).collect();
                    let v2: Vec<f64> = outer.iter().map(|&id| channel[id]).collect();
                    attribute_separability(&v1, &v2)?
                });
            }
            let eta = weighted_separability(&per_channel, &wvec)?;
            // Tie rule: nearest zero first; a dead heat between +-t takes
            // the outward boundary, so a surface resting in the gap between
            // two offsets drifts away from the data rather than through it.
            let better = match &best {
                None => true,
                Some((e, offset, _)) => {
                    eta > *e
                        || (eta == *e
                            && (t.abs() < offset.abs()
                                || (t.abs() == offset.abs() && t > *offset)))
                }
            };
            if better {
                best = Some((eta, t, per_channel));
            }
        }
        let (eta_star, split_offset, per_channel) = best.unwrap();
        Ok(SplitResult {
            eta_star,
            split_offset,
            per_channel,
            members: ids.len(),
        })
    }

    /// Evaluates the boundary separability field on a grid: at each grid
    /// point, two windows of `window` = (depth, height, width) are placed
    /// back to back along `direction` with their shared face through the
    /// grid point.
    pub fn separability_map(
        &self,
        grid: &GridSpec,
        direction: &Vector3<f64>,
        window: [f64; 3],
    ) -> Result<SeparabilityMap> {
        let n = direction.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("map direction must be nonzero"));
        }
        if grid.is_empty() {
            return Err(Error::invalid("map grid has no sample points"));
        }
        let dir = direction / n;
        let half = window[0] / 2.0;
        let points: Vec<Point3<f64>> = grid.points().collect();
        use rayon::prelude::*;
        let values: Vec<f64> = points
            .par_iter()
            .map(|sp| {
                let before = Cuboid::from_depth_axis(sp - dir * half, dir, window)?;
                let after = Cuboid::from_depth_axis(sp + dir * half, dir, window)?;
                Ok(self.region_pair(&before, &after)?.eta)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(SeparabilityMap {
            grid: grid.clone(),
            values,
        })
    }
}

fn merge_unique(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
