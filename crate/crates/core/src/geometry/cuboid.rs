use nalgebra::{Point3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Oriented box used as a search region.
///
/// The frame is (depth, height, width); `extents` are the full edge lengths
/// along those axes. During membrane evolution the depth axis runs along the
/// surface normal, so "deeper" means more negative depth coordinate (towards
/// the object interior).
#[derive(Debug, Clone, PartialEq)]
pub struct Cuboid {
    center: Point3<f64>,
    axes: [Unit<Vector3<f64>>; 3],
    extents: [f64; 3],
}

impl Cuboid {
    /// Validates that `axes` form a right-handed-or-left-handed orthonormal
    /// frame within 1e-9 and that all extents are strictly positive.
    pub fn new(center: Point3<f64>, axes: [Vector3<f64>; 3], extents: [f64; 3]) -> Result<Self> {
        for (i, e) in extents.iter().enumerate() {
            if !(e.is_finite() && *e > 0.0) {
                return Err(Error::invalid(format!(
                    "cuboid extent {i} must be strictly positive, got {e}"
                )));
            }
        }
        if !center.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("cuboid center must be finite"));
        }
        for a in 0..3 {
            if (axes[a].norm() - 1.0).abs() > ORTHONORMAL_TOL {
                return Err(Error::invalid(format!(
                    "cuboid axis {a} is not unit length (|a| = {})",
                    axes[a].norm()
                )));
            }
            for b in (a + 1)..3 {
                if axes[a].dot(&axes[b]).abs() > ORTHONORMAL_TOL {
                    return Err(Error::invalid(format!(
                        "cuboid axes {a} and {b} are not orthogonal"
                    )));
                }
            }
        }
        Ok(Cuboid {
            center,
            axes: axes.map(|a| Unit::new_unchecked(a.normalize())),
            extents,
        })
    }

    /// Builds a frame around a given depth axis. The height axis is the
    /// global axis least aligned with `depth`, orthogonalized; the width axis
    /// completes the right-handed frame. Deterministic in the input.
    pub fn from_depth_axis(
        center: Point3<f64>,
        depth: Vector3<f64>,
        extents: [f64; 3],
    ) -> Result<Self> {
        let n = depth.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("cuboid depth axis must be nonzero"));
        }
        let d = depth / n;
        let mut pick = 0;
        for a in 1..3 {
            if d[a].abs() < d[pick].abs() {
                pick = a;
            }
        }
        let mut e = Vector3::zeros();
        e[pick] = 1.0;
        let h = (e - d * d.dot(&e)).normalize();
        let w = d.cross(&h);
        Cuboid::new(center, [d, h, w], extents)
    }

    pub fn center(&self) -> Point3<f64> {
        self.center
    }

    pub fn axes(&self) -> [Vector3<f64>; 3] {
        [
            self.axes[0].into_inner(),
            self.axes[1].into_inner(),
            self.axes[2].into_inner(),
        ]
    }

    pub fn depth_axis(&self) -> Vector3<f64> {
        self.axes[0].into_inner()
    }

    /// Full edge lengths (depth, height, width).
    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    pub fn volume(&self) -> f64 {
        self.extents[0] * self.extents[1] * self.extents[2]
    }

    /// Signed coordinate of `p` along the depth axis, relative to the center.
    pub fn depth_coordinate(&self, p: &Point3<f64>) -> f64 {
        (p - self.center).dot(&self.axes[0])
    }

    /// Closed containment: boundary points count as inside.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let d = p - self.center;
        (0..3).all(|a| d.dot(&self.axes[a]).abs() <= self.extents[a] / 2.0)
    }

    /// Smallest axis-aligned box containing the cuboid.
    pub fn aabb(&self) -> BoundingBox {
        let mut half = Vector3::zeros();
        for c in 0..3 {
            half[c] = (0..3)
                .map(|a| self.axes[a][c].abs() * self.extents[a] / 2.0)
                .sum();
        }
        BoundingBox {
            min: self.center - half,
            max: self.center + half,
        }
    }

    /// Sub-cuboid spanning depth coordinates `[t0, t1]` (relative to this
    /// cuboid's center), keeping height and width. Used to carve split
    /// regions out of a search cuboid.
    pub fn depth_slab(&self, t0: f64, t1: f64) -> Result<Cuboid> {
        let half = self.extents[0] / 2.0;
        if !(t0 >= -half - ORTHONORMAL_TOL && t1 <= half + ORTHONORMAL_TOL && t1 > t0) {
            return Err(Error::invalid(format!(
                "depth slab [{t0}, {t1}] outside cuboid depth range [{}, {}]",
                -half, half
            )));
        }
        Cuboid::new(
            self.center + self.axes[0].into_inner() * ((t0 + t1) / 2.0),
            self.axes(),
            [t1 - t0, self.extents[1], self.extents[2]],
        )
    }
}
