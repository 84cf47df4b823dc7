//! Point-cloud container, spatial index, and local density estimation.

mod cuboid;
mod index;

pub use cuboid::Cuboid;
pub use index::KdTree;

use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl BoundingBox {
    pub fn from_points(points: &[Point3<f64>]) -> Option<Self> {
        let first = points.first()?;
        let mut bb = BoundingBox {
            min: *first,
            max: *first,
        };
        for p in &points[1..] {
            for a in 0..3 {
                bb.min[a] = bb.min[a].min(p[a]);
                bb.max[a] = bb.max[a].max(p[a]);
            }
        }
        Some(bb)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn center(&self) -> Point3<f64> {
        self.min + (self.max - self.min) / 2.0
    }

    pub fn extents(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// An immutable point cloud: positions, optional named scalar attribute
/// channels (intensity, density, ...), and a spatial index built on
/// construction. Queries never mutate, so a cloud can be shared across
/// threads freely.
#[derive(Debug, Clone)]
pub struct PointCloud {
    positions: Vec<Point3<f64>>,
    attributes: BTreeMap<String, Vec<f64>>,
    index: KdTree,
    bbox: BoundingBox,
}

impl PointCloud {
    /// Rejects empty input and non-finite coordinates. File readers drop bad
    /// rows before calling this (see the io module).
    pub fn new(positions: Vec<Point3<f64>>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if !positions
            .iter()
            .all(|p| p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        let index = KdTree::build(&positions);
        let bbox = BoundingBox::from_points(&positions).unwrap();
        Ok(PointCloud {
            positions,
            attributes: BTreeMap::new(),
            index,
            bbox,
        })
    }

    /// Attaches a scalar channel. The channel length must match the cloud.
    pub fn with_attribute(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.len() != self.positions.len() {
            return Err(Error::invalid(format!(
                "attribute '{name}' has {} values for {} points",
                values.len(),
                self.positions.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!(
                "attribute '{name}' contains non-finite values"
            )));
        }
        self.attributes.insert(name, values);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3<f64>] {
        &self.positions
    }

    pub fn position(&self, id: usize) -> Point3<f64> {
        self.positions[id]
    }

    pub fn attribute(&self, name: &str) -> Option<&[f64]> {
        self.attributes.get(name).map(|v| v.as_slice())
    }

    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.attributes.keys().map(|s| s.as_str())
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    pub fn bounding_box(&self) -> BoundingBox {
        self.bbox
    }

    /// Mean distance to the k nearest neighbours of point `id`, the query
    /// point itself excluded.
    pub fn mean_knn_distance(&self, id: usize, k: usize) -> Result<f64> {
        if id >= self.positions.len() {
            return Err(Error::invalid(format!("point id {id} out of range")));
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if k + 1 > self.positions.len() {
            return Err(Error::KTooLarge {
                k,
                available: self.positions.len() - 1,
            });
        }
        let nn = self.index.knn(&self.positions[id], k, Some(id));
        debug_assert_eq!(nn.len(), k);
        Ok(nn.iter().map(|(_, d)| d).sum::<f64>() / k as f64)
    }

    /// Characteristic spacing of a region: the mean over `member_ids` of each
    /// member's mean k-NN distance. Neighbours are searched in the whole
    /// cloud, not just the region, so small regions inherit the local spacing
    /// of their surroundings.
    pub fn local_density(&self, member_ids: &[usize], k: usize) -> Result<f64> {
        if member_ids.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let mut sum = 0.0;
        for &id in member_ids {
            sum += self.mean_knn_distance(id, k)?;
        }
        Ok(sum / member_ids.len() as f64)
    }

    /// Cloud-wide characteristic spacing: `local_density` over every point.
    pub fn global_density(&self, k: usize) -> Result<f64> {
        let ids: Vec<usize> = (0..self.positions.len()).collect();
        self.local_density(&ids, k)
    }

    /// Count and ids of points inside the closed cuboid. Ids ascend, and the
    /// result matches a brute-force scan exactly.
    pub fn points_in_cuboid(&self, cuboid: &Cuboid) -> (usize, Vec<usize>) {
        let bb = cuboid.aabb();
        let ids: Vec<usize> = self
            .index
            .within_aabb(&bb.min, &bb.max)
            .into_iter()
            .filter(|&i| cuboid.contains(&self.positions[i]))
            .collect();
        (ids.len(), ids)
    }
}
