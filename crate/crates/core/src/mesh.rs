//! Indexed triangle mesh with the few queries the pipeline needs:
//! area-weighted sampling support, watertightness, orientation.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().any(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("mesh vertices must be finite"));
        }
        let n = vertices.len();
        for f in &faces {
            if f.iter().any(|i| *i >= n) {
                return Err(Error::invalid(format!(
                    "face {f:?} references a vertex >= {n}"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::invalid(format!("face {f:?} repeats a vertex")));
            }
        }
        Ok(TriMesh { vertices, faces })
    }

    pub fn face_points(&self, f: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized face normal; its length is twice the face area.
    pub fn face_cross(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.face_points(f);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_cross(f).norm()
    }

    pub fn face_normal(&self, f: usize) -> Result<Vector3<f64>> {
        let c = self.face_cross(f);
        let n = c.norm();
        if n <= 0.0 {
            return Err(Error::Degenerate(format!("face {f} has zero area")));
        }
        Ok(c / n)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bounding_box(&self) -> Result<BoundingBox> {
        BoundingBox::from_points(&self.vertices).ok_or(Error::EmptyCloud)
    }

    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.faces.len() as i64
    }

    /// Closed orientable 2-manifold check: every undirected edge is shared
    /// by exactly two faces traversing it in opposite directions.
    pub fn is_watertight(&self) -> bool {
        // (direction balance, use count) per undirected edge.
        let mut edges: HashMap<(usize, usize), (i32, u32)> = HashMap::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let e = edges.entry((a.min(b), a.max(b))).or_insert((0, 0));
                e.0 += if a < b { 1 } else { -1 };
                e.1 += 1;
            }
        }
        edges.values().all(|(bal, uses)| *bal == 0 && *uses == 2)
    }

    /// Area-weighted vertex normals. Zero-length accumulations error out.
    pub fn vertex_normals(&self) -> Result<Vec<Vector3<f64>>> {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for (f, face) in self.faces.iter().enumerate() {
            let c = self.face_cross(f);
            for v in face {
                acc[*v] += c;
            }
        }
        acc.into_iter()
            .enumerate()
            .map(|(i, v)| {
                let n = v.norm();
                if n <= 0.0 {
                    Err(Error::Degenerate(format!(
                        "vertex {i} has a zero normal accumulation"
                    )))
                } else {
                    Ok(v / n)
                }
            })
            .collect()
    }

    pub fn flip_orientation(&mut self) {
        for f in &mut self.faces {
            f.swap(1, 2);
        }
    }

    /// Signed volume by divergence theorem; positive for outward-oriented
    /// closed meshes.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let a = self.vertices[f[0]].coords;
                let b = self.vertices[f[1]].coords;
                let c = self.vertices[f[2]].coords;
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> TriMesh {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        // Outward orientation.
        let f = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        TriMesh::new(v, f).unwrap()
    }

    #[test]
    fn tetrahedron_is_closed_with_euler_two() {
        let m = tetrahedron();
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
        let a = m.total_area();
        let expect = 1.5 + (0.75f64).sqrt();
        assert!((a - expect).abs() < 1e-12);
    }

    #[test]
    fn open_fan_is_not_watertight() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let m = TriMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(!m.is_watertight());
    }

    #[test]
    fn inconsistent_winding_is_not_watertight() {
        let mut m = tetrahedron();
        m.faces[0].swap(1, 2);
        assert!(!m.is_watertight());
    }

    #[test]
    fn flip_negates_volume() {
        let mut m = tetrahedron();
        let v = m.signed_volume();
        m.flip_orientation();
        assert!((m.signed_volume() + v).abs() < 1e-15);
        assert!(m.is_watertight());
    }

    #[test]
    fn degenerate_face_is_rejected() {
        let v = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)];
        assert!(TriMesh::new(v, vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn vertex_normals_point_outward_on_tetrahedron() {
        let m = tetrahedron();
        let ns = m.vertex_normals().unwrap();
        let centroid = Point3::new(0.25, 0.25, 0.25);
        for (v, n) in m.vertices.iter().zip(&ns) {
            assert!(n.dot(&(v - centroid)) > 0.0);
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
    }
}
