use nalgebra::Point3;

/// Static kd-tree over a fixed set of points.
///
/// Queries are read-only and safe to run concurrently. Results are defined to
/// match a brute-force scan exactly: candidates are ordered by
/// `(squared distance, point index)` so equidistant neighbours resolve to the
/// lower index, and containment queries use closed bounds.
#[derive(Debug, Clone)]
pub struct KdTree {
    pts: Vec<Point3<f64>>,
    nodes: Vec<Node>,
    root: i32,
}

#[derive(Debug, Clone)]
struct Node {
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

/// Max-heap entry keyed by (squared distance, index).
#[derive(PartialEq)]
struct Cand {
    d2: f64,
    idx: usize,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // No NaNs: construction rejects non-finite coordinates.
        self.d2
            .partial_cmp(&other.d2)
            .unwrap()
            .then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    /// Builds the tree. Panics if any coordinate is non-finite; callers are
    /// expected to have validated input (see `PointCloud::new`).
    pub fn build(points: &[Point3<f64>]) -> Self {
        assert!(
            points.iter().all(|p| p.coords.iter().all(|c| c.is_finite())),
            "kd-tree input must be finite"
        );
        let mut tree = KdTree {
            pts: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: -1,
        };
        let mut idx: Vec<u32> = (0..points.len() as u32).collect();
        tree.root = tree.build_rec(&mut idx);
        tree
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.pts
    }

    fn build_rec(&mut self, idx: &mut [u32]) -> i32 {
        if idx.is_empty() {
            return -1;
        }
        // Split along the widest axis of this subset; ties go to the lower
        // axis so construction is deterministic.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in idx.iter() {
            let p = &self.pts[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let mut axis = 0;
        for a in 1..3 {
            if hi[a] - lo[a] > hi[axis] - lo[axis] {
                axis = a;
            }
        }
        let mid = idx.len() / 2;
        let pts = &self.pts;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            pts[a as usize][axis]
                .partial_cmp(&pts[b as usize][axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        let point = idx[mid];
        let (left_idx, rest) = idx.split_at_mut(mid);
        let right_idx = &mut rest[1..];
        let left = self.build_rec(left_idx);
        let right = self.build_rec(right_idx);
        self.nodes.push(Node {
            point,
            axis: axis as u8,
            left,
            right,
        });
        (self.nodes.len() - 1) as i32
    }

    /// The `k` nearest neighbours of `query`, sorted by (distance, index).
    /// `exclude` removes one point id from consideration (used for
    /// leave-one-out queries). Returns fewer than `k` entries only when the
    /// tree does not hold enough points.
    pub fn knn(&self, query: &Point3<f64>, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 || self.pts.is_empty() {
            return Vec::new();
        }
        let mut heap: std::collections::BinaryHeap<Cand> = std::collections::BinaryHeap::new();
        self.knn_rec(self.root, query, k, exclude, &mut heap);
        let mut out: Vec<(usize, f64)> = heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| (c.idx, c.d2.sqrt()))
            .collect();
        out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        out
    }

    fn knn_rec(
        &self,
        node: i32,
        query: &Point3<f64>,
        k: usize,
        exclude: Option<usize>,
        heap: &mut std::collections::BinaryHeap<Cand>,
    ) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let idx = n.point as usize;
        let p = &self.pts[idx];
        if Some(idx) != exclude {
            let d2 = (p - query).norm_squared();
            let cand = Cand { d2, idx };
            if heap.len() < k {
                heap.push(cand);
            } else if cand < *heap.peek().unwrap() {
                heap.pop();
                heap.push(cand);
            }
        }
        let axis = n.axis as usize;
        let diff = query[axis] - p[axis];
        let (near, far) = if diff <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.knn_rec(near, query, k, exclude, heap);
        // Explore the far side unless the splitting plane is strictly farther
        // than the current worst: equality must recurse so equidistant
        // lower-index points are not lost.
        let visit_far = heap.len() < k || diff * diff <= heap.peek().unwrap().d2;
        if visit_far {
            self.knn_rec(far, query, k, exclude, heap);
        }
    }

    /// Indices of all points with `|p - query| <= radius`, ascending.
    pub fn within_radius(&self, query: &Point3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_rec(self.root, query, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, node: i32, query: &Point3<f64>, r2: f64, out: &mut Vec<usize>) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = &self.pts[n.point as usize];
        if (p - query).norm_squared() <= r2 {
            out.push(n.point as usize);
        }
        let axis = n.axis as usize;
        let diff = query[axis] - p[axis];
        if diff <= 0.0 || diff * diff <= r2 {
            self.radius_rec(n.left, query, r2, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.radius_rec(n.right, query, r2, out);
        }
    }

    /// Indices of all points inside the closed axis-aligned box, ascending.
    pub fn within_aabb(&self, min: &Point3<f64>, max: &Point3<f64>) -> Vec<usize> {
        let mut out = Vec::new();
        self.aabb_rec(self.root, min, max, &mut out);
        out.sort_unstable();
        out
    }

    fn aabb_rec(&self, node: i32, min: &Point3<f64>, max: &Point3<f64>, out: &mut Vec<usize>) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = &self.pts[n.point as usize];
        if (0..3).all(|a| p[a] >= min[a] && p[a] <= max[a]) {
            out.push(n.point as usize);
        }
        let axis = n.axis as usize;
        // Left subtree holds coordinates <= split, right >= split.
        if min[axis] <= p[axis] {
            self.aabb_rec(n.left, min, max, out);
        }
        if max[axis] >= p[axis] {
            self.aabb_rec(n.right, min, max, out);
        }
    }
}
