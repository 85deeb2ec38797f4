//! Small k-d tree over 3D points for nearest-neighbor queries.

use crate::Point;

struct Node {
    /// Index into the point slice this tree was built over.
    point: u32,
    axis: u8,
    left: Option<Box<Node>>,
    right: Option<Box<Node>>,
}

/// Static k-d tree storing indices into the caller's point slice.
pub struct KdTree {
    points: Vec<Point>,
    root: Option<Box<Node>>,
}

impl KdTree {
    pub fn build(points: &[Point]) -> Self {
        let mut indices: Vec<u32> = (0..points.len() as u32).collect();
        let root = Self::build_node(points, &mut indices, 0);
        Self {
            points: points.to_vec(),
            root,
        }
    }

    fn build_node(points: &[Point], indices: &mut [u32], depth: usize) -> Option<Box<Node>> {
        if indices.is_empty() {
            return None;
        }
        let axis = (depth % 3) as u8;
        let mid = indices.len() / 2;
        indices.select_nth_unstable_by(mid, |&a, &b| {
            let (pa, pb) = (points[a as usize][axis as usize], points[b as usize][axis as usize]);
            pa.partial_cmp(&pb).unwrap().then(a.cmp(&b))
        });
        let point = indices[mid];
        let (left_slice, rest) = indices.split_at_mut(mid);
        let right_slice = &mut rest[1..];
        Some(Box::new(Node {
            point,
            axis,
            left: Self::build_node(points, left_slice, depth + 1),
            right: Self::build_node(points, right_slice, depth + 1),
        }))
    }

    /// Index of the nearest point to `query`; exact ties go to the lowest index.
    pub fn nearest(&self, query: &Point) -> Option<u32> {
        let mut best: Option<(f64, u32)> = None;
        Self::nearest_rec(&self.points, self.root.as_deref(), query, &mut best);
        best.map(|(_, i)| i)
    }

    fn nearest_rec(
        points: &[Point],
        node: Option<&Node>,
        query: &Point,
        best: &mut Option<(f64, u32)>,
    ) {
        let Some(node) = node else { return };
        let p = points[node.point as usize];
        let d2 = (p - query).norm_squared();
        let better = match best {
            None => true,
            Some((bd, bi)) => d2 < *bd || (d2 == *bd && node.point < *bi),
        };
        if better {
            *best = Some((d2, node.point));
        }
        let delta = query[node.axis as usize] - p[node.axis as usize];
        let (near, far) = if delta < 0.0 {
            (node.left.as_deref(), node.right.as_deref())
        } else {
            (node.right.as_deref(), node.left.as_deref())
        };
        Self::nearest_rec(points, near, query, best);
        // the far side can still hold a tie, so the plane test is inclusive
        if best.is_none_or(|(bd, _)| delta * delta <= bd) {
            Self::nearest_rec(points, far, query, best);
        }
    }

    /// Indices of the k nearest points to the point at `index` (excluding itself),
    /// closest first.
    pub fn k_nearest_excluding(&self, index: usize, k: usize) -> Vec<u32> {
        let query = self.points[index];
        let mut heap: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
        Self::knn_rec(
            &self.points,
            self.root.as_deref(),
            &query,
            index as u32,
            k,
            &mut heap,
        );
        heap.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        heap.into_iter().map(|(_, i)| i).collect()
    }

    fn knn_rec(
        points: &[Point],
        node: Option<&Node>,
        query: &Point,
        exclude: u32,
        k: usize,
        heap: &mut Vec<(f64, u32)>,
    ) {
        let Some(node) = node else { return };
        let p = points[node.point as usize];
        if node.point != exclude {
            let d2 = (p - query).norm_squared();
            if heap.len() < k {
                heap.push((d2, node.point));
                if heap.len() == k {
                    heap.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                }
            } else if d2 < heap[0].0 {
                heap[0] = (d2, node.point);
                // keep the worst candidate at the front
                let mut i = 0;
                while i + 1 < heap.len() && heap[i].0 < heap[i + 1].0 {
                    heap.swap(i, i + 1);
                    i += 1;
                }
            }
        }
        let delta = query[node.axis as usize] - p[node.axis as usize];
        let (near, far) = if delta < 0.0 {
            (node.left.as_deref(), node.right.as_deref())
        } else {
            (node.right.as_deref(), node.left.as_deref())
        };
        Self::knn_rec(points, near, query, exclude, k, heap);
        if heap.len() < k || delta * delta <= heap[0].0 {
            Self::knn_rec(points, far, query, exclude, k, heap);
        }
    }
}
