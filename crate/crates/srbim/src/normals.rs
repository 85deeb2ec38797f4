//! PCA normal estimation with MST-propagated orientation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Matrix3;
use thiserror::Error;

use crate::kdtree::KdTree;
use crate::{Point, Vector};

#[derive(Debug, Error)]
pub enum NormalsError {
    #[error("normal estimation needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("neighborhood size k must be at least 3, got {k}")]
    InvalidK { k: usize },
}

/// Unit normals plus a per-point flag marking degenerate neighborhoods that
/// fell back to +Z.
#[derive(Debug, Clone)]
pub struct NormalEstimates {
    pub normals: Vec<Vector>,
    pub degenerate: Vec<bool>,
}

/// Estimate one unit normal per point from PCA over its k nearest neighbors,
/// with signs made consistent by propagation along a Euclidean minimum
/// spanning tree of the k-NN graph and the global sign chosen to face away
/// from the centroid.
pub fn estimate_normals(points: &[Point], k: usize) -> Result<NormalEstimates, NormalsError> {
    if k < 3 {
        return Err(NormalsError::InvalidK { k });
    }
    if points.len() < k {
        return Err(NormalsError::InsufficientPoints {
            needed: k,
            got: points.len(),
        });
    }

    let tree = KdTree::build(points);
    let neighborhoods: Vec<Vec<u32>> = (0..points.len())
        .map(|i| tree.k_nearest_excluding(i, k))
        .collect();

    let mut normals = Vec::with_capacity(points.len());
    let mut degenerate = Vec::with_capacity(points.len());
    for (i, nbrs) in neighborhoods.iter().enumerate() {
        let (normal, is_degenerate) = pca_normal(points, i, nbrs);
        normals.push(normal);
        degenerate.push(is_degenerate);
    }

    orient_by_mst(points, &neighborhoods, &mut normals);

    // resolve the remaining global sign: majority of normals face outward
    let centroid = points
        .iter()
        .fold(Vector::zeros(), |acc, p| acc + p.coords)
        / points.len() as f64;
    let outward_votes: f64 = points
        .iter()
        .zip(&normals)
        .map(|(p, n)| (p.coords - centroid).dot(n).signum())
        .sum();
    if outward_votes < 0.0 {
        for n in &mut normals {
            *n = -*n;
        }
    }

    Ok(NormalEstimates { normals, degenerate })
}

fn pca_normal(points: &[Point], index: usize, neighbors: &[u32]) -> (Vector, bool) {
    let mut mean = points[index].coords;
    for &j in neighbors {
        mean += points[j as usize].coords;
    }
    mean /= (neighbors.len() + 1) as f64;

    let mut cov = Matrix3::zeros();
    let accumulate = |cov: &mut Matrix3<f64>, p: &Point| {
        let d = p.coords - mean;
        *cov += d * d.transpose();
    };
    accumulate(&mut cov, &points[index]);
    for &j in neighbors {
        accumulate(&mut cov, &points[j as usize]);
    }

    let eigen = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eigen.eigenvalues[a].partial_cmp(&eigen.eigenvalues[b]).unwrap());
    let (smallest, middle, largest) = (
        eigen.eigenvalues[order[0]].max(0.0),
        eigen.eigenvalues[order[1]].max(0.0),
        eigen.eigenvalues[order[2]].max(0.0),
    );
    // rank < 2 (coincident or collinear neighborhood) leaves the normal undefined
    if largest <= 0.0 || middle <= largest * 1e-12 {
        return (Vector::z(), true);
    }
    let _ = smallest;
    let normal = eigen.eigenvectors.column(order[0]).into_owned();
    (normal.normalize(), false)
}

struct MstEdge {
    distance: f64,
    from: u32,
    to: u32,
}

impl PartialEq for MstEdge {
    fn eq(&self, other: &Self) -> bool {
        self.distance == other.distance
    }
}
impl Eq for MstEdge {}
impl PartialOrd for MstEdge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for MstEdge {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for shortest-edge-first
        other
            .distance
            .partial_cmp(&self.distance)
            .unwrap_or(Ordering::Equal)
    }
}

/// Prim's algorithm over the symmetrized k-NN graph with Euclidean weights;
/// each newly attached normal is flipped to agree with its tree parent.
fn orient_by_mst(points: &[Point], neighborhoods: &[Vec<u32>], normals: &mut [Vector]) {
    let n = points.len();
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (i, nbrs) in neighborhoods.iter().enumerate() {
        for &j in nbrs {
            adjacency[i].push(j);
            adjacency[j as usize].push(i as u32);
        }
    }

    let mut visited = vec![false; n];
    let mut heap = BinaryHeap::new();
    for root in 0..n {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        for &j in &adjacency[root] {
            heap.push(MstEdge {
                distance: (points[root] - points[j as usize]).norm(),
                from: root as u32,
                to: j,
            });
        }
        while let Some(edge) = heap.pop() {
            let to = edge.to as usize;
            if visited[to] {
                continue;
            }
            visited[to] = true;
            if normals[edge.from as usize].dot(&normals[to]) < 0.0 {
                normals[to] = -normals[to];
            }
            for &j in &adjacency[to] {
                if !visited[j as usize] {
                    heap.push(MstEdge {
                        distance: (points[to] - points[j as usize]).norm(),
                        from: edge.to,
                        to: j,
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    #[test]
    fn planar_points_get_agreeing_z_normals() {
        let mut next = lcg(42);
        let points: Vec<Point> = (0..200)
            .map(|_| Point::new(next() * 4.0, next() * 4.0, 0.0))
            .collect();
        let est = estimate_normals(&points, 8).unwrap();
        let first_sign = est.normals[0].z.signum();
        for n in &est.normals {
            assert!(n.x.abs() < 1e-9 && n.y.abs() < 1e-9);
            assert!((n.z.abs() - 1.0).abs() < 1e-9);
            assert_eq!(n.z.signum(), first_sign, "signs must agree after propagation");
        }
    }

    #[test]
    fn sphere_normals_match_radial_direction() {
        let mut next = lcg(7);
        let points: Vec<Point> = (0..2000)
            .map(|_| {
                let z = next() * 2.0 - 1.0;
                let theta = next() * std::f64::consts::TAU;
                let r = (1.0 - z * z).sqrt();
                Point::new(r * theta.cos(), r * theta.sin(), z)
            })
            .collect();
        let est = estimate_normals(&points, 16).unwrap();
        let mean_error_deg: f64 = points
            .iter()
            .zip(&est.normals)
            .map(|(p, n)| p.coords.normalize().dot(n).clamp(-1.0, 1.0).acos().to_degrees())
            .sum::<f64>()
            / points.len() as f64;
        assert!(
            mean_error_deg < 5.0,
            "mean angular error {mean_error_deg:.2} degrees"
        );
    }

    #[test]
    fn collinear_points_fall_back_with_warning() {
        let points = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(2.0, 0.0, 0.0),
        ];
        let est = estimate_normals(&points, 3).unwrap();
        assert!(est.degenerate.iter().all(|&d| d));
        for n in &est.normals {
            assert!((n.z.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_points_is_an_error() {
        let points = vec![Point::new(0.0, 0.0, 0.0); 2];
        assert!(matches!(
            estimate_normals(&points, 3),
            Err(NormalsError::InsufficientPoints { .. })
        ));
    }
}
