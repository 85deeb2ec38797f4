//! Indexed triangle meshes, density normalization, low-density vertex
//! filtering, and Laplacian smoothing.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::{Point, Rgb, Vector};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("empty input: {what}")]
    EmptyInput { what: String },
    #[error("maximum density is zero (degenerate reconstruction)")]
    ZeroMaxDensity,
    #[error("face {face} references vertex {index} but mesh has {vertex_count} vertices")]
    FaceIndexOutOfRange {
        face: usize,
        index: u32,
        vertex_count: usize,
    },
    #[error("face {face} is degenerate: indices {indices:?}")]
    DegenerateFace { face: usize, indices: [u32; 3] },
    #[error("{what} length {got} does not match vertex count {vertex_count}")]
    AttributeLength {
        what: String,
        got: usize,
        vertex_count: usize,
    },
    #[error(
        "filter at alpha {alpha} would remove every vertex (densities span {min:.6}..{max:.6})"
    )]
    AllVerticesRemoved { alpha: f64, min: f64, max: f64 },
}

/// Indexed triangle mesh with optional per-vertex density and color.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point>,
    pub faces: Vec<[u32; 3]>,
    pub densities: Option<Vec<f64>>,
    pub vertex_colors: Option<Vec<Rgb>>,
}

impl TriangleMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Check the structural invariants: indices in range, no degenerate faces,
    /// attribute lengths matching the vertex count.
    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.vertices.len();
        for (fi, face) in self.faces.iter().enumerate() {
            for &idx in face {
                if idx as usize >= n {
                    return Err(MeshError::FaceIndexOutOfRange {
                        face: fi,
                        index: idx,
                        vertex_count: n,
                    });
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    indices: *face,
                });
            }
        }
        if let Some(d) = &self.densities {
            if d.len() != n {
                return Err(MeshError::AttributeLength {
                    what: "densities".into(),
                    got: d.len(),
                    vertex_count: n,
                });
            }
        }
        if let Some(c) = &self.vertex_colors {
            if c.len() != n {
                return Err(MeshError::AttributeLength {
                    what: "vertex_colors".into(),
                    got: c.len(),
                    vertex_count: n,
                });
            }
        }
        Ok(())
    }

    /// Undirected edge list derived from the faces, deduplicated.
    pub fn edges(&self) -> BTreeSet<(u32, u32)> {
        let mut edges = BTreeSet::new();
        for face in &self.faces {
            for (a, b) in [(face[0], face[1]), (face[1], face[2]), (face[2], face[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges
    }

    pub fn bounding_box(&self) -> Option<(Point, Point)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            for c in 0..3 {
                lo[c] = lo[c].min(v[c]);
                hi[c] = hi[c].max(v[c]);
            }
        }
        Some((lo, hi))
    }
}

/// How the density threshold is interpreted by the vertex filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Remove vertices whose max-normalized density is below alpha.
    #[default]
    Absolute,
    /// Remove vertices below the alpha-quantile of the density distribution.
    Quantile,
}

impl std::str::FromStr for FilterMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "absolute" => Ok(Self::Absolute),
            "quantile" => Ok(Self::Quantile),
            other => Err(format!(
                "unknown filter mode {other:?} (expected absolute or quantile)"
            )),
        }
    }
}

/// Divide every density by the maximum so the largest becomes exactly 1.
pub fn normalize_densities(densities: &[f64]) -> Result<Vec<f64>, MeshError> {
    if densities.is_empty() {
        return Err(MeshError::EmptyInput {
            what: "densities".into(),
        });
    }
    let max = densities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 || max.is_nan() {
        return Err(MeshError::ZeroMaxDensity);
    }
    Ok(densities.iter().map(|&d| d / max).collect())
}

/// Remove every vertex whose normalized density falls below alpha, together
/// with its incident faces; surviving attributes follow their vertices.
pub fn quantile_filter(mesh: &TriangleMesh, alpha: f64) -> Result<TriangleMesh, MeshError> {
    filter_vertices(mesh, alpha, FilterMode::Absolute)
}

/// Vertex filter with a selectable threshold interpretation.
pub fn filter_vertices(
    mesh: &TriangleMesh,
    alpha: f64,
    mode: FilterMode,
) -> Result<TriangleMesh, MeshError> {
    let densities = mesh.densities.as_ref().ok_or_else(|| MeshError::EmptyInput {
        what: "densities (filter requires a density per vertex)".into(),
    })?;
    mesh.validate()?;

    let threshold = match mode {
        FilterMode::Absolute => alpha,
        FilterMode::Quantile => {
            let mut sorted: Vec<f64> = densities.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let rank = (alpha * sorted.len() as f64).floor() as usize;
            sorted[rank.min(sorted.len() - 1)]
        }
    };

    let keep: Vec<bool> = densities.iter().map(|&d| d >= threshold).collect();
    let kept = keep.iter().filter(|&&k| k).count();
    if kept == 0 {
        let min = densities.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = densities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return Err(MeshError::AllVerticesRemoved { alpha, min, max });
    }

    let mut remap = vec![u32::MAX; mesh.vertices.len()];
    let mut vertices = Vec::with_capacity(kept);
    let mut new_densities = Vec::with_capacity(kept);
    let mut new_colors = mesh.vertex_colors.as_ref().map(|_| Vec::with_capacity(kept));
    for (i, &k) in keep.iter().enumerate() {
        if k {
            remap[i] = vertices.len() as u32;
            vertices.push(mesh.vertices[i]);
            new_densities.push(densities[i]);
            if let (Some(out), Some(colors)) = (&mut new_colors, &mesh.vertex_colors) {
                out.push(colors[i]);
            }
        }
    }
    let faces = mesh
        .faces
        .iter()
        .filter(|face| face.iter().all(|&v| keep[v as usize]))
        .map(|face| [remap[face[0] as usize], remap[face[1] as usize], remap[face[2] as usize]])
        .collect();

    Ok(TriangleMesh {
        vertices,
        faces,
        densities: Some(new_densities),
        vertex_colors: new_colors,
    })
}

/// Uniform-weight Laplacian smoothing with simultaneous (Jacobi) updates.
///
/// Each iteration moves every vertex with at least one edge neighbor by
/// `lambda` of the way toward the mean of its neighbors; isolated vertices,
/// connectivity, densities, and colors are untouched.
pub fn laplacian_smooth(mesh: &TriangleMesh, lambda: f64, iterations: usize) -> TriangleMesh {
    let n = mesh.vertices.len();
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (a, b) in mesh.edges() {
        neighbors[a as usize].push(b);
        neighbors[b as usize].push(a);
    }

    let mut positions = mesh.vertices.clone();
    let mut next = positions.clone();
    for _ in 0..iterations {
        for (i, nbrs) in neighbors.iter().enumerate() {
            if nbrs.is_empty() {
                next[i] = positions[i];
                continue;
            }
            let mut mean = Vector::zeros();
            for &j in nbrs {
                mean += positions[j as usize].coords;
            }
            mean /= nbrs.len() as f64;
            next[i] = positions[i] + lambda * (mean - positions[i].coords);
        }
        std::mem::swap(&mut positions, &mut next);
    }

    TriangleMesh {
        vertices: positions,
        faces: mesh.faces.clone(),
        densities: mesh.densities.clone(),
        vertex_colors: mesh.vertex_colors.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mesh_with_densities(densities: Vec<f64>, faces: Vec<[u32; 3]>) -> TriangleMesh {
        TriangleMesh {
            vertices: (0..densities.len())
                .map(|i| Point::new(i as f64, 0.0, 0.0))
                .collect(),
            faces,
            densities: Some(densities),
            vertex_colors: None,
        }
    }

    #[test]
    fn normalize_forced_by_formula() {
        assert_eq!(
            normalize_densities(&[2.0, 4.0, 8.0]).unwrap(),
            vec![0.25, 0.5, 1.0]
        );
        assert_eq!(normalize_densities(&[5.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn normalize_rejects_empty_and_zero_max() {
        assert!(matches!(
            normalize_densities(&[]),
            Err(MeshError::EmptyInput { .. })
        ));
        assert!(matches!(
            normalize_densities(&[0.0, 0.0]),
            Err(MeshError::ZeroMaxDensity)
        ));
    }

    #[test]
    fn normalize_matches_scalar_loop_oracle() {
        let mut state = 7u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 + 1e-6
        };
        let input: Vec<f64> = (0..10_000).map(|_| next()).collect();
        let out = normalize_densities(&input).unwrap();
        // independent scalar loop
        let mut max = f64::NEG_INFINITY;
        for &v in &input {
            if v > max {
                max = v;
            }
        }
        for (i, &v) in input.iter().enumerate() {
            let expected = v / max;
            assert!((out[i] - expected).abs() <= f64::EPSILON * expected.abs());
        }
        assert_eq!(out.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }

    #[test]
    fn filter_removes_low_density_vertex_and_face() {
        let mesh = mesh_with_densities(vec![0.01, 0.5, 1.0], vec![[0, 1, 2]]);
        let out = quantile_filter(&mesh, 0.05).unwrap();
        assert_eq!(out.vertex_count(), 2);
        assert_eq!(out.face_count(), 0);
        assert_eq!(out.densities.as_ref().unwrap(), &vec![0.5, 1.0]);
    }

    #[test]
    fn filter_identity_when_nothing_below_alpha() {
        let mesh = mesh_with_densities(vec![0.05, 0.5, 1.0], vec![[0, 1, 2]]);
        let out = quantile_filter(&mesh, 0.05).unwrap();
        assert_eq!(out.vertices, mesh.vertices);
        assert_eq!(out.faces, mesh.faces);
    }

    #[test]
    fn filter_all_removed_is_error() {
        let mesh = mesh_with_densities(vec![0.01, 0.02], vec![]);
        assert!(matches!(
            quantile_filter(&mesh, 0.5),
            Err(MeshError::AllVerticesRemoved { .. })
        ));
    }

    #[test]
    fn smooth_full_step_to_neighbor_mean() {
        let mesh = TriangleMesh {
            vertices: vec![
                Point::new(1.0, 1.0, 0.0),
                Point::new(0.0, 0.0, 0.0),
                Point::new(2.0, 0.0, 0.0),
            ],
            faces: vec![[0, 1, 2]],
            densities: None,
            vertex_colors: None,
        };
        let out = laplacian_smooth(&mesh, 1.0, 1);
        assert!((out.vertices[0] - Point::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn smooth_zero_iterations_is_identity() {
        let mesh = mesh_with_densities(vec![1.0, 1.0, 1.0], vec![[0, 1, 2]]);
        let out = laplacian_smooth(&mesh, 0.7, 0);
        assert_eq!(out.vertices, mesh.vertices);
    }

    proptest! {
        #[test]
        fn filter_matches_independent_scan(
            densities in proptest::collection::vec(0.0f64..1.0, 4..60),
            seed in 0u64..1000,
        ) {
            // random triangles over the vertices
            let n = densities.len() as u64;
            let mut s = seed.wrapping_add(1);
            let mut rnd = move || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); (s >> 33) % n };
            let mut faces = Vec::new();
            for _ in 0..densities.len() {
                let (a, b, c) = (rnd(), rnd(), rnd());
                if a != b && b != c && a != c {
                    faces.push([a as u32, b as u32, c as u32]);
                }
            }
            let normalized = match normalize_densities(&densities) {
                Ok(v) => v,
                Err(_) => return Ok(()),
            };
            let mesh = mesh_with_densities(normalized.clone(), faces.clone());
            let alpha = 0.05;
            let expected_survivors: Vec<usize> =
                (0..normalized.len()).filter(|&i| normalized[i] >= alpha).collect();
            match quantile_filter(&mesh, alpha) {
                Ok(out) => {
                    prop_assert_eq!(out.vertex_count(), expected_survivors.len());
                    for (new_i, &old_i) in expected_survivors.iter().enumerate() {
                        prop_assert_eq!(out.densities.as_ref().unwrap()[new_i], normalized[old_i]);
                    }
                    let min = out.densities.as_ref().unwrap().iter().cloned().fold(f64::INFINITY, f64::min);
                    prop_assert!(min >= alpha);
                    out.validate().unwrap();
                }
                Err(MeshError::AllVerticesRemoved { .. }) => {
                    prop_assert!(expected_survivors.is_empty());
                }
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            }
        }

        #[test]
        fn filter_monotone_in_alpha(
            densities in proptest::collection::vec(0.01f64..1.0, 4..40),
            a1 in 0.0f64..0.5,
            a2 in 0.5f64..1.0,
        ) {
            let normalized = normalize_densities(&densities).unwrap();
            let mesh = mesh_with_densities(normalized.clone(), vec![]);
            let survivors = |alpha: f64| -> Option<Vec<f64>> {
                filter_vertices(&mesh, alpha, FilterMode::Absolute)
                    .ok()
                    .map(|m| m.densities.unwrap())
            };
            if let (Some(s1), Some(s2)) = (survivors(a1), survivors(a2)) {
                // survivors at the larger alpha are a subset of those at the smaller
                prop_assert!(s2.iter().all(|d| s1.contains(d)));
            }
        }

        #[test]
        fn normalize_preserves_ordering(
            densities in proptest::collection::vec(1e-9f64..1.0, 2..50),
        ) {
            let out = normalize_densities(&densities).unwrap();
            for i in 0..densities.len() {
                for j in 0..densities.len() {
                    prop_assert_eq!(
                        densities[i] < densities[j],
                        out[i] < out[j]
                    );
                }
            }
            prop_assert_eq!(out.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        }

        #[test]
        fn smoothing_never_grows_bounding_box(
            coords in proptest::collection::vec(-5.0f64..5.0, 12..60),
            lambda in 0.05f64..1.0,
        ) {
            let vertices: Vec<Point> = coords
                .chunks_exact(3)
                .map(|c| Point::new(c[0], c[1], c[2]))
                .collect();
            let n = vertices.len() as u32;
            let faces: Vec<[u32; 3]> = (0..n.saturating_sub(2))
                .map(|i| [i, i + 1, i + 2])
                .collect();
            let mesh = TriangleMesh { vertices, faces, densities: None, vertex_colors: None };
            let (lo0, hi0) = mesh.bounding_box().unwrap();
            let out = laplacian_smooth(&mesh, lambda, 5);
            let (lo1, hi1) = out.bounding_box().unwrap();
            for c in 0..3 {
                prop_assert!(lo1[c] >= lo0[c] - 1e-12);
                prop_assert!(hi1[c] <= hi0[c] + 1e-12);
            }
        }
    }
}
