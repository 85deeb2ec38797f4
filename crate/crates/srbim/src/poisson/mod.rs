//! Poisson surface reconstruction on a uniform grid.
//!
//! The oriented samples are splatted into a vector field on a regular grid of
//! 2^depth cells per axis (a fully refined octree at the maximum depth), the
//! indicator function is recovered by solving the Poisson equation with a
//! matrix-free conjugate-gradient iteration over the 7-point Laplacian, and
//! the surface is extracted by marching cubes at the isovalue the input
//! samples vote for. Per-vertex densities come from the accumulated sample
//! weight interpolated at each vertex.

mod tables;

use std::collections::HashMap;

use nalgebra::Matrix3;
use thiserror::Error;

use crate::mesh::TriangleMesh;
use crate::{Point, Vector};

use tables::{EDGE_TABLE, TRIANGLE_TABLE};

/// Relative-residual tolerance for the conjugate-gradient solve.
const CG_TOLERANCE: f64 = 1e-7;
/// Iteration cap as a multiple of the number of unknowns.
const CG_MAX_ITER_FACTOR: usize = 10;
/// Domain side length as a multiple of the largest point-cloud extent.
const DOMAIN_PADDING: f64 = 1.5;

#[derive(Debug, Error)]
pub enum PoissonError {
    #[error("reconstruction needs at least 4 points, got {count}")]
    TooFewPoints { count: usize },
    #[error("points and normals differ in length ({points} vs {normals})")]
    LengthMismatch { points: usize, normals: usize },
    #[error("input points are coplanar or collinear; the indicator function is undefined")]
    DegenerateInput,
    #[error("conjugate gradient failed to converge: relative residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("isosurface extraction produced an empty mesh")]
    EmptySurface,
}

struct Grid {
    /// Nodes per axis (2^depth + 1).
    nodes: usize,
    origin: Point,
    cell: f64,
}

impl Grid {
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.nodes + j) * self.nodes + i
    }

    fn node_position(&self, i: usize, j: usize, k: usize) -> Point {
        Point::new(
            self.origin.x + i as f64 * self.cell,
            self.origin.y + j as f64 * self.cell,
            self.origin.z + k as f64 * self.cell,
        )
    }

    fn len(&self) -> usize {
        self.nodes * self.nodes * self.nodes
    }

    /// Trilinear interpolation of a node field at a world position.
    fn interpolate(&self, field: &[f64], p: &Point) -> f64 {
        let gx = (p.x - self.origin.x) / self.cell;
        let gy = (p.y - self.origin.y) / self.cell;
        let gz = (p.z - self.origin.z) / self.cell;
        let clamp = |g: f64| g.clamp(0.0, (self.nodes - 1) as f64 - 1e-9);
        let (gx, gy, gz) = (clamp(gx), clamp(gy), clamp(gz));
        let (i0, j0, k0) = (gx as usize, gy as usize, gz as usize);
        let (fx, fy, fz) = (gx - i0 as f64, gy - j0 as f64, gz - k0 as f64);
        let mut value = 0.0;
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    let w = (if di == 0 { 1.0 - fx } else { fx })
                        * (if dj == 0 { 1.0 - fy } else { fy })
                        * (if dk == 0 { 1.0 - fz } else { fz });
                    value += w * field[self.index(i0 + di, j0 + dj, k0 + dk)];
                }
            }
        }
        value
    }
}

/// Reconstruct a triangle mesh (with per-vertex densities) from oriented
/// point samples on a grid of 2^depth cells per axis.
pub fn poisson_reconstruct(
    points: &[Point],
    normals: &[Vector],
    depth: u32,
) -> Result<TriangleMesh, PoissonError> {
    if points.len() != normals.len() {
        return Err(PoissonError::LengthMismatch {
            points: points.len(),
            normals: normals.len(),
        });
    }
    if points.len() < 4 {
        return Err(PoissonError::TooFewPoints {
            count: points.len(),
        });
    }
    check_rank(points)?;

    let grid = fit_grid(points, depth);
    let mut vx = vec![0.0f64; grid.len()];
    let mut vy = vec![0.0f64; grid.len()];
    let mut vz = vec![0.0f64; grid.len()];
    let mut weight = vec![0.0f64; grid.len()];

    for (p, n) in points.iter().zip(normals) {
        // the negated normal makes the recovered indicator high inside
        for (idx, w) in splat_weights(&grid, p) {
            vx[idx] += w * -n.x;
            vy[idx] += w * -n.y;
            vz[idx] += w * -n.z;
            weight[idx] += w;
        }
    }

    let passes = blur_passes(points, &grid);
    for field in [&mut vx, &mut vy, &mut vz, &mut weight] {
        blur(&grid, field, passes);
    }

    // rhs of the (unscaled) Poisson equation: negative divergence of the field
    let mut rhs = vec![0.0f64; grid.len()];
    let n = grid.nodes;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                if i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1 {
                    continue;
                }
                let div = (vx[grid.index(i + 1, j, k)] - vx[grid.index(i - 1, j, k)])
                    + (vy[grid.index(i, j + 1, k)] - vy[grid.index(i, j - 1, k)])
                    + (vz[grid.index(i, j, k + 1)] - vz[grid.index(i, j, k - 1)]);
                rhs[grid.index(i, j, k)] = -0.5 * div;
            }
        }
    }
    drop(vx);
    drop(vy);
    drop(vz);

    // pure-Neumann Laplacian is singular: project the rhs onto mean zero
    let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
    for v in &mut rhs {
        *v -= mean;
    }

    let chi = solve_poisson(&grid, &rhs)?;
    drop(rhs);

    let isovalue =
        points.iter().map(|p| grid.interpolate(&chi, p)).sum::<f64>() / points.len() as f64;

    let mut mesh = marching_cubes(&grid, &chi, isovalue)?;
    drop(chi);

    let densities = mesh
        .vertices
        .iter()
        .map(|v| grid.interpolate(&weight, v))
        .collect();
    mesh.densities = Some(densities);
    Ok(mesh)
}

/// Error if the point set spans fewer than three dimensions.
fn check_rank(points: &[Point]) -> Result<(), PoissonError> {
    let mean = points
        .iter()
        .fold(Vector::zeros(), |acc, p| acc + p.coords)
        / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    let eigenvalues = cov.symmetric_eigen().eigenvalues;
    let max = eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= 0.0 || max.is_nan() || min.max(0.0) <= max * 1e-12 {
        return Err(PoissonError::DegenerateInput);
    }
    Ok(())
}

fn fit_grid(points: &[Point], depth: u32) -> Grid {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for c in 0..3 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let extent = (hi - lo).amax().max(f64::MIN_POSITIVE);
    let side = extent * DOMAIN_PADDING;
    let center = nalgebra::center(&lo, &hi);
    let nodes = (1usize << depth) + 1;
    Grid {
        nodes,
        origin: center - Vector::repeat(side / 2.0),
        cell: side / (nodes - 1) as f64,
    }
}

/// Trilinear node indices and weights for a world position.
fn splat_weights(grid: &Grid, p: &Point) -> [(usize, f64); 8] {
    let gx = ((p.x - grid.origin.x) / grid.cell).clamp(0.0, (grid.nodes - 1) as f64 - 1e-9);
    let gy = ((p.y - grid.origin.y) / grid.cell).clamp(0.0, (grid.nodes - 1) as f64 - 1e-9);
    let gz = ((p.z - grid.origin.z) / grid.cell).clamp(0.0, (grid.nodes - 1) as f64 - 1e-9);
    let (i0, j0, k0) = (gx as usize, gy as usize, gz as usize);
    let (fx, fy, fz) = (gx - i0 as f64, gy - j0 as f64, gz - k0 as f64);
    let mut weights = [(0usize, 0.0f64); 8];
    let mut w_idx = 0;
    for dk in 0..2 {
        for dj in 0..2 {
            for di in 0..2 {
                let w = (if di == 0 { 1.0 - fx } else { fx })
                    * (if dj == 0 { 1.0 - fy } else { fy })
                    * (if dk == 0 { 1.0 - fz } else { fz });
                weights[w_idx] = (grid.index(i0 + di, j0 + dj, k0 + dk), w);
                w_idx += 1;
            }
        }
    }
    weights
}

fn blur_passes(points: &[Point], grid: &Grid) -> usize {
    // widen the splat kernel until it covers the typical sample spacing;
    // each 1-2-1 pass adds one half cell of variance
    let sample = &points[..points.len().min(500)];
    let tree = crate::kdtree::KdTree::build(sample);
    let mut total = 0.0;
    for (i, p) in sample.iter().enumerate() {
        let nn = tree.k_nearest_excluding(i, 1);
        if let Some(&j) = nn.first() {
            total += (sample[j as usize] - p).norm();
        }
    }
    let spacing_cells = total / sample.len() as f64 / grid.cell;
    let sigma = (0.75 * spacing_cells).max(1.0);
    ((2.0 * sigma * sigma).ceil() as usize).clamp(2, 12)
}

/// Separable 1-2-1 blur, `passes` times along each axis, clamped at the faces.
fn blur(grid: &Grid, field: &mut Vec<f64>, passes: usize) {
    let n = grid.nodes;
    let mut scratch = vec![0.0f64; field.len()];
    for _ in 0..passes {
        for axis in 0..3 {
            let stride = match axis {
                0 => 1,
                1 => n,
                _ => n * n,
            };
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let idx = grid.index(i, j, k);
                        let coord = [i, j, k][axis];
                        let prev = if coord > 0 { field[idx - stride] } else { field[idx] };
                        let next = if coord + 1 < n { field[idx + stride] } else { field[idx] };
                        scratch[idx] = 0.25 * (prev + 2.0 * field[idx] + next);
                    }
                }
            }
            std::mem::swap(field, &mut scratch);
        }
    }
}

/// Matrix-free CG on the graph Laplacian (Neumann boundary).
fn solve_poisson(grid: &Grid, rhs: &[f64]) -> Result<Vec<f64>, PoissonError> {
    let n = grid.nodes;
    let total = grid.len();
    let apply = |x: &[f64], out: &mut [f64]| {
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let idx = grid.index(i, j, k);
                    let center = x[idx];
                    let mut acc = 0.0;
                    if i > 0 {
                        acc += center - x[idx - 1];
                    }
                    if i + 1 < n {
                        acc += center - x[idx + 1];
                    }
                    if j > 0 {
                        acc += center - x[idx - n];
                    }
                    if j + 1 < n {
                        acc += center - x[idx + n];
                    }
                    if k > 0 {
                        acc += center - x[idx - n * n];
                    }
                    if k + 1 < n {
                        acc += center - x[idx + n * n];
                    }
                    out[idx] = acc;
                }
            }
        }
    };

    let norm_b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Err(PoissonError::EmptySurface);
    }

    let mut x = vec![0.0f64; total];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0f64; total];
    let mut rs_old: f64 = r.iter().map(|v| v * v).sum();
    let max_iters = CG_MAX_ITER_FACTOR * total;
    let mut iterations = 0usize;

    while rs_old.sqrt() > CG_TOLERANCE * norm_b {
        if iterations >= max_iters {
            return Err(PoissonError::SolverDiverged {
                residual: rs_old.sqrt() / norm_b,
                iterations,
            });
        }
        apply(&p, &mut ap);
        let denom: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if denom <= 0.0 {
            return Err(PoissonError::SolverDiverged {
                residual: rs_old.sqrt() / norm_b,
                iterations,
            });
        }
        let alpha = rs_old / denom;
        for i in 0..total {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs_old;
        for i in 0..total {
            p[i] = r[i] + beta * p[i];
        }
        rs_old = rs_new;
        iterations += 1;
    }
    Ok(x)
}

/// Corner offsets in the Bourke ordering: bottom ring then top ring.
const CORNERS: [(usize, usize, usize); 8] = [
    (0, 0, 0),
    (1, 0, 0),
    (1, 1, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (1, 1, 1),
    (0, 1, 1),
];

/// Edge endpoints as corner indices.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

fn marching_cubes(grid: &Grid, field: &[f64], isovalue: f64) -> Result<TriangleMesh, PoissonError> {
    let n = grid.nodes;
    // a shared edge is keyed by its lower node index and axis
    let mut edge_vertices: HashMap<(usize, u8), u32> = HashMap::new();
    let mut vertices: Vec<Point> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    let edge_key = |grid: &Grid, ci: usize, cj: usize, ck: usize, a: usize, b: usize| {
        let (ca, cb) = (CORNERS[a], CORNERS[b]);
        let na = (ci + ca.0, cj + ca.1, ck + ca.2);
        let nb = (ci + cb.0, cj + cb.1, ck + cb.2);
        let axis = if na.0 != nb.0 {
            0u8
        } else if na.1 != nb.1 {
            1
        } else {
            2
        };
        let low = if (na.0, na.1, na.2) < (nb.0, nb.1, nb.2) { na } else { nb };
        (grid.index(low.0, low.1, low.2), axis)
    };

    for ck in 0..n - 1 {
        for cj in 0..n - 1 {
            for ci in 0..n - 1 {
                let mut values = [0.0f64; 8];
                let mut cube_index = 0usize;
                for (c, &(di, dj, dk)) in CORNERS.iter().enumerate() {
                    values[c] = field[grid.index(ci + di, cj + dj, ck + dk)];
                    if values[c] < isovalue {
                        cube_index |= 1 << c;
                    }
                }
                let edge_mask = EDGE_TABLE[cube_index];
                if edge_mask == 0 {
                    continue;
                }
                let mut cube_edge_vertex = [u32::MAX; 12];
                for (e, &(a, b)) in EDGES.iter().enumerate() {
                    if edge_mask & (1 << e) == 0 {
                        continue;
                    }
                    let key = edge_key(grid, ci, cj, ck, a, b);
                    let index = *edge_vertices.entry(key).or_insert_with(|| {
                        let (va, vb) = (values[a], values[b]);
                        let t = if (vb - va).abs() < 1e-300 {
                            0.5
                        } else {
                            ((isovalue - va) / (vb - va)).clamp(0.0, 1.0)
                        };
                        let (ca, cb) = (CORNERS[a], CORNERS[b]);
                        let pa = grid.node_position(ci + ca.0, cj + ca.1, ck + ca.2);
                        let pb = grid.node_position(ci + cb.0, cj + cb.1, ck + cb.2);
                        let idx = vertices.len() as u32;
                        vertices.push(pa + t * (pb - pa));
                        idx
                    });
                    cube_edge_vertex[e] = index;
                }
                let tri = &TRIANGLE_TABLE[cube_index];
                let mut t = 0;
                while t < tri.len() && tri[t] != -1 {
                    let face = [
                        cube_edge_vertex[tri[t] as usize],
                        cube_edge_vertex[tri[t + 1] as usize],
                        cube_edge_vertex[tri[t + 2] as usize],
                    ];
                    // welding can collapse a triangle whose crossing sits on a corner
                    if face[0] != face[1] && face[1] != face[2] && face[0] != face[2] {
                        faces.push(face);
                    }
                    t += 3;
                }
            }
        }
    }

    if vertices.is_empty() || faces.is_empty() {
        return Err(PoissonError::EmptySurface);
    }
    Ok(TriangleMesh {
        vertices,
        faces,
        densities: None,
        vertex_colors: None,
    })
}
