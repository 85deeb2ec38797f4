//! Shared fixture generators for the integration and acceptance suites.
//! Everything is seeded and deterministic.

#![allow(dead_code)]

use std::collections::BTreeMap;

use srbim::pointcloud::{LabeledPoint, LabeledScene};
use srbim::{Point, Vector};

/// Minimal deterministic generator so fixtures never depend on crate RNG
/// internals.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }
}

/// Uniform samples on the unit sphere centered at the origin.
pub fn sphere_points(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = Lcg::new(seed);
    (0..n)
        .map(|_| {
            let z = rng.range(-1.0, 1.0);
            let theta = rng.range(0.0, std::f64::consts::TAU);
            let r = (1.0 - z * z).sqrt();
            Point::new(r * theta.cos(), r * theta.sin(), z)
        })
        .collect()
}

/// Unit-sphere samples with a 9:1 density ratio between the upper (z > 0) and
/// lower hemispheres.
pub fn biased_sphere_points(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = Lcg::new(seed);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let z = rng.range(-1.0, 1.0);
        let theta = rng.range(0.0, std::f64::consts::TAU);
        // thin the lower hemisphere to one ninth of the upper's density
        if z <= 0.0 && rng.unit() >= 1.0 / 9.0 {
            continue;
        }
        let r = (1.0 - z * z).sqrt();
        points.push(Point::new(r * theta.cos(), r * theta.sin(), z));
    }
    points
}

/// Area-weighted uniform samples on the surface of an axis-aligned box.
pub fn box_points(n: usize, center: Point, dims: Vector, seed: u64) -> Vec<Point> {
    let mut rng = Lcg::new(seed);
    let (lx, ly, lz) = (dims.x, dims.y, dims.z);
    let areas = [ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly];
    let total: f64 = areas.iter().sum();
    (0..n)
        .map(|_| {
            let mut pick = rng.unit() * total;
            let mut face = 0;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    face = i;
                    break;
                }
                pick -= a;
            }
            let u = rng.unit() - 0.5;
            let v = rng.unit() - 0.5;
            let local = match face {
                0 => Vector::new(-0.5 * lx, u * ly, v * lz),
                1 => Vector::new(0.5 * lx, u * ly, v * lz),
                2 => Vector::new(u * lx, -0.5 * ly, v * lz),
                3 => Vector::new(u * lx, 0.5 * ly, v * lz),
                4 => Vector::new(u * lx, v * ly, -0.5 * lz),
                _ => Vector::new(u * lx, v * ly, 0.5 * lz),
            };
            center + local
        })
        .collect()
}

/// Samples on the surface of the unit cube (side 1, centered at the origin).
pub fn cube_points(n: usize, seed: u64) -> Vec<Point> {
    box_points(n, Point::origin(), Vector::new(1.0, 1.0, 1.0), seed)
}

/// Signed-magnitude distance from a point to the surface of the unit cube.
pub fn unit_cube_surface_distance(p: &Point) -> f64 {
    let q = [p.x.abs() - 0.5, p.y.abs() - 0.5, p.z.abs() - 0.5];
    let outside: f64 = q
        .iter()
        .map(|&c| c.max(0.0) * c.max(0.0))
        .sum::<f64>()
        .sqrt();
    let inside = q[0].max(q[1]).max(q[2]).min(0.0);
    (outside + inside).abs()
}

/// A color whose channels dither between `base` and `base + 1`, so every point
/// color sits within 1/255 of any average over the segment.
fn dithered(base: [u8; 3], rng: &mut Lcg) -> [u8; 3] {
    let mut c = base;
    for ch in &mut c {
        if rng.unit() < 0.5 {
            *ch = ch.saturating_add(1);
        }
    }
    c
}

/// Three-class room: a floor slab, one wall, and a spherical "clutter" blob.
/// Labels: 0 = floor, 1 = wall, 2 = clutter.
pub fn room_scene(seed: u64) -> LabeledScene {
    let mut rng = Lcg::new(seed ^ 0xC0FFEE);
    let mut points = Vec::new();

    let floor = box_points(
        4000,
        Point::new(0.0, 0.0, -0.1),
        Vector::new(4.0, 4.0, 0.2),
        seed,
    );
    for p in floor {
        points.push(LabeledPoint {
            position: p,
            color: dithered([120, 100, 80], &mut rng),
            label: 0,
        });
    }

    let wall = box_points(
        4000,
        Point::new(0.0, 1.9, 1.0),
        Vector::new(4.0, 0.2, 2.0),
        seed ^ 1,
    );
    for p in wall {
        points.push(LabeledPoint {
            position: p,
            color: dithered([200, 200, 190], &mut rng),
            label: 1,
        });
    }

    let clutter = sphere_points(3000, seed ^ 2);
    for p in clutter {
        points.push(LabeledPoint {
            position: Point::new(0.5 + 0.4 * p.x, 0.4 * p.y, 0.5 + 0.4 * p.z),
            color: dithered([60, 160, 70], &mut rng),
            label: 2,
        });
    }

    let mut class_names = BTreeMap::new();
    class_names.insert(0, "floor".to_string());
    class_names.insert(1, "wall".to_string());
    class_names.insert(2, "clutter".to_string());
    LabeledScene::new(points, class_names)
}

/// Mean per-channel color of the points carrying `label`, scaled to [0, 1].
pub fn mean_color(scene: &LabeledScene, label: u32) -> [f64; 3] {
    let mut sums = [0.0f64; 3];
    let mut n = 0usize;
    for p in scene.points.iter().filter(|p| p.label == label) {
        for (sum, &channel) in sums.iter_mut().zip(&p.color) {
            *sum += channel as f64;
        }
        n += 1;
    }
    [
        sums[0] / n as f64 / 255.0,
        sums[1] / n as f64 / 255.0,
        sums[2] / n as f64 / 255.0,
    ]
}

/// Euler characteristic V - E + F of a triangle mesh.
pub fn euler_characteristic(mesh: &srbim::TriangleMesh) -> i64 {
    let v = mesh.vertex_count() as i64;
    let e = mesh.edges().len() as i64;
    let f = mesh.face_count() as i64;
    v - e + f
}

/// UV-sphere triangle mesh with optional radial noise.
pub fn uv_sphere_mesh(
    rings: usize,
    segments: usize,
    radius: f64,
    noise: f64,
    seed: u64,
) -> srbim::TriangleMesh {
    use std::f64::consts::{PI, TAU};
    let mut rng = Lcg::new(seed);
    let mut vertices = Vec::new();
    let radial = |rng: &mut Lcg| radius * (1.0 + noise * (2.0 * rng.unit() - 1.0));
    vertices.push(Point::new(0.0, 0.0, radial(&mut rng)));
    for ring in 1..rings {
        let phi = PI * ring as f64 / rings as f64;
        for seg in 0..segments {
            let theta = TAU * seg as f64 / segments as f64;
            let r = radial(&mut rng);
            vertices.push(Point::new(
                r * phi.sin() * theta.cos(),
                r * phi.sin() * theta.sin(),
                r * phi.cos(),
            ));
        }
    }
    vertices.push(Point::new(0.0, 0.0, -radial(&mut rng)));
    let south = (vertices.len() - 1) as u32;

    let ring_vertex = |ring: usize, seg: usize| (1 + (ring - 1) * segments + seg % segments) as u32;
    let mut faces = Vec::new();
    for seg in 0..segments {
        faces.push([0, ring_vertex(1, seg), ring_vertex(1, seg + 1)]);
    }
    for ring in 1..rings - 1 {
        for seg in 0..segments {
            let (a, b) = (ring_vertex(ring, seg), ring_vertex(ring, seg + 1));
            let (c, d) = (ring_vertex(ring + 1, seg), ring_vertex(ring + 1, seg + 1));
            faces.push([a, c, b]);
            faces.push([b, c, d]);
        }
    }
    for seg in 0..segments {
        faces.push([south, ring_vertex(rings - 1, seg + 1), ring_vertex(rings - 1, seg)]);
    }
    srbim::TriangleMesh {
        vertices,
        faces,
        densities: None,
        vertex_colors: None,
    }
}

/// Flat triangulated n x n grid in the z = 0 plane.
pub fn planar_grid_mesh(n: usize) -> srbim::TriangleMesh {
    let mut vertices = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point::new(i as f64, j as f64, 0.0));
        }
    }
    let idx = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    let mut faces = Vec::new();
    for j in 0..n {
        for i in 0..n {
            faces.push([idx(i, j), idx(i + 1, j), idx(i, j + 1)]);
            faces.push([idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    srbim::TriangleMesh {
        vertices,
        faces,
        densities: None,
        vertex_colors: None,
    }
}

/// Icosphere (subdivided icosahedron) with optional radial noise; its near
/// uniform vertex valence keeps Laplacian shrinkage isotropic.
pub fn icosphere_mesh(subdivisions: usize, radius: f64, noise: f64, seed: u64) -> srbim::TriangleMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point> = [
        (-1.0, phi, 0.0), (1.0, phi, 0.0), (-1.0, -phi, 0.0), (1.0, -phi, 0.0),
        (0.0, -1.0, phi), (0.0, 1.0, phi), (0.0, -1.0, -phi), (0.0, 1.0, -phi),
        (phi, 0.0, -1.0), (phi, 0.0, 1.0), (-phi, 0.0, -1.0), (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| {
        let v = Vector::new(x, y, z).normalize();
        Point::from(v)
    })
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for face in &faces {
            let mut mids = [0u32; 3];
            for i in 0..3 {
                let (a, b) = (face[i], face[(i + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[i] = *midpoint.entry(key).or_insert_with(|| {
                    let m = (vertices[a as usize].coords + vertices[b as usize].coords) / 2.0;
                    vertices.push(Point::from(m.normalize()));
                    (vertices.len() - 1) as u32
                });
            }
            next_faces.push([face[0], mids[0], mids[2]]);
            next_faces.push([face[1], mids[1], mids[0]]);
            next_faces.push([face[2], mids[2], mids[1]]);
            next_faces.push(mids);
        }
        faces = next_faces;
    }

    let mut rng = Lcg::new(seed);
    for v in &mut vertices {
        let r = radius * (1.0 + noise * (2.0 * rng.unit() - 1.0));
        *v = Point::from(v.coords * r);
    }
    srbim::TriangleMesh {
        vertices,
        faces,
        densities: None,
        vertex_colors: None,
    }
}
