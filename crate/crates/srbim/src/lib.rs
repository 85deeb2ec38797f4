//! Scan-to-BIM conversion library.
//!
//! Turns semantically labeled point clouds into colorized IFC4 building models:
//! per-label partitioning, Poisson surface reconstruction, density-based vertex
//! filtering, Laplacian smoothing, IFC class mapping with partition-average
//! coloring, and ISO 10303-21 (STEP) serialization.

pub mod ifc;
pub mod kdtree;
pub mod mesh;
pub mod mfs;
pub mod normals;
pub mod pipeline;
pub mod ply;
pub mod pointcloud;
pub mod poisson;
pub mod step;

pub use mesh::TriangleMesh;
pub use mfs::MfsConfig;
pub use pointcloud::{LabeledPoint, LabeledScene, Segment};

/// 3D position in meters.
pub type Point = nalgebra::Point3<f64>;
/// 3D direction / displacement.
pub type Vector = nalgebra::Vector3<f64>;
/// 8-bit RGB color.
pub type Rgb = [u8; 3];
