//! The MFS chain: per-segment mesh reconstruction, density filtering, and
//! smoothing, with color transfer bound to the filtered vertex identities.

use thiserror::Error;

use crate::ifc::transfer_colors;
use crate::mesh::{self, FilterMode, TriangleMesh};
use crate::normals::estimate_normals;
use crate::pointcloud::Segment;
use crate::poisson::poisson_reconstruct;
use crate::{Point, Vector};

/// Knobs for the reconstruction/filter/smooth chain.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MfsConfig {
    /// Normalized-density threshold for vertex removal.
    pub alpha: f64,
    /// Maximum octree depth of the reconstruction grid.
    pub octree_depth: u32,
    /// Neighborhood size for PCA normal estimation.
    pub normals_k: usize,
    /// Laplacian smoothing step size.
    pub smooth_lambda: f64,
    /// Laplacian smoothing iteration count.
    pub smooth_iterations: usize,
    /// Threshold interpretation for the vertex filter.
    pub filter_mode: FilterMode,
}

impl Default for MfsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            octree_depth: 8,
            normals_k: 16,
            smooth_lambda: 0.5,
            smooth_iterations: 10,
            filter_mode: FilterMode::Absolute,
        }
    }
}

#[derive(Debug, Error)]
pub enum MfsConfigError {
    #[error("alpha must be in (0, 1), got {0}")]
    Alpha(f64),
    #[error("octree_depth must be at least 3, got {0}")]
    Depth(u32),
    #[error("normals_k must be at least 3, got {0}")]
    NormalsK(usize),
    #[error("smooth_lambda must be in (0, 1], got {0}")]
    Lambda(f64),
}

impl MfsConfig {
    pub fn validate(&self) -> Result<(), MfsConfigError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(MfsConfigError::Alpha(self.alpha));
        }
        if self.octree_depth < 3 {
            return Err(MfsConfigError::Depth(self.octree_depth));
        }
        if self.normals_k < 3 {
            return Err(MfsConfigError::NormalsK(self.normals_k));
        }
        if !(self.smooth_lambda > 0.0 && self.smooth_lambda <= 1.0) {
            return Err(MfsConfigError::Lambda(self.smooth_lambda));
        }
        Ok(())
    }
}

/// Pipeline stage that failed, for error reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Normals,
    Poisson,
    Normalize,
    Filter,
    Colors,
    Smooth,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Normals => "normals",
            Stage::Poisson => "poisson",
            Stage::Normalize => "normalize",
            Stage::Filter => "filter",
            Stage::Colors => "colors",
            Stage::Smooth => "smooth",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
#[error("segment {label:?} failed at stage {stage}: {message}")]
pub struct MfsError {
    pub stage: Stage,
    pub label: String,
    pub message: String,
}

/// Densities of one vertex before/after normalization, keyed by vertex index.
pub type DensityRecord = (usize, f64, f64);

/// Everything the detailed run produces beyond the final mesh.
#[derive(Debug, Clone)]
pub struct MfsOutput {
    /// The refined segment mesh: filtered, colorized, smoothed; carries
    /// normalized densities.
    pub mesh: TriangleMesh,
    pub pre_filter_vertex_count: usize,
    pub post_filter_vertex_count: usize,
    /// (vertex index, raw density, normalized density) for every vertex of the
    /// initial mesh.
    pub densities_pre_filter: Vec<DensityRecord>,
    /// Same, restricted to the survivors (indices refer to the initial mesh).
    pub densities_post_filter: Vec<DensityRecord>,
    /// Initial reconstruction, kept only when requested.
    pub initial_mesh: Option<TriangleMesh>,
    /// Filtered (pre-smoothing) mesh, kept only when requested.
    pub filtered_mesh: Option<TriangleMesh>,
    /// Wall-clock milliseconds per stage.
    pub stage_timings_ms: Vec<(Stage, f64)>,
}

/// Run the full chain for one segment and return the refined mesh.
pub fn run_mfs(segment: &Segment, config: &MfsConfig) -> Result<TriangleMesh, MfsError> {
    run_mfs_detailed(segment, config, false).map(|out| out.mesh)
}

/// Like [`run_mfs`] but also reports per-stage data; `keep_intermediate`
/// retains the initial and filtered meshes for debug dumps.
pub fn run_mfs_detailed(
    segment: &Segment,
    config: &MfsConfig,
    keep_intermediate: bool,
) -> Result<MfsOutput, MfsError> {
    let label = segment.label_name.clone();
    let fail = |stage: Stage, message: String| MfsError {
        stage,
        label: label.clone(),
        message,
    };

    let positions: Vec<Point> = segment.points.iter().map(|p| p.position).collect();
    let mut stage_timings_ms = Vec::new();
    let timed = |timings: &mut Vec<(Stage, f64)>, stage: Stage, start: std::time::Instant| {
        timings.push((stage, start.elapsed().as_secs_f64() * 1e3));
    };

    let start = std::time::Instant::now();
    let k = config.normals_k.min(positions.len().saturating_sub(1)).max(3);
    let normals = estimate_normals(&positions, k)
        .map_err(|e| fail(Stage::Normals, e.to_string()))?;
    let normals: Vec<Vector> = normals.normals;
    timed(&mut stage_timings_ms, Stage::Normals, start);

    let start = std::time::Instant::now();
    let initial = poisson_reconstruct(&positions, &normals, config.octree_depth)
        .map_err(|e| fail(Stage::Poisson, e.to_string()))?;
    timed(&mut stage_timings_ms, Stage::Poisson, start);

    let raw_densities = initial.densities.clone().unwrap_or_default();
    let normalized = mesh::normalize_densities(&raw_densities)
        .map_err(|e| fail(Stage::Normalize, e.to_string()))?;
    let densities_pre_filter: Vec<DensityRecord> = raw_densities
        .iter()
        .zip(&normalized)
        .enumerate()
        .map(|(i, (&raw, &norm))| (i, raw, norm))
        .collect();

    let mut normalized_mesh = initial.clone();
    normalized_mesh.densities = Some(normalized.clone());

    let start = std::time::Instant::now();
    let filtered = mesh::filter_vertices(&normalized_mesh, config.alpha, config.filter_mode)
        .map_err(|e| fail(Stage::Filter, e.to_string()))?;
    timed(&mut stage_timings_ms, Stage::Filter, start);
    let densities_post_filter: Vec<DensityRecord> = densities_pre_filter
        .iter()
        .filter(|(_, _, norm)| match config.filter_mode {
            FilterMode::Absolute => *norm >= config.alpha,
            // in quantile mode the survivors are whatever the filter kept
            FilterMode::Quantile => {
                filtered.densities.as_ref().is_some_and(|d| d.contains(norm))
            }
        })
        .cloned()
        .collect();

    // colors attach after filtering so they bind to the final vertex identities
    let start = std::time::Instant::now();
    let colored = transfer_colors(segment, &filtered);
    timed(&mut stage_timings_ms, Stage::Colors, start);

    let start = std::time::Instant::now();
    let smoothed = mesh::laplacian_smooth(&colored, config.smooth_lambda, config.smooth_iterations);
    smoothed
        .validate()
        .map_err(|e| fail(Stage::Smooth, e.to_string()))?;
    timed(&mut stage_timings_ms, Stage::Smooth, start);

    Ok(MfsOutput {
        pre_filter_vertex_count: initial.vertex_count(),
        post_filter_vertex_count: filtered.vertex_count(),
        densities_pre_filter,
        densities_post_filter,
        initial_mesh: keep_intermediate.then_some(normalized_mesh),
        filtered_mesh: keep_intermediate.then(|| colored.clone()),
        mesh: smoothed,
        stage_timings_ms,
    })
}
