//! End-to-end orchestration: load, partition, per-segment MFS (optionally in
//! parallel), IFC mapping, colorization, and STEP emission.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::ifc::{self, GlobalIdGen, MappingTable};
use crate::mfs::{run_mfs_detailed, MfsConfig, MfsError, MfsOutput};
use crate::pointcloud::{self, Segment};
use crate::step::{write_step, WriteOptions};
use crate::{ply, TriangleMesh};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {message}")]
    Config { message: String },
    #[error(transparent)]
    Ply(#[from] ply::PlyError),
    #[error(transparent)]
    PointCloud(#[from] pointcloud::PointCloudError),
    #[error(transparent)]
    Ifc(#[from] ifc::IfcError),
    #[error(transparent)]
    Step(#[from] crate::step::StepWriteError),
    #[error("no segment produced an IFC object; see the run report")]
    NoObjects { report: Box<RunReport> },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Everything a pipeline run needs; mirrors the CLI flags.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub labels: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub output: PathBuf,
    pub label_property: String,
    pub mfs: MfsConfig,
    pub jobs: usize,
    pub dump_intermediate: bool,
    pub min_segment_points: usize,
    pub report: Option<PathBuf>,
    pub project_name: String,
    /// Seeds the GlobalId stream for reproducible output.
    pub seed: Option<u64>,
    /// Overrides the FILE_NAME timestamp for reproducible output.
    pub timestamp: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            labels: None,
            mapping: None,
            output: PathBuf::new(),
            label_property: "label".into(),
            mfs: MfsConfig::default(),
            jobs: 1,
            dump_intermediate: false,
            min_segment_points: 50,
            report: None,
            project_name: "srbim".into(),
            seed: None,
            timestamp: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let config = |message: String| PipelineError::Config { message };
        if self.input.as_os_str().is_empty() {
            return Err(config("input path is empty".into()));
        }
        if self.output.as_os_str().is_empty() {
            return Err(config("output path is empty".into()));
        }
        if self.jobs < 1 {
            return Err(config("jobs must be at least 1".into()));
        }
        if self.min_segment_points < 4 {
            return Err(config("min_segment_points must be at least 4".into()));
        }
        self.mfs
            .validate()
            .map_err(|e| config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentStatus {
    Succeeded,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SegmentError {
    pub stage: String,
    pub message: String,
}

/// One record per input segment.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SegmentRecord {
    pub label_id: u32,
    pub label_name: String,
    pub point_count: usize,
    pub status: SegmentStatus,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertices_pre_filter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertices_post_filter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub removed_vertices: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ifc_class: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_proxy: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage_timings_ms: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<SegmentError>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunTotals {
    pub segments_in: usize,
    pub succeeded: usize,
    pub skipped: usize,
    pub failed: usize,
    pub objects_emitted: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunReport {
    pub segments: Vec<SegmentRecord>,
    pub totals: RunTotals,
}

impl RunReport {
    fn from_records(segments: Vec<SegmentRecord>) -> Self {
        let count = |status: SegmentStatus| {
            segments.iter().filter(|r| r.status == status).count()
        };
        let succeeded = count(SegmentStatus::Succeeded);
        let totals = RunTotals {
            segments_in: segments.len(),
            succeeded,
            skipped: count(SegmentStatus::Skipped),
            failed: count(SegmentStatus::Failed),
            objects_emitted: succeeded,
        };
        Self { segments, totals }
    }
}

enum SegmentOutcome {
    Skipped { reason: String },
    Failed(MfsError),
    Done(Box<MfsOutput>),
}

/// Run the whole chain; succeeds iff at least one IFC object was emitted.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;

    // fail fast on config-level inputs before any processing
    let table = match &config.mapping {
        Some(path) => MappingTable::from_toml_file(path)?,
        None => MappingTable::default(),
    };

    let scene = match &config.labels {
        Some(labels) => {
            let unlabeled = ply::load_ply_unlabeled(&config.input)?;
            pointcloud::merge_labels(unlabeled, labels)?
        }
        None => ply::load_ply(&config.input, &config.label_property)?,
    };
    let segments = pointcloud::partition(&scene)?;

    let outcomes = process_segments(&segments, config);

    // ordered join: segments (and outcomes) are in label-id order
    let mut ids = match config.seed {
        Some(seed) => GlobalIdGen::seeded(seed),
        None => GlobalIdGen::random(),
    };
    let mut records = Vec::with_capacity(segments.len());
    let mut objects = Vec::new();
    let mut dumps: Vec<(String, MfsOutput)> = Vec::new();

    for (segment, outcome) in segments.iter().zip(outcomes) {
        let base = SegmentRecord {
            label_id: segment.label_id,
            label_name: segment.label_name.clone(),
            point_count: segment.points.len(),
            status: SegmentStatus::Skipped,
            alpha: config.mfs.alpha,
            vertices_pre_filter: None,
            vertices_post_filter: None,
            removed_vertices: None,
            ifc_class: None,
            is_proxy: None,
            stage_timings_ms: None,
            error: None,
        };
        match outcome {
            SegmentOutcome::Skipped { reason } => {
                records.push(SegmentRecord {
                    error: Some(SegmentError {
                        stage: "preflight".into(),
                        message: reason,
                    }),
                    ..base
                });
            }
            SegmentOutcome::Failed(err) => {
                records.push(SegmentRecord {
                    status: SegmentStatus::Failed,
                    error: Some(SegmentError {
                        stage: err.stage.to_string(),
                        message: err.message,
                    }),
                    ..base
                });
            }
            SegmentOutcome::Done(output) => {
                let (class, is_proxy) = ifc::map_label_to_class(&segment.label_name, &table);
                match ifc::build_ifc_object(
                    output.mesh.clone(),
                    &class,
                    &segment.label_name,
                    segment.points.len(),
                    config.mfs.alpha,
                    &mut ids,
                ) {
                    Ok(object) => {
                        records.push(SegmentRecord {
                            status: SegmentStatus::Succeeded,
                            vertices_pre_filter: Some(output.pre_filter_vertex_count),
                            vertices_post_filter: Some(output.post_filter_vertex_count),
                            removed_vertices: Some(
                                output.pre_filter_vertex_count - output.post_filter_vertex_count,
                            ),
                            ifc_class: Some(class),
                            is_proxy: Some(is_proxy),
                            stage_timings_ms: Some(
                                output
                                    .stage_timings_ms
                                    .iter()
                                    .map(|(stage, ms)| (stage.to_string(), *ms))
                                    .collect(),
                            ),
                            ..base
                        });
                        objects.push(object);
                        if config.dump_intermediate {
                            dumps.push((segment.label_name.clone(), *output));
                        }
                    }
                    Err(e) => {
                        records.push(SegmentRecord {
                            status: SegmentStatus::Failed,
                            error: Some(SegmentError {
                                stage: "ifc".into(),
                                message: e.to_string(),
                            }),
                            ..base
                        });
                    }
                }
            }
        }
    }

    let report = RunReport::from_records(records);

    if objects.is_empty() {
        return Err(PipelineError::NoObjects {
            report: Box::new(report),
        });
    }

    let project = ifc::assemble_project(objects, &config.project_name, &mut ids)?;
    write_step(
        &project,
        &config.output,
        &WriteOptions {
            timestamp: config.timestamp.clone(),
        },
    )?;

    if config.dump_intermediate {
        dump_debug_artifacts(&config.output, &dumps)?;
    }
    if let Some(report_path) = &config.report {
        emit_report(&report, report_path)?;
    }
    Ok(report)
}

fn process_segments(segments: &[Segment], config: &PipelineConfig) -> Vec<SegmentOutcome> {
    let work: Vec<usize> = (0..segments.len()).collect();
    let results: Mutex<Vec<Option<SegmentOutcome>>> =
        Mutex::new((0..segments.len()).map(|_| None).collect());
    let cursor = AtomicUsize::new(0);
    let workers = config.jobs.min(segments.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let slot = cursor.fetch_add(1, Ordering::SeqCst);
                if slot >= work.len() {
                    break;
                }
                let segment = &segments[work[slot]];
                let outcome = if segment.points.len() < config.min_segment_points {
                    SegmentOutcome::Skipped {
                        reason: format!(
                            "segment has {} points, below min_segment_points {}",
                            segment.points.len(),
                            config.min_segment_points
                        ),
                    }
                } else {
                    match run_mfs_detailed(segment, &config.mfs, config.dump_intermediate) {
                        Ok(output) => SegmentOutcome::Done(Box::new(output)),
                        Err(err) => SegmentOutcome::Failed(err),
                    }
                };
                results.lock().unwrap()[work[slot]] = Some(outcome);
            });
        }
    });

    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("every segment processed"))
        .collect()
}

/// Write the run report as JSON (one record per segment plus totals).
pub fn emit_report(report: &RunReport, path: &Path) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, json).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Per-segment density CSVs and intermediate meshes, next to the output file.
fn dump_debug_artifacts(
    output: &Path,
    dumps: &[(String, MfsOutput)],
) -> Result<(), PipelineError> {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "model".into());
    let dir = output
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(format!("{stem}_debug"));
    std::fs::create_dir_all(&dir).map_err(|source| PipelineError::Io {
        path: dir.display().to_string(),
        source,
    })?;

    for (label, output) in dumps {
        let safe = ifc::normalize_label(label);
        write_density_csv(
            &dir.join(format!("{safe}_densities_pre.csv")),
            &output.densities_pre_filter,
        )?;
        write_density_csv(
            &dir.join(format!("{safe}_densities_post.csv")),
            &output.densities_post_filter,
        )?;
        let meshes: [(&str, Option<&TriangleMesh>); 3] = [
            ("initial", output.initial_mesh.as_ref()),
            ("filtered", output.filtered_mesh.as_ref()),
            ("smoothed", Some(&output.mesh)),
        ];
        for (tag, mesh) in meshes {
            if let Some(mesh) = mesh {
                ply::write_mesh_ply(mesh, &dir.join(format!("{safe}_{tag}.ply")))?;
            }
        }
    }
    Ok(())
}

fn write_density_csv(
    path: &Path,
    records: &[(usize, f64, f64)],
) -> Result<(), PipelineError> {
    let io_err = |source: std::io::Error| PipelineError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    writeln!(w, "vertex_index,density,normalized_density").map_err(io_err)?;
    for (index, raw, normalized) in records {
        writeln!(w, "{index},{raw},{normalized}").map_err(io_err)?;
    }
    Ok(())
}
