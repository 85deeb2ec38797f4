//! `srbim`: batch scan-to-BIM conversion of labeled PLY point clouds to IFC4.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use srbim::mesh::FilterMode;
use srbim::pipeline::{run_pipeline, PipelineConfig, PipelineError};

const EXIT_PIPELINE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "srbim",
    about = "Convert a semantically labeled point cloud (PLY) into a colorized IFC4 model",
    version
)]
struct Cli {
    /// Input point cloud (.ply, ascii or binary little-endian)
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,

    /// External per-point label file (one integer per line); when absent,
    /// labels are read from the PLY vertex property
    #[arg(long, value_name = "FILE")]
    labels: Option<PathBuf>,

    /// Label-to-IFC-class mapping table (TOML); defaults to the built-in table
    #[arg(long, value_name = "FILE")]
    mapping: Option<PathBuf>,

    /// Output IFC STEP file
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,

    /// Pipeline configuration file (TOML); flags override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Name of the PLY vertex property carrying the label
    #[arg(long, value_name = "NAME")]
    label_property: Option<String>,

    /// Normalized-density threshold for vertex removal
    #[arg(long, value_name = "A")]
    alpha: Option<f64>,

    /// Reconstruction grid depth (grid is (2^depth + 1)^3 nodes)
    #[arg(long, value_name = "D")]
    depth: Option<u32>,

    /// Neighborhood size for normal estimation
    #[arg(long, value_name = "K")]
    normals_k: Option<usize>,

    /// Laplacian smoothing step size
    #[arg(long, value_name = "L")]
    smooth_lambda: Option<f64>,

    /// Laplacian smoothing iteration count
    #[arg(long, value_name = "N")]
    smooth_iters: Option<usize>,

    /// Density threshold interpretation: absolute or quantile
    #[arg(long, value_name = "MODE")]
    filter_mode: Option<FilterMode>,

    /// Segments with fewer points are skipped (recorded in the report)
    #[arg(long, value_name = "N")]
    min_points: Option<usize>,

    /// Worker threads for per-segment reconstruction
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,

    /// Dump per-segment density CSVs and intermediate meshes next to the output
    #[arg(long)]
    dump_intermediate: bool,

    /// Write a JSON run report to this path
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,

    /// Seed for reproducible GlobalId generation
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Fixed header timestamp (ISO 8601) for reproducible output
    #[arg(long, value_name = "TS")]
    timestamp: Option<String>,

    /// IfcProject name
    #[arg(long, value_name = "NAME")]
    project_name: Option<String>,
}

fn build_config(cli: Cli) -> Result<PipelineConfig, String> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            toml::from_str::<PipelineConfig>(&text)
                .map_err(|e| format!("invalid config {}: {e}", path.display()))?
        }
        None => PipelineConfig::default(),
    };

    if let Some(v) = cli.input {
        config.input = v;
    }
    if let Some(v) = cli.labels {
        config.labels = Some(v);
    }
    if let Some(v) = cli.mapping {
        config.mapping = Some(v);
    }
    if let Some(v) = cli.output {
        config.output = v;
    }
    if let Some(v) = cli.label_property {
        config.label_property = v;
    }
    if let Some(v) = cli.alpha {
        config.mfs.alpha = v;
    }
    if let Some(v) = cli.depth {
        config.mfs.octree_depth = v;
    }
    if let Some(v) = cli.normals_k {
        config.mfs.normals_k = v;
    }
    if let Some(v) = cli.smooth_lambda {
        config.mfs.smooth_lambda = v;
    }
    if let Some(v) = cli.smooth_iters {
        config.mfs.smooth_iterations = v;
    }
    if let Some(v) = cli.filter_mode {
        config.mfs.filter_mode = v;
    }
    if let Some(v) = cli.min_points {
        config.min_segment_points = v;
    }
    if let Some(v) = cli.jobs {
        config.jobs = v;
    }
    if cli.dump_intermediate {
        config.dump_intermediate = true;
    }
    if let Some(v) = cli.report {
        config.report = Some(v);
    }
    if let Some(v) = cli.seed {
        config.seed = Some(v);
    }
    if let Some(v) = cli.timestamp {
        config.timestamp = Some(v);
    }
    if let Some(v) = cli.project_name {
        config.project_name = v;
    }

    if config.input.as_os_str().is_empty() {
        return Err("--input is required (via flag or config file)".into());
    }
    if config.output.as_os_str().is_empty() {
        return Err("--output is required (via flag or config file)".into());
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(cli) {
        Ok(config) => config,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(EXIT_USAGE);
        }
    };

    match run_pipeline(&config) {
        Ok(report) => {
            let t = &report.totals;
            eprintln!(
                "srbim: {} segment(s): {} succeeded, {} skipped, {} failed; wrote {}",
                t.segments_in,
                t.succeeded,
                t.skipped,
                t.failed,
                config.output.display()
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                PipelineError::Config { .. } => EXIT_USAGE,
                // bad mapping tables and unreadable inputs are usage errors too
                PipelineError::Ifc(
                    srbim::ifc::IfcError::InvalidMappingTable { .. }
                    | srbim::ifc::IfcError::MappingTableRead { .. },
                ) => EXIT_USAGE,
                _ => EXIT_PIPELINE,
            };
            ExitCode::from(code)
        }
    }
}
