//! Pipeline-level behavior: reporting invariants, debug artifacts, and
//! segment isolation.

mod common;

use std::collections::BTreeMap;

use common::*;
use srbim::pipeline::{run_pipeline, PipelineConfig, SegmentStatus};
use srbim::pointcloud::{LabeledPoint, LabeledScene};
use srbim::Point;

/// Room scene plus a 10-point "dust" segment that must be skipped.
fn scene_with_dust() -> LabeledScene {
    let mut scene = room_scene(3);
    let mut rng = Lcg::new(404);
    for _ in 0..10 {
        scene.points.push(LabeledPoint {
            position: Point::new(rng.unit(), rng.unit(), 3.0 + rng.unit()),
            color: [9, 9, 9],
            label: 7,
        });
    }
    scene.class_names.insert(7, "dust".to_string());
    scene
}

fn base_config(dir: &std::path::Path, scene: &LabeledScene) -> PipelineConfig {
    let input = dir.join("scene.ply");
    srbim::ply::write_scene_ply(scene, &input, true).expect("fixture");
    let mut config = PipelineConfig {
        input,
        output: dir.join("model.ifc"),
        seed: Some(5),
        timestamp: Some("2026-08-24T00:00:00".to_string()),
        report: Some(dir.join("report.json")),
        ..PipelineConfig::default()
    };
    config.mfs.octree_depth = 5;
    config
}

#[test]
fn report_accounts_for_every_segment_and_isolates_failures() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scene_with_dust();
    let config = base_config(dir.path(), &scene);
    let report = run_pipeline(&config).expect("pipeline");

    let t = &report.totals;
    assert_eq!(t.segments_in, 4);
    assert_eq!(t.segments_in, t.succeeded + t.skipped + t.failed);
    assert_eq!(t.skipped, 1, "the 10-point dust segment must be skipped");
    assert_eq!(t.succeeded, 3, "the room segments must be unaffected");

    let dust = report
        .segments
        .iter()
        .find(|s| s.label_name == "dust")
        .expect("dust record");
    assert_eq!(dust.status, SegmentStatus::Skipped);
    assert!(dust.vertices_pre_filter.is_none());
    let error = dust.error.as_ref().expect("skip reason recorded");
    assert!(!error.message.is_empty());

    // the emitted JSON mirrors the in-memory report
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(config.report.as_ref().unwrap()).unwrap(),
    )
    .unwrap();
    assert_eq!(json["segments"].as_array().unwrap().len(), 4);
    assert_eq!(json["totals"]["skipped"], 1);
}

#[test]
fn dump_intermediate_writes_density_csvs_and_meshes() {
    let dir = tempfile::tempdir().unwrap();
    let scene = room_scene(9);
    let mut config = base_config(dir.path(), &scene);
    config.dump_intermediate = true;
    run_pipeline(&config).expect("pipeline");

    let debug_dir = dir.path().join("model_debug");
    assert!(debug_dir.is_dir(), "debug directory must exist");
    for label in ["floor", "wall", "clutter"] {
        for suffix in [
            "densities_pre.csv",
            "densities_post.csv",
            "initial.ply",
            "filtered.ply",
            "smoothed.ply",
        ] {
            let path = debug_dir.join(format!("{label}_{suffix}"));
            assert!(path.is_file(), "missing {path:?}");
        }
        // every post-filter normalized density clears the threshold
        let csv =
            std::fs::read_to_string(debug_dir.join(format!("{label}_densities_post.csv")))
                .unwrap();
        for line in csv.lines().skip(1) {
            let normalized: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert!(
                normalized >= config.mfs.alpha,
                "{label}: post-filter density {normalized} < alpha"
            );
        }
    }
}

#[test]
fn mapping_table_file_overrides_the_builtin_table() {
    let dir = tempfile::tempdir().unwrap();
    let scene = {
        let mut points = Vec::new();

        for p in sphere_points(800, 12) {
            points.push(LabeledPoint {
                position: p,
                color: [50, 60, 70],
                label: 0,
            });
        }
        let mut class_names = BTreeMap::new();
        class_names.insert(0, "blob".to_string());
        LabeledScene::new(points, class_names)
    };
    let mut config = base_config(dir.path(), &scene);
    let mapping = dir.path().join("mapping.cfg");
    std::fs::write(
        &mapping,
        "classes = [\"IfcWall\", \"IfcSlab\"]\n\n[aliases]\nblob = \"IfcSlab\"\n",
    )
    .unwrap();
    config.mapping = Some(mapping);
    let report = run_pipeline(&config).expect("pipeline");
    assert_eq!(report.segments[0].ifc_class.as_deref(), Some("IfcSlab"));
    assert_eq!(report.segments[0].is_proxy, Some(false));
}
