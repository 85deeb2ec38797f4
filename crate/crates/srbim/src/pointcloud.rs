//! Labeled point cloud types and semantic partitioning.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::{Point, Rgb};

#[derive(Debug, Error)]
pub enum PointCloudError {
    #[error("scene is empty")]
    EmptyScene,
    #[error("label count mismatch: scene has {points} points but label file has {labels} lines")]
    LabelCountMismatch { points: usize, labels: usize },
    #[error("label file line {line}: expected an integer, got {token:?}")]
    LabelParse { line: usize, token: String },
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A single point with position, color, and semantic class label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub position: Point,
    pub color: Rgb,
    pub label: u32,
}

/// A full scene: points plus the label-id → name dictionary.
#[derive(Debug, Clone)]
pub struct LabeledScene {
    pub points: Vec<LabeledPoint>,
    pub class_names: BTreeMap<u32, String>,
}

impl LabeledScene {
    pub fn new(points: Vec<LabeledPoint>, class_names: BTreeMap<u32, String>) -> Self {
        Self {
            points,
            class_names,
        }
    }

    /// Name for a label id, synthesizing `class_<id>` when the dictionary has no entry.
    pub fn class_name(&self, id: u32) -> String {
        match self.class_names.get(&id) {
            Some(name) => name.clone(),
            None => format!("class_{id}"),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One semantic partition of a scene: all points sharing a label.
#[derive(Debug, Clone)]
pub struct Segment {
    pub label_id: u32,
    pub label_name: String,
    pub points: Vec<LabeledPoint>,
}

/// Replace every point's label with the one on the matching line of a sidecar file.
///
/// The file holds one decimal integer per line, line i labeling point i.
pub fn merge_labels(
    mut scene: LabeledScene,
    labels_path: &Path,
) -> Result<LabeledScene, PointCloudError> {
    let text = std::fs::read_to_string(labels_path).map_err(|source| PointCloudError::Io {
        path: labels_path.display().to_string(),
        source,
    })?;
    let lines: Vec<&str> = text.lines().collect();
    let mut labels = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let token = line.trim();
        if token.is_empty() && i + 1 == lines.len() {
            break;
        }
        let label: u32 = token.parse().map_err(|_| PointCloudError::LabelParse {
            line: i + 1,
            token: token.to_string(),
        })?;
        labels.push(label);
    }
    if labels.len() != scene.points.len() {
        return Err(PointCloudError::LabelCountMismatch {
            points: scene.points.len(),
            labels: labels.len(),
        });
    }
    for (point, label) in scene.points.iter_mut().zip(&labels) {
        point.label = *label;
    }
    Ok(scene)
}

/// Split a scene into per-label segments, sorted by label id.
///
/// Points keep their scene order within each segment, and the segments form a
/// partition of the scene's point set.
pub fn partition(scene: &LabeledScene) -> Result<Vec<Segment>, PointCloudError> {
    if scene.points.is_empty() {
        return Err(PointCloudError::EmptyScene);
    }
    let mut by_label: BTreeMap<u32, Vec<LabeledPoint>> = BTreeMap::new();
    for point in &scene.points {
        by_label.entry(point.label).or_default().push(*point);
    }
    Ok(by_label
        .into_iter()
        .map(|(label_id, points)| Segment {
            label_id,
            label_name: scene.class_name(label_id),
            points,
        })
        .collect())
}

/// Render a class-name dictionary as PLY header comments (`comment label <id> <name>`).
pub(crate) fn class_name_comments(class_names: &BTreeMap<u32, String>) -> String {
    let mut out = String::new();
    for (id, name) in class_names {
        let _ = writeln!(out, "comment label {id} {name}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn pt(x: f64, label: u32) -> LabeledPoint {
        LabeledPoint {
            position: Point::new(x, 0.0, 0.0),
            color: [0, 0, 0],
            label,
        }
    }

    fn scene(labels: &[u32]) -> LabeledScene {
        LabeledScene::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, &l)| pt(i as f64, l))
                .collect(),
            BTreeMap::new(),
        )
    }

    #[test]
    fn partition_groups_by_label() {
        let segments = partition(&scene(&[1, 0, 1])).unwrap();
        assert_eq!(segments.len(), 2);
        assert_eq!(segments[0].label_id, 0);
        assert_eq!(segments[0].points.len(), 1);
        assert_eq!(segments[1].label_id, 1);
        assert_eq!(segments[1].points.len(), 2);
        // scene order preserved within the segment
        assert_eq!(segments[1].points[0].position.x, 0.0);
        assert_eq!(segments[1].points[1].position.x, 2.0);
    }

    #[test]
    fn partition_single_label_is_degenerate() {
        let segments = partition(&scene(&[7, 7, 7])).unwrap();
        assert_eq!(segments.len(), 1);
        assert_eq!(segments[0].label_id, 7);
        assert_eq!(segments[0].points.len(), 3);
        assert_eq!(segments[0].label_name, "class_7");
    }

    #[test]
    fn partition_empty_scene_errors() {
        assert!(matches!(
            partition(&scene(&[])),
            Err(PointCloudError::EmptyScene)
        ));
    }

    #[test]
    fn partition_counts_match_histogram_oracle() {
        // randomized scene over 5 labels, checked against a plain counting pass
        let mut labels = Vec::new();
        let mut state = 12345u64;
        for _ in 0..1000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            labels.push((state >> 33) as u32 % 5);
        }
        let mut histogram = [0usize; 5];
        for &l in &labels {
            histogram[l as usize] += 1;
        }
        let segments = partition(&scene(&labels)).unwrap();
        assert_eq!(segments.len(), histogram.iter().filter(|&&c| c > 0).count());
        for seg in &segments {
            assert_eq!(seg.points.len(), histogram[seg.label_id as usize]);
        }
        let total: usize = segments.iter().map(|s| s.points.len()).sum();
        assert_eq!(total, 1000);
    }

    #[test]
    fn partition_is_idempotent_on_a_single_segment() {
        let segments = partition(&scene(&[3, 3, 3, 3])).unwrap();
        let seg = &segments[0];
        let sub = LabeledScene::new(seg.points.clone(), BTreeMap::new());
        let again = partition(&sub).unwrap();
        assert_eq!(again.len(), 1);
        assert_eq!(again[0].points.len(), seg.points.len());
    }

    #[test]
    fn merge_labels_positional() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(file, "0\n0\n1\n").unwrap();
        let merged = merge_labels(scene(&[9, 9, 9]), file.path()).unwrap();
        let labels: Vec<u32> = merged.points.iter().map(|p| p.label).collect();
        assert_eq!(labels, vec![0, 0, 1]);
    }

    #[test]
    fn merge_labels_count_mismatch() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(file, "0\n1\n").unwrap();
        match merge_labels(scene(&[0, 0, 0]), file.path()) {
            Err(PointCloudError::LabelCountMismatch { points: 3, labels: 2 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn merge_labels_bad_token_reports_line() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(file, "0\nwall\n1\n").unwrap();
        match merge_labels(scene(&[0, 0, 0]), file.path()) {
            Err(PointCloudError::LabelParse { line: 2, token }) => assert_eq!(token, "wall"),
            other => panic!("unexpected: {other:?}"),
        }
    }
}
