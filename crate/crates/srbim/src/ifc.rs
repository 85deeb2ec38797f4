//! IFC class mapping, partition-average coloring, and project assembly.

use std::collections::BTreeMap;
use std::path::Path;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kdtree::KdTree;
use crate::mesh::TriangleMesh;
use crate::pointcloud::Segment;

#[derive(Debug, Error)]
pub enum IfcError {
    #[error("segment {segment:?}: mesh has no vertex colors")]
    MissingColors { segment: String },
    #[error("object {label:?} has empty geometry (mesh needs at least one face)")]
    EmptyGeometry { label: String },
    #[error("cannot assemble a project from zero objects")]
    EmptyProject,
    #[error("duplicate GlobalId {id:?} in project")]
    DuplicateGlobalId { id: String },
    #[error("invalid mapping table: {message}")]
    InvalidMappingTable { message: String },
    #[error("cannot read mapping table {path}: {message}")]
    MappingTableRead { path: String, message: String },
}

/// IFC base-64 alphabet used by 22-character GlobalIds.
const GLOBALID_ALPHABET: &[u8; 64] =
    b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz_$";

/// 22-character IFC GlobalId encoding 128 bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GlobalId(String);

impl GlobalId {
    pub fn from_u128(value: u128) -> Self {
        let mut chars = [0u8; 22];
        let mut v = value;
        for slot in chars.iter_mut().rev() {
            *slot = GLOBALID_ALPHABET[(v & 63) as usize];
            v >>= 6;
        }
        GlobalId(String::from_utf8(chars.to_vec()).unwrap())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_valid(s: &str) -> bool {
        s.len() == 22
            && s.bytes().all(|b| GLOBALID_ALPHABET.contains(&b))
            // 128 bits leave only 2 for the first character
            && s.as_bytes()[0] < b'4'
    }
}

impl std::fmt::Display for GlobalId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Source of fresh GlobalIds; seedable for reproducible output.
pub struct GlobalIdGen {
    rng: ChaCha8Rng,
}

impl GlobalIdGen {
    /// Ids from OS entropy.
    pub fn random() -> Self {
        Self {
            rng: ChaCha8Rng::from_entropy(),
        }
    }

    /// Deterministic id stream for reproducible files.
    pub fn seeded(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub(crate) fn from_rng(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }

    pub fn next_id(&mut self) -> GlobalId {
        let mut bytes = [0u8; 16];
        self.rng.fill_bytes(&mut bytes);
        GlobalId::from_u128(u128::from_le_bytes(bytes))
    }
}

/// Label → IFC class dictionary implementing the suffix rule.
#[derive(Debug, Clone)]
pub struct MappingTable {
    pub classes: Vec<String>,
    /// Normalized label → class name overrides, consulted before the suffix rule.
    pub aliases: BTreeMap<String, String>,
}

/// IFC4 building element classes accepted as mapping targets.
pub const IFC4_BUILDING_ELEMENT_CLASSES: &[&str] = &[
    "IfcWall",
    "IfcSlab",
    "IfcColumn",
    "IfcBeam",
    "IfcDoor",
    "IfcWindow",
    "IfcRoof",
    "IfcStair",
    "IfcRailing",
    "IfcCovering",
    "IfcCurtainWall",
    "IfcPlate",
    "IfcMember",
    "IfcFooting",
    "IfcBuildingElementProxy",
];

pub const PROXY_CLASS: &str = "IfcBuildingElementProxy";

/// Lowercase and strip non-alphanumerics.
pub fn normalize_label(label: &str) -> String {
    label
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl Default for MappingTable {
    /// The IFC4 class list plus S3DIS-style aliases for labels with no
    /// suffix match in the schema.
    fn default() -> Self {
        let mut aliases = BTreeMap::new();
        aliases.insert("ceiling".to_string(), "IfcCovering".to_string());
        aliases.insert("floor".to_string(), "IfcSlab".to_string());
        Self {
            classes: IFC4_BUILDING_ELEMENT_CLASSES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            aliases,
        }
    }
}

#[derive(serde::Deserialize)]
struct MappingTableFile {
    classes: Option<Vec<String>>,
    aliases: Option<BTreeMap<String, String>>,
}

impl MappingTable {
    /// Load from a TOML file with a `classes` list and an `aliases` table;
    /// omitted sections fall back to the defaults.
    pub fn from_toml_file(path: &Path) -> Result<Self, IfcError> {
        let text = std::fs::read_to_string(path).map_err(|e| IfcError::MappingTableRead {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let file: MappingTableFile =
            toml::from_str(&text).map_err(|e| IfcError::MappingTableRead {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        let defaults = Self::default();
        let table = Self {
            classes: file.classes.unwrap_or(defaults.classes),
            aliases: file
                .aliases
                .map(|a| {
                    a.into_iter()
                        .map(|(k, v)| (normalize_label(&k), v))
                        .collect()
                })
                .unwrap_or(defaults.aliases),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), IfcError> {
        let known: Vec<&str> = IFC4_BUILDING_ELEMENT_CLASSES.to_vec();
        for class in self.classes.iter().chain(self.aliases.values()) {
            if !known.contains(&class.as_str()) {
                return Err(IfcError::InvalidMappingTable {
                    message: format!("{class:?} is not a known IFC4 building element class"),
                });
            }
        }
        Ok(())
    }
}

/// Map a label to an IFC class: aliases first, then the longest suffix match
/// against the class names (minus their "Ifc" prefix), else the proxy class.
pub fn map_label_to_class(label_name: &str, table: &MappingTable) -> (String, bool) {
    let normalized = normalize_label(label_name);
    if let Some(class) = table.aliases.get(&normalized) {
        return (class.clone(), class == PROXY_CLASS);
    }
    let mut best: Option<&str> = None;
    for class in &table.classes {
        let stem = normalize_label(class.strip_prefix("Ifc").unwrap_or(class));
        if stem.is_empty() || class == PROXY_CLASS {
            continue;
        }
        if normalized.ends_with(&stem)
            && best.is_none_or(|b| {
                stem.len() > normalize_label(b.strip_prefix("Ifc").unwrap_or(b)).len()
            }) {
                best = Some(class);
            }
    }
    match best {
        Some(class) => (class.to_string(), false),
        None => (PROXY_CLASS.to_string(), true),
    }
}

/// Per-channel arithmetic mean of the vertex colors, scaled to [0, 1].
pub fn average_color(mesh: &TriangleMesh, segment_name: &str) -> Result<[f64; 3], IfcError> {
    let colors = mesh
        .vertex_colors
        .as_ref()
        .filter(|c| !c.is_empty())
        .ok_or_else(|| IfcError::MissingColors {
            segment: segment_name.to_string(),
        })?;
    let mut sums = [0.0f64; 3];
    for c in colors {
        for ch in 0..3 {
            sums[ch] += c[ch] as f64;
        }
    }
    let n = colors.len() as f64;
    Ok([
        sums[0] / n / 255.0,
        sums[1] / n / 255.0,
        sums[2] / n / 255.0,
    ])
}

/// Give every mesh vertex the color of its nearest segment point
/// (Euclidean; ties go to the lowest point index).
pub fn transfer_colors(segment: &Segment, mesh: &TriangleMesh) -> TriangleMesh {
    let positions: Vec<crate::Point> = segment.points.iter().map(|p| p.position).collect();
    let tree = KdTree::build(&positions);
    let colors = mesh
        .vertices
        .iter()
        .map(|v| {
            let idx = tree.nearest(v).expect("segment is non-empty");
            segment.points[idx as usize].color
        })
        .collect();
    let mut out = mesh.clone();
    out.vertex_colors = Some(colors);
    out
}

/// A class-mapped mesh segment ready for serialization.
#[derive(Debug, Clone)]
pub struct IfcObject {
    pub global_id: GlobalId,
    pub ifc_class: String,
    pub name: String,
    pub mesh: TriangleMesh,
    /// Surface style color, each channel in [0, 1].
    pub style_color: [f64; 3],
    pub is_proxy: bool,
    /// Values surfaced in the Pset_SRBIM property set.
    pub source_point_count: usize,
    pub alpha: f64,
}

/// Build an IFC object from a colored mesh with a fresh GlobalId.
pub fn build_ifc_object(
    mesh: TriangleMesh,
    ifc_class: &str,
    label_name: &str,
    source_point_count: usize,
    alpha: f64,
    ids: &mut GlobalIdGen,
) -> Result<IfcObject, IfcError> {
    if mesh.faces.is_empty() || mesh.vertices.is_empty() {
        return Err(IfcError::EmptyGeometry {
            label: label_name.to_string(),
        });
    }
    let style_color = average_color(&mesh, label_name)?;
    Ok(IfcObject {
        global_id: ids.next_id(),
        ifc_class: ifc_class.to_string(),
        name: label_name.to_string(),
        mesh,
        style_color,
        is_proxy: ifc_class == PROXY_CLASS,
        source_point_count,
        alpha,
    })
}

/// The single Project → Site → Building → Storey chain with its objects.
#[derive(Debug, Clone)]
pub struct IfcProject {
    pub name: String,
    pub project_id: GlobalId,
    pub site_id: GlobalId,
    pub building_id: GlobalId,
    pub storey_id: GlobalId,
    pub objects: Vec<IfcObject>,
}

/// Assemble the spatial hierarchy; all objects are contained in the one storey.
pub fn assemble_project(
    objects: Vec<IfcObject>,
    project_name: &str,
    ids: &mut GlobalIdGen,
) -> Result<IfcProject, IfcError> {
    if objects.is_empty() {
        return Err(IfcError::EmptyProject);
    }
    let project = IfcProject {
        name: project_name.to_string(),
        project_id: ids.next_id(),
        site_id: ids.next_id(),
        building_id: ids.next_id(),
        storey_id: ids.next_id(),
        objects,
    };
    let mut seen = std::collections::BTreeSet::new();
    for id in project.all_global_ids() {
        if !seen.insert(id.clone()) {
            return Err(IfcError::DuplicateGlobalId {
                id: id.as_str().to_string(),
            });
        }
    }
    Ok(project)
}

impl IfcProject {
    pub fn all_global_ids(&self) -> Vec<&GlobalId> {
        let mut ids = vec![
            &self.project_id,
            &self.site_id,
            &self.building_id,
            &self.storey_id,
        ];
        ids.extend(self.objects.iter().map(|o| &o.global_id));
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::LabeledPoint;
    use crate::{Point, Rgb};

    fn colored_mesh(colors: Vec<Rgb>) -> TriangleMesh {
        let n = colors.len();
        TriangleMesh {
            vertices: (0..n).map(|i| Point::new(i as f64, 0.0, 0.0)).collect(),
            faces: if n >= 3 { vec![[0, 1, 2]] } else { vec![] },
            densities: None,
            vertex_colors: Some(colors),
        }
    }

    #[test]
    fn suffix_rule_basic() {
        let table = MappingTable::default();
        assert_eq!(
            map_label_to_class("wall", &table),
            ("IfcWall".to_string(), false)
        );
        assert_eq!(
            map_label_to_class("vegetation", &table),
            (PROXY_CLASS.to_string(), true)
        );
    }

    #[test]
    fn suffix_rule_longest_match_wins() {
        let table = MappingTable::default();
        assert_eq!(
            map_label_to_class("curtain_wall", &table),
            ("IfcCurtainWall".to_string(), false)
        );
    }

    #[test]
    fn mapping_is_case_and_separator_insensitive() {
        let table = MappingTable::default();
        for label in ["Wall", "wall", "WALL", "exterior-wall"] {
            assert_eq!(
                map_label_to_class(label, &table),
                ("IfcWall".to_string(), false),
                "label {label:?}"
            );
        }
    }

    #[test]
    fn aliases_beat_suffix_rule() {
        let table = MappingTable::default();
        assert_eq!(
            map_label_to_class("ceiling", &table),
            ("IfcCovering".to_string(), false)
        );
        assert_eq!(
            map_label_to_class("floor", &table),
            ("IfcSlab".to_string(), false)
        );
    }

    #[test]
    fn average_color_of_primaries() {
        let mesh = colored_mesh(vec![[255, 0, 0], [0, 255, 0], [0, 0, 255]]);
        let avg = average_color(&mesh, "t").unwrap();
        for channel in avg {
            assert!((channel - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn average_color_constant_is_fixed_point() {
        let mesh = colored_mesh(vec![[10, 20, 30]; 17]);
        let avg = average_color(&mesh, "t").unwrap();
        assert_eq!(avg, [10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0]);
    }

    #[test]
    fn average_color_matches_accumulation_oracle() {
        let mut s = 5u64;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 33) as u8
        };
        let colors: Vec<Rgb> = (0..10_000).map(|_| [next(), next(), next()]).collect();
        let mesh = colored_mesh(colors.clone());
        let avg = average_color(&mesh, "t").unwrap();
        for ch in 0..3 {
            let mut acc = 0.0f64;
            for c in &colors {
                acc += c[ch] as f64;
            }
            let expected = acc / colors.len() as f64 / 255.0;
            assert!((avg[ch] - expected).abs() < 1e-9);
        }
    }

    fn segment_with(points: Vec<(f64, Rgb)>) -> Segment {
        Segment {
            label_id: 0,
            label_name: "t".into(),
            points: points
                .into_iter()
                .map(|(x, color)| LabeledPoint {
                    position: Point::new(x, 0.0, 0.0),
                    color,
                    label: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn transfer_colors_single_candidate() {
        let segment = segment_with(vec![(0.0, [255, 0, 0])]);
        let mesh = colored_mesh(vec![[0, 0, 0]; 5]);
        let out = transfer_colors(&segment, &mesh);
        assert!(out.vertex_colors.unwrap().iter().all(|&c| c == [255, 0, 0]));
    }

    #[test]
    fn transfer_colors_strict_nearest() {
        let segment = segment_with(vec![(0.0, [255, 0, 0]), (10.0, [0, 0, 255])]);
        let mesh = TriangleMesh {
            vertices: vec![Point::new(1.0, 0.0, 0.0), Point::new(9.0, 0.0, 0.0)],
            faces: vec![],
            densities: None,
            vertex_colors: None,
        };
        let out = transfer_colors(&segment, &mesh);
        let colors = out.vertex_colors.unwrap();
        assert_eq!(colors[0], [255, 0, 0]);
        assert_eq!(colors[1], [0, 0, 255]);
    }

    #[test]
    fn transfer_colors_matches_brute_force() {
        let mut s = 77u64;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let segment = Segment {
            label_id: 0,
            label_name: "t".into(),
            points: (0..1000)
                .map(|i| LabeledPoint {
                    position: Point::new(next(), next(), next()),
                    color: [(i % 256) as u8, ((i * 7) % 256) as u8, ((i * 13) % 256) as u8],
                    label: 0,
                })
                .collect(),
        };
        let mesh = TriangleMesh {
            vertices: (0..500).map(|_| Point::new(next(), next(), next())).collect(),
            faces: vec![],
            densities: None,
            vertex_colors: None,
        };
        let out = transfer_colors(&segment, &mesh);
        let colors = out.vertex_colors.unwrap();
        for (v, got) in mesh.vertices.iter().zip(&colors) {
            let brute = segment
                .points
                .iter()
                .enumerate()
                .min_by(|(ia, a), (ib, b)| {
                    (a.position - v)
                        .norm_squared()
                        .partial_cmp(&(b.position - v).norm_squared())
                        .unwrap()
                        .then(ia.cmp(ib))
                })
                .unwrap()
                .1
                .color;
            assert_eq!(*got, brute);
        }
    }

    #[test]
    fn global_id_is_22_chars_and_valid() {
        let mut ids = GlobalIdGen::seeded(1);
        for _ in 0..100 {
            let id = ids.next_id();
            assert!(GlobalId::is_valid(id.as_str()), "bad id {id}");
        }
        assert_eq!(GlobalId::from_u128(0).as_str(), "0000000000000000000000");
        assert_eq!(
            GlobalId::from_u128(u128::MAX).as_str(),
            "3$$$$$$$$$$$$$$$$$$$$$"
        );
    }

    #[test]
    fn build_object_assigns_fresh_ids() {
        let mut ids = GlobalIdGen::seeded(3);
        let mesh = colored_mesh(vec![[1, 2, 3], [4, 5, 6], [7, 8, 9]]);
        let a = build_ifc_object(mesh.clone(), "IfcWall", "wall", 10, 0.05, &mut ids).unwrap();
        let b = build_ifc_object(mesh, "IfcWall", "wall", 10, 0.05, &mut ids).unwrap();
        assert!(!a.is_proxy);
        assert_ne!(a.global_id, b.global_id);
    }

    #[test]
    fn build_object_rejects_empty_geometry() {
        let mut ids = GlobalIdGen::seeded(3);
        let mesh = colored_mesh(vec![[1, 2, 3]]);
        assert!(matches!(
            build_ifc_object(mesh, "IfcWall", "wall", 1, 0.05, &mut ids),
            Err(IfcError::EmptyGeometry { .. })
        ));
    }

    #[test]
    fn assemble_counts_global_ids() {
        let mut ids = GlobalIdGen::seeded(9);
        let mesh = colored_mesh(vec![[1, 2, 3], [4, 5, 6], [7, 8, 9]]);
        let objects: Vec<IfcObject> = (0..3)
            .map(|i| {
                build_ifc_object(mesh.clone(), "IfcWall", &format!("wall_{i}"), 5, 0.05, &mut ids)
                    .unwrap()
            })
            .collect();
        let project = assemble_project(objects, "test", &mut ids).unwrap();
        let all = project.all_global_ids();
        assert_eq!(all.len(), 7);
        let unique: std::collections::BTreeSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 7);
    }

    #[test]
    fn assemble_rejects_duplicate_ids() {
        let mut ids = GlobalIdGen::seeded(9);
        let mesh = colored_mesh(vec![[1, 2, 3], [4, 5, 6], [7, 8, 9]]);
        let a = build_ifc_object(mesh.clone(), "IfcWall", "wall", 5, 0.05, &mut ids).unwrap();
        let mut b = build_ifc_object(mesh, "IfcWall", "wall", 5, 0.05, &mut ids).unwrap();
        b.global_id = a.global_id.clone();
        assert!(matches!(
            assemble_project(vec![a, b], "test", &mut ids),
            Err(IfcError::DuplicateGlobalId { .. })
        ));
    }

    #[test]
    fn assemble_rejects_empty_list() {
        let mut ids = GlobalIdGen::seeded(9);
        assert!(matches!(
            assemble_project(vec![], "test", &mut ids),
            Err(IfcError::EmptyProject)
        ));
    }
}
