//! PLY reading and writing (ascii 1.0 and binary_little_endian 1.0).
//!
//! The reader accepts point clouds with `x y z` positions (32- or 64-bit float),
//! `red green blue` colors (uchar), and an integer label property. Header
//! comments of the form `comment label <id> <name>` populate the scene's class
//! name dictionary.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::mesh::TriangleMesh;
use crate::pointcloud::{class_name_comments, LabeledPoint, LabeledScene};
use crate::Point;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("malformed PLY header at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("PLY file is missing required vertex property {property:?}")]
    MissingProperty { property: String },
    #[error("vertex property {property:?} has unsupported type {type_name:?}")]
    PropertyType { property: String, type_name: String },
    #[error("element {element:?} truncated: header declares {expected} rows, file holds {got}")]
    Truncated {
        element: String,
        expected: usize,
        got: usize,
    },
    #[error("unsupported PLY format {format:?} (expected ascii or binary_little_endian)")]
    UnsupportedFormat { format: String },
    #[error("cannot skip element {element:?} with list properties before the vertex element")]
    UnskippableElement { element: String },
    #[error("ASCII vertex data at line {line}: {message}")]
    Ascii { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode_le(self, bytes: &[u8]) -> f64 {
        match self {
            Self::I8 => bytes[0] as i8 as f64,
            Self::U8 => bytes[0] as f64,
            Self::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Self::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Self::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Self::F32 | Self::F64)
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    class_names: BTreeMap<u32, String>,
    header_lines: usize,
}

fn parse_header<R: BufRead>(reader: &mut R) -> Result<Header, PlyError> {
    let mut line = String::new();
    let mut line_no = 0usize;
    let read_line = |reader: &mut R, line: &mut String| -> Result<usize, PlyError> {
        line.clear();
        let n = reader.read_line(line).map_err(|source| PlyError::Io {
            path: String::new(),
            source,
        })?;
        Ok(n)
    };

    line_no += 1;
    read_line(reader, &mut line)?;
    if line.trim_end() != "ply" {
        return Err(PlyError::Parse {
            line: 1,
            message: "file does not start with \"ply\"".into(),
        });
    }

    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut class_names = BTreeMap::new();

    loop {
        line_no += 1;
        if read_line(reader, &mut line)? == 0 {
            return Err(PlyError::Parse {
                line: line_no,
                message: "unexpected end of file before end_header".into(),
            });
        }
        let trimmed = line.trim_end();
        let mut tokens = trimmed.split_whitespace();
        match tokens.next() {
            Some("format") => {
                let kind = tokens.next().unwrap_or("");
                let version = tokens.next().unwrap_or("");
                if version != "1.0" {
                    return Err(PlyError::Parse {
                        line: line_no,
                        message: format!("unsupported PLY version {version:?}"),
                    });
                }
                format = Some(match kind {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    other => {
                        return Err(PlyError::UnsupportedFormat {
                            format: other.to_string(),
                        })
                    }
                });
            }
            Some("comment") => {
                // "comment label <id> <name>" carries the class dictionary
                let rest: Vec<&str> = tokens.collect();
                if rest.len() >= 3 && rest[0] == "label" {
                    if let Ok(id) = rest[1].parse::<u32>() {
                        class_names.insert(id, rest[2..].join(" "));
                    }
                }
            }
            Some("obj_info") => {}
            Some("element") => {
                let name = tokens.next().ok_or_else(|| PlyError::Parse {
                    line: line_no,
                    message: "element line missing name".into(),
                })?;
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| PlyError::Parse {
                        line: line_no,
                        message: "element line missing or invalid count".into(),
                    })?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements.last_mut().ok_or_else(|| PlyError::Parse {
                    line: line_no,
                    message: "property before any element".into(),
                })?;
                let first = tokens.next().unwrap_or("");
                if first == "list" {
                    let count_name = tokens.next().unwrap_or("");
                    let item_name = tokens.next().unwrap_or("");
                    let name = tokens.next().ok_or_else(|| PlyError::Parse {
                        line: line_no,
                        message: "list property missing name".into(),
                    })?;
                    let count =
                        ScalarType::from_name(count_name).ok_or_else(|| PlyError::Parse {
                            line: line_no,
                            message: format!("unknown list count type {count_name:?}"),
                        })?;
                    let item = ScalarType::from_name(item_name).ok_or_else(|| PlyError::Parse {
                        line: line_no,
                        message: format!("unknown list item type {item_name:?}"),
                    })?;
                    element.properties.push(Property {
                        name: name.to_string(),
                        kind: PropertyKind::List { count, item },
                    });
                } else {
                    let name = tokens.next().ok_or_else(|| PlyError::Parse {
                        line: line_no,
                        message: "property missing name".into(),
                    })?;
                    let scalar = ScalarType::from_name(first).ok_or_else(|| PlyError::Parse {
                        line: line_no,
                        message: format!("unknown property type {first:?}"),
                    })?;
                    element.properties.push(Property {
                        name: name.to_string(),
                        kind: PropertyKind::Scalar(scalar),
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(PlyError::Parse {
                    line: line_no,
                    message: format!("unknown header keyword {other:?}"),
                });
            }
            None => {
                return Err(PlyError::Parse {
                    line: line_no,
                    message: "blank line inside header".into(),
                });
            }
        }
    }

    let format = format.ok_or(PlyError::Parse {
        line: line_no,
        message: "header has no format line".into(),
    })?;

    Ok(Header {
        format,
        elements,
        class_names,
        header_lines: line_no,
    })
}

/// Column layout of the vertex element: indices into the property list.
struct VertexLayout {
    position: [usize; 3],
    color: [usize; 3],
    label: Option<usize>,
}

fn vertex_layout(
    element: &Element,
    label_property: Option<&str>,
) -> Result<VertexLayout, PlyError> {
    let find = |name: &str| -> Result<usize, PlyError> {
        element
            .properties
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| PlyError::MissingProperty {
                property: name.to_string(),
            })
    };
    let check_float = |idx: usize| -> Result<(), PlyError> {
        match &element.properties[idx].kind {
            PropertyKind::Scalar(ScalarType::F32 | ScalarType::F64) => Ok(()),
            _ => Err(PlyError::PropertyType {
                property: element.properties[idx].name.clone(),
                type_name: "non-float".into(),
            }),
        }
    };
    let check_u8 = |idx: usize| -> Result<(), PlyError> {
        match &element.properties[idx].kind {
            PropertyKind::Scalar(ScalarType::U8) => Ok(()),
            _ => Err(PlyError::PropertyType {
                property: element.properties[idx].name.clone(),
                type_name: "non-uchar".into(),
            }),
        }
    };

    let position = [find("x")?, find("y")?, find("z")?];
    for &i in &position {
        check_float(i)?;
    }
    let color = [find("red")?, find("green")?, find("blue")?];
    for &i in &color {
        check_u8(i)?;
    }
    let label = match label_property {
        Some(name) => {
            let idx = find(name)?;
            match &element.properties[idx].kind {
                PropertyKind::Scalar(t) if t.is_integer() => {}
                _ => {
                    return Err(PlyError::PropertyType {
                        property: name.to_string(),
                        type_name: "non-integer".into(),
                    })
                }
            }
            Some(idx)
        }
        None => None,
    };
    Ok(VertexLayout {
        position,
        color,
        label,
    })
}

fn load_scene(
    path: &Path,
    label_property: Option<&str>,
) -> Result<LabeledScene, PlyError> {
    let file = std::fs::File::open(path).map_err(|source| PlyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let header = parse_header(&mut reader)?;

    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| PlyError::MissingProperty {
            property: "vertex element".into(),
        })?;
    let layout = vertex_layout(&header.elements[vertex_pos], label_property)?;

    let points = match header.format {
        Format::Ascii => read_ascii_vertices(&mut reader, &header, vertex_pos, &layout)?,
        Format::BinaryLe => read_binary_vertices(&mut reader, &header, vertex_pos, &layout)?,
    };

    Ok(LabeledScene::new(points, header.class_names))
}

/// Load a labeled scene; the named vertex property (usually `"label"`) is required.
pub fn load_ply(path: &Path, label_property: &str) -> Result<LabeledScene, PlyError> {
    load_scene(path, Some(label_property))
}

/// Load a scene without reading any label property; every label is 0.
///
/// Meant for the sidecar path, where `merge_labels` supplies the labels.
pub fn load_ply_unlabeled(path: &Path) -> Result<LabeledScene, PlyError> {
    load_scene(path, None)
}

fn read_ascii_vertices<R: BufRead>(
    reader: &mut R,
    header: &Header,
    vertex_pos: usize,
    layout: &VertexLayout,
) -> Result<Vec<LabeledPoint>, PlyError> {
    let mut line = String::new();
    let mut line_no = header.header_lines;
    let next_row = |reader: &mut R,
                        line: &mut String,
                        line_no: &mut usize|
     -> Result<Option<Vec<String>>, PlyError> {
        loop {
            line.clear();
            *line_no += 1;
            let n = reader.read_line(line).map_err(|source| PlyError::Io {
                path: String::new(),
                source,
            })?;
            if n == 0 {
                return Ok(None);
            }
            if !line.trim().is_empty() {
                return Ok(Some(
                    line.split_whitespace().map(|t| t.to_string()).collect(),
                ));
            }
        }
    };

    // elements before vertex are skipped row by row
    for element in &header.elements[..vertex_pos] {
        for row in 0..element.count {
            if next_row(reader, &mut line, &mut line_no)?.is_none() {
                return Err(PlyError::Truncated {
                    element: element.name.clone(),
                    expected: element.count,
                    got: row,
                });
            }
        }
    }

    let element = &header.elements[vertex_pos];
    let mut points = Vec::with_capacity(element.count);
    for row in 0..element.count {
        let tokens = match next_row(reader, &mut line, &mut line_no)? {
            Some(t) => t,
            None => {
                return Err(PlyError::Truncated {
                    element: element.name.clone(),
                    expected: element.count,
                    got: row,
                })
            }
        };
        // list properties occupy a variable token span
        let mut cursor = 0usize;
        let mut values = vec![0.0f64; element.properties.len()];
        for (pi, prop) in element.properties.iter().enumerate() {
            match &prop.kind {
                PropertyKind::Scalar(ty) => {
                    let token = tokens.get(cursor).ok_or_else(|| PlyError::Ascii {
                        line: line_no,
                        message: format!("row has too few columns for {:?}", prop.name),
                    })?;
                    // go through f32 for float columns so ascii and binary
                    // files of the same data load identically
                    let parsed = match ty {
                        ScalarType::F32 => token.parse::<f32>().ok().map(f64::from),
                        _ => token.parse::<f64>().ok(),
                    };
                    values[pi] = parsed.ok_or_else(|| PlyError::Ascii {
                        line: line_no,
                        message: format!("cannot parse {token:?} for {:?}", prop.name),
                    })?;
                    cursor += 1;
                }
                PropertyKind::List { .. } => {
                    let count: usize = tokens
                        .get(cursor)
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| PlyError::Ascii {
                            line: line_no,
                            message: format!("bad list count for {:?}", prop.name),
                        })?;
                    cursor += 1 + count;
                }
            }
        }
        points.push(point_from_values(&values, layout));
    }
    Ok(points)
}

fn read_binary_vertices<R: Read>(
    reader: &mut R,
    header: &Header,
    vertex_pos: usize,
    layout: &VertexLayout,
) -> Result<Vec<LabeledPoint>, PlyError> {
    // skip preceding fixed-size elements
    for element in &header.elements[..vertex_pos] {
        let mut row_size = 0usize;
        for prop in &element.properties {
            match &prop.kind {
                PropertyKind::Scalar(t) => row_size += t.size(),
                PropertyKind::List { .. } => {
                    return Err(PlyError::UnskippableElement {
                        element: element.name.clone(),
                    })
                }
            }
        }
        let mut sink = vec![0u8; row_size];
        for row in 0..element.count {
            if reader.read_exact(&mut sink).is_err() {
                return Err(PlyError::Truncated {
                    element: element.name.clone(),
                    expected: element.count,
                    got: row,
                });
            }
        }
    }

    let element = &header.elements[vertex_pos];
    let has_lists = element
        .properties
        .iter()
        .any(|p| matches!(p.kind, PropertyKind::List { .. }));

    let mut points = Vec::with_capacity(element.count);
    let mut values = vec![0.0f64; element.properties.len()];
    if has_lists {
        // variable-size rows: walk property by property
        for row in 0..element.count {
            for (pi, prop) in element.properties.iter().enumerate() {
                match &prop.kind {
                    PropertyKind::Scalar(t) => {
                        let mut buf = [0u8; 8];
                        if reader.read_exact(&mut buf[..t.size()]).is_err() {
                            return Err(PlyError::Truncated {
                                element: element.name.clone(),
                                expected: element.count,
                                got: row,
                            });
                        }
                        values[pi] = t.decode_le(&buf);
                    }
                    PropertyKind::List { count, item } => {
                        let mut buf = [0u8; 8];
                        if reader.read_exact(&mut buf[..count.size()]).is_err() {
                            return Err(PlyError::Truncated {
                                element: element.name.clone(),
                                expected: element.count,
                                got: row,
                            });
                        }
                        let n = count.decode_le(&buf) as usize;
                        let mut sink = vec![0u8; n * item.size()];
                        if reader.read_exact(&mut sink).is_err() {
                            return Err(PlyError::Truncated {
                                element: element.name.clone(),
                                expected: element.count,
                                got: row,
                            });
                        }
                    }
                }
            }
            points.push(point_from_values(&values, layout));
        }
    } else {
        let row_size: usize = element
            .properties
            .iter()
            .map(|p| match &p.kind {
                PropertyKind::Scalar(t) => t.size(),
                PropertyKind::List { .. } => unreachable!(),
            })
            .sum();
        let mut buf = vec![0u8; row_size];
        for row in 0..element.count {
            if reader.read_exact(&mut buf).is_err() {
                return Err(PlyError::Truncated {
                    element: element.name.clone(),
                    expected: element.count,
                    got: row,
                });
            }
            let mut offset = 0usize;
            for (pi, prop) in element.properties.iter().enumerate() {
                if let PropertyKind::Scalar(t) = &prop.kind {
                    values[pi] = t.decode_le(&buf[offset..]);
                    offset += t.size();
                }
            }
            points.push(point_from_values(&values, layout));
        }
    }
    Ok(points)
}

fn point_from_values(values: &[f64], layout: &VertexLayout) -> LabeledPoint {
    let clamp_u8 = |v: f64| v.clamp(0.0, 255.0) as u8;
    LabeledPoint {
        position: Point::new(
            values[layout.position[0]],
            values[layout.position[1]],
            values[layout.position[2]],
        ),
        color: [
            clamp_u8(values[layout.color[0]]),
            clamp_u8(values[layout.color[1]]),
            clamp_u8(values[layout.color[2]]),
        ],
        label: layout.label.map(|i| values[i] as u32).unwrap_or(0),
    }
}

/// Write a labeled scene as PLY (binary little-endian or ASCII).
///
/// Positions are stored as doubles, colors as uchar, labels as uint; class
/// names are preserved in `comment label` header lines.
pub fn write_scene_ply(scene: &LabeledScene, path: &Path, binary: bool) -> Result<(), PlyError> {
    let file = std::fs::File::create(path).map_err(|source| PlyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |source: std::io::Error| PlyError::Io {
        path: path.display().to_string(),
        source,
    };
    let format = if binary { "binary_little_endian" } else { "ascii" };
    write!(
        w,
        "ply\nformat {format} 1.0\n{}element vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         property uint label\nend_header\n",
        class_name_comments(&scene.class_names),
        scene.points.len()
    )
    .map_err(io_err)?;
    for p in &scene.points {
        if binary {
            for c in 0..3 {
                w.write_all(&p.position[c].to_le_bytes()).map_err(io_err)?;
            }
            w.write_all(&p.color).map_err(io_err)?;
            w.write_all(&p.label.to_le_bytes()).map_err(io_err)?;
        } else {
            writeln!(
                w,
                "{} {} {} {} {} {} {}",
                p.position.x, p.position.y, p.position.z, p.color[0], p.color[1], p.color[2],
                p.label
            )
            .map_err(io_err)?;
        }
    }
    Ok(())
}

/// Write a triangle mesh as binary little-endian PLY (positions, optional
/// colors, faces). Used for `--dump-intermediate` debug exports.
pub fn write_mesh_ply(mesh: &TriangleMesh, path: &Path) -> Result<(), PlyError> {
    let file = std::fs::File::create(path).map_err(|source| PlyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |source: std::io::Error| PlyError::Io {
        path: path.display().to_string(),
        source,
    };
    let color_props = if mesh.vertex_colors.is_some() {
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
    } else {
        ""
    };
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n{color_props}\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    )
    .map_err(io_err)?;
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in 0..3 {
            w.write_all(&v[c].to_le_bytes()).map_err(io_err)?;
        }
        if let Some(colors) = &mesh.vertex_colors {
            w.write_all(&colors[i]).map_err(io_err)?;
        }
    }
    for face in &mesh.faces {
        w.write_all(&[3u8]).map_err(io_err)?;
        for &idx in face {
            w.write_all(&(idx as i32).to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}
