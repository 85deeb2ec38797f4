//! Serialize an [`IfcProject`] to an ISO 10303-21 IFC4 file.
//!
//! Entity ids follow a fixed topological emission order so the same project
//! always serializes to the same bytes (given an injected timestamp).

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ifc::{GlobalId, IfcProject};

use super::{encode_string, format_real, StepEntity, StepValue};

#[derive(Debug, Error)]
pub enum StepWriteError {
    #[error("project invariant violated: {message}")]
    InvalidProject { message: String },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Writer knobs; `timestamp` overrides the FILE_NAME clock for reproducible files.
#[derive(Debug, Clone, Default)]
pub struct WriteOptions {
    pub timestamp: Option<String>,
}

use StepValue::{Enum, Integer, List, Real, Ref, Str, Typed, Unset};

fn gid(id: &GlobalId) -> StepValue {
    Str(id.as_str().to_string())
}

/// Attribute count and PredefinedType position for an IFC4 element class.
fn element_layout(class: &str) -> (usize, Option<usize>) {
    match class {
        // doors and windows carry overall size attributes before the type
        "IfcDoor" | "IfcWindow" => (13, Some(10)),
        _ => (9, Some(8)),
    }
}

fn validate(project: &IfcProject) -> Result<(), StepWriteError> {
    if project.objects.is_empty() {
        return Err(StepWriteError::InvalidProject {
            message: "project has no objects".into(),
        });
    }
    let mut seen = BTreeSet::new();
    for id in project.all_global_ids() {
        if !GlobalId::is_valid(id.as_str()) {
            return Err(StepWriteError::InvalidProject {
                message: format!("malformed GlobalId {id}"),
            });
        }
        if !seen.insert(id.as_str().to_string()) {
            return Err(StepWriteError::InvalidProject {
                message: format!("duplicate GlobalId {id}"),
            });
        }
    }
    for object in &project.objects {
        if object.mesh.faces.is_empty() {
            return Err(StepWriteError::InvalidProject {
                message: format!("object {:?} has no faces", object.name),
            });
        }
        object
            .mesh
            .validate()
            .map_err(|e| StepWriteError::InvalidProject {
                message: format!("object {:?}: {e}", object.name),
            })?;
        for &c in &object.style_color {
            if !(0.0..=1.0).contains(&c) {
                return Err(StepWriteError::InvalidProject {
                    message: format!("object {:?}: style color channel {c} outside [0,1]", object.name),
                });
            }
        }
    }
    Ok(())
}

/// GlobalIds for relationship and property-set entities, derived
/// deterministically from the project id so serialization is reproducible.
struct DerivedIds {
    gen: crate::ifc::GlobalIdGen,
}

impl DerivedIds {
    fn new(project: &IfcProject) -> Self {
        let mut seed = [0u8; 32];
        let bytes = project.project_id.as_str().as_bytes();
        seed[..bytes.len().min(32)].copy_from_slice(&bytes[..bytes.len().min(32)]);
        let rng = ChaCha8Rng::from_seed(seed);
        Self {
            gen: crate::ifc::GlobalIdGen::from_rng(rng),
        }
    }

    fn next(&mut self) -> StepValue {
        Str(self.gen.next_id().as_str().to_string())
    }
}

/// Build the DATA-section entity graph in deterministic emission order.
pub fn build_entities(project: &IfcProject) -> Vec<StepEntity> {
    let mut entities: Vec<StepEntity> = Vec::new();
    let mut next_id = 1u64;
    let mut push = |entities: &mut Vec<StepEntity>, type_name: &str, attributes: Vec<StepValue>| {
        let id = next_id;
        next_id += 1;
        entities.push(StepEntity {
            id,
            type_name: type_name.to_string(),
            attributes,
        });
        id
    };
    let mut derived = DerivedIds::new(project);

    let metre = push(
        &mut entities,
        "IFCSIUNIT",
        vec![
            StepValue::Omitted,
            Enum("LENGTHUNIT".into()),
            Unset,
            Enum("METRE".into()),
        ],
    );
    let units = push(
        &mut entities,
        "IFCUNITASSIGNMENT",
        vec![List(vec![Ref(metre)])],
    );
    let origin = push(
        &mut entities,
        "IFCCARTESIANPOINT",
        vec![List(vec![Real(0.0), Real(0.0), Real(0.0)])],
    );
    let axis = push(
        &mut entities,
        "IFCDIRECTION",
        vec![List(vec![Real(0.0), Real(0.0), Real(1.0)])],
    );
    let ref_direction = push(
        &mut entities,
        "IFCDIRECTION",
        vec![List(vec![Real(1.0), Real(0.0), Real(0.0)])],
    );
    let world = push(
        &mut entities,
        "IFCAXIS2PLACEMENT3D",
        vec![Ref(origin), Ref(axis), Ref(ref_direction)],
    );
    let context = push(
        &mut entities,
        "IFCGEOMETRICREPRESENTATIONCONTEXT",
        vec![
            Unset,
            Str("Model".into()),
            Integer(3),
            Real(1e-5),
            Ref(world),
            Unset,
        ],
    );
    let project_entity = push(
        &mut entities,
        "IFCPROJECT",
        vec![
            gid(&project.project_id),
            Unset,
            Str(project.name.clone()),
            Unset,
            Unset,
            Unset,
            Unset,
            List(vec![Ref(context)]),
            Ref(units),
        ],
    );

    let site_placement = push(&mut entities, "IFCLOCALPLACEMENT", vec![Unset, Ref(world)]);
    let site = push(
        &mut entities,
        "IFCSITE",
        vec![
            gid(&project.site_id),
            Unset,
            Str("Site".into()),
            Unset,
            Unset,
            Ref(site_placement),
            Unset,
            Unset,
            Enum("ELEMENT".into()),
            Unset,
            Unset,
            Unset,
            Unset,
            Unset,
        ],
    );
    let building_placement = push(
        &mut entities,
        "IFCLOCALPLACEMENT",
        vec![Ref(site_placement), Ref(world)],
    );
    let building = push(
        &mut entities,
        "IFCBUILDING",
        vec![
            gid(&project.building_id),
            Unset,
            Str("Building".into()),
            Unset,
            Unset,
            Ref(building_placement),
            Unset,
            Unset,
            Enum("ELEMENT".into()),
            Unset,
            Unset,
            Unset,
        ],
    );
    let storey_placement = push(
        &mut entities,
        "IFCLOCALPLACEMENT",
        vec![Ref(building_placement), Ref(world)],
    );
    let storey = push(
        &mut entities,
        "IFCBUILDINGSTOREY",
        vec![
            gid(&project.storey_id),
            Unset,
            Str("Storey".into()),
            Unset,
            Unset,
            Ref(storey_placement),
            Unset,
            Unset,
            Enum("ELEMENT".into()),
            Real(0.0),
        ],
    );

    let mut element_refs = Vec::new();
    for object in &project.objects {
        let coordinates = List(
            object
                .mesh
                .vertices
                .iter()
                .map(|v| List(vec![Real(v.x), Real(v.y), Real(v.z)]))
                .collect(),
        );
        let point_list = push(
            &mut entities,
            "IFCCARTESIANPOINTLIST3D",
            vec![coordinates],
        );
        // Part 21 face indices are 1-based
        let coord_index = List(
            object
                .mesh
                .faces
                .iter()
                .map(|f| {
                    List(vec![
                        Integer(f[0] as i64 + 1),
                        Integer(f[1] as i64 + 1),
                        Integer(f[2] as i64 + 1),
                    ])
                })
                .collect(),
        );
        let face_set = push(
            &mut entities,
            "IFCTRIANGULATEDFACESET",
            vec![Ref(point_list), Unset, Unset, coord_index, Unset],
        );
        let color = push(
            &mut entities,
            "IFCCOLOURRGB",
            vec![
                Unset,
                Real(object.style_color[0]),
                Real(object.style_color[1]),
                Real(object.style_color[2]),
            ],
        );
        let rendering = push(
            &mut entities,
            "IFCSURFACESTYLERENDERING",
            vec![
                Ref(color),
                Unset,
                Unset,
                Unset,
                Unset,
                Unset,
                Unset,
                Unset,
                Enum("NOTDEFINED".into()),
            ],
        );
        let surface_style = push(
            &mut entities,
            "IFCSURFACESTYLE",
            vec![
                Str(object.name.clone()),
                Enum("BOTH".into()),
                List(vec![Ref(rendering)]),
            ],
        );
        push(
            &mut entities,
            "IFCSTYLEDITEM",
            vec![Ref(face_set), List(vec![Ref(surface_style)]), Unset],
        );
        let shape = push(
            &mut entities,
            "IFCSHAPEREPRESENTATION",
            vec![
                Ref(context),
                Str("Body".into()),
                Str("Tessellation".into()),
                List(vec![Ref(face_set)]),
            ],
        );
        let product_shape = push(
            &mut entities,
            "IFCPRODUCTDEFINITIONSHAPE",
            vec![Unset, Unset, List(vec![Ref(shape)])],
        );
        let placement = push(
            &mut entities,
            "IFCLOCALPLACEMENT",
            vec![Ref(storey_placement), Ref(world)],
        );

        let (attr_count, pt_index) = element_layout(&object.ifc_class);
        let mut attrs = vec![Unset; attr_count];
        attrs[0] = gid(&object.global_id);
        attrs[2] = Str(object.name.clone());
        attrs[5] = Ref(placement);
        attrs[6] = Ref(product_shape);
        if let Some(pt) = pt_index {
            attrs[pt] = Enum("NOTDEFINED".into());
        }
        let element = push(
            &mut entities,
            &object.ifc_class.to_uppercase(),
            attrs,
        );
        element_refs.push(Ref(element));

        let source_label = push(
            &mut entities,
            "IFCPROPERTYSINGLEVALUE",
            vec![
                Str("SourceLabel".into()),
                Unset,
                Typed("IFCLABEL".into(), Box::new(Str(object.name.clone()))),
                Unset,
            ],
        );
        let point_count = push(
            &mut entities,
            "IFCPROPERTYSINGLEVALUE",
            vec![
                Str("PointCount".into()),
                Unset,
                Typed(
                    "IFCINTEGER".into(),
                    Box::new(Integer(object.source_point_count as i64)),
                ),
                Unset,
            ],
        );
        let alpha = push(
            &mut entities,
            "IFCPROPERTYSINGLEVALUE",
            vec![
                Str("Alpha".into()),
                Unset,
                Typed("IFCREAL".into(), Box::new(Real(object.alpha))),
                Unset,
            ],
        );
        let pset = push(
            &mut entities,
            "IFCPROPERTYSET",
            vec![
                derived.next(),
                Unset,
                Str("Pset_SRBIM".into()),
                Unset,
                List(vec![Ref(source_label), Ref(point_count), Ref(alpha)]),
            ],
        );
        push(
            &mut entities,
            "IFCRELDEFINESBYPROPERTIES",
            vec![
                derived.next(),
                Unset,
                Unset,
                Unset,
                List(vec![Ref(element)]),
                Ref(pset),
            ],
        );
    }

    for (parent, child) in [
        (project_entity, site),
        (site, building),
        (building, storey),
    ] {
        push(
            &mut entities,
            "IFCRELAGGREGATES",
            vec![
                derived.next(),
                Unset,
                Unset,
                Unset,
                Ref(parent),
                List(vec![Ref(child)]),
            ],
        );
    }
    push(
        &mut entities,
        "IFCRELCONTAINEDINSPATIALSTRUCTURE",
        vec![
            derived.next(),
            Unset,
            Unset,
            Unset,
            List(element_refs),
            Ref(storey),
        ],
    );

    entities
}

fn serialize_value(value: &StepValue, out: &mut String) {
    match value {
        StepValue::Unset => out.push('$'),
        StepValue::Omitted => out.push('*'),
        StepValue::Integer(i) => out.push_str(&i.to_string()),
        StepValue::Real(r) => out.push_str(&format_real(*r)),
        StepValue::Str(s) => {
            out.push('\'');
            out.push_str(&encode_string(s));
            out.push('\'');
        }
        StepValue::Enum(e) => {
            out.push('.');
            out.push_str(e);
            out.push('.');
        }
        StepValue::Ref(id) => {
            out.push('#');
            out.push_str(&id.to_string());
        }
        StepValue::List(items) => {
            out.push('(');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                serialize_value(item, out);
            }
            out.push(')');
        }
        StepValue::Typed(name, inner) => {
            out.push_str(name);
            out.push('(');
            serialize_value(inner, out);
            out.push(')');
        }
    }
}

fn default_timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let days = secs / 86_400;
    let rem = secs % 86_400;
    let (h, m, s) = (rem / 3600, rem % 3600 / 60, rem % 60);
    // civil-from-days (Gregorian), days since 1970-01-01
    let z = days as i64 + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let year = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = if month <= 2 { year + 1 } else { year };
    format!("{year:04}-{month:02}-{day:02}T{h:02}:{m:02}:{s:02}")
}

/// Serialize the project to a Part 21 string.
pub fn write_step_to_string(
    project: &IfcProject,
    file_name: &str,
    options: &WriteOptions,
) -> Result<String, StepWriteError> {
    validate(project)?;
    let entities = build_entities(project);
    let timestamp = options
        .timestamp
        .clone()
        .unwrap_or_else(default_timestamp);
    let mut out = String::new();
    out.push_str("ISO-10303-21;\nHEADER;\n");
    out.push_str("FILE_DESCRIPTION((''),'2;1');\n");
    out.push_str(&format!(
        "FILE_NAME('{}','{}',(''),(''),'srbim','srbim','');\n",
        encode_string(file_name),
        encode_string(&timestamp)
    ));
    out.push_str("FILE_SCHEMA(('IFC4'));\nENDSEC;\nDATA;\n");
    for entity in &entities {
        out.push('#');
        out.push_str(&entity.id.to_string());
        out.push('=');
        out.push_str(&entity.type_name);
        out.push('(');
        for (i, attr) in entity.attributes.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            serialize_value(attr, &mut out);
        }
        out.push_str(");\n");
    }
    out.push_str("ENDSEC;\nEND-ISO-10303-21;\n");
    Ok(out)
}

/// Write the project as an IFC4 Part 21 file.
///
/// The project is validated first; nothing is written on an invariant
/// violation.
pub fn write_step(
    project: &IfcProject,
    path: &Path,
    options: &WriteOptions,
) -> Result<(), StepWriteError> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_default();
    let content = write_step_to_string(project, &file_name, options)?;
    std::fs::write(path, content).map_err(|source| StepWriteError::Io {
        path: path.display().to_string(),
        source,
    })
}
