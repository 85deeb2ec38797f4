//! ISO 10303-21 (STEP Part 21) serialization of IFC4 projects, plus a
//! minimal reader for round-trip checks.

mod reader;
mod writer;

pub use reader::{read_step, read_step_bytes, StepReadError};
pub use writer::{build_entities, write_step, write_step_to_string, StepWriteError, WriteOptions};

/// One `#id = TYPE(...)` record from the DATA section.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEntity {
    pub id: u64,
    pub type_name: String,
    pub attributes: Vec<StepValue>,
}

/// A typed attribute value of the Part 21 grammar.
#[derive(Debug, Clone, PartialEq)]
pub enum StepValue {
    /// `$`
    Unset,
    /// `*` (value derived from the schema)
    Omitted,
    Integer(i64),
    Real(f64),
    /// Decoded string (no quote doubling, no \X2\ escapes).
    Str(String),
    /// Enumeration literal without the enclosing dots.
    Enum(String),
    /// `#id` reference.
    Ref(u64),
    List(Vec<StepValue>),
    /// Select-type wrapper, e.g. `IFCLABEL('wall')`.
    Typed(String, Box<StepValue>),
}

impl StepValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            StepValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[StepValue]> {
        match self {
            StepValue::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            StepValue::Real(r) => Some(*r),
            StepValue::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            StepValue::Integer(i) => Some(*i),
            _ => None,
        }
    }

    /// All entity references inside this value, recursively.
    pub fn collect_refs(&self, out: &mut Vec<u64>) {
        match self {
            StepValue::Ref(id) => out.push(*id),
            StepValue::List(items) => {
                for item in items {
                    item.collect_refs(out);
                }
            }
            StepValue::Typed(_, inner) => inner.collect_refs(out),
            _ => {}
        }
    }
}

/// Format a real with round-trip precision and a mandatory decimal point.
pub(crate) fn format_real(value: f64) -> String {
    let mut s = format!("{value}");
    if let Some(epos) = s.find(['e', 'E']) {
        if !s[..epos].contains('.') {
            s.insert_str(epos, ".0");
        }
        // Part 21 exponent marker is E
        s = s.replace('e', "E");
    } else if !s.contains('.') {
        s.push_str(".0");
    }
    s
}

/// Encode a string per Part 21: quote doubling, backslash doubling, and \X2\
/// escapes for anything outside the printable ASCII range.
pub(crate) fn encode_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    let mut in_x2 = false;
    for c in s.chars() {
        let basic = (' '..='~').contains(&c);
        if basic && in_x2 {
            out.push_str("\\X0\\");
            in_x2 = false;
        }
        match c {
            '\'' => out.push_str("''"),
            '\\' => out.push_str("\\\\"),
            c if basic => out.push(c),
            c => {
                if !in_x2 {
                    out.push_str("\\X2\\");
                    in_x2 = true;
                }
                // BMP code points only; anything above is split into the
                // replacement character to stay within \X2\
                let code = c as u32;
                if code <= 0xFFFF {
                    out.push_str(&format!("{code:04X}"));
                } else {
                    out.push_str("FFFD");
                }
            }
        }
    }
    if in_x2 {
        out.push_str("\\X0\\");
    }
    out
}
