//! Minimal ISO 10303-21 reader: tokenizes and parses the Part 21 grammar into
//! raw entities and checks reference closure. No schema validation.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use super::{StepEntity, StepValue};

#[derive(Debug, Error)]
pub enum StepReadError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("dangling reference: #{id} is used but never defined")]
    DanglingReference { id: u64 },
    #[error("duplicate entity id #{id}")]
    DuplicateId { id: u64 },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

struct Lexer<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_ws(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            // block comments
            if self.pos + 1 < self.bytes.len()
                && self.bytes[self.pos] == b'/'
                && self.bytes[self.pos + 1] == b'*'
            {
                self.pos += 2;
                while self.pos + 1 < self.bytes.len()
                    && !(self.bytes[self.pos] == b'*' && self.bytes[self.pos + 1] == b'/')
                {
                    self.pos += 1;
                }
                self.pos = (self.pos + 2).min(self.bytes.len());
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn error(&self, expected: &str) -> StepReadError {
        StepReadError::Syntax {
            offset: self.pos,
            expected: expected.to_string(),
        }
    }

    fn expect_byte(&mut self, byte: u8, expected: &str) -> Result<(), StepReadError> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    /// Consume a keyword token like `HEADER` or `END-ISO-10303-21`.
    fn keyword(&mut self) -> Result<String, StepReadError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(self.error("a keyword"));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn integer(&mut self) -> Result<u64, StepReadError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.error("an integer"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| self.error("an integer in range"))
    }

    /// Parse a quoted string with '' doubling and \X2\ escapes.
    fn string(&mut self) -> Result<String, StepReadError> {
        self.expect_byte(b'\'', "a string literal")?;
        let mut raw = Vec::new();
        loop {
            match self.bytes.get(self.pos) {
                None => return Err(self.error("closing quote")),
                Some(b'\'') => {
                    if self.bytes.get(self.pos + 1) == Some(&b'\'') {
                        raw.push(b'\'');
                        self.pos += 2;
                    } else {
                        self.pos += 1;
                        break;
                    }
                }
                Some(&b) => {
                    raw.push(b);
                    self.pos += 1;
                }
            }
        }
        decode_string(&raw).map_err(|message| StepReadError::Syntax {
            offset: self.pos,
            expected: message,
        })
    }

    fn number(&mut self) -> Result<StepValue, StepReadError> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.bytes.get(self.pos), Some(b'+') | Some(b'-')) {
            self.pos += 1;
        }
        let mut is_real = false;
        while let Some(&b) = self.bytes.get(self.pos) {
            match b {
                b'0'..=b'9' => self.pos += 1,
                b'.' | b'e' | b'E' => {
                    is_real = true;
                    self.pos += 1;
                    if matches!(self.bytes.get(self.pos), Some(b'+') | Some(b'-'))
                        && matches!(b, b'e' | b'E')
                    {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| self.error("a number"))?;
        if text.is_empty() || text == "+" || text == "-" {
            return Err(self.error("a number"));
        }
        if is_real {
            text.parse()
                .map(StepValue::Real)
                .map_err(|_| self.error("a real"))
        } else {
            text.parse()
                .map(StepValue::Integer)
                .map_err(|_| self.error("an integer"))
        }
    }

    fn value(&mut self) -> Result<StepValue, StepReadError> {
        match self.peek() {
            Some(b'$') => {
                self.pos += 1;
                Ok(StepValue::Unset)
            }
            Some(b'*') => {
                self.pos += 1;
                Ok(StepValue::Omitted)
            }
            Some(b'#') => {
                self.pos += 1;
                Ok(StepValue::Ref(self.integer()?))
            }
            Some(b'\'') => Ok(StepValue::Str(self.string()?)),
            Some(b'.') => {
                self.pos += 1;
                let name = self.keyword()?;
                self.expect_byte(b'.', "closing dot of an enumeration")?;
                Ok(StepValue::Enum(name))
            }
            Some(b'(') => {
                self.pos += 1;
                let mut items = Vec::new();
                if self.peek() == Some(b')') {
                    self.pos += 1;
                    return Ok(StepValue::List(items));
                }
                loop {
                    items.push(self.value()?);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        _ => return Err(self.error("',' or ')' in a list")),
                    }
                }
                Ok(StepValue::List(items))
            }
            Some(b) if b.is_ascii_digit() || b == b'+' || b == b'-' => self.number(),
            Some(b) if b.is_ascii_uppercase() => {
                // typed (select) value: KEYWORD(value)
                let name = self.keyword()?;
                self.expect_byte(b'(', "'(' after a typed-value keyword")?;
                let inner = self.value()?;
                self.expect_byte(b')', "')' closing a typed value")?;
                Ok(StepValue::Typed(name, Box::new(inner)))
            }
            _ => Err(self.error("a value")),
        }
    }
}

fn decode_string(raw: &[u8]) -> Result<String, String> {
    let mut out = String::new();
    let mut i = 0;
    while i < raw.len() {
        if raw[i] == b'\\' {
            if raw.get(i + 1) == Some(&b'\\') {
                out.push('\\');
                i += 2;
            } else if raw.len() >= i + 4 && &raw[i..i + 4] == b"\\X2\\" {
                i += 4;
                // UTF-16BE hex quads until \X0\
                loop {
                    if raw.len() >= i + 4 && &raw[i..i + 4] == b"\\X0\\" {
                        i += 4;
                        break;
                    }
                    if raw.len() < i + 4 {
                        return Err("terminated \\X2\\ escape".into());
                    }
                    let hex = std::str::from_utf8(&raw[i..i + 4])
                        .map_err(|_| "hex digits in \\X2\\ escape".to_string())?;
                    let code =
                        u32::from_str_radix(hex, 16).map_err(|_| "hex digits in \\X2\\ escape".to_string())?;
                    out.push(char::from_u32(code).unwrap_or('\u{FFFD}'));
                    i += 4;
                }
            } else if raw.len() >= i + 3 && &raw[i..i + 3] == b"\\X\\" {
                if raw.len() < i + 5 {
                    return Err("two hex digits after \\X\\".into());
                }
                let hex = std::str::from_utf8(&raw[i + 3..i + 5])
                    .map_err(|_| "hex digits after \\X\\".to_string())?;
                let code =
                    u8::from_str_radix(hex, 16).map_err(|_| "hex digits after \\X\\".to_string())?;
                out.push(code as char);
                i += 5;
            } else {
                out.push('\\');
                i += 1;
            }
        } else {
            out.push(raw[i] as char);
            i += 1;
        }
    }
    Ok(out)
}

/// Parse a Part 21 file into its DATA-section entities.
///
/// Checks syntax and reference closure only; no EXPRESS schema validation.
pub fn read_step(path: &Path) -> Result<Vec<StepEntity>, StepReadError> {
    let bytes = std::fs::read(path).map_err(|source| StepReadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_step_bytes(&bytes)
}

pub fn read_step_bytes(bytes: &[u8]) -> Result<Vec<StepEntity>, StepReadError> {
    let mut lexer = Lexer::new(bytes);
    lexer.skip_ws();
    if lexer.peek().is_none() {
        return Err(StepReadError::Syntax {
            offset: 0,
            expected: "ISO-10303-21 header".into(),
        });
    }
    let magic = lexer.keyword()?;
    if magic != "ISO-10303-21" {
        return Err(StepReadError::Syntax {
            offset: 0,
            expected: "ISO-10303-21 header".into(),
        });
    }
    lexer.expect_byte(b';', "';' after ISO-10303-21")?;

    let mut entities: Vec<StepEntity> = Vec::new();
    let mut in_data = false;
    loop {
        match lexer.peek() {
            Some(b'#') => {
                lexer.pos += 1;
                let id = lexer.integer()?;
                lexer.expect_byte(b'=', "'=' after entity id")?;
                let type_name = lexer.keyword()?;
                lexer.expect_byte(b'(', "'(' opening the attribute list")?;
                let mut attributes = Vec::new();
                if lexer.peek() == Some(b')') {
                    lexer.pos += 1;
                } else {
                    loop {
                        attributes.push(lexer.value()?);
                        match lexer.peek() {
                            Some(b',') => lexer.pos += 1,
                            Some(b')') => {
                                lexer.pos += 1;
                                break;
                            }
                            _ => return Err(lexer.error("',' or ')' in the attribute list")),
                        }
                    }
                }
                lexer.expect_byte(b';', "';' terminating the entity")?;
                if !in_data {
                    return Err(lexer.error("entity instances only inside DATA"));
                }
                entities.push(StepEntity {
                    id,
                    type_name,
                    attributes,
                });
            }
            Some(_) => {
                let keyword = lexer.keyword()?;
                match keyword.as_str() {
                    "HEADER" => lexer.expect_byte(b';', "';' after HEADER")?,
                    "DATA" => {
                        lexer.expect_byte(b';', "';' after DATA")?;
                        in_data = true;
                    }
                    "ENDSEC" => {
                        lexer.expect_byte(b';', "';' after ENDSEC")?;
                        in_data = false;
                    }
                    "END-ISO-10303-21" => {
                        lexer.expect_byte(b';', "';' after END-ISO-10303-21")?;
                        break;
                    }
                    // header records (FILE_NAME etc.) parse like anonymous entities
                    _ => {
                        lexer.expect_byte(b'(', "'(' after a header keyword")?;
                        let mut depth = 1usize;
                        while depth > 0 {
                            match lexer.peek() {
                                Some(b'(') => {
                                    lexer.pos += 1;
                                    depth += 1;
                                }
                                Some(b')') => {
                                    lexer.pos += 1;
                                    depth -= 1;
                                }
                                Some(b'\'') => {
                                    lexer.string()?;
                                }
                                Some(_) => lexer.pos += 1,
                                None => return Err(lexer.error("')' closing a header record")),
                            }
                        }
                        lexer.expect_byte(b';', "';' after a header record")?;
                    }
                }
            }
            None => {
                return Err(lexer.error("END-ISO-10303-21"));
            }
        }
    }

    // uniqueness and referential closure
    let mut defined = BTreeSet::new();
    for entity in &entities {
        if !defined.insert(entity.id) {
            return Err(StepReadError::DuplicateId { id: entity.id });
        }
    }
    for entity in &entities {
        let mut refs = Vec::new();
        for attr in &entity.attributes {
            attr.collect_refs(&mut refs);
        }
        for id in refs {
            if !defined.contains(&id) {
                return Err(StepReadError::DanglingReference { id });
            }
        }
    }
    Ok(entities)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_a_syntax_error_at_offset_zero() {
        match read_step_bytes(b"") {
            Err(StepReadError::Syntax { offset: 0, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn dangling_reference_names_the_missing_id() {
        let file = b"ISO-10303-21;\nHEADER;\nFILE_SCHEMA(('IFC4'));\nENDSEC;\nDATA;\n\
                     #2=IFCWALL(#9,$,$,$,$,$,$,$,$);\nENDSEC;\nEND-ISO-10303-21;\n";
        match read_step_bytes(file) {
            Err(StepReadError::DanglingReference { id: 9 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn parses_values_of_every_kind() {
        let file = b"ISO-10303-21;\nHEADER;\nENDSEC;\nDATA;\n\
                     #1=IFCTHING('it''s',.ENUM.,$,*,42,-1.5,(1,(2,3)),IFCLABEL('x'));\n\
                     ENDSEC;\nEND-ISO-10303-21;\n";
        let entities = read_step_bytes(file).unwrap();
        assert_eq!(entities.len(), 1);
        let e = &entities[0];
        assert_eq!(e.type_name, "IFCTHING");
        assert_eq!(e.attributes[0], StepValue::Str("it's".into()));
        assert_eq!(e.attributes[1], StepValue::Enum("ENUM".into()));
        assert_eq!(e.attributes[2], StepValue::Unset);
        assert_eq!(e.attributes[3], StepValue::Omitted);
        assert_eq!(e.attributes[4], StepValue::Integer(42));
        assert_eq!(e.attributes[5], StepValue::Real(-1.5));
        assert_eq!(
            e.attributes[6],
            StepValue::List(vec![
                StepValue::Integer(1),
                StepValue::List(vec![StepValue::Integer(2), StepValue::Integer(3)])
            ])
        );
        assert_eq!(
            e.attributes[7],
            StepValue::Typed("IFCLABEL".into(), Box::new(StepValue::Str("x".into())))
        );
    }

    #[test]
    fn decodes_x2_escapes() {
        let file = b"ISO-10303-21;\nDATA;\n#1=T('caf\\X2\\00E9\\X0\\');\nENDSEC;\nEND-ISO-10303-21;\n";
        let entities = read_step_bytes(file).unwrap();
        assert_eq!(entities[0].attributes[0], StepValue::Str("caf\u{e9}".into()));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let file = b"ISO-10303-21;\nDATA;\n#1=T($);\n#1=T($);\nENDSEC;\nEND-ISO-10303-21;\n";
        assert!(matches!(
            read_step_bytes(file),
            Err(StepReadError::DuplicateId { id: 1 })
        ));
    }
}
