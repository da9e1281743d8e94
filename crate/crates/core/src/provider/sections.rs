use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::skill::extract_code_blocks;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Bool,
    Text,
    List,
    Code,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub label: String,
    pub kind: FieldKind,
    pub required: bool,
}

impl FieldSpec {
    pub fn required(label: &str, kind: FieldKind) -> Self {
        Self { label: label.to_string(), kind, required: true }
    }

    pub fn optional(label: &str, kind: FieldKind) -> Self {
        Self { label: label.to_string(), kind, required: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionSchema {
    fields: Vec<FieldSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SectionError {
    #[error("missing section `{0}`")]
    MissingField(String),
    #[error("section `{label}`: expected true or false, found `{found}`")]
    UnparsableBool { label: String, found: String },
    #[error("duplicate section label `{0}` in schema")]
    DuplicateLabel(String),
}

impl SectionSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self, SectionError> {
        let mut seen = HashSet::new();
        for f in &fields {
            if !seen.insert(f.label.to_lowercase()) {
                return Err(SectionError::DuplicateLabel(f.label.clone()));
            }
        }
        Ok(Self { fields })
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Bool(bool),
    Text(String),
    List(Vec<String>),
    Code(Vec<String>),
}

/// Parsed sections keyed by schema label. Optional fields that were absent
/// are not present.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sections(pub BTreeMap<String, FieldValue>);

impl Sections {
    pub fn get(&self, label: &str) -> Option<&FieldValue> {
        self.0.get(label)
    }

    pub fn bool(&self, label: &str) -> Option<bool> {
        match self.get(label)? {
            FieldValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn text(&self, label: &str) -> Option<&str> {
        match self.get(label)? {
            FieldValue::Text(t) => Some(t),
            _ => None,
        }
    }

    pub fn list(&self, label: &str) -> Option<&[String]> {
        match self.get(label)? {
            FieldValue::List(l) | FieldValue::Code(l) => Some(l),
            _ => None,
        }
    }
}

/// Index of the schema field whose label starts `line`, with the rest of
/// the line after the colon.
fn header<'a>(line: &'a str, schema: &SectionSchema) -> Option<(usize, &'a str)> {
    let trimmed = line.trim_start().trim_start_matches(['#', '*', ' ']);
    let colon = trimmed.find(':')?;
    let label = trimmed[..colon].trim().trim_matches('*');
    let idx = schema.fields.iter().position(|f| f.label.eq_ignore_ascii_case(label))?;
    Some((idx, trimmed[colon + 1..].trim_start_matches('*')))
}

fn parse_bool(label: &str, raw: &str) -> Result<bool, SectionError> {
    let word = raw.trim().trim_end_matches('.').trim().to_lowercase();
    match word.as_str() {
        "true" | "yes" => Ok(true),
        "false" | "no" => Ok(false),
        _ => Err(SectionError::UnparsableBool { label: label.to_string(), found: raw.trim().to_string() }),
    }
}

fn parse_list(raw: &str) -> Vec<String> {
    raw.lines()
        .map(|l| {
            let l = l.trim();
            let l = l.trim_start_matches(['-', '*', '•']).trim_start();
            let digits = l.chars().take_while(char::is_ascii_digit).count();
            if digits > 0 && l[digits..].starts_with(['.', ')']) {
                l[digits + 1..].trim_start()
            } else {
                l
            }
        })
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Splits a labelled model response into fields.
///
/// A section runs from its `Label:` line to the next line opening with a
/// known label. Labels inside code fences are ignored. Only the first
/// occurrence of a label counts.
pub fn parse_sections(text: &str, schema: &SectionSchema) -> Result<Sections, SectionError> {
    let mut raw: Vec<Option<String>> = vec![None; schema.fields.len()];
    let mut current: Option<usize> = None;
    let mut in_fence = false;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
        } else if !in_fence {
            if let Some((idx, rest)) = header(line, schema) {
                if raw[idx].is_none() {
                    raw[idx] = Some(rest.to_string());
                    current = Some(idx);
                } else {
                    current = None;
                }
                continue;
            }
        }
        if let Some(idx) = current {
            let buf = raw[idx].as_mut().expect("current section is open");
            buf.push('\n');
            buf.push_str(line);
        }
    }

    let mut out = BTreeMap::new();
    for (spec, body) in schema.fields.iter().zip(raw) {
        let Some(body) = body else {
            if spec.required {
                return Err(SectionError::MissingField(spec.label.clone()));
            }
            continue;
        };
        let value = match spec.kind {
            FieldKind::Bool => FieldValue::Bool(parse_bool(&spec.label, &body)?),
            FieldKind::Text => FieldValue::Text(body.trim().to_string()),
            FieldKind::List => FieldValue::List(parse_list(&body)),
            FieldKind::Code => FieldValue::Code(extract_code_blocks(&body)),
        };
        out.insert(spec.label.clone(), value);
    }
    Ok(Sections(out))
}
