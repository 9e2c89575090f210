//! Format decompositions: a composite value described as ordered parts,
//! each with a one-group capture pattern, plus an assembly template using
//! `{#Part}` placeholders.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("format database parse error: {0}")]
    Parse(String),
    #[error("invalid decomposition {key}: {message}")]
    Invalid { key: FormatKey, message: String },
    #[error("unknown format {0}")]
    UnknownFormat(FormatKey),
    #[error("value `{value}` does not match pattern `{pattern}` of {key}")]
    Mismatch {
        key: FormatKey,
        pattern: String,
        value: String,
    },
    #[error("missing part `{part}` to assemble {key}")]
    MissingPart { key: FormatKey, part: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormatKey {
    pub concept: String,
    pub format: String,
}

impl FormatKey {
    pub fn new(concept: impl Into<String>, format: impl Into<String>) -> Self {
        Self {
            concept: concept.into(),
            format: format.into(),
        }
    }
}

impl std::fmt::Display for FormatKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.concept, self.format)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartSpec {
    pub concept: String,
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormatDecomposition {
    pub composite: FormatKey,
    pub parts: Vec<PartSpec>,
    pub template: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    /// Index into `parts`.
    Part(usize),
}

/// Splits a template into literal and `{#Name}` segments.
pub fn template_segments(template: &str) -> Result<Vec<(bool, String)>, String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{#") {
        if start > 0 {
            out.push((false, rest[..start].to_string()));
        }
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or("unterminated placeholder in template")?;
        let name = &after[..end];
        if name.is_empty() {
            return Err("empty placeholder in template".into());
        }
        out.push((true, name.to_string()));
        rest = &after[end + 1..];
    }
    if !rest.is_empty() {
        out.push((false, rest.to_string()));
    }
    Ok(out)
}

/// Validated decomposition with compiled matchers.
#[derive(Debug, Clone)]
pub struct CompiledDecomposition {
    decomposition: FormatDecomposition,
    segments: Vec<Segment>,
    whole: Regex,
    /// Anchored per-part matchers.
    part_matchers: Vec<Regex>,
    /// Capture index in `whole` -> part index.
    capture_parts: Vec<usize>,
}

impl CompiledDecomposition {
    pub fn new(d: FormatDecomposition) -> Result<Self, FormatError> {
        let invalid = |message: String| FormatError::Invalid {
            key: d.composite.clone(),
            message,
        };
        let raw = template_segments(&d.template).map_err(invalid)?;
        let mut part_matchers = Vec::with_capacity(d.parts.len());
        for p in &d.parts {
            let anchored = Regex::new(&format!("^(?:{})$", p.pattern))
                .map_err(|e| invalid(format!("pattern `{}`: {e}", p.pattern)))?;
            if anchored.captures_len() != 2 {
                return Err(invalid(format!(
                    "pattern `{}` must contain exactly one capture group",
                    p.pattern
                )));
            }
            part_matchers.push(anchored);
        }
        let mut segments = Vec::new();
        let mut used = vec![false; d.parts.len()];
        let mut whole = String::from("^");
        let mut capture_parts = Vec::new();
        for (is_part, text) in raw {
            if is_part {
                let idx = d
                    .parts
                    .iter()
                    .position(|p| p.concept == text)
                    .ok_or_else(|| invalid(format!("placeholder `{text}` is not a part")))?;
                if std::mem::replace(&mut used[idx], true) {
                    return Err(invalid(format!("placeholder `{text}` used twice")));
                }
                whole.push_str(&format!("(?:{})", d.parts[idx].pattern));
                capture_parts.push(idx);
                segments.push(Segment::Part(idx));
            } else {
                whole.push_str(&regex::escape(&text));
                segments.push(Segment::Literal(text));
            }
        }
        whole.push('$');
        if let Some(idx) = used.iter().position(|u| !u) {
            return Err(invalid(format!(
                "part `{}` missing from template",
                d.parts[idx].concept
            )));
        }
        let whole = Regex::new(&whole).map_err(|e| invalid(e.to_string()))?;
        Ok(Self {
            decomposition: d,
            segments,
            whole,
            part_matchers,
            capture_parts,
        })
    }

    pub fn decomposition(&self) -> &FormatDecomposition {
        &self.decomposition
    }

    pub fn key(&self) -> &FormatKey {
        &self.decomposition.composite
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn part_concepts(&self) -> impl Iterator<Item = &str> {
        self.decomposition.parts.iter().map(|p| p.concept.as_str())
    }

    /// The anchored regular expression matched against whole values.
    pub fn pattern(&self) -> &str {
        self.whole.as_str()
    }

    /// Part concept -> captured value.
    pub fn parse(&self, value: &str) -> Result<BTreeMap<String, String>, FormatError> {
        let caps = self
            .whole
            .captures(value)
            .ok_or_else(|| FormatError::Mismatch {
                key: self.key().clone(),
                pattern: self.whole.as_str().to_string(),
                value: value.to_string(),
            })?;
        Ok(self
            .capture_parts
            .iter()
            .enumerate()
            .map(|(i, &part)| {
                let text = caps.get(i + 1).map_or("", |m| m.as_str());
                (
                    self.decomposition.parts[part].concept.clone(),
                    text.to_string(),
                )
            })
            .collect())
    }

    pub fn assemble(&self, parts: &BTreeMap<String, String>) -> Result<String, FormatError> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => out.push_str(text),
                Segment::Part(idx) => {
                    let spec = &self.decomposition.parts[*idx];
                    let value =
                        parts
                            .get(&spec.concept)
                            .ok_or_else(|| FormatError::MissingPart {
                                key: self.key().clone(),
                                part: spec.concept.clone(),
                            })?;
                    if !self.part_matchers[*idx].is_match(value) {
                        return Err(FormatError::Mismatch {
                            key: self.key().clone(),
                            pattern: spec.pattern.clone(),
                            value: value.clone(),
                        });
                    }
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormatDocument {
    #[serde(default)]
    pub decompositions: Vec<FormatDecomposition>,
}

#[derive(Debug, Clone, Default)]
pub struct FormatDb {
    entries: BTreeMap<FormatKey, CompiledDecomposition>,
}

impl FormatDb {
    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let doc: FormatDocument =
            serde_json::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
        Self::from_decompositions(doc.decompositions)
    }

    pub fn from_decompositions(ds: Vec<FormatDecomposition>) -> Result<Self, FormatError> {
        let mut entries = BTreeMap::new();
        for d in ds {
            let key = d.composite.clone();
            if entries.contains_key(&key) {
                return Err(FormatError::Invalid {
                    key,
                    message: "duplicate decomposition".into(),
                });
            }
            entries.insert(key, CompiledDecomposition::new(d)?);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &FormatKey) -> Option<&CompiledDecomposition> {
        self.entries.get(key)
    }

    pub fn require(&self, key: &FormatKey) -> Result<&CompiledDecomposition, FormatError> {
        self.get(key)
            .ok_or_else(|| FormatError::UnknownFormat(key.clone()))
    }

    pub fn lookup(&self, concept: &str, format: &str) -> Option<&CompiledDecomposition> {
        self.get(&FormatKey::new(concept, format))
    }

    pub fn iter(&self) -> impl Iterator<Item = &CompiledDecomposition> {
        self.entries.values()
    }
}
