//! XSLT 1.0 rendering of a transformation spec.
//!
//! Input documents are a root element with one child per tag; the output is
//! `<message>` with one child per bound target tag. Parsing is expressed with
//! `substring`, `substring-before` and `substring-after`, so each part pattern
//! must be a single whole capture that is either fixed-width or followed by a
//! literal separator (or last in the template).

use std::collections::BTreeMap;

use quick_xml::events::Event;
use quick_xml::Reader;
use regex_syntax::hir::{Hir, HirKind};
use thiserror::Error;

use super::format::{CompiledDecomposition, FormatKey, Segment};
use super::spec::{Step, TransformationSpec};
use super::DataReconError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum XsltError {
    #[error("pattern `{pattern}` cannot be expressed in XSLT: {reason}")]
    UnsupportedPattern { pattern: String, reason: String },
    #[error(transparent)]
    Spec(#[from] DataReconError),
    #[error("generated stylesheet is not well-formed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PartShape {
    Fixed(usize),
    Variable,
}

/// Width range in characters, `None` for unbounded.
fn char_width(h: &Hir) -> (usize, Option<usize>) {
    match h.kind() {
        HirKind::Empty | HirKind::Look(_) => (0, Some(0)),
        HirKind::Literal(lit) => {
            let n = String::from_utf8_lossy(&lit.0).chars().count();
            (n, Some(n))
        }
        HirKind::Class(_) => (1, Some(1)),
        HirKind::Repetition(rep) => {
            let (lo, hi) = char_width(&rep.sub);
            let min = lo * rep.min as usize;
            let max = match (hi, rep.max) {
                (Some(h), Some(m)) => Some(h * m as usize),
                (Some(0), None) => Some(0),
                _ => None,
            };
            (min, max)
        }
        HirKind::Capture(cap) => char_width(&cap.sub),
        HirKind::Concat(hs) => hs.iter().fold((0, Some(0)), |(lo, hi), h| {
            let (a, b) = char_width(h);
            (lo + a, hi.zip(b).map(|(x, y)| x + y))
        }),
        HirKind::Alternation(hs) => {
            let ws: Vec<_> = hs.iter().map(char_width).collect();
            let lo = ws.iter().map(|w| w.0).min().unwrap_or(0);
            let hi = ws
                .iter()
                .try_fold(0, |acc: usize, w| w.1.map(|x| acc.max(x)));
            (lo, hi)
        }
    }
}

fn part_shape(pattern: &str) -> Result<PartShape, XsltError> {
    let unsupported = |reason: &str| XsltError::UnsupportedPattern {
        pattern: pattern.to_string(),
        reason: reason.to_string(),
    };
    let hir = regex_syntax::Parser::new()
        .parse(pattern)
        .map_err(|e| unsupported(&e.to_string().replace('\n', " ")))?;
    let HirKind::Capture(cap) = hir.kind() else {
        return Err(unsupported("the capture group must span the whole pattern"));
    };
    if cap.sub.properties().explicit_captures_len() > 0 {
        return Err(unsupported("nested capture groups"));
    }
    Ok(match char_width(&cap.sub) {
        (lo, Some(hi)) if lo == hi && lo > 0 => PartShape::Fixed(lo),
        _ => PartShape::Variable,
    })
}

/// Attribute values are always double-quoted, so `'` stays literal.
fn escape_attr(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// XPath 1.0 string literal.
fn literal(s: &str) -> String {
    if !s.contains('\'') {
        format!("'{s}'")
    } else if !s.contains('"') {
        format!("\"{s}\"")
    } else {
        let pieces: Vec<String> = s.split('\'').map(|p| format!("'{p}'")).collect();
        format!("concat({})", pieces.join(", \"'\", "))
    }
}

struct Body {
    lines: Vec<String>,
    next: usize,
}

impl Body {
    fn bind(&mut self, select: &str) -> String {
        let name = format!("v{}", self.next);
        self.next += 1;
        self.lines.push(format!(
            "<xsl:variable name=\"{name}\" select=\"{}\"/>",
            escape_attr(select)
        ));
        format!("${name}")
    }

    fn bind_block(&mut self, content: Vec<String>) -> String {
        let name = format!("v{}", self.next);
        self.next += 1;
        self.lines.push(format!("<xsl:variable name=\"{name}\">"));
        self.lines
            .extend(content.into_iter().map(|l| format!("  {l}")));
        self.lines.push("</xsl:variable>".to_string());
        format!("${name}")
    }
}

fn parse_parts(
    body: &mut Body,
    d: &CompiledDecomposition,
    shapes: &[PartShape],
    source: &str,
    parts: &mut BTreeMap<String, String>,
) -> Result<(), XsltError> {
    let pattern_of = |idx: usize| d.decomposition().parts[idx].pattern.clone();
    let segs = d.segments();
    let mut rest = body.bind(&format!("/*/{source}"));
    let mut i = 0;
    while i < segs.len() {
        match &segs[i] {
            Segment::Literal(lit) => {
                let n = lit.chars().count();
                rest = body.bind(&format!("substring({rest}, {})", n + 1));
            }
            Segment::Part(idx) => {
                let concept = &d.decomposition().parts[*idx].concept;
                let value = match (shapes[*idx], segs.get(i + 1)) {
                    (PartShape::Fixed(n), _) => {
                        let v = body.bind(&format!("substring({rest}, 1, {n})"));
                        if i + 1 < segs.len() {
                            rest = body.bind(&format!("substring({rest}, {})", n + 1));
                        }
                        v
                    }
                    (PartShape::Variable, Some(Segment::Literal(sep))) => {
                        let v = body.bind(&format!("substring-before({rest}, {})", literal(sep)));
                        if i + 2 < segs.len() {
                            rest = body.bind(&format!("substring-after({rest}, {})", literal(sep)));
                        }
                        i += 1;
                        v
                    }
                    (PartShape::Variable, None) => rest.clone(),
                    (PartShape::Variable, Some(Segment::Part(_))) => {
                        return Err(XsltError::UnsupportedPattern {
                            pattern: pattern_of(*idx),
                            reason: "variable-width part without a following separator".into(),
                        })
                    }
                };
                parts.insert(concept.clone(), value);
            }
        }
        i += 1;
    }
    Ok(())
}

fn assemble(
    d: &CompiledDecomposition,
    parts: &BTreeMap<String, String>,
) -> Result<String, XsltError> {
    let mut items = Vec::new();
    for seg in d.segments() {
        match seg {
            Segment::Literal(lit) => items.push(literal(lit)),
            Segment::Part(idx) => {
                let concept = &d.decomposition().parts[*idx].concept;
                let v = parts.get(concept).ok_or_else(|| {
                    DataReconError::InvalidSpec(format!("part `{concept}` is never parsed"))
                })?;
                items.push(v.clone());
            }
        }
    }
    Ok(match items.len() {
        0 => "''".to_string(),
        1 => items.pop().unwrap_or_default(),
        _ => format!("concat({})", items.join(", ")),
    })
}

pub fn render_xslt(spec: &TransformationSpec) -> Result<String, XsltError> {
    let mut shaped = Vec::new();
    for d in &spec.decompositions {
        let shapes = d
            .parts
            .iter()
            .map(|p| part_shape(&p.pattern))
            .collect::<Result<Vec<_>, _>>()?;
        shaped.push((d, shapes));
    }
    spec.validate()?;
    let mut compiled: BTreeMap<&FormatKey, (CompiledDecomposition, Vec<PartShape>)> =
        BTreeMap::new();
    for (d, shapes) in shaped {
        let c = CompiledDecomposition::new(d.clone()).map_err(DataReconError::from)?;
        compiled.insert(&d.composite, (c, shapes));
    }

    let mut out = vec![
        r#"<?xml version="1.0" encoding="UTF-8"?>"#.to_string(),
        r#"<xsl:stylesheet version="1.0" xmlns:xsl="http://www.w3.org/1999/XSL/Transform">"#
            .to_string(),
        r#"  <xsl:output method="xml" indent="yes" encoding="UTF-8"/>"#.to_string(),
        r#"  <xsl:template match="/*">"#.to_string(),
        "    <message>".to_string(),
    ];
    for t in &spec.inputs {
        out.push(format!("      <xsl:call-template name=\"{}\"/>", t.tag));
    }
    for u in &spec.unbound {
        out.push(format!("      <!-- unbound input {} -->", u.tag));
    }
    out.push("    </message>".to_string());
    out.push("  </xsl:template>".to_string());

    for t in &spec.inputs {
        let mut body = Body {
            lines: Vec::new(),
            next: 0,
        };
        let mut register = String::new();
        let mut parts = BTreeMap::new();
        for step in &t.steps {
            match step {
                Step::Copy { source } => register = format!("/*/{source}"),
                Step::Parse { source, format } => {
                    let (d, shapes) = &compiled[format];
                    parse_parts(&mut body, d, shapes, source, &mut parts)?;
                }
                Step::Assemble { format } => {
                    let (d, _) = &compiled[format];
                    register = body.bind(&assemble(d, &parts)?);
                }
                Step::Convert { from, to } => {
                    let c = spec
                        .conversions
                        .iter()
                        .find(|c| c.from == *from && c.to == *to)
                        .ok_or_else(|| {
                            DataReconError::InvalidSpec(format!(
                                "missing conversion {from} -> {to}"
                            ))
                        })?;
                    let e = c.compile().map_err(DataReconError::from)?;
                    if !register.starts_with('$') {
                        register = body.bind(&register);
                    }
                    register = body.bind(&e.to_xpath(&register));
                }
                Step::Lookup { table } => {
                    let tbl = spec.tables.iter().find(|x| x.id == *table).ok_or_else(|| {
                        DataReconError::InvalidSpec(format!("missing lookup table `{table}`"))
                    })?;
                    let mut choose = vec!["<xsl:choose>".to_string()];
                    for (k, v) in &tbl.entries {
                        choose.push(format!(
                            "  <xsl:when test=\"{}\">{}</xsl:when>",
                            escape_attr(&format!("{register} = {}", literal(k))),
                            quick_xml::escape::escape(v)
                        ));
                    }
                    choose.push(format!(
                        "  <xsl:otherwise><xsl:message terminate=\"yes\">value not found in lookup table {}</xsl:message></xsl:otherwise>",
                        quick_xml::escape::escape(table)
                    ));
                    choose.push("</xsl:choose>".to_string());
                    register = body.bind_block(choose);
                }
            }
        }
        out.push(format!("  <xsl:template name=\"{}\">", t.tag));
        out.extend(body.lines.into_iter().map(|l| format!("    {l}")));
        out.push(format!(
            "    <{tag}><xsl:value-of select=\"{}\"/></{tag}>",
            escape_attr(&register),
            tag = t.tag
        ));
        out.push("  </xsl:template>".to_string());
    }
    out.push("</xsl:stylesheet>".to_string());
    let text = out.join("\n") + "\n";
    check_well_formed(&text)?;
    Ok(text)
}

/// Parses the whole document, checking tag balance.
pub fn check_well_formed(text: &str) -> Result<(), XsltError> {
    let mut reader = Reader::from_str(text);
    let mut depth = 0usize;
    let mut roots = 0usize;
    loop {
        match reader.read_event() {
            Ok(Event::Eof) => break,
            Ok(Event::Start(_)) => {
                if depth == 0 {
                    roots += 1;
                }
                depth += 1;
            }
            Ok(Event::Empty(_)) if depth == 0 => roots += 1,
            Ok(Event::End(_)) => depth -= 1,
            Ok(_) => {}
            Err(e) => {
                return Err(XsltError::Malformed(format!(
                    "at byte {}: {e}",
                    reader.buffer_position()
                )))
            }
        }
    }
    if depth != 0 || roots != 1 {
        return Err(XsltError::Malformed(
            "expected exactly one balanced root element".into(),
        ));
    }
    Ok(())
}
