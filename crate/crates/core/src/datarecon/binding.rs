//! Binding of a service's required input tags to upstream output tags.
//!
//! Preference per required tag, first hit wins:
//! direct logic match (exact > plugin > subsumes), composite cover by
//! decomposable parts, sibling concepts with convertible units, then the
//! syntactic fallback. Ties go to the lexicographically smallest tag.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MediationDb;
use crate::matchmaker::MatchConfig;
use crate::ontology::{Degree, Ontology, OntologyError};
use crate::procmodel::TagSpec;
use crate::textsim::annotation_similarity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingKind {
    Exact,
    Plugin,
    Subsumes,
    Composite,
    UnitSibling,
    Syntactic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub target: TagSpec,
    pub sources: Vec<TagSpec>,
    pub kind: BindingKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnboundTag {
    pub tag: String,
    pub concept: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BindingOutcome {
    pub bindings: Vec<Binding>,
    pub unbound: Vec<UnboundTag>,
}

fn same_part(o: &Ontology, a: &str, b: &str) -> bool {
    a == b || (o.contains(a) && o.contains(b) && o.is_equivalent(a, b).unwrap_or(false))
}

fn labels_with_tag(o: &Ontology, t: &TagSpec) -> Vec<String> {
    let mut labels = o.labels(&t.concept);
    labels.push(t.tag.clone());
    labels
}

pub fn bind_concepts(
    required: &[TagSpec],
    available: &[TagSpec],
    o: &Ontology,
    db: &MediationDb,
    cfg: &MatchConfig,
) -> Result<BindingOutcome, OntologyError> {
    let mut sorted: Vec<&TagSpec> = available.iter().collect();
    sorted.sort_by(|a, b| a.tag.cmp(&b.tag));

    let mut outcome = BindingOutcome::default();
    for r in required {
        o.check_known(&r.concept)?;
        match bind_one(r, &sorted, o, db, cfg)? {
            Some(b) => outcome.bindings.push(b),
            None => outcome.unbound.push(UnboundTag {
                tag: r.tag.clone(),
                concept: r.concept.clone(),
                reason: if available.is_empty() {
                    "no upstream outputs".to_string()
                } else {
                    "no upstream output matches the concept".to_string()
                },
            }),
        }
    }
    Ok(outcome)
}

fn bind_one(
    r: &TagSpec,
    available: &[&TagSpec],
    o: &Ontology,
    db: &MediationDb,
    cfg: &MatchConfig,
) -> Result<Option<Binding>, OntologyError> {
    let single = |a: &TagSpec, kind| Binding {
        target: r.clone(),
        sources: vec![a.clone()],
        kind,
    };

    let mut best: Option<(Degree, &TagSpec)> = None;
    for &a in available {
        let d = o.degree_of_match(&r.concept, &a.concept)?;
        if d != Degree::Fail && best.is_none_or(|(bd, _)| d > bd) {
            best = Some((d, a));
        }
    }
    if let Some((d, a)) = best {
        let kind = match d {
            Degree::Exact => BindingKind::Exact,
            Degree::Plugin => BindingKind::Plugin,
            _ => BindingKind::Subsumes,
        };
        return Ok(Some(single(a, kind)));
    }

    if let Some(sources) = composite_cover(r, available, o, db) {
        return Ok(Some(Binding {
            target: r.clone(),
            sources,
            kind: BindingKind::Composite,
        }));
    }

    if let Some(ru) = &r.unit {
        for &a in available {
            let Some(au) = &a.unit else { continue };
            if o.share_ancestor(&r.concept, &a.concept)? && db.units.can_convert(au, ru) {
                return Ok(Some(single(a, BindingKind::UnitSibling)));
            }
        }
    }

    let r_labels = labels_with_tag(o, r);
    let mut best_syn: Option<(f64, &TagSpec)> = None;
    for &a in available {
        o.check_known(&a.concept)?;
        let s = annotation_similarity(&r_labels, &labels_with_tag(o, a), cfg.metric);
        if s >= cfg.sigma && best_syn.is_none_or(|(bs, _)| s > bs) {
            best_syn = Some((s, a));
        }
    }
    Ok(best_syn.map(|(_, a)| single(a, BindingKind::Syntactic)))
}

/// Upstream tags whose decomposable parts together cover every part of the
/// required composite.
fn composite_cover(
    r: &TagSpec,
    available: &[&TagSpec],
    o: &Ontology,
    db: &MediationDb,
) -> Option<Vec<TagSpec>> {
    let target = db.formats.lookup(&r.concept, r.format.as_deref()?)?;
    let providers: Vec<(&TagSpec, Vec<&str>)> = available
        .iter()
        .filter_map(|a| {
            let d = db.formats.lookup(&a.concept, a.format.as_deref()?)?;
            Some((*a, d.part_concepts().collect()))
        })
        .collect();

    let mut covered: BTreeSet<&str> = BTreeSet::new();
    let mut sources: Vec<TagSpec> = Vec::new();
    for part in target.part_concepts() {
        if covered.iter().any(|c| same_part(o, c, part)) {
            continue;
        }
        let (tag, parts) = providers
            .iter()
            .find(|(_, parts)| parts.iter().any(|p| same_part(o, p, part)))?;
        covered.extend(parts.iter().copied());
        sources.push((*tag).clone());
    }
    Some(sources)
}
