//! Lightweight concept taxonomy with equivalence classes and a
//! degree-of-match reasoner.
//!
//! Concepts are opaque identifiers. Equivalent concepts are merged with a
//! union-find pass before the subsumption closure is materialized, so
//! `Exact` is a true equivalence relation over concepts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OntologyError {
    #[error("ontology parse error: {0}")]
    Parse(String),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("subsumption cycle through `{0}`")]
    Cycle(String),
}

/// On-disk ontology document.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OntologyDocument {
    #[serde(default)]
    pub concepts: Vec<String>,
    #[serde(default)]
    pub subclass_of: Vec<(String, String)>,
    #[serde(default)]
    pub equivalent: Vec<(String, String)>,
    #[serde(default)]
    pub labels: BTreeMap<String, Vec<String>>,
}

/// Logic-based degree of match between a requested and an offered concept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degree {
    Fail,
    Subsumes,
    Plugin,
    Exact,
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Degree::Exact => "exact",
            Degree::Plugin => "plugin",
            Degree::Subsumes => "subsumes",
            Degree::Fail => "fail",
        };
        f.write_str(s)
    }
}

/// Numeric weights of the degree lattice. `Fail` is always 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegreeValues {
    pub exact: f64,
    pub plugin: f64,
    pub subsumes: f64,
}

impl Default for DegreeValues {
    fn default() -> Self {
        Self {
            exact: 1.0,
            plugin: 0.8,
            subsumes: 0.6,
        }
    }
}

impl DegreeValues {
    pub fn value(&self, degree: Degree) -> f64 {
        match degree {
            Degree::Exact => self.exact,
            Degree::Plugin => self.plugin,
            Degree::Subsumes => self.subsumes,
            Degree::Fail => 0.0,
        }
    }

    /// Checks `1 >= exact >= plugin >= subsumes > 0`.
    pub fn is_valid(&self) -> bool {
        self.exact <= 1.0
            && self.exact >= self.plugin
            && self.plugin >= self.subsumes
            && self.subsumes > 0.0
    }
}

#[derive(Debug, Clone)]
pub struct Ontology {
    concepts: Vec<String>,
    index: BTreeMap<String, usize>,
    /// Concept index -> equivalence class index.
    class_of: Vec<usize>,
    /// Per class: reflexive-transitive set of ancestor classes.
    ancestors: Vec<FixedBitSet>,
    labels: BTreeMap<String, Vec<String>>,
    edge_count: usize,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl Ontology {
    pub fn from_json(text: &str) -> Result<Self, OntologyError> {
        let doc: OntologyDocument =
            serde_json::from_str(text).map_err(|e| OntologyError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn from_document(doc: OntologyDocument) -> Result<Self, OntologyError> {
        let mut index = BTreeMap::new();
        let mut concepts = Vec::new();
        for c in doc.concepts {
            if !index.contains_key(&c) {
                index.insert(c.clone(), concepts.len());
                concepts.push(c);
            }
        }
        let lookup = |c: &str| -> Result<usize, OntologyError> {
            index
                .get(c)
                .copied()
                .ok_or_else(|| OntologyError::UnknownConcept(c.to_string()))
        };

        let n = concepts.len();
        let mut parent: Vec<usize> = (0..n).collect();
        for (a, b) in &doc.equivalent {
            let (a, b) = (lookup(a)?, lookup(b)?);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                // keep the smallest index as root so class numbering is stable
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi] = lo;
            }
        }
        let mut class_ids = BTreeMap::new();
        let mut class_of = vec![0; n];
        for (i, slot) in class_of.iter_mut().enumerate() {
            let root = find(&mut parent, i);
            let next = class_ids.len();
            *slot = *class_ids.entry(root).or_insert(next);
        }
        let classes = class_ids.len();

        let mut parents: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); classes];
        for (child, sup) in &doc.subclass_of {
            let (c, p) = (class_of[lookup(child)?], class_of[lookup(sup)?]);
            if c != p {
                parents[c].insert(p);
            }
        }
        for c in doc.labels.keys() {
            lookup(c)?;
        }

        // Kahn's algorithm over child -> parent edges; parents are finished first.
        let mut pending_children = vec![0usize; classes];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for (c, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
                pending_children[c] += 1;
            }
        }
        let mut order = Vec::with_capacity(classes);
        let mut ready: Vec<usize> = (0..classes).filter(|&c| pending_children[c] == 0).collect();
        while let Some(c) = ready.pop() {
            order.push(c);
            for &child in &children[c] {
                pending_children[child] -= 1;
                if pending_children[child] == 0 {
                    ready.push(child);
                }
            }
        }
        if order.len() != classes {
            let stuck = (0..classes).find(|&c| pending_children[c] > 0).unwrap_or(0);
            let name = (0..n)
                .find(|&i| class_of[i] == stuck)
                .map(|i| concepts[i].clone());
            return Err(OntologyError::Cycle(name.unwrap_or_default()));
        }

        let mut ancestors = vec![FixedBitSet::with_capacity(classes); classes];
        for &c in &order {
            let mut set = FixedBitSet::with_capacity(classes);
            set.insert(c);
            for &p in &parents[c] {
                set.union_with(&ancestors[p]);
            }
            ancestors[c] = set;
        }

        Ok(Self {
            concepts,
            index,
            class_of,
            ancestors,
            labels: doc.labels,
            edge_count: doc.subclass_of.len(),
        })
    }

    pub fn empty() -> Self {
        Self::from_document(OntologyDocument::default()).expect("empty ontology is valid")
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// Number of declared subclass edges.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn concepts(&self) -> impl Iterator<Item = &str> {
        self.concepts.iter().map(String::as_str)
    }

    pub fn contains(&self, concept: &str) -> bool {
        self.index.contains_key(concept)
    }

    fn class(&self, concept: &str) -> Result<usize, OntologyError> {
        self.index
            .get(concept)
            .map(|&i| self.class_of[i])
            .ok_or_else(|| OntologyError::UnknownConcept(concept.to_string()))
    }

    pub fn check_known(&self, concept: &str) -> Result<(), OntologyError> {
        self.class(concept).map(|_| ())
    }

    pub fn is_equivalent(&self, a: &str, b: &str) -> Result<bool, OntologyError> {
        Ok(self.class(a)? == self.class(b)?)
    }

    /// Reflexive-transitive subsumption: `child ⊑ parent`.
    pub fn is_subsumed(&self, child: &str, parent: &str) -> Result<bool, OntologyError> {
        let (c, p) = (self.class(child)?, self.class(parent)?);
        Ok(self.ancestors[c].contains(p))
    }

    pub fn degree_of_match(&self, requested: &str, offered: &str) -> Result<Degree, OntologyError> {
        let (r, o) = (self.class(requested)?, self.class(offered)?);
        Ok(if r == o {
            Degree::Exact
        } else if self.ancestors[o].contains(r) {
            Degree::Plugin
        } else if self.ancestors[r].contains(o) {
            Degree::Subsumes
        } else {
            Degree::Fail
        })
    }

    /// True when some concept subsumes both `a` and `b`.
    pub fn share_ancestor(&self, a: &str, b: &str) -> Result<bool, OntologyError> {
        let (a, b) = (self.class(a)?, self.class(b)?);
        Ok(self.ancestors[a]
            .intersection(&self.ancestors[b])
            .next()
            .is_some())
    }

    /// All `(child, parent)` concept pairs with `child != parent` in the closure.
    pub fn subsumption_pairs(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for (i, a) in self.concepts.iter().enumerate() {
            for (j, b) in self.concepts.iter().enumerate() {
                if i != j && self.ancestors[self.class_of[i]].contains(self.class_of[j]) {
                    out.push((a.as_str(), b.as_str()));
                }
            }
        }
        out
    }

    /// Declared labels, or the identifier itself when none are declared.
    pub fn labels(&self, concept: &str) -> Vec<String> {
        match self.labels.get(concept) {
            Some(ls) if !ls.is_empty() => ls.clone(),
            _ => vec![concept.to_string()],
        }
    }
}
