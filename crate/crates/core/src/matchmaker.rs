//! Hybrid n-to-m matchmaking of activity groups onto service compositions.
//!
//! Matching runs in three steps:
//!
//! 1. groups whose signature is in the pattern database are claimed first,
//!    largest groups first, and never revisited;
//! 2. the remaining activities are covered by fresh candidates, picking the
//!    disjoint set of groups with the highest summed combined score;
//! 3. whatever is left is reported as uncovered and gets a stub service.
//!
//! Scores blend a logic degree-of-match (with I/O integrity folded in) and a
//! token-based syntactic similarity of concept labels and operation names.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ontology::{Degree, DegreeValues, Ontology, OntologyError};
use crate::procmodel::{ActivityGroup, Annotation, GroupShape, ProcessModel};
use crate::registry::{
    FilterCriteria, OperationDescriptor, OperationRef, Registry, ServiceDescriptor,
};
use crate::textsim::{annotation_similarity, Metric};

/// Scores closer than this are treated as equal when ranking.
pub const SCORE_EPSILON: f64 = 1e-12;

pub const STUB_ENDPOINT: &str = "stub:human-task";

#[derive(Debug, Error)]
pub enum MatchError {
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("invalid match configuration: {0}")]
    Config(String),
    #[error("pattern database: {0}")]
    Persistence(String),
    #[error("unknown operation {0}")]
    UnknownOperation(OperationRef),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    pub metric: Metric,
    /// Weight of the logic side of the combined score.
    pub alpha: f64,
    /// Syntactic threshold for candidates whose logic side fails entirely.
    pub sigma: f64,
    /// Acceptance threshold on the combined score.
    pub tau: f64,
    /// Maximum activity-group size.
    pub k: usize,
    /// Maximum composition length.
    pub m: usize,
    pub degrees: DegreeValues,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            metric: Metric::Cosine,
            alpha: 0.7,
            sigma: 0.8,
            tau: 0.5,
            k: 3,
            m: 3,
            degrees: DegreeValues::default(),
        }
    }
}

impl MatchConfig {
    pub fn from_json(text: &str) -> Result<Self, MatchError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| MatchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("tau", self.tau),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MatchError::Config(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if self.k == 0 || self.m == 0 {
            return Err(MatchError::Config("k and m must be at least 1".into()));
        }
        if !self.degrees.is_valid() {
            return Err(MatchError::Config(
                "degree values must satisfy 1 >= exact >= plugin >= subsumes > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn combine(&self, logic: f64, syntactic: f64, io_integrity: f64) -> f64 {
        (self.alpha * (0.5 * logic + 0.5 * io_integrity) + (1.0 - self.alpha) * syntactic)
            .clamp(0.0, 1.0)
    }

    /// Candidate acceptance: combined above `tau`, or a pure syntactic match
    /// above `sigma` when logic fails everywhere.
    pub fn accepts(&self, s: &MatchScore) -> bool {
        s.combined >= self.tau || (s.logic == 0.0 && s.syntactic >= self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub logic: f64,
    pub syntactic: f64,
    pub combined: f64,
    pub io_integrity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scored {
    Score(MatchScore),
    Rejected(String),
}

impl Scored {
    pub fn score(&self) -> Option<&MatchScore> {
        match self {
            Scored::Score(s) => Some(s),
            Scored::Rejected(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Pattern,
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub group: ActivityGroup,
    pub signature: String,
    pub composition: Vec<OperationRef>,
    pub score: MatchScore,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPlan {
    /// Ordered by the topological position of each group's first activity.
    pub assignments: Vec<Assignment>,
    pub uncovered: Vec<String>,
    pub stubs: Vec<ServiceDescriptor>,
}

impl MatchPlan {
    pub fn total_score(&self) -> f64 {
        self.assignments.iter().map(|a| a.score.combined).sum()
    }

    pub fn total_composition_len(&self) -> usize {
        self.assignments.iter().map(|a| a.composition.len()).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.uncovered.is_empty()
    }

    /// Assignment covering `activity`, if any.
    pub fn assignment_of(&self, activity: &str) -> Option<&Assignment> {
        self.assignments
            .iter()
            .find(|a| a.group.activity_ids.iter().any(|x| x == activity))
    }
}

/// Canonical, activity-id-free digest of a group.
pub fn group_signature(p: &ProcessModel, group: &ActivityGroup) -> String {
    let concepts: Vec<&str> = group
        .activity_ids
        .iter()
        .map(|a| p.annotation(a).map_or("", |ann| ann.operation.as_str()))
        .collect();
    let (required, produced) = p.external_io(group);
    let mut ins: Vec<&str> = required.iter().map(|t| t.concept.as_str()).collect();
    let mut outs: Vec<&str> = produced.iter().map(|t| t.concept.as_str()).collect();
    ins.sort_unstable();
    outs.sort_unstable();
    let shape = match group.shape {
        GroupShape::Run => "run",
        GroupShape::Block => "block",
    };
    let canonical = format!(
        "ops={}\nshape={shape}\nin={}\nout={}",
        concepts.join("\u{1f}"),
        ins.join("\u{1f}"),
        outs.join("\u{1f}")
    );
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Score one group against one ordered composition.
pub fn score_pair(
    group: &ActivityGroup,
    composition: &[&OperationDescriptor],
    ontology: &Ontology,
    cfg: &MatchConfig,
    process: &ProcessModel,
) -> Result<Scored, OntologyError> {
    let requested: Vec<&str> = group
        .activity_ids
        .iter()
        .map(|a| {
            process
                .annotation(a)
                .map_or("", |ann| ann.operation.as_str())
        })
        .collect();

    // (member index, concept) pool; behaviour sub-steps widen the pool.
    let mut pool: Vec<(usize, &str)> = Vec::new();
    for (j, op) in composition.iter().enumerate() {
        pool.push((j, op.operation_concept.as_str()));
        for step in op.behaviour.iter().flatten() {
            pool.push((j, step.as_str()));
        }
    }

    struct Pair {
        activity: usize,
        entry: usize,
        value: f64,
        syntactic: f64,
    }
    let mut pairs = Vec::with_capacity(requested.len() * pool.len());
    for (i, &req) in requested.iter().enumerate() {
        let req_labels = ontology.labels(req);
        for (e, &(j, offered)) in pool.iter().enumerate() {
            let degree = ontology.degree_of_match(req, offered)?;
            let mut offered_labels = ontology.labels(offered);
            offered_labels.push(composition[j].name.clone());
            pairs.push(Pair {
                activity: i,
                entry: e,
                value: cfg.degrees.value(degree),
                syntactic: annotation_similarity(&req_labels, &offered_labels, cfg.metric),
            });
        }
    }
    pairs.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then(b.syntactic.total_cmp(&a.syntactic))
            .then(a.activity.cmp(&b.activity))
            .then(a.entry.cmp(&b.entry))
    });

    let mut activity_used = vec![false; requested.len()];
    let mut entry_used = vec![false; pool.len()];
    let mut member_logic: Vec<Option<f64>> = vec![None; composition.len()];
    let (mut logic_sum, mut syn_sum) = (0.0, 0.0);
    for p in &pairs {
        if activity_used[p.activity] || entry_used[p.entry] {
            continue;
        }
        activity_used[p.activity] = true;
        entry_used[p.entry] = true;
        logic_sum += p.value;
        syn_sum += p.syntactic;
        let member = &mut member_logic[pool[p.entry].0];
        *member = Some(member.map_or(p.value, |v: f64| v.max(p.value)));
    }
    if let Some(j) = member_logic.iter().position(Option::is_none) {
        return Ok(Scored::Rejected(format!(
            "composition member {} covers no activity",
            composition[j].id
        )));
    }
    let n = requested.len().max(1) as f64;
    let logic = logic_sum / n;
    let syntactic = syn_sum / n;

    let (group_inputs, _) = process.external_io(group);
    let binds = |requested: &str, offered: &str| -> Result<bool, OntologyError> {
        Ok(ontology.degree_of_match(requested, offered)? != Degree::Fail)
    };
    let (mut total, mut bound) = (0usize, 0usize);
    for gi in &group_inputs {
        total += 1;
        let mut consumed = false;
        for op in composition {
            for u in &op.inputs {
                if binds(&u.concept, &gi.concept)? {
                    consumed = true;
                }
            }
        }
        bound += usize::from(consumed);
    }
    for (j, op) in composition.iter().enumerate() {
        for u in &op.inputs {
            total += 1;
            let mut ok = false;
            for gi in &group_inputs {
                ok |= binds(&u.concept, &gi.concept)?;
            }
            for prev in &composition[..j] {
                for o in &prev.outputs {
                    ok |= binds(&u.concept, &o.concept)?;
                }
            }
            if ok {
                bound += 1;
            } else if member_logic[j] == Some(0.0) {
                return Ok(Scored::Rejected(format!(
                    "input `{}` of {} is bound by nothing upstream",
                    u.tag, op.id
                )));
            }
        }
    }
    let io_integrity = if total == 0 {
        1.0
    } else {
        bound as f64 / total as f64
    };

    Ok(Scored::Score(MatchScore {
        logic,
        syntactic,
        io_integrity,
        combined: cfg.combine(logic, syntactic, io_integrity),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRecord {
    pub signature: String,
    pub composition: Vec<OperationRef>,
    pub score: MatchScore,
    pub created_at: u64,
    pub use_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatternDatabase {
    records: BTreeMap<String, PatternRecord>,
}

impl PatternDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json(text: &str) -> Result<Self, MatchError> {
        let records: Vec<PatternRecord> =
            serde_json::from_str(text).map_err(|e| MatchError::Persistence(e.to_string()))?;
        Ok(Self {
            records: records
                .into_iter()
                .map(|r| (r.signature.clone(), r))
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        let records: Vec<&PatternRecord> = self.records.values().collect();
        serde_json::to_string_pretty(&records).expect("pattern records serialize")
    }

    /// Missing file means an empty database.
    pub fn load(path: &Path) -> Result<Self, MatchError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(MatchError::Persistence(format!("{}: {e}", path.display()))),
        }
    }

    /// Writes a sibling temp file and renames it over `path`.
    pub fn save(&self, path: &Path) -> Result<(), MatchError> {
        let err = |e: std::io::Error| MatchError::Persistence(format!("{}: {e}", path.display()));
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        std::fs::write(&tmp, self.to_json()).map_err(err)?;
        std::fs::rename(&tmp, path).map_err(err)
    }

    /// JSON without the run-dependent fields (use counts, creation times).
    pub fn canonical_json(&self) -> String {
        let records: Vec<serde_json::Value> = self
            .records
            .values()
            .map(|r| {
                serde_json::json!({
                    "signature": r.signature,
                    "composition": r.composition,
                    "score": r.score,
                })
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("pattern records serialize")
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &PatternRecord> {
        self.records.values()
    }

    /// Read without counting a hit.
    pub fn get(&self, signature: &str) -> Option<&PatternRecord> {
        self.records.get(signature)
    }

    /// Read and count a hit.
    pub fn lookup_pattern(&mut self, signature: &str) -> Option<PatternRecord> {
        let rec = self.records.get_mut(signature)?;
        rec.use_count += 1;
        Some(rec.clone())
    }

    /// Stores a successful match. An existing record keeps its use count and
    /// creation time; its composition and score are refreshed.
    pub fn store_pattern(
        &mut self,
        signature: &str,
        composition: &[OperationRef],
        score: MatchScore,
        cfg: &MatchConfig,
        now: u64,
    ) -> Result<PatternRecord, MatchError> {
        if !cfg.accepts(&score) {
            return Err(MatchError::Persistence(format!(
                "refusing to store unsuccessful match (combined {:.3})",
                score.combined
            )));
        }
        let rec = self
            .records
            .entry(signature.to_string())
            .or_insert_with(|| PatternRecord {
                signature: signature.to_string(),
                composition: composition.to_vec(),
                score,
                created_at: now,
                use_count: 1,
            });
        rec.composition = composition.to_vec();
        rec.score = score;
        Ok(rec.clone())
    }
}

/// One scored (group, composition) candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub composition: Vec<OperationRef>,
    pub score: MatchScore,
}

/// Ranking: higher combined, then shorter composition, then lexicographic refs.
pub fn rank_candidates(a: &Candidate, b: &Candidate) -> Ordering {
    let diff = b.score.combined - a.score.combined;
    if diff.abs() > SCORE_EPSILON {
        return if diff > 0.0 {
            Ordering::Greater
        } else {
            Ordering::Less
        };
    }
    a.composition
        .len()
        .cmp(&b.composition.len())
        .then_with(|| a.composition.cmp(&b.composition))
}

/// Stub service that mirrors an uncovered activity's annotation.
pub fn stub_for(activity: &str, ann: &Annotation) -> ServiceDescriptor {
    ServiceDescriptor {
        id: stub_id(activity),
        name: format!("human task for {activity}"),
        endpoint: STUB_ENDPOINT.to_string(),
        partner: ann.partner.clone().unwrap_or_default(),
        domain: ann.domain.clone().unwrap_or_default(),
        nfr: ann.nfr.clone(),
        operations: vec![OperationDescriptor {
            id: "handle".to_string(),
            name: activity.to_string(),
            operation_concept: ann.operation.clone(),
            inputs: ann.inputs.clone(),
            outputs: ann.outputs.clone(),
            behaviour: None,
        }],
    }
}

pub fn stub_id(activity: &str) -> String {
    format!("stub-{activity}")
}

/// Matchmaking context over one process, registry and ontology.
pub struct Matchmaker<'a> {
    process: &'a ProcessModel,
    registry: &'a Registry,
    ontology: &'a Ontology,
    cfg: &'a MatchConfig,
    /// Prefiltered operations per activity.
    allowed: BTreeMap<String, Vec<OperationRef>>,
}

impl<'a> Matchmaker<'a> {
    /// `criteria` holds per-activity filters; activities without an entry
    /// are filtered by their own annotation (partner, domain, nfr).
    pub fn new(
        process: &'a ProcessModel,
        registry: &'a Registry,
        ontology: &'a Ontology,
        cfg: &'a MatchConfig,
        criteria: &BTreeMap<String, FilterCriteria>,
    ) -> Result<Self, MatchError> {
        cfg.validate()?;
        for a in process.activities() {
            let ann = process.annotation(a).expect("activities are annotated");
            ontology.check_known(&ann.operation)?;
            for t in ann.inputs.iter().chain(&ann.outputs) {
                ontology.check_known(&t.concept)?;
            }
        }
        for s in registry.services() {
            for op in &s.operations {
                ontology.check_known(&op.operation_concept)?;
                for c in op.behaviour.iter().flatten() {
                    ontology.check_known(c)?;
                }
                for t in op.inputs.iter().chain(&op.outputs) {
                    ontology.check_known(&t.concept)?;
                }
            }
        }
        let allowed = process
            .activities()
            .iter()
            .map(|a| {
                let c = criteria.get(a).cloned().unwrap_or_else(|| {
                    FilterCriteria::from_annotation(process.annotation(a).expect("annotated"))
                });
                (a.clone(), registry.prefilter(&c))
            })
            .collect();
        Ok(Self {
            process,
            registry,
            ontology,
            cfg,
            allowed,
        })
    }

    pub fn config(&self) -> &MatchConfig {
        self.cfg
    }

    /// Operations allowed for every member of the group.
    pub fn operations_for(&self, group: &ActivityGroup) -> Vec<OperationRef> {
        let mut iter = group.activity_ids.iter().map(|a| &self.allowed[a]);
        let Some(first) = iter.next() else {
            return Vec::new();
        };
        let mut set: Vec<OperationRef> = first.clone();
        for other in iter {
            let other: BTreeSet<&OperationRef> = other.iter().collect();
            set.retain(|o| other.contains(o));
        }
        set
    }

    fn resolve(&self, refs: &[OperationRef]) -> Result<Vec<&'a OperationDescriptor>, MatchError> {
        refs.iter()
            .map(|r| {
                self.registry
                    .operation(r)
                    .ok_or_else(|| MatchError::UnknownOperation(r.clone()))
            })
            .collect()
    }

    pub fn score(
        &self,
        group: &ActivityGroup,
        composition: &[OperationRef],
    ) -> Result<Scored, MatchError> {
        let ops = self.resolve(composition)?;
        Ok(score_pair(
            group,
            &ops,
            self.ontology,
            self.cfg,
            self.process,
        )?)
    }

    /// Every accepted candidate for a group, best first.
    pub fn ranked_candidates(&self, group: &ActivityGroup) -> Result<Vec<Candidate>, MatchError> {
        let ops = self.operations_for(group);
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(self.cfg.m);
        let mut used = vec![false; ops.len()];
        self.extend_compositions(group, &ops, &mut current, &mut used, &mut out)?;
        out.sort_by(rank_candidates);
        Ok(out)
    }

    fn extend_compositions(
        &self,
        group: &ActivityGroup,
        ops: &[OperationRef],
        current: &mut Vec<OperationRef>,
        used: &mut [bool],
        out: &mut Vec<Candidate>,
    ) -> Result<(), MatchError> {
        if !current.is_empty() {
            if let Scored::Score(s) = self.score(group, current)? {
                if self.cfg.accepts(&s) {
                    out.push(Candidate {
                        composition: current.clone(),
                        score: s,
                    });
                }
            }
        }
        // members beyond the group size can never all be used
        if current.len() == self.cfg.m || current.len() == group.len() {
            return Ok(());
        }
        for i in 0..ops.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            current.push(ops[i].clone());
            self.extend_compositions(group, ops, current, used, out)?;
            current.pop();
            used[i] = false;
        }
        Ok(())
    }

    /// Full three-step matchmaking. Fresh successful assignments are stored
    /// in `db` with creation time `now`.
    pub fn match_process(
        &self,
        db: &mut PatternDatabase,
        now: u64,
    ) -> Result<MatchPlan, MatchError> {
        let p = self.process;
        let n = p.activities().len();
        let groups = p.enumerate_groups(self.cfg.k);
        let pos = |g: &ActivityGroup| p.position(&g.activity_ids[0]).expect("known activity");
        let mut claimed = vec![false; n];
        let mut assignments = Vec::new();

        // (i) pattern reuse, largest groups first
        let mut by_size: Vec<&ActivityGroup> = groups.iter().collect();
        by_size.sort_by_key(|g| (std::cmp::Reverse(g.len()), pos(g)));
        for g in by_size {
            let start = pos(g);
            if (start..start + g.len()).any(|i| claimed[i]) {
                continue;
            }
            let signature = group_signature(p, g);
            let Some(rec) = db.get(&signature) else {
                continue;
            };
            let allowed: BTreeSet<OperationRef> = self.operations_for(g).into_iter().collect();
            if rec.composition.is_empty()
                || rec.composition.len() > self.cfg.m
                || !rec.composition.iter().all(|r| allowed.contains(r))
            {
                continue;
            }
            let composition = rec.composition.clone();
            let Scored::Score(score) = self.score(g, &composition)? else {
                continue;
            };
            if !self.cfg.accepts(&score) {
                continue;
            }
            db.lookup_pattern(&signature);
            claimed[start..start + g.len()].fill(true);
            assignments.push(Assignment {
                group: g.clone(),
                signature,
                composition,
                score,
                provenance: Provenance::Pattern,
            });
        }

        // (ii) fresh matching over unclaimed activities
        let mut starting_at: Vec<Vec<(ActivityGroup, String, Candidate)>> = vec![Vec::new(); n];
        for g in &groups {
            let start = pos(g);
            if (start..start + g.len()).any(|i| claimed[i]) {
                continue;
            }
            debug_assert!(g
                .activity_ids
                .iter()
                .enumerate()
                .all(|(off, a)| p.position(a) == Some(start + off)));
            if let Some(best) = self.ranked_candidates(g)?.into_iter().next() {
                starting_at[start].push((g.clone(), group_signature(p, g), best));
            }
        }
        let fresh = select_cover(n, &claimed, &starting_at);
        for (g, signature, cand) in fresh {
            db.store_pattern(&signature, &cand.composition, cand.score, self.cfg, now)?;
            assignments.push(Assignment {
                group: g,
                signature,
                composition: cand.composition,
                score: cand.score,
                provenance: Provenance::Fresh,
            });
        }
        assignments.sort_by_key(|a| pos(&a.group));

        // (iii) uncovered activities
        let covered: BTreeSet<&str> = assignments
            .iter()
            .flat_map(|a| a.group.activity_ids.iter().map(String::as_str))
            .collect();
        let uncovered: Vec<String> = p
            .activities()
            .iter()
            .filter(|a| !covered.contains(a.as_str()))
            .cloned()
            .collect();
        let stubs = uncovered
            .iter()
            .map(|a| stub_for(a, p.annotation(a).expect("annotated")))
            .collect();
        Ok(MatchPlan {
            assignments,
            uncovered,
            stubs,
        })
    }
}

#[derive(Clone)]
struct Partial {
    total: f64,
    length: usize,
    /// (signature, activity ids) of chosen groups in position order.
    keys: Vec<(String, Vec<String>)>,
    /// Chosen (group start, index into starting_at[start]).
    picks: Vec<(usize, usize)>,
}

/// Ordering of complete selections: higher total, then shorter total
/// composition, then lexicographically smaller group keys.
fn better(a: &Partial, b: &Partial) -> bool {
    let diff = a.total - b.total;
    if diff.abs() > SCORE_EPSILON {
        return diff > 0.0;
    }
    match a.length.cmp(&b.length) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.keys < b.keys,
    }
}

/// Exact weighted interval selection over activity positions.
fn select_cover(
    n: usize,
    claimed: &[bool],
    starting_at: &[Vec<(ActivityGroup, String, Candidate)>],
) -> Vec<(ActivityGroup, String, Candidate)> {
    let empty = Partial {
        total: 0.0,
        length: 0,
        keys: Vec::new(),
        picks: Vec::new(),
    };
    let mut best: Vec<Partial> = vec![empty; n + 1];
    for i in (0..n).rev() {
        let mut choice = best[i + 1].clone();
        if !claimed[i] {
            for (idx, (g, sig, cand)) in starting_at[i].iter().enumerate() {
                let tail = &best[i + g.len()];
                let mut keys = Vec::with_capacity(tail.keys.len() + 1);
                keys.push((sig.clone(), g.activity_ids.clone()));
                keys.extend(tail.keys.iter().cloned());
                let mut picks = vec![(i, idx)];
                picks.extend(tail.picks.iter().copied());
                let option = Partial {
                    total: cand.score.combined + tail.total,
                    length: cand.composition.len() + tail.length,
                    keys,
                    picks,
                };
                if better(&option, &choice) {
                    choice = option;
                }
            }
        }
        best[i] = choice;
    }
    best[0]
        .picks
        .iter()
        .map(|&(i, idx)| starting_at[i][idx].clone())
        .collect()
}

/// Convenience wrapper over [`Matchmaker::match_process`].
pub fn match_process(
    process: &ProcessModel,
    registry: &Registry,
    ontology: &Ontology,
    db: &mut PatternDatabase,
    cfg: &MatchConfig,
    criteria: &BTreeMap<String, FilterCriteria>,
    now: u64,
) -> Result<MatchPlan, MatchError> {
    Matchmaker::new(process, registry, ontology, cfg, criteria)?.match_process(db, now)
}
