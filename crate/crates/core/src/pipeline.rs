//! End-to-end compilation: match, generate transformations, build the
//! workflow and summarize the outcome.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::datarecon::{
    generate_transformation_spec, render_xslt, DataReconError, MediationDb, TransformationSpec,
    XsltError,
};
use crate::matchmaker::{
    group_signature, Assignment, Candidate, MatchConfig, MatchError, MatchPlan, Matchmaker,
    PatternDatabase, Provenance,
};
use crate::ontology::Ontology;
use crate::procmodel::{ActivityGroup, Element, GroupShape, ProcessModel, TagSpec};
use crate::registry::{FilterCriteria, Registry, ServiceDescriptor};
use crate::wfgen::{generate_workflow, serialize_workflow, spec_id, Workflow, WorkflowError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("transformation `{spec}`: {source}")]
    Transformation {
        spec: String,
        source: DataReconError,
    },
    #[error("stylesheet `{spec}`: {source}")]
    Stylesheet { spec: String, source: XsltError },
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentReport {
    pub activities: Vec<String>,
    pub shape: GroupShape,
    pub composition: Vec<String>,
    pub logic: f64,
    pub syntactic: f64,
    pub io_integrity: f64,
    pub combined: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnboundReport {
    pub spec: String,
    pub operation: String,
    pub tag: String,
    pub concept: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedStylesheet {
    pub spec: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompileReport {
    pub process: String,
    pub complete: bool,
    pub total_score: f64,
    pub assignments: Vec<AssignmentReport>,
    pub uncovered: Vec<String>,
    pub stubs: Vec<String>,
    pub unbound: Vec<UnboundReport>,
    pub stylesheets_skipped: Vec<SkippedStylesheet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

impl CompileReport {
    /// Drops run-dependent fields (timings, cache provenance).
    pub fn canonical(&self) -> Self {
        let mut r = self.clone();
        r.timings_ms = None;
        for a in &mut r.assignments {
            a.provenance = None;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct Compilation {
    pub plan: MatchPlan,
    pub workflow: Workflow,
    pub workflow_xml: String,
    pub specs: BTreeMap<String, TransformationSpec>,
    pub stylesheets: BTreeMap<String, String>,
    pub report: CompileReport,
}

impl Compilation {
    pub fn is_complete(&self) -> bool {
        self.report.complete
    }

    pub fn stubs(&self) -> &[ServiceDescriptor] {
        &self.plan.stubs
    }
}

/// Everything the compiler reads besides the pattern database.
pub struct CompileInputs<'a> {
    pub process: &'a ProcessModel,
    pub registry: &'a Registry,
    pub ontology: &'a Ontology,
    pub mediation: &'a MediationDb,
    pub config: &'a MatchConfig,
    pub criteria: &'a BTreeMap<String, FilterCriteria>,
}

fn merge_tags(into: &mut Vec<TagSpec>, tags: &[TagSpec]) {
    for t in tags {
        match into.iter_mut().find(|x| x.tag == t.tag) {
            Some(slot) => *slot = t.clone(),
            None => into.push(t.clone()),
        }
    }
}

struct SpecWalk<'a> {
    inputs: &'a CompileInputs<'a>,
    by_activity: BTreeMap<&'a str, &'a Assignment>,
    specs: BTreeMap<String, TransformationSpec>,
}

impl<'a> SpecWalk<'a> {
    fn group(&mut self, a: &Assignment, available: &mut Vec<TagSpec>) -> Result<(), PipelineError> {
        let mut local = available.clone();
        for op in &a.composition {
            let desc = self
                .inputs
                .registry
                .operation(op)
                .ok_or_else(|| MatchError::UnknownOperation(op.clone()))?;
            let id = spec_id(&a.group, op);
            let spec = generate_transformation_spec(
                id.clone(),
                op.clone(),
                &desc.inputs,
                &local,
                self.inputs.ontology,
                self.inputs.mediation,
                self.inputs.config,
            )
            .map_err(|source| PipelineError::Transformation {
                spec: id.clone(),
                source,
            })?;
            self.specs.insert(id, spec);
            merge_tags(&mut local, &desc.outputs);
        }
        *available = local;
        Ok(())
    }

    fn elements(
        &mut self,
        elements: &[Element],
        available: &mut Vec<TagSpec>,
    ) -> Result<(), PipelineError> {
        let mut i = 0;
        while i < elements.len() {
            match &elements[i] {
                Element::Activity(id) => match self.by_activity.get(id.as_str()).copied() {
                    Some(a) => {
                        self.group(a, available)?;
                        i += a.group.len().max(1);
                    }
                    None => {
                        if let Some(ann) = self.inputs.process.annotation(id) {
                            merge_tags(available, &ann.outputs);
                        }
                        i += 1;
                    }
                },
                e @ Element::Gateway(g) => {
                    let members = e.activities();
                    let block = members
                        .first()
                        .and_then(|m| self.by_activity.get(m.as_str()).copied())
                        .filter(|a| {
                            a.group.shape == GroupShape::Block && a.group.activity_ids == members
                        });
                    if let Some(a) = block {
                        self.group(a, available)?;
                    } else {
                        let base = available.clone();
                        for b in &g.branches {
                            let mut local = base.clone();
                            self.elements(&b.elements, &mut local)?;
                            merge_tags(available, &local);
                        }
                    }
                    i += 1;
                }
            }
        }
        Ok(())
    }
}

/// One transformation spec per composition member, fed by the tags known
/// at that point of the process: start outputs, earlier invocations and
/// human tasks, and every branch of a completed gateway block.
pub fn generate_specs(
    inputs: &CompileInputs<'_>,
    plan: &MatchPlan,
) -> Result<BTreeMap<String, TransformationSpec>, PipelineError> {
    let mut walk = SpecWalk {
        inputs,
        by_activity: plan
            .assignments
            .iter()
            .flat_map(|a| a.group.activity_ids.iter().map(move |id| (id.as_str(), a)))
            .collect(),
        specs: BTreeMap::new(),
    };
    let mut available = inputs.process.initial_outputs();
    walk.elements(inputs.process.tree(), &mut available)?;
    Ok(walk.specs)
}

pub fn compile(
    inputs: &CompileInputs<'_>,
    patterns: &mut PatternDatabase,
    now: u64,
) -> Result<Compilation, PipelineError> {
    let mut timings = BTreeMap::new();
    let mut lap = Instant::now();
    let mut tick = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), lap.elapsed().as_secs_f64() * 1e3);
        lap = Instant::now();
    };

    let mm = Matchmaker::new(
        inputs.process,
        inputs.registry,
        inputs.ontology,
        inputs.config,
        inputs.criteria,
    )?;
    let plan = mm.match_process(patterns, now)?;
    tick("match", &mut timings);

    let specs = generate_specs(inputs, &plan)?;
    let mut stylesheets = BTreeMap::new();
    let mut skipped = Vec::new();
    for (id, spec) in &specs {
        match render_xslt(spec) {
            Ok(text) => {
                stylesheets.insert(id.clone(), text);
            }
            Err(e @ XsltError::UnsupportedPattern { .. }) => skipped.push(SkippedStylesheet {
                spec: id.clone(),
                reason: e.to_string(),
            }),
            Err(source) => {
                return Err(PipelineError::Stylesheet {
                    spec: id.clone(),
                    source,
                })
            }
        }
    }
    tick("transform", &mut timings);

    let workflow = generate_workflow(inputs.process, &plan, &specs)?;
    let workflow_xml = serialize_workflow(&workflow)?;
    tick("workflow", &mut timings);

    let unbound: Vec<UnboundReport> = specs
        .values()
        .flat_map(|s| {
            s.unbound.iter().map(move |u| UnboundReport {
                spec: s.id.clone(),
                operation: s.operation.to_string(),
                tag: u.tag.clone(),
                concept: u.concept.clone(),
                reason: u.reason.clone(),
            })
        })
        .collect();
    let report = CompileReport {
        process: inputs.process.name().to_string(),
        complete: plan.is_complete() && unbound.is_empty(),
        total_score: plan.total_score(),
        assignments: plan
            .assignments
            .iter()
            .map(|a| AssignmentReport {
                activities: a.group.activity_ids.clone(),
                shape: a.group.shape,
                composition: a.composition.iter().map(ToString::to_string).collect(),
                logic: a.score.logic,
                syntactic: a.score.syntactic,
                io_integrity: a.score.io_integrity,
                combined: a.score.combined,
                provenance: Some(a.provenance),
            })
            .collect(),
        uncovered: plan.uncovered.clone(),
        stubs: plan.stubs.iter().map(|s| s.id.clone()).collect(),
        unbound,
        stylesheets_skipped: skipped,
        timings_ms: Some(timings),
    };
    Ok(Compilation {
        plan,
        workflow,
        workflow_xml,
        specs,
        stylesheets,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupExplanation {
    pub group: ActivityGroup,
    pub signature: String,
    pub candidates: Vec<Candidate>,
}

/// Ranked candidates for every valid group, in enumeration order.
pub fn explain(inputs: &CompileInputs<'_>) -> Result<Vec<GroupExplanation>, PipelineError> {
    let mm = Matchmaker::new(
        inputs.process,
        inputs.registry,
        inputs.ontology,
        inputs.config,
        inputs.criteria,
    )?;
    inputs
        .process
        .enumerate_groups(inputs.config.k)
        .into_iter()
        .map(|g| {
            Ok(GroupExplanation {
                signature: group_signature(inputs.process, &g),
                candidates: mm.ranked_candidates(&g)?,
                group: g,
            })
        })
        .collect()
}
