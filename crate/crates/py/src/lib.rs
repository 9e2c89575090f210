//! Python module `mediator`: ontology reasoning, similarity, process
//! grouping, compilation, transformation and simulation.

use std::collections::BTreeMap;

use mediator_core::datarecon::{
    apply_transformation, render_xslt, FormatDb, MediationDb, Message, UnitDb,
};
use mediator_core::matchmaker::MatchConfig;
use mediator_core::pipeline::{self, CompileInputs};
use mediator_core::simulate::MockDb;
use mediator_core::textsim::{self, Metric};
use mediator_core::{datarecon, matchmaker, ontology, procmodel, registry, wfgen};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(mediator, MediatorError, PyException);
create_exception!(mediator, NeedsHumanInput, MediatorError);

fn err(e: impl std::fmt::Display) -> PyErr {
    MediatorError::new_err(e.to_string())
}

#[pyclass(frozen)]
pub struct Ontology(ontology::Ontology);

#[pymethods]
impl Ontology {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ontology::Ontology::from_json(text).map(Self).map_err(err)
    }

    /// "exact", "plugin", "subsumes" or "fail".
    fn degree(&self, requested: &str, offered: &str) -> PyResult<String> {
        self.0
            .degree_of_match(requested, offered)
            .map(|d| d.to_string())
            .map_err(err)
    }

    fn is_subsumed(&self, child: &str, parent: &str) -> PyResult<bool> {
        self.0.is_subsumed(child, parent).map_err(err)
    }

    fn is_equivalent(&self, a: &str, b: &str) -> PyResult<bool> {
        self.0.is_equivalent(a, b).map_err(err)
    }

    fn concepts(&self) -> Vec<String> {
        self.0.concepts().map(String::from).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(frozen)]
pub struct Process(procmodel::ProcessModel);

#[pymethods]
impl Process {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        procmodel::ProcessModel::from_json(text)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    fn activities(&self) -> Vec<String> {
        self.0.activities().to_vec()
    }

    /// Valid activity groups of at most `k` members as `(ids, shape)` pairs.
    fn groups(&self, k: usize) -> Vec<(Vec<String>, String)> {
        self.0
            .enumerate_groups(k)
            .into_iter()
            .map(|g| {
                let shape = match g.shape {
                    procmodel::GroupShape::Run => "run",
                    procmodel::GroupShape::Block => "block",
                };
                (g.activity_ids, shape.to_string())
            })
            .collect()
    }
}

#[pyclass(frozen)]
pub struct Registry(registry::Registry);

#[pymethods]
impl Registry {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        registry::Registry::from_json(text).map(Self).map_err(err)
    }

    /// `service.operation` references.
    fn operations(&self) -> Vec<String> {
        self.0
            .services()
            .iter()
            .flat_map(|s| {
                s.operations
                    .iter()
                    .map(move |o| format!("{}.{}", s.id, o.id))
            })
            .collect()
    }
}

#[pyclass(from_py_object)]
#[derive(Clone)]
pub struct Config(MatchConfig);

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (*, metric=None, alpha=None, sigma=None, tau=None, k=None, m=None))]
    fn new(
        metric: Option<&str>,
        alpha: Option<f64>,
        sigma: Option<f64>,
        tau: Option<f64>,
        k: Option<usize>,
        m: Option<usize>,
    ) -> PyResult<Self> {
        let mut c = MatchConfig::default();
        if let Some(name) = metric {
            c.metric = name.parse().map_err(err)?;
        }
        c.alpha = alpha.unwrap_or(c.alpha);
        c.sigma = sigma.unwrap_or(c.sigma);
        c.tau = tau.unwrap_or(c.tau);
        c.k = k.unwrap_or(c.k);
        c.m = m.unwrap_or(c.m);
        c.validate().map_err(err)?;
        Ok(Self(c))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        MatchConfig::from_json(text).map(Self).map_err(err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("config serializes")
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m
    }

    #[getter]
    fn metric(&self) -> String {
        self.0.metric.to_string()
    }
}

#[pyclass]
pub struct PatternDatabase(matchmaker::PatternDatabase);

#[pymethods]
impl PatternDatabase {
    #[new]
    fn new() -> Self {
        Self(matchmaker::PatternDatabase::new())
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        matchmaker::PatternDatabase::load(path.as_ref())
            .map(Self)
            .map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path.as_ref()).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    /// `(signature, use_count)` for every stored pattern.
    fn use_counts(&self) -> Vec<(String, u64)> {
        self.0
            .records()
            .map(|r| (r.signature.clone(), r.use_count))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct TransformationSpec(datarecon::TransformationSpec);

#[pymethods]
impl TransformationSpec {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        datarecon::TransformationSpec::from_json(text)
            .map(Self)
            .map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn id(&self) -> String {
        self.0.id.clone()
    }

    fn target_tags(&self) -> Vec<String> {
        self.0.target_tags().into_iter().map(String::from).collect()
    }

    fn is_identity(&self) -> bool {
        self.0.is_identity()
    }

    fn apply(&self, message: Message) -> PyResult<Message> {
        apply_transformation(&self.0, &message).map_err(err)
    }

    fn to_xslt(&self) -> PyResult<String> {
        render_xslt(&self.0).map_err(err)
    }
}

#[pyclass(frozen)]
pub struct Compilation(pipeline::Compilation);

#[pymethods]
impl Compilation {
    #[getter]
    fn workflow_xml(&self) -> String {
        self.0.workflow_xml.clone()
    }

    #[getter]
    fn complete(&self) -> bool {
        self.0.is_complete()
    }

    #[getter]
    fn uncovered(&self) -> Vec<String> {
        self.0.report.uncovered.clone()
    }

    #[getter]
    fn stubs(&self) -> Vec<String> {
        self.0.report.stubs.clone()
    }

    #[getter]
    fn total_score(&self) -> f64 {
        self.0.report.total_score
    }

    fn specs(&self) -> BTreeMap<String, TransformationSpec> {
        self.0
            .specs
            .iter()
            .map(|(k, v)| (k.clone(), TransformationSpec(v.clone())))
            .collect()
    }

    fn stylesheets(&self) -> BTreeMap<String, String> {
        self.0.stylesheets.clone()
    }

    /// Report JSON; `canonical` drops timings and cache provenance.
    #[pyo3(signature = (canonical=false))]
    fn report_json(&self, canonical: bool) -> String {
        if canonical {
            self.0.report.canonical().to_json()
        } else {
            self.0.report.to_json()
        }
    }

    /// Runs the workflow against mock services; raises `NeedsHumanInput`
    /// when a human task or unbound tag has no supplied value.
    #[pyo3(signature = (mocks_json, message, prompts=None))]
    fn simulate(
        &self,
        mocks_json: &str,
        message: Message,
        prompts: Option<BTreeMap<String, Message>>,
    ) -> PyResult<Message> {
        run_simulation(
            &self.0.workflow,
            &self.0.specs,
            mocks_json,
            &message,
            prompts.unwrap_or_default(),
        )
    }
}

fn run_simulation(
    wf: &wfgen::Workflow,
    specs: &BTreeMap<String, datarecon::TransformationSpec>,
    mocks_json: &str,
    message: &Message,
    prompts: BTreeMap<String, Message>,
) -> PyResult<Message> {
    let mocks = MockDb::from_json(mocks_json).map_err(err)?;
    mediator_core::simulate::simulate(wf, specs, &mocks, &prompts, message).map_err(|e| {
        if e.needs_human() {
            NeedsHumanInput::new_err(e.to_string())
        } else {
            err(e)
        }
    })
}

#[pyfunction]
#[pyo3(signature = (a, b, metric="cosine"))]
fn similarity(a: &str, b: &str, metric: &str) -> PyResult<f64> {
    let m: Metric = metric.parse().map_err(err)?;
    Ok(textsim::similarity(
        &textsim::tokenize(a),
        &textsim::tokenize(b),
        m,
    ))
}

#[pyfunction]
#[pyo3(signature = (process, registry, ontology, config=None, patterns=None, formats_json=None, units_json=None, now=0))]
#[allow(clippy::too_many_arguments)]
fn compile(
    process: &Process,
    registry: &Registry,
    ontology: &Ontology,
    config: Option<Config>,
    mut patterns: Option<PyRefMut<'_, PatternDatabase>>,
    formats_json: Option<&str>,
    units_json: Option<&str>,
    now: u64,
) -> PyResult<Compilation> {
    let mut mediation = MediationDb::defaults();
    if let Some(t) = formats_json {
        mediation.formats = FormatDb::from_json(t).map_err(err)?;
    }
    if let Some(t) = units_json {
        mediation.units = UnitDb::from_json(t).map_err(err)?;
    }
    let config = config.map(|c| c.0).unwrap_or_default();
    let criteria = BTreeMap::new();
    let inputs = CompileInputs {
        process: &process.0,
        registry: &registry.0,
        ontology: &ontology.0,
        mediation: &mediation,
        config: &config,
        criteria: &criteria,
    };
    let mut scratch = matchmaker::PatternDatabase::new();
    let db = match patterns.as_mut() {
        Some(p) => &mut p.0,
        None => &mut scratch,
    };
    pipeline::compile(&inputs, db, now)
        .map(Compilation)
        .map_err(err)
}

/// Simulates a serialized workflow with specs given as `{id: json}`.
#[pyfunction]
#[pyo3(signature = (workflow_xml, specs, mocks_json, message, prompts=None))]
fn simulate(
    workflow_xml: &str,
    specs: BTreeMap<String, String>,
    mocks_json: &str,
    message: Message,
    prompts: Option<BTreeMap<String, Message>>,
) -> PyResult<Message> {
    let wf = wfgen::parse_workflow(workflow_xml).map_err(err)?;
    let specs = specs
        .into_iter()
        .map(|(id, text)| datarecon::TransformationSpec::from_json(&text).map(|s| (id, s)))
        .collect::<Result<BTreeMap<_, _>, _>>()
        .map_err(err)?;
    run_simulation(
        &wf,
        &specs,
        mocks_json,
        &message,
        prompts.unwrap_or_default(),
    )
}

#[pymodule]
pub fn mediator(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MediatorError", m.py().get_type::<MediatorError>())?;
    m.add("NeedsHumanInput", m.py().get_type::<NeedsHumanInput>())?;
    m.add_class::<Ontology>()?;
    m.add_class::<Process>()?;
    m.add_class::<Registry>()?;
    m.add_class::<Config>()?;
    m.add_class::<PatternDatabase>()?;
    m.add_class::<TransformationSpec>()?;
    m.add_class::<Compilation>()?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(compile, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
