use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use mediator_core::datarecon::{
    apply_transformation, DataReconError, FormatDb, MediationDb, Message, TableDb,
    TransformationSpec, UnitDb,
};
use mediator_core::matchmaker::{MatchConfig, Matchmaker, PatternDatabase};
use mediator_core::ontology::Ontology;
use mediator_core::pipeline::{compile, CompileInputs};
use mediator_core::procmodel::ProcessModel;
use mediator_core::registry::Registry;
use mediator_core::simulate::{simulate, MockDb};
use mediator_core::textsim::Metric;
use mediator_core::wfgen::parse_workflow;

#[derive(Parser)]
#[command(
    name = "mediator",
    version,
    about = "Compile annotated business processes into executable workflows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match, generate transformations and write the workflow.
    Compile(CompileArgs),
    /// Print the match plan only.
    Match(MatchArgs),
    /// Apply one transformation spec to a message.
    Transform(TransformArgs),
    /// Run a compiled workflow against mock services.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Sources {
    #[arg(long)]
    process: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    ontology: PathBuf,
    /// Format decompositions; the shipped database when absent.
    #[arg(long)]
    formats: Option<PathBuf>,
    /// Unit conversions; the shipped database when absent.
    #[arg(long)]
    units: Option<PathBuf>,
    #[arg(long)]
    tables: Option<PathBuf>,
    /// Pattern database, created when missing and saved after the run.
    #[arg(long)]
    patterns: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    metric: Option<Metric>,
    /// Per-activity filter criteria, keyed by activity id.
    #[arg(long)]
    criteria: Option<PathBuf>,
    /// Run-independent output: zero timestamps, no timings or cache provenance.
    #[arg(long)]
    canonical: bool,
}

#[derive(Args)]
struct CompileArgs {
    #[command(flatten)]
    sources: Sources,
    #[arg(long)]
    out_dir: PathBuf,
    /// Report path; `<out-dir>/report.json` when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct MatchArgs {
    #[command(flatten)]
    sources: Sources,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    message: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory written by `compile`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Workflow document; `<out-dir>/workflow.xml` when absent.
    #[arg(long)]
    workflow: Option<PathBuf>,
    #[arg(long)]
    mocks: PathBuf,
    #[arg(long)]
    message: PathBuf,
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    /// Registry used to check that every mock targets a real operation.
    #[arg(long)]
    registry: Option<PathBuf>,
}

/// Successful runs that still leave work for a person.
const PARTIAL: u8 = 2;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn parse<T, E: std::error::Error + Send + Sync + 'static>(
    path: &Path,
    f: impl FnOnce(&str) -> Result<T, E>,
) -> Result<T> {
    f(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    parse(path, |t| serde_json::from_str(t))
}

struct Loaded {
    process: ProcessModel,
    registry: Registry,
    ontology: Ontology,
    mediation: MediationDb,
    config: MatchConfig,
    criteria: BTreeMap<String, mediator_core::registry::FilterCriteria>,
    patterns: PatternDatabase,
}

impl Sources {
    fn load(&self) -> Result<Loaded> {
        let mut config = match &self.config {
            Some(p) => parse(p, MatchConfig::from_json)?,
            None => MatchConfig::default(),
        };
        config.alpha = self.alpha.unwrap_or(config.alpha);
        config.sigma = self.sigma.unwrap_or(config.sigma);
        config.tau = self.tau.unwrap_or(config.tau);
        config.k = self.k.unwrap_or(config.k);
        config.m = self.m.unwrap_or(config.m);
        config.metric = self.metric.unwrap_or(config.metric);
        config.validate().context("configuration")?;

        let mut mediation = MediationDb::defaults();
        if let Some(p) = &self.formats {
            mediation.formats = parse(p, FormatDb::from_json)?;
        }
        if let Some(p) = &self.units {
            mediation.units = parse(p, UnitDb::from_json)?;
        }
        if let Some(p) = &self.tables {
            mediation.tables = parse(p, TableDb::from_json)?;
        }
        let patterns = match &self.patterns {
            Some(p) if p.exists() => {
                PatternDatabase::load(p).with_context(|| format!("in {}", p.display()))?
            }
            _ => PatternDatabase::new(),
        };
        Ok(Loaded {
            process: parse(&self.process, ProcessModel::from_json)?,
            registry: parse(&self.registry, Registry::from_json)?,
            ontology: parse(&self.ontology, Ontology::from_json)?,
            mediation,
            config,
            criteria: match &self.criteria {
                Some(p) => json_file(p)?,
                None => BTreeMap::new(),
            },
            patterns,
        })
    }

    fn now(&self) -> u64 {
        if self.canonical {
            return 0;
        }
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    }

    fn save_patterns(&self, db: &PatternDatabase) -> Result<()> {
        if let Some(p) = &self.patterns {
            db.save(p)
                .with_context(|| format!("saving {}", p.display()))?;
        }
        Ok(())
    }
}

fn exit(complete: bool) -> ExitCode {
    if complete {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(PARTIAL)
    }
}

fn cmd_compile(args: &CompileArgs) -> Result<ExitCode> {
    let s = &args.sources;
    let mut l = s.load()?;
    let inputs = CompileInputs {
        process: &l.process,
        registry: &l.registry,
        ontology: &l.ontology,
        mediation: &l.mediation,
        config: &l.config,
        criteria: &l.criteria,
    };
    let out = compile(&inputs, &mut l.patterns, s.now())?;

    let specs_dir = args.out_dir.join("specs");
    fs::create_dir_all(&specs_dir).with_context(|| format!("creating {}", specs_dir.display()))?;
    write(&args.out_dir.join("workflow.xml"), &out.workflow_xml)?;
    for (id, spec) in &out.specs {
        write(&specs_dir.join(format!("{id}.json")), &spec.to_json())?;
    }
    for (id, xslt) in &out.stylesheets {
        write(&specs_dir.join(format!("{id}.xslt")), xslt)?;
    }
    write(
        &args.out_dir.join("stubs.json"),
        &serde_json::to_string_pretty(out.stubs())?,
    )?;
    let report = if s.canonical {
        out.report.canonical()
    } else {
        out.report.clone()
    };
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out_dir.join("report.json"));
    write(&report_path, &report.to_json())?;
    s.save_patterns(&l.patterns)?;

    println!(
        "{}: {} assignment(s), {} uncovered, {} unbound, total score {:.6}",
        report.process,
        report.assignments.len(),
        report.uncovered.len(),
        report.unbound.len(),
        report.total_score
    );
    Ok(exit(report.complete))
}

fn cmd_match(args: &MatchArgs) -> Result<ExitCode> {
    let s = &args.sources;
    let mut l = s.load()?;
    let mm = Matchmaker::new(&l.process, &l.registry, &l.ontology, &l.config, &l.criteria)?;
    let plan = mm.match_process(&mut l.patterns, s.now())?;
    s.save_patterns(&l.patterns)?;
    let mut value = serde_json::to_value(&plan)?;
    if s.canonical {
        for a in value["assignments"].as_array_mut().into_iter().flatten() {
            a.as_object_mut().map(|o| o.remove("provenance"));
        }
    }
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(exit(plan.is_complete()))
}

fn load_message(path: &Path) -> Result<Message> {
    json_file(path)
}

fn cmd_transform(args: &TransformArgs) -> Result<ExitCode> {
    let spec = parse(&args.spec, TransformationSpec::from_json)?;
    let msg = load_message(&args.message)?;
    match apply_transformation(&spec, &msg) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ DataReconError::Unbound(_)) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(PARTIAL))
        }
        Err(e) => Err(e.into()),
    }
}

fn load_specs(dir: &Path) -> Result<BTreeMap<String, TransformationSpec>> {
    let mut specs = BTreeMap::new();
    if !dir.exists() {
        return Ok(specs);
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.sort();
    for p in paths
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
    {
        let spec = parse(&p, TransformationSpec::from_json)?;
        specs.insert(spec.id.clone(), spec);
    }
    Ok(specs)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let wf_path = args
        .workflow
        .clone()
        .unwrap_or_else(|| args.out_dir.join("workflow.xml"));
    let wf = parse(&wf_path, parse_workflow)?;
    let specs = load_specs(&args.out_dir.join("specs"))?;
    let mocks = parse(&args.mocks, MockDb::from_json)?;
    if let Some(r) = &args.registry {
        mocks.check(&parse(r, Registry::from_json)?)?;
    }
    let prompts: BTreeMap<String, Message> = match &args.prompt_file {
        Some(p) => json_file(p)?,
        None => BTreeMap::new(),
    };
    let initial = load_message(&args.message)?;
    match simulate(&wf, &specs, &mocks, &prompts, &initial) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Err(e) if e.needs_human() => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(PARTIAL))
        }
        Err(e) => Err(anyhow!(e)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Compile(a) => cmd_compile(a),
        Command::Match(a) => cmd_match(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
