//! Random block-structured processes and brute-force oracles shared by the
//! property suites.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::Rng;
use serde_json::{json, Value};

/// Shape of a generated process before it is flattened into nodes/edges.
#[derive(Debug, Clone)]
pub enum Shape {
    Act(String),
    Par(Vec<Vec<Shape>>),
    Xor(Vec<Vec<Shape>>),
}

pub struct GenProcess {
    pub json: String,
    pub activities: Vec<String>,
    /// Adjacency over node ids.
    pub edges: Vec<(String, String)>,
    pub kinds: BTreeMap<String, String>,
}

fn gen_seq(
    rng: &mut StdRng,
    budget: &mut usize,
    depth: usize,
    counter: &mut usize,
    gateways: bool,
) -> Vec<Shape> {
    let mut out = Vec::new();
    let len = rng.gen_range(1..=3);
    for _ in 0..len {
        if *budget == 0 {
            break;
        }
        if gateways && depth < 2 && *budget >= 2 && rng.gen_bool(0.3) {
            let n = rng.gen_range(2..=3);
            let mut branches = Vec::new();
            for _ in 0..n {
                if *budget == 0 {
                    break;
                }
                let b = gen_seq(rng, budget, depth + 1, counter, gateways);
                if !b.is_empty() {
                    branches.push(b);
                }
            }
            if branches.len() >= 2 {
                out.push(if rng.gen_bool(0.5) {
                    Shape::Par(branches)
                } else {
                    Shape::Xor(branches)
                });
            } else {
                out.extend(branches.into_iter().flatten());
            }
        } else {
            *counter += 1;
            *budget -= 1;
            out.push(Shape::Act(format!("a{}", *counter)));
        }
    }
    out
}

/// Random shape with between 1 and `max_acts` activities.
pub fn random_shape(rng: &mut StdRng, max_acts: usize, gateways: bool) -> Vec<Shape> {
    loop {
        let mut budget = rng.gen_range(1..=max_acts);
        let mut counter = 0;
        let s = gen_seq(rng, &mut budget, 0, &mut counter, gateways);
        if !s.is_empty() {
            return s;
        }
    }
}

pub type Annotate<'a> = &'a mut dyn FnMut(&str) -> Value;

struct Flat<'a> {
    nodes: Vec<Value>,
    edges: Vec<Value>,
    plain_edges: Vec<(String, String)>,
    kinds: BTreeMap<String, String>,
    activities: Vec<String>,
    gw: usize,
    annotate: Annotate<'a>,
}

impl Flat<'_> {
    fn edge(&mut self, from: &str, to: &str, cond: Option<String>) {
        match cond {
            Some(c) => self.edges.push(json!([from, to, c])),
            None => self.edges.push(json!([from, to])),
        }
        self.plain_edges.push((from.to_string(), to.to_string()));
    }

    /// Emits the sequence after `entry`; returns the last node id.
    fn seq(&mut self, shapes: &[Shape], entry: &str, mut cond: Option<String>) -> String {
        let mut prev = entry.to_string();
        for s in shapes {
            match s {
                Shape::Act(id) => {
                    let ann = (self.annotate)(id);
                    self.nodes
                        .push(json!({"id": id, "kind": "activity", "annotation": ann}));
                    self.kinds.insert(id.clone(), "activity".into());
                    self.activities.push(id.clone());
                    self.edge(&prev, id, cond.take());
                    prev = id.clone();
                }
                Shape::Par(bs) | Shape::Xor(bs) => {
                    self.gw += 1;
                    let ty = if matches!(s, Shape::Par(_)) {
                        "parallel"
                    } else {
                        "exclusive"
                    };
                    let split = format!("g{}s", self.gw);
                    let join = format!("g{}j", self.gw);
                    self.nodes
                        .push(json!({"id": split, "kind": "gateway_split", "gateway_type": ty}));
                    self.kinds.insert(split.clone(), "split".into());
                    self.edge(&prev, &split, cond.take());
                    let mut ends = Vec::new();
                    for (i, b) in bs.iter().enumerate() {
                        let c = (ty == "exclusive").then(|| format!("{split}={i}"));
                        ends.push(self.seq(b, &split, c));
                    }
                    self.nodes
                        .push(json!({"id": join, "kind": "gateway_join", "gateway_type": ty}));
                    self.kinds.insert(join.clone(), "join".into());
                    for e in ends {
                        self.edge(&e, &join, None);
                    }
                    prev = join;
                }
            }
        }
        prev
    }
}

pub fn flatten(
    shapes: &[Shape],
    name: &str,
    start_outputs: Value,
    annotate: Annotate<'_>,
) -> GenProcess {
    let mut f = Flat {
        nodes: vec![
            json!({"id": "start", "kind": "start", "annotation": {"operation": "Start", "outputs": start_outputs}}),
        ],
        edges: Vec::new(),
        plain_edges: Vec::new(),
        kinds: BTreeMap::new(),
        activities: Vec::new(),
        gw: 0,
        annotate,
    };
    f.kinds.insert("start".into(), "start".into());
    let last = f.seq(shapes, "start", None);
    f.nodes.push(json!({"id": "end", "kind": "end"}));
    f.kinds.insert("end".into(), "end".into());
    f.edge(&last, "end", None);
    let doc = json!({"name": name, "nodes": f.nodes, "edges": f.edges});
    GenProcess {
        json: serde_json::to_string(&doc).unwrap(),
        activities: f.activities,
        edges: f.plain_edges,
        kinds: f.kinds,
    }
}

impl GenProcess {
    fn succ(&self, n: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|(a, _)| a == n)
            .map(|(_, b)| b.as_str())
            .collect()
    }

    fn reachable(&self, from: &str, blocked: Option<&str>) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from.to_string()];
        while let Some(n) = stack.pop() {
            for s in self.succ(&n) {
                if Some(s) == blocked {
                    continue;
                }
                if seen.insert(s.to_string()) {
                    stack.push(s.to_string());
                }
            }
        }
        seen
    }

    /// Nearest node every path from `split` to the end passes through.
    fn post_dominator(&self, split: &str) -> String {
        let reach = self.reachable(split, None);
        let mut best: Option<(usize, String)> = None;
        for cand in &reach {
            if cand == "end" {
                continue;
            }
            if self.reachable(split, Some(cand)).contains("end") {
                continue;
            }
            // distance by BFS
            let mut frontier = vec![split.to_string()];
            let mut dist = 0;
            let mut seen = BTreeSet::new();
            'bfs: loop {
                dist += 1;
                let mut next = Vec::new();
                for n in &frontier {
                    for s in self.succ(n) {
                        if s == cand {
                            break 'bfs;
                        }
                        if seen.insert(s.to_string()) {
                            next.push(s.to_string());
                        }
                    }
                }
                frontier = next;
            }
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, cand.clone()));
            }
        }
        best.map(|b| b.1).unwrap_or_else(|| "end".into())
    }

    /// Split id and activity set of every gateway block, from graph reachability.
    pub fn blocks(&self) -> Vec<(String, BTreeSet<String>)> {
        self.kinds
            .iter()
            .filter(|(_, k)| *k == "split")
            .map(|(id, _)| {
                let join = self.post_dominator(id);
                let set = self
                    .reachable(id, Some(&join))
                    .into_iter()
                    .filter(|n| self.kinds[n] == "activity")
                    .collect();
                (id.clone(), set)
            })
            .collect()
    }

    pub fn block_sets(&self) -> Vec<BTreeSet<String>> {
        self.blocks().into_iter().map(|b| b.1).collect()
    }

    /// True when `set` is a chain of activities joined by direct edges.
    pub fn is_direct_chain(&self, set: &BTreeSet<String>) -> bool {
        let heads: Vec<&String> = set
            .iter()
            .filter(|a| !self.edges.iter().any(|(x, y)| y == *a && set.contains(x)))
            .collect();
        let [head] = heads.as_slice() else {
            return false;
        };
        let mut cur = (*head).clone();
        let mut seen = 1;
        loop {
            let next: Vec<&str> = self
                .succ(&cur)
                .into_iter()
                .filter(|s| set.contains(*s))
                .collect();
            match next.as_slice() {
                [] => break,
                [n] => {
                    cur = n.to_string();
                    seen += 1;
                }
                _ => return false,
            }
        }
        seen == set.len()
    }

    /// Subset-testing oracle for valid groups of size <= k.
    pub fn oracle_groups(&self, k: usize) -> BTreeSet<BTreeSet<String>> {
        let blocks = self.block_sets();
        let n = self.activities.len();
        let mut out = BTreeSet::new();
        for mask in 1u32..(1 << n) {
            if mask.count_ones() as usize > k {
                continue;
            }
            let set: BTreeSet<String> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| self.activities[i].clone())
                .collect();
            if self.is_direct_chain(&set) || blocks.contains(&set) {
                out.insert(set);
            }
        }
        out
    }

    /// Structural canonical form computed from the graph alone; `label`
    /// renames activities. Branches are sorted, so order does not matter.
    pub fn canonical(&self, label: &dyn Fn(&str) -> String) -> String {
        let (items, stop) = self.walk(self.succ("start")[0], label);
        assert_eq!(stop, "end");
        format!("S[{}]", items.join(","))
    }

    /// Items from `first` up to the next join or end node.
    fn walk(&self, first: &str, label: &dyn Fn(&str) -> String) -> (Vec<String>, String) {
        let mut items = Vec::new();
        let mut cur = first.to_string();
        loop {
            match self.kinds[&cur].as_str() {
                "activity" => {
                    items.push(label(&cur));
                    cur = self.succ(&cur)[0].to_string();
                }
                "split" => {
                    let mut branches = Vec::new();
                    let mut join = String::new();
                    for s in self.succ(&cur) {
                        let (b, j) = self.walk(s, label);
                        branches.push(format!("S[{}]", b.join(",")));
                        join = j;
                    }
                    branches.sort();
                    let kind = if self.is_parallel(&cur) { "P" } else { "X" };
                    items.push(format!("{kind}{{{}}}", branches.join("|")));
                    cur = self.succ(&join)[0].to_string();
                }
                _ => return (items, cur),
            }
        }
    }

    fn is_parallel(&self, split: &str) -> bool {
        let doc: Value = serde_json::from_str(&self.json).unwrap();
        doc["nodes"]
            .as_array()
            .unwrap()
            .iter()
            .any(|n| n["id"] == split && n["gateway_type"] == "parallel")
    }
}

/// Random block-structured process with a complete 1-to-1 plan, one
/// dedicated service per activity, and the workflow generated from it.
pub fn one_to_one_case(
    rng: &mut StdRng,
) -> (
    GenProcess,
    mediator_core::procmodel::ProcessModel,
    mediator_core::wfgen::Workflow,
) {
    use mediator_core::datarecon::MediationDb;
    use mediator_core::matchmaker::{
        group_signature, Assignment, MatchConfig, MatchPlan, MatchScore, Provenance,
    };
    use mediator_core::ontology::Ontology;
    use mediator_core::pipeline::{generate_specs, CompileInputs};
    use mediator_core::procmodel::{ActivityGroup, ProcessModel};
    use mediator_core::registry::{OperationRef, Registry};
    use mediator_core::wfgen::generate_workflow;

    let shape = random_shape(rng, 10, true);
    let g = flatten(
        &shape,
        "iso",
        json!([]),
        &mut |id| json!({"operation": format!("T{id}")}),
    );
    let process = ProcessModel::from_json(&g.json).unwrap();
    let concepts: Vec<String> = std::iter::once("Task".to_string())
        .chain(g.activities.iter().map(|a| format!("T{a}")))
        .collect();
    let ontology = Ontology::from_json(&json!({"concepts": concepts}).to_string()).unwrap();
    let services: Vec<_> = g
        .activities
        .iter()
        .map(|a| {
            json!({"id": format!("svc-{a}"), "name": a, "endpoint": "mem:",
                   "operations": [{"id": "run", "name": a, "operation": format!("T{a}")}]})
        })
        .collect();
    let registry = Registry::from_json(&json!({"services": services}).to_string()).unwrap();

    let score = MatchScore {
        logic: 1.0,
        syntactic: 1.0,
        combined: 1.0,
        io_integrity: 1.0,
    };
    let plan = MatchPlan {
        assignments: g
            .activities
            .iter()
            .map(|a| {
                let group = ActivityGroup::single(a.clone());
                Assignment {
                    signature: group_signature(&process, &group),
                    group,
                    composition: vec![OperationRef::new(format!("svc-{a}"), "run")],
                    score,
                    provenance: Provenance::Fresh,
                }
            })
            .collect(),
        uncovered: vec![],
        stubs: vec![],
    };
    let (mediation, config, criteria) = (
        MediationDb::defaults(),
        MatchConfig::default(),
        BTreeMap::new(),
    );
    let inputs = CompileInputs {
        process: &process,
        registry: &registry,
        ontology: &ontology,
        mediation: &mediation,
        config: &config,
        criteria: &criteria,
    };
    let specs = generate_specs(&inputs, &plan).unwrap();
    let wf = generate_workflow(&process, &plan, &specs).unwrap();

    (g, process, wf)
}

/// Canonical skeletons of process and workflow for one 1-to-1 case, or the
/// mismatch.
pub fn check_one_to_one(rng: &mut StdRng) -> Result<mediator_core::wfgen::Workflow, String> {
    use mediator_core::wfgen::WfNode;
    let (g, process, wf) = one_to_one_case(rng);
    let want = g.canonical(&|a| a.to_string());
    let got = skeleton::canonical(&wf.body, &|n| match n {
        WfNode::Invoke { service, .. } => service.trim_start_matches("svc-").to_string(),
        other => format!("?{other:?}"),
    });
    if got != want {
        return Err(format!("process {want}\nworkflow {got}\n{}", g.json));
    }
    if wf.gateway_counts() != process.gateway_counts() {
        return Err(format!("gateway counts differ for {}", g.json));
    }
    Ok(wf)
}

pub mod matching {
    use super::*;
    use mediator_core::matchmaker::{MatchConfig, Matchmaker};
    use mediator_core::ontology::Ontology;
    use mediator_core::procmodel::{ActivityGroup, ProcessModel};
    use mediator_core::registry::{OperationRef, Registry};

    const TASKS: [&str; 6] = ["Task", "Receive", "Check", "CheckStock", "Ship", "Bill"];
    const DATA: [&str; 4] = ["Order", "OrderId", "Invoice", "Parcel"];
    const WORDS: [&str; 6] = ["order", "stock", "check", "ship", "bill", "receive"];

    pub struct Instance {
        pub gen: GenProcess,
        pub process: ProcessModel,
        pub registry_doc: Value,
        pub registry: Registry,
        pub ontology: Ontology,
    }

    pub fn ontology() -> Ontology {
        let doc = json!({
            "concepts": TASKS.iter().chain(DATA.iter()).collect::<Vec<_>>(),
            "subclass_of": [["Receive","Task"],["Check","Task"],["CheckStock","Check"],["Ship","Task"],["Bill","Task"],
                            ["OrderId","Order"]],
            "labels": {"CheckStock": ["check stock"], "Receive": ["receive order"]}
        });
        Ontology::from_json(&doc.to_string()).unwrap()
    }

    fn tags(rng: &mut StdRng, prefix: &str) -> Value {
        let n = rng.gen_range(0..=2);
        let picked: BTreeSet<usize> = (0..n).map(|_| rng.gen_range(0..DATA.len())).collect();
        Value::Array(
            picked
                .into_iter()
                .map(|i| json!({"tag": format!("{prefix}{}", DATA[i]), "concept": DATA[i]}))
                .collect(),
        )
    }

    /// Process of at most 5 activities and a registry of at most 6 operations.
    pub fn random_instance(rng: &mut StdRng) -> Instance {
        let shape = random_shape(rng, 5, true);
        let mut annotate = |_: &str| {
            json!({
                "operation": TASKS[rng.gen_range(0..TASKS.len())],
                "inputs": tags(rng, ""),
                "outputs": tags(rng, ""),
            })
        };
        let gen = flatten(&shape, "random", json!([]), &mut annotate);
        let process = ProcessModel::from_json(&gen.json).unwrap();

        let n_ops = rng.gen_range(1..=6);
        let mut services = Vec::new();
        let mut made = 0;
        while made < n_ops {
            let per = rng.gen_range(1..=2).min(n_ops - made);
            let ops: Vec<Value> = (0..per)
                .map(|j| {
                    let mut op = json!({
                        "id": format!("op{j}"),
                        "name": format!("{} {}", WORDS[rng.gen_range(0..WORDS.len())], WORDS[rng.gen_range(0..WORDS.len())]),
                        "operation": TASKS[rng.gen_range(0..TASKS.len())],
                        "inputs": tags(rng, ""),
                        "outputs": tags(rng, ""),
                    });
                    if rng.gen_bool(0.2) {
                        op["behaviour"] = json!([TASKS[rng.gen_range(0..TASKS.len())], TASKS[rng.gen_range(0..TASKS.len())]]);
                    }
                    op
                })
                .collect();
            services.push(json!({"id": format!("s{}", services.len()), "name": "svc", "endpoint": "mem:", "operations": ops}));
            made += per;
        }
        let registry_doc = json!({"services": services});
        let registry = Registry::from_json(&registry_doc.to_string()).unwrap();
        Instance {
            gen,
            process,
            registry_doc,
            registry,
            ontology: ontology(),
        }
    }

    fn all_ops(r: &Registry) -> Vec<OperationRef> {
        r.services()
            .iter()
            .flat_map(|s| {
                s.operations
                    .iter()
                    .map(move |o| OperationRef::new(&s.id, &o.id))
            })
            .collect()
    }

    /// Best accepted combined score of one group over every ordered tuple of
    /// distinct operations no longer than the group or `m`.
    fn best_for_group(
        mm: &Matchmaker<'_>,
        ops: &[OperationRef],
        g: &ActivityGroup,
        m: usize,
    ) -> Option<f64> {
        let limit = m.min(g.len());
        let mut best: Option<f64> = None;
        let n = ops.len();
        let mut idx: Vec<usize> = Vec::new();
        // odometer over tuples of length 1..=limit
        for len in 1..=limit {
            let total = n.pow(len as u32);
            for code in 0..total {
                idx.clear();
                let mut c = code;
                for _ in 0..len {
                    idx.push(c % n);
                    c /= n;
                }
                let distinct: BTreeSet<usize> = idx.iter().copied().collect();
                if distinct.len() != len {
                    continue;
                }
                let comp: Vec<OperationRef> = idx.iter().map(|&i| ops[i].clone()).collect();
                if let Some(s) = mm.score(g, &comp).unwrap().score() {
                    if mm.config().accepts(s) && best.is_none_or(|b| s.combined > b) {
                        best = Some(s.combined);
                    }
                }
            }
        }
        best
    }

    /// Exhaustive optimum over every set of pairwise disjoint groups.
    pub fn brute_force_optimum(inst: &Instance, cfg: &MatchConfig) -> f64 {
        let criteria = BTreeMap::new();
        let mm = Matchmaker::new(
            &inst.process,
            &inst.registry,
            &inst.ontology,
            cfg,
            &criteria,
        )
        .unwrap();
        let ops = all_ops(&inst.registry);
        let groups = inst.process.enumerate_groups(cfg.k);
        let oracle_sets = inst.gen.oracle_groups(cfg.k);
        let lib_sets: BTreeSet<BTreeSet<String>> = groups
            .iter()
            .map(|g| g.activity_ids.iter().cloned().collect())
            .collect();
        assert_eq!(lib_sets, oracle_sets);
        let scored: Vec<(BTreeSet<String>, f64)> = groups
            .iter()
            .filter_map(|g| {
                best_for_group(&mm, &ops, g, cfg.m)
                    .map(|s| (g.activity_ids.iter().cloned().collect(), s))
            })
            .collect();

        fn search(items: &[(BTreeSet<String>, f64)], used: &BTreeSet<String>) -> f64 {
            let Some(((set, score), rest)) = items.split_first() else {
                return 0.0;
            };
            let skip = search(rest, used);
            if set.is_disjoint(used) {
                let mut u = used.clone();
                u.extend(set.iter().cloned());
                skip.max(score + search(rest, &u))
            } else {
                skip
            }
        }
        search(&scored, &BTreeSet::new())
    }
}

pub mod skeleton {
    use mediator_core::wfgen::WfNode;

    /// Canonical form of a workflow body: sequences flattened, transform
    /// nodes dropped, parallel and exclusive branches sorted.
    pub fn canonical(body: &[WfNode], label: &dyn Fn(&WfNode) -> String) -> String {
        format!("S[{}]", items(body, label).join(","))
    }

    fn items(body: &[WfNode], label: &dyn Fn(&WfNode) -> String) -> Vec<String> {
        let mut out = Vec::new();
        for n in body {
            match n {
                WfNode::Sequence(children) => out.extend(items(children, label)),
                WfNode::Transform { .. } => {}
                WfNode::Flow(branches) => {
                    let mut bs: Vec<String> =
                        branches.iter().map(|b| canonical(b, label)).collect();
                    bs.sort();
                    out.push(format!("P{{{}}}", bs.join("|")));
                }
                WfNode::Switch(cases) => {
                    let mut bs: Vec<String> =
                        cases.iter().map(|c| canonical(&c.body, label)).collect();
                    bs.sort();
                    out.push(format!("X{{{}}}", bs.join("|")));
                }
                other => out.push(label(other)),
            }
        }
        out
    }
}

pub mod metrics {
    use std::collections::BTreeMap;

    /// 1 - JSD in bits, via entropies of the mixture and the two distributions.
    pub fn jsd_oracle(a: &[&str], b: &[&str]) -> f64 {
        fn dist(words: &[&str]) -> BTreeMap<String, f64> {
            let mut m = BTreeMap::new();
            for w in words {
                *m.entry(w.to_string()).or_insert(0.0) += 1.0 / words.len() as f64;
            }
            m
        }
        fn entropy<'a>(ps: impl Iterator<Item = &'a f64>) -> f64 {
            ps.filter(|p| **p > 0.0).map(|p| -p * p.log2()).sum()
        }
        let (p, q) = (dist(a), dist(b));
        let mut m: BTreeMap<String, f64> = BTreeMap::new();
        for (k, v) in p.iter().chain(q.iter()) {
            *m.entry(k.clone()).or_insert(0.0) += 0.5 * v;
        }
        1.0 - (entropy(m.values()) - 0.5 * (entropy(p.values()) + entropy(q.values())))
    }
}
