//! Abstract business-process model.
//!
//! A process file is parsed into a flat node/edge graph and then into a
//! block tree (sequences, gateway blocks with branches). Everything
//! downstream works off the tree: group enumeration, workflow generation,
//! and the data-flow walk used to compute upstream messages.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error("process parse error: {0}")]
    Parse(String),
    #[error("process structure error: {0}")]
    Structure(String),
}

fn structure<T>(msg: impl Into<String>) -> Result<T, ProcessError> {
    Err(ProcessError::Structure(msg.into()))
}

/// Semantic description of one message element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagSpec {
    pub tag: String,
    pub concept: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    /// Value-level lookup table applied when this tag is a transformation target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookup: Option<String>,
}

impl TagSpec {
    pub fn new(tag: impl Into<String>, concept: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            concept: concept.into(),
            format: None,
            unit: None,
            lookup: None,
        }
    }

    pub fn with_format(mut self, format: impl Into<String>) -> Self {
        self.format = Some(format.into());
        self
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub operation: String,
    #[serde(default)]
    pub inputs: Vec<TagSpec>,
    #[serde(default)]
    pub outputs: Vec<TagSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub nfr: BTreeMap<String, String>,
}

/// Checks non-empty tags/concepts and tag uniqueness per direction.
pub(crate) fn check_tags(owner: &str, direction: &str, tags: &[TagSpec]) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for t in tags {
        if t.tag.is_empty() {
            return Err(format!("{owner}: empty {direction} tag"));
        }
        if t.concept.is_empty() {
            return Err(format!(
                "{owner}: {direction} tag `{}` has no concept",
                t.tag
            ));
        }
        if !seen.insert(t.tag.as_str()) {
            return Err(format!("{owner}: duplicate {direction} tag `{}`", t.tag));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Start,
    End,
    Activity,
    GatewaySplit,
    GatewayJoin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayType {
    Parallel,
    Exclusive,
    /// Accepted by the reader only so it can be rejected with a structure error.
    Inclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gateway_type: Option<GatewayType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: String,
    pub to: String,
    /// Opaque branch condition (exclusive splits).
    pub condition: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: Vec<Node>,
    /// `[from, to]` or `[from, to, condition]`.
    #[serde(default)]
    pub edges: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Activity(String),
    Gateway(GatewayBlock),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayBlock {
    pub split: String,
    pub join: String,
    pub gateway_type: GatewayType,
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub condition: Option<String>,
    pub elements: Vec<Element>,
}

impl Element {
    /// Activities in pre-order.
    pub fn activities(&self) -> Vec<String> {
        let mut out = Vec::new();
        collect_activities(std::slice::from_ref(self), &mut out);
        out
    }
}

pub fn collect_activities(elements: &[Element], out: &mut Vec<String>) {
    for e in elements {
        match e {
            Element::Activity(id) => out.push(id.clone()),
            Element::Gateway(g) => {
                for b in &g.branches {
                    collect_activities(&b.elements, out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupShape {
    Run,
    Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActivityGroup {
    pub activity_ids: Vec<String>,
    pub shape: GroupShape,
}

impl ActivityGroup {
    pub fn single(id: impl Into<String>) -> Self {
        Self {
            activity_ids: vec![id.into()],
            shape: GroupShape::Run,
        }
    }

    pub fn len(&self) -> usize {
        self.activity_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activity_ids.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ProcessModel {
    name: String,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    node_index: BTreeMap<String, usize>,
    tree: Vec<Element>,
    /// Activities in pre-order of the block tree (topological order).
    order: Vec<String>,
    position: BTreeMap<String, usize>,
    /// reach[i] holds positions of activities reachable from activity i.
    reach: Vec<BTreeSet<usize>>,
}

struct Adjacency<'a> {
    outgoing: BTreeMap<&'a str, Vec<(&'a str, Option<&'a str>)>>,
    incoming: BTreeMap<&'a str, usize>,
}

impl ProcessModel {
    pub fn from_json(text: &str) -> Result<Self, ProcessError> {
        let doc: ProcessDocument =
            serde_json::from_str(text).map_err(|e| ProcessError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn from_document(doc: ProcessDocument) -> Result<Self, ProcessError> {
        let mut node_index = BTreeMap::new();
        for (i, n) in doc.nodes.iter().enumerate() {
            if n.id.is_empty() {
                return structure("empty node id");
            }
            if node_index.insert(n.id.clone(), i).is_some() {
                return structure(format!("duplicate node id `{}`", n.id));
            }
        }

        let mut edges = Vec::with_capacity(doc.edges.len());
        for e in &doc.edges {
            if !(2..=3).contains(&e.len()) {
                return Err(ProcessError::Parse(format!(
                    "edge must be [from, to] or [from, to, condition], got {} items",
                    e.len()
                )));
            }
            for end in &e[..2] {
                if !node_index.contains_key(end) {
                    return structure(format!("dangling edge {} -> {}", e[0], e[1]));
                }
            }
            edges.push(Edge {
                from: e[0].clone(),
                to: e[1].clone(),
                condition: e.get(2).cloned(),
            });
        }

        let starts: Vec<&Node> = doc
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Start)
            .collect();
        let ends = doc.nodes.iter().filter(|n| n.kind == NodeKind::End).count();
        match starts.len() {
            0 => return structure("missing start"),
            1 => {}
            _ => return structure("multiple starts"),
        }
        match ends {
            0 => return structure("missing end"),
            1 => {}
            _ => return structure("multiple ends"),
        }

        let mut adj = Adjacency {
            outgoing: BTreeMap::new(),
            incoming: BTreeMap::new(),
        };
        for e in &edges {
            adj.outgoing
                .entry(&e.from)
                .or_default()
                .push((&e.to, e.condition.as_deref()));
            *adj.incoming.entry(&e.to).or_default() += 1;
        }

        for n in &doc.nodes {
            let ins = adj.incoming.get(n.id.as_str()).copied().unwrap_or(0);
            let outs = adj.outgoing.get(n.id.as_str()).map_or(0, Vec::len);
            let ok = match n.kind {
                NodeKind::Start => ins == 0 && outs == 1,
                NodeKind::End => ins == 1 && outs == 0,
                NodeKind::Activity => ins == 1 && outs == 1,
                NodeKind::GatewaySplit => ins == 1 && outs >= 2,
                NodeKind::GatewayJoin => ins >= 2 && outs == 1,
            };
            if !ok {
                return structure(format!(
                    "node `{}` ({:?}) has {ins} incoming and {outs} outgoing edges",
                    n.id, n.kind
                ));
            }
            match n.kind {
                NodeKind::GatewaySplit | NodeKind::GatewayJoin => match n.gateway_type {
                    None => return structure(format!("gateway `{}` has no gateway_type", n.id)),
                    Some(GatewayType::Inclusive) => {
                        return structure(format!("inclusive gateway `{}` unsupported", n.id))
                    }
                    Some(_) => {}
                },
                _ => {
                    if n.gateway_type.is_some() {
                        return structure(format!("non-gateway `{}` has a gateway_type", n.id));
                    }
                }
            }
            match (n.kind, &n.annotation) {
                (NodeKind::Activity, None) => {
                    return structure(format!("activity `{}` has no annotation", n.id))
                }
                (NodeKind::Activity, Some(a)) => {
                    if a.operation.is_empty() {
                        return structure(format!("activity `{}` has no operation concept", n.id));
                    }
                    check_tags(&n.id, "input", &a.inputs).map_err(ProcessError::Structure)?;
                    check_tags(&n.id, "output", &a.outputs).map_err(ProcessError::Structure)?;
                }
                (NodeKind::Start, Some(a)) => {
                    check_tags(&n.id, "output", &a.outputs).map_err(ProcessError::Structure)?;
                }
                (NodeKind::Start, None) => {}
                (_, Some(_)) => {
                    return structure(format!("node `{}` cannot carry an annotation", n.id))
                }
                (_, None) => {}
            }
        }

        let mut builder = TreeBuilder {
            nodes: &doc.nodes,
            node_index: &node_index,
            adj: &adj,
            visited: BTreeSet::new(),
        };
        let start = starts[0].id.as_str();
        builder.visited.insert(start.to_string());
        let first = adj.outgoing[start][0].0;
        let (tree, terminal) = builder.sequence(first)?;
        if let Terminal::Join(j) = terminal {
            return structure(format!("unmatched join `{j}`"));
        }
        for n in &doc.nodes {
            if !builder.visited.contains(&n.id) {
                return structure(format!("unreachable node `{}`", n.id));
            }
        }

        let mut order = Vec::new();
        collect_activities(&tree, &mut order);
        let position: BTreeMap<String, usize> = order
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        let reach = activity_reachability(&order, &position, &adj);

        Ok(Self {
            name: doc.name.unwrap_or_else(|| "workflow".to_string()),
            nodes: doc.nodes,
            edges,
            node_index,
            tree,
            order,
            position,
            reach,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn tree(&self) -> &[Element] {
        &self.tree
    }

    /// Activity ids in topological (block pre-order) order.
    pub fn activities(&self) -> &[String] {
        &self.order
    }

    pub fn position(&self, activity: &str) -> Option<usize> {
        self.position.get(activity).copied()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.node_index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn annotation(&self, activity: &str) -> Option<&Annotation> {
        self.node(activity).and_then(|n| n.annotation.as_ref())
    }

    /// Tags available before the first activity (start node outputs).
    pub fn initial_outputs(&self) -> Vec<TagSpec> {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeKind::Start)
            .and_then(|n| n.annotation.as_ref())
            .map(|a| a.outputs.clone())
            .unwrap_or_default()
    }

    /// True when a control path leads from activity `a` to activity `b`.
    pub fn precedes(&self, a: &str, b: &str) -> bool {
        match (self.position(a), self.position(b)) {
            (Some(i), Some(j)) => self.reach[i].contains(&j),
            _ => false,
        }
    }

    /// Number of gateway blocks by type, over the whole tree.
    pub fn gateway_counts(&self) -> BTreeMap<GatewayType, usize> {
        let mut out = BTreeMap::new();
        count_gateways(&self.tree, &mut out);
        out
    }

    /// Valid activity groups of at most `k` activities: contiguous runs inside
    /// a branch and complete gateway blocks.
    pub fn enumerate_groups(&self, k: usize) -> Vec<ActivityGroup> {
        let mut groups = Vec::new();
        collect_groups(&self.tree, k, &mut groups);
        groups.sort_by_key(|g| {
            (
                self.position[&g.activity_ids[0]],
                g.len(),
                g.shape,
                g.activity_ids.clone(),
            )
        });
        let mut seen = BTreeSet::new();
        groups.retain(|g| {
            let mut set = g.activity_ids.clone();
            set.sort();
            seen.insert(set)
        });
        groups
    }

    /// Inputs the group needs from outside and outputs it produces.
    ///
    /// An input is internal when an earlier member (by control path)
    /// outputs the identical concept.
    pub fn external_io(&self, group: &ActivityGroup) -> (Vec<TagSpec>, Vec<TagSpec>) {
        let mut required: Vec<TagSpec> = Vec::new();
        let mut produced: Vec<TagSpec> = Vec::new();
        for m in &group.activity_ids {
            let Some(ann) = self.annotation(m) else {
                continue;
            };
            for input in &ann.inputs {
                let internal = group.activity_ids.iter().any(|e| {
                    e != m
                        && self.precedes(e, m)
                        && self
                            .annotation(e)
                            .is_some_and(|a| a.outputs.iter().any(|o| o.concept == input.concept))
                });
                if !internal && !required.contains(input) {
                    required.push(input.clone());
                }
            }
            for output in &ann.outputs {
                if !produced.contains(output) {
                    produced.push(output.clone());
                }
            }
        }
        (required, produced)
    }
}

fn count_gateways(elements: &[Element], out: &mut BTreeMap<GatewayType, usize>) {
    for e in elements {
        if let Element::Gateway(g) = e {
            *out.entry(g.gateway_type).or_default() += 1;
            for b in &g.branches {
                count_gateways(&b.elements, out);
            }
        }
    }
}

fn collect_groups(elements: &[Element], k: usize, out: &mut Vec<ActivityGroup>) {
    let mut run: Vec<String> = Vec::new();
    let flush = |run: &mut Vec<String>, out: &mut Vec<ActivityGroup>| {
        for start in 0..run.len() {
            for len in 1..=k.min(run.len() - start) {
                out.push(ActivityGroup {
                    activity_ids: run[start..start + len].to_vec(),
                    shape: GroupShape::Run,
                });
            }
        }
        run.clear();
    };
    for e in elements {
        match e {
            Element::Activity(id) => run.push(id.clone()),
            Element::Gateway(g) => {
                flush(&mut run, out);
                let members = e.activities();
                if !members.is_empty() && members.len() <= k {
                    out.push(ActivityGroup {
                        activity_ids: members,
                        shape: GroupShape::Block,
                    });
                }
                for b in &g.branches {
                    collect_groups(&b.elements, k, out);
                }
            }
        }
    }
    flush(&mut run, out);
}

fn activity_reachability(
    order: &[String],
    position: &BTreeMap<String, usize>,
    adj: &Adjacency<'_>,
) -> Vec<BTreeSet<usize>> {
    order
        .iter()
        .map(|a| {
            let mut seen = BTreeSet::new();
            let mut reached = BTreeSet::new();
            let mut queue: VecDeque<&str> = VecDeque::new();
            queue.push_back(a.as_str());
            while let Some(n) = queue.pop_front() {
                for &(next, _) in adj.outgoing.get(n).map(Vec::as_slice).unwrap_or(&[]) {
                    if seen.insert(next) {
                        if let Some(&p) = position.get(next) {
                            reached.insert(p);
                        }
                        queue.push_back(next);
                    }
                }
            }
            reached
        })
        .collect()
}

enum Terminal {
    End,
    Join(String),
}

struct TreeBuilder<'a> {
    nodes: &'a [Node],
    node_index: &'a BTreeMap<String, usize>,
    adj: &'a Adjacency<'a>,
    visited: BTreeSet<String>,
}

impl<'a> TreeBuilder<'a> {
    fn node(&self, id: &str) -> &'a Node {
        &self.nodes[self.node_index[id]]
    }

    fn successor(&self, id: &str) -> &'a str {
        self.adj.outgoing[id][0].0
    }

    fn sequence(&mut self, mut current: &'a str) -> Result<(Vec<Element>, Terminal), ProcessError> {
        let mut elements = Vec::new();
        loop {
            let node = self.node(current);
            if node.kind == NodeKind::GatewayJoin {
                return Ok((elements, Terminal::Join(current.to_string())));
            }
            if !self.visited.insert(current.to_string()) {
                return structure(format!("loop through `{current}`"));
            }
            match node.kind {
                NodeKind::Start => return structure(format!("loop through `{current}`")),
                NodeKind::End => return Ok((elements, Terminal::End)),
                NodeKind::Activity => {
                    elements.push(Element::Activity(current.to_string()));
                    current = self.successor(current);
                }
                NodeKind::GatewaySplit => {
                    let block = self.block(node)?;
                    current = self.successor(&block.join);
                    elements.push(Element::Gateway(block));
                }
                NodeKind::GatewayJoin => unreachable!(),
            }
        }
    }

    fn block(&mut self, split: &'a Node) -> Result<GatewayBlock, ProcessError> {
        let split_type = split.gateway_type.expect("checked gateway type");
        let mut branches = Vec::new();
        let mut join: Option<String> = None;
        for &(target, condition) in &self.adj.outgoing[split.id.as_str()] {
            let (elements, terminal) = self.sequence(target)?;
            let Terminal::Join(j) = terminal else {
                return structure(format!(
                    "branch of split `{}` reaches end without a join",
                    split.id
                ));
            };
            match &join {
                None => join = Some(j),
                Some(existing) if *existing != j => {
                    return structure(format!(
                        "crossing blocks: split `{}` reaches joins `{existing}` and `{j}`",
                        split.id
                    ))
                }
                Some(_) => {}
            }
            branches.push(Branch {
                condition: condition.map(str::to_string),
                elements,
            });
        }
        let join = join.expect("split has at least two branches");
        let join_node = self.node(&join);
        let join_type = join_node.gateway_type.expect("checked gateway type");
        if join_type != split_type {
            return structure(format!(
                "gateway type mismatch: split `{}` is {split_type:?}, join `{join}` is {join_type:?}",
                split.id
            ));
        }
        let ins = self.adj.incoming.get(join.as_str()).copied().unwrap_or(0);
        if ins != branches.len() || !self.visited.insert(join.clone()) {
            return structure(format!("crossing blocks at join `{join}`"));
        }
        Ok(GatewayBlock {
            split: split.id.clone(),
            join,
            gateway_type: split_type,
            branches,
        })
    }
}
