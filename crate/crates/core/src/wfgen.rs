//! Executable workflow built by copying the process block structure and
//! replacing matched activity groups with service invocations.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Cursor;

use quick_xml::events::{BytesDecl, BytesStart, Event};
use quick_xml::{Reader, Writer};
use thiserror::Error;

use crate::datarecon::TransformationSpec;
use crate::matchmaker::{stub_id, Assignment, MatchPlan};
use crate::procmodel::{
    ActivityGroup, Element, GatewayBlock, GatewayType, GroupShape, ProcessModel,
};
use crate::registry::OperationRef;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkflowError {
    #[error("no transformation spec `{0}`")]
    MissingSpec(String),
    #[error("plan does not fit the process: {0}")]
    PlanMismatch(String),
    #[error("serialization failed: {0}")]
    Serialization(String),
    #[error("invalid workflow document at {path}: {message}")]
    Validation { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Case {
    pub condition: Option<String>,
    pub body: Vec<WfNode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WfNode {
    Sequence(Vec<WfNode>),
    /// Parallel branches, each a node list run in order.
    Flow(Vec<Vec<WfNode>>),
    Switch(Vec<Case>),
    Invoke {
        service: String,
        operation: String,
        transform: Option<String>,
    },
    Transform {
        spec: String,
    },
    HumanTask {
        stub: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workflow {
    pub name: String,
    pub body: Vec<WfNode>,
}

impl Workflow {
    /// Spec ids referenced by Transform and Invoke nodes.
    pub fn spec_refs(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        visit(&self.body, &mut |n| match n {
            WfNode::Transform { spec } => {
                out.insert(spec.clone());
            }
            WfNode::Invoke {
                transform: Some(spec),
                ..
            } => {
                out.insert(spec.clone());
            }
            _ => {}
        });
        out
    }

    pub fn stub_refs(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        visit(&self.body, &mut |n| {
            if let WfNode::HumanTask { stub } = n {
                out.insert(stub.clone());
            }
        });
        out
    }

    pub fn gateway_counts(&self) -> BTreeMap<GatewayType, usize> {
        let mut out = BTreeMap::new();
        visit(&self.body, &mut |n| match n {
            WfNode::Flow(_) => *out.entry(GatewayType::Parallel).or_default() += 1,
            WfNode::Switch(_) => *out.entry(GatewayType::Exclusive).or_default() += 1,
            _ => {}
        });
        out
    }
}

fn visit(nodes: &[WfNode], f: &mut impl FnMut(&WfNode)) {
    for n in nodes {
        f(n);
        match n {
            WfNode::Sequence(c) => visit(c, f),
            WfNode::Flow(bs) => bs.iter().for_each(|b| visit(b, f)),
            WfNode::Switch(cs) => cs.iter().for_each(|c| visit(&c.body, f)),
            _ => {}
        }
    }
}

/// File-safe id of the transformation feeding one composition member.
pub fn spec_id(group: &ActivityGroup, op: &OperationRef) -> String {
    let raw = format!("{}-{}.{}", group.activity_ids[0], op.service, op.operation);
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct Builder<'a> {
    specs: &'a BTreeMap<String, TransformationSpec>,
    by_activity: BTreeMap<&'a str, &'a Assignment>,
    uncovered: BTreeSet<&'a str>,
    emitted: BTreeSet<&'a str>,
}

impl<'a> Builder<'a> {
    fn assignment_nodes(&mut self, a: &'a Assignment) -> Result<Vec<WfNode>, WorkflowError> {
        let mut nodes = Vec::new();
        for op in &a.composition {
            let id = spec_id(&a.group, op);
            let spec = self
                .specs
                .get(&id)
                .ok_or_else(|| WorkflowError::MissingSpec(id.clone()))?;
            if !spec.is_identity() {
                nodes.push(WfNode::Transform { spec: id.clone() });
            }
            nodes.push(WfNode::Invoke {
                service: op.service.clone(),
                operation: op.operation.clone(),
                transform: Some(id),
            });
        }
        for act in &a.group.activity_ids {
            self.emitted.insert(act);
        }
        Ok(if a.composition.len() > 1 {
            vec![WfNode::Sequence(nodes)]
        } else {
            nodes
        })
    }

    fn sequence(&mut self, elements: &'a [Element]) -> Result<Vec<WfNode>, WorkflowError> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < elements.len() {
            match &elements[i] {
                Element::Activity(id) => {
                    if self.uncovered.contains(id.as_str()) {
                        out.push(WfNode::HumanTask { stub: stub_id(id) });
                        self.emitted.insert(id);
                        i += 1;
                        continue;
                    }
                    let a = *self.by_activity.get(id.as_str()).ok_or_else(|| {
                        WorkflowError::PlanMismatch(format!(
                            "activity `{id}` is neither assigned nor uncovered"
                        ))
                    })?;
                    let n = a.group.len();
                    let in_place = a.group.shape == GroupShape::Run
                        && a.group.activity_ids[0] == *id
                        && elements.len() >= i + n
                        && elements[i..i + n]
                            .iter()
                            .zip(&a.group.activity_ids)
                            .all(|(e, g)| matches!(e, Element::Activity(x) if x == g));
                    if !in_place {
                        return Err(WorkflowError::PlanMismatch(format!(
                            "group {:?} is not a contiguous run at `{id}`",
                            a.group.activity_ids
                        )));
                    }
                    out.extend(self.assignment_nodes(a)?);
                    i += n;
                }
                Element::Gateway(g) => {
                    out.extend(self.gateway(&elements[i], g)?);
                    i += 1;
                }
            }
        }
        Ok(out)
    }

    fn gateway(
        &mut self,
        e: &'a Element,
        g: &'a GatewayBlock,
    ) -> Result<Vec<WfNode>, WorkflowError> {
        let members = e.activities();
        let block = members
            .first()
            .and_then(|m| self.by_activity.get(m.as_str()))
            .copied()
            .filter(|a| a.group.shape == GroupShape::Block && a.group.activity_ids == members);
        if let Some(a) = block {
            return self.assignment_nodes(a);
        }
        let node = match g.gateway_type {
            GatewayType::Parallel => WfNode::Flow(
                g.branches
                    .iter()
                    .map(|b| self.sequence(&b.elements))
                    .collect::<Result<_, _>>()?,
            ),
            _ => WfNode::Switch(
                g.branches
                    .iter()
                    .map(|b| {
                        Ok(Case {
                            condition: b.condition.clone(),
                            body: self.sequence(&b.elements)?,
                        })
                    })
                    .collect::<Result<_, WorkflowError>>()?,
            ),
        };
        Ok(vec![node])
    }
}

/// Copies the block structure of `p`, replacing each assigned group with
/// its composition (Transform before Invoke when the spec is not a plain
/// copy) and each uncovered activity with a human task.
pub fn generate_workflow(
    p: &ProcessModel,
    plan: &MatchPlan,
    specs: &BTreeMap<String, TransformationSpec>,
) -> Result<Workflow, WorkflowError> {
    let known: BTreeSet<&str> = p.activities().iter().map(String::as_str).collect();
    let mut by_activity = BTreeMap::new();
    for a in &plan.assignments {
        for id in &a.group.activity_ids {
            if !known.contains(id.as_str()) {
                return Err(WorkflowError::PlanMismatch(format!(
                    "unknown activity `{id}`"
                )));
            }
            if by_activity.insert(id.as_str(), a).is_some() {
                return Err(WorkflowError::PlanMismatch(format!(
                    "activity `{id}` assigned twice"
                )));
            }
        }
    }
    let mut uncovered = BTreeSet::new();
    for id in &plan.uncovered {
        if !known.contains(id.as_str()) {
            return Err(WorkflowError::PlanMismatch(format!(
                "unknown activity `{id}`"
            )));
        }
        if by_activity.contains_key(id.as_str()) {
            return Err(WorkflowError::PlanMismatch(format!(
                "activity `{id}` both assigned and uncovered"
            )));
        }
        uncovered.insert(id.as_str());
    }
    let mut b = Builder {
        specs,
        by_activity,
        uncovered,
        emitted: BTreeSet::new(),
    };
    let body = b.sequence(p.tree())?;
    if b.emitted.len() != known.len() {
        return Err(WorkflowError::PlanMismatch(
            "some activities were not placed".into(),
        ));
    }
    Ok(Workflow {
        name: p.name().to_string(),
        body,
    })
}

fn start<'a>(name: &'a str, attrs: &[(&str, &str)]) -> BytesStart<'a> {
    let mut sorted: Vec<_> = attrs.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    let mut el = BytesStart::new(name);
    for (k, v) in sorted {
        el.push_attribute((k, v));
    }
    el
}

fn write_list<W: std::io::Write>(
    w: &mut Writer<W>,
    name: &str,
    attrs: &[(&str, &str)],
    nodes: &[WfNode],
) -> std::io::Result<()> {
    if nodes.is_empty() {
        return w.write_event(Event::Empty(start(name, attrs)));
    }
    w.write_event(Event::Start(start(name, attrs)))?;
    for n in nodes {
        write_node(w, n)?;
    }
    w.write_event(Event::End(quick_xml::events::BytesEnd::new(name)))
}

fn write_node<W: std::io::Write>(w: &mut Writer<W>, n: &WfNode) -> std::io::Result<()> {
    match n {
        WfNode::Sequence(c) => write_list(w, "sequence", &[], c),
        WfNode::Flow(branches) => {
            let wrapped: Vec<WfNode> = branches
                .iter()
                .map(|b| WfNode::Sequence(b.clone()))
                .collect();
            write_list(w, "flow", &[], &wrapped)
        }
        WfNode::Switch(cases) => {
            w.write_event(Event::Start(start("switch", &[])))?;
            for c in cases {
                let attrs: Vec<(&str, &str)> = c
                    .condition
                    .as_deref()
                    .map(|v| ("condition", v))
                    .into_iter()
                    .collect();
                write_list(w, "case", &attrs, &c.body)?;
            }
            w.write_event(Event::End(quick_xml::events::BytesEnd::new("switch")))
        }
        WfNode::Invoke {
            service,
            operation,
            transform,
        } => {
            let mut attrs = vec![
                ("operation", operation.as_str()),
                ("service", service.as_str()),
            ];
            if let Some(t) = transform {
                attrs.push(("transform", t.as_str()));
            }
            w.write_event(Event::Empty(start("invoke", &attrs)))
        }
        WfNode::Transform { spec } => {
            w.write_event(Event::Empty(start("transform", &[("spec", spec)])))
        }
        WfNode::HumanTask { stub } => {
            w.write_event(Event::Empty(start("humanTask", &[("stub", stub)])))
        }
    }
}

/// Orchestration document; attributes in alphabetical order.
pub fn serialize_workflow(wf: &Workflow) -> Result<String, WorkflowError> {
    let ser = |e: std::io::Error| WorkflowError::Serialization(e.to_string());
    let mut w = Writer::new_with_indent(Cursor::new(Vec::new()), b' ', 2);
    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
        .map_err(ser)?;
    w.write_event(Event::Start(start("workflow", &[("name", &wf.name)])))
        .map_err(ser)?;
    write_list(&mut w, "sequence", &[], &wf.body).map_err(ser)?;
    w.write_event(Event::End(quick_xml::events::BytesEnd::new("workflow")))
        .map_err(ser)?;
    let mut text = String::from_utf8(w.into_inner().into_inner())
        .map_err(|e| WorkflowError::Serialization(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

struct XmlElem {
    name: String,
    attrs: BTreeMap<String, String>,
    children: Vec<XmlElem>,
    path: String,
}

fn read_tree(text: &str) -> Result<XmlElem, WorkflowError> {
    let mut reader = Reader::from_str(text);
    let mut stack: Vec<XmlElem> = Vec::new();
    let mut root: Option<XmlElem> = None;
    let path_of = |stack: &[XmlElem]| stack.last().map_or("/".to_string(), |e| e.path.clone());
    let fail = |path: String, message: String| WorkflowError::Validation { path, message };
    loop {
        let event = reader
            .read_event()
            .map_err(|e| fail(path_of(&stack), e.to_string()))?;
        let (el, empty) = match event {
            Event::Eof => break,
            Event::Start(e) => (e, false),
            Event::Empty(e) => (e, true),
            Event::End(_) => {
                let done = stack
                    .pop()
                    .ok_or_else(|| fail("/".into(), "unexpected end tag".into()))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(done),
                    None => root = Some(done),
                }
                continue;
            }
            Event::Text(t) => {
                let s = t
                    .unescape()
                    .map_err(|e| fail(path_of(&stack), e.to_string()))?;
                if !s.trim().is_empty() {
                    return Err(fail(path_of(&stack), "unexpected text content".into()));
                }
                continue;
            }
            Event::CData(_) => return Err(fail(path_of(&stack), "unexpected CDATA".into())),
            _ => continue,
        };
        let name = String::from_utf8_lossy(el.name().as_ref()).into_owned();
        let path = format!("{}/{}", path_of(&stack).trim_end_matches('/'), name);
        if root.is_some() {
            return Err(fail(path, "content after the root element".into()));
        }
        let mut attrs = BTreeMap::new();
        for a in el.attributes() {
            let a = a.map_err(|e| fail(path.clone(), e.to_string()))?;
            let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
            let value = a
                .unescape_value()
                .map_err(|e| fail(path.clone(), e.to_string()))?
                .into_owned();
            attrs.insert(key, value);
        }
        let node = XmlElem {
            name,
            attrs,
            children: Vec::new(),
            path,
        };
        if empty {
            match stack.last_mut() {
                Some(parent) => parent.children.push(node),
                None => root = Some(node),
            }
        } else {
            stack.push(node);
        }
    }
    if let Some(open) = stack.last() {
        return Err(fail(
            open.path.clone(),
            format!("element `{}` is not closed", open.name),
        ));
    }
    root.ok_or_else(|| fail("/".into(), "empty document".into()))
}

fn invalid<T>(e: &XmlElem, message: impl Into<String>) -> Result<T, WorkflowError> {
    Err(WorkflowError::Validation {
        path: e.path.clone(),
        message: message.into(),
    })
}

fn check_attrs(e: &XmlElem, required: &[&str], optional: &[&str]) -> Result<(), WorkflowError> {
    for r in required {
        if !e.attrs.contains_key(*r) {
            return invalid(e, format!("missing attribute `{r}`"));
        }
    }
    for k in e.attrs.keys() {
        if !required.contains(&k.as_str()) && !optional.contains(&k.as_str()) {
            return invalid(e, format!("unexpected attribute `{k}`"));
        }
    }
    Ok(())
}

fn leafless(e: &XmlElem) -> Result<(), WorkflowError> {
    if e.children.is_empty() {
        Ok(())
    } else {
        invalid(e, "element takes no children")
    }
}

fn to_node(e: &XmlElem) -> Result<WfNode, WorkflowError> {
    match e.name.as_str() {
        "sequence" => {
            check_attrs(e, &[], &[])?;
            Ok(WfNode::Sequence(
                e.children.iter().map(to_node).collect::<Result<_, _>>()?,
            ))
        }
        "flow" => {
            check_attrs(e, &[], &[])?;
            let mut branches = Vec::new();
            for c in &e.children {
                match to_node(c)? {
                    WfNode::Sequence(body) if c.name == "sequence" => branches.push(body),
                    _ => return invalid(c, "flow branches must be sequences"),
                }
            }
            Ok(WfNode::Flow(branches))
        }
        "switch" => {
            check_attrs(e, &[], &[])?;
            let mut cases = Vec::new();
            for c in &e.children {
                if c.name != "case" {
                    return invalid(c, "switch children must be cases");
                }
                check_attrs(c, &[], &["condition"])?;
                cases.push(Case {
                    condition: c.attrs.get("condition").cloned(),
                    body: c.children.iter().map(to_node).collect::<Result<_, _>>()?,
                });
            }
            Ok(WfNode::Switch(cases))
        }
        "invoke" => {
            check_attrs(e, &["operation", "service"], &["transform"])?;
            leafless(e)?;
            Ok(WfNode::Invoke {
                service: e.attrs["service"].clone(),
                operation: e.attrs["operation"].clone(),
                transform: e.attrs.get("transform").cloned(),
            })
        }
        "transform" => {
            check_attrs(e, &["spec"], &[])?;
            leafless(e)?;
            Ok(WfNode::Transform {
                spec: e.attrs["spec"].clone(),
            })
        }
        "humanTask" => {
            check_attrs(e, &["stub"], &[])?;
            leafless(e)?;
            Ok(WfNode::HumanTask {
                stub: e.attrs["stub"].clone(),
            })
        }
        other => invalid(e, format!("unknown element `{other}`")),
    }
}

/// Parses and validates an orchestration document.
pub fn parse_workflow(text: &str) -> Result<Workflow, WorkflowError> {
    let root = read_tree(text)?;
    if root.name != "workflow" {
        return invalid(&root, "root element must be `workflow`");
    }
    check_attrs(&root, &["name"], &[])?;
    let [body] = root.children.as_slice() else {
        return invalid(&root, "workflow must contain exactly one sequence");
    };
    if body.name != "sequence" {
        return invalid(body, "workflow must contain exactly one sequence");
    }
    let WfNode::Sequence(body) = to_node(body)? else {
        unreachable!()
    };
    Ok(Workflow {
        name: root.attrs["name"].clone(),
        body,
    })
}

pub fn validate_workflow(text: &str) -> Result<(), WorkflowError> {
    parse_workflow(text).map(|_| ())
}
