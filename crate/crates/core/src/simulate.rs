//! Desk-scale execution of a generated workflow against mock services.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;

use crate::datarecon::format::template_segments;
use crate::datarecon::{apply_transformation, DataReconError, Message, TransformationSpec};
use crate::registry::{OperationRef, Registry};
use crate::wfgen::{WfNode, Workflow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("mock file parse error: {0}")]
    Parse(String),
    #[error("tag `{0}` emitted by two parallel branches")]
    MessageConflict(String),
    #[error("no mock for {0}")]
    MissingMock(OperationRef),
    #[error("mock for {0} targets an operation absent from the registry")]
    UnknownMockTarget(OperationRef),
    #[error("no transformation spec `{0}`")]
    MissingSpec(String),
    #[error("no switch case matches the message")]
    NoMatchingCase,
    #[error("human task `{0}` has no supplied values")]
    MissingHumanInput(String),
    #[error("mock for {op}: {message}")]
    Template { op: OperationRef, message: String },
    #[error(transparent)]
    Transform(#[from] DataReconError),
}

impl SimError {
    /// Failures that need a person to supply values rather than a fix.
    pub fn needs_human(&self) -> bool {
        matches!(
            self,
            SimError::MissingHumanInput(_) | SimError::Transform(DataReconError::Unbound(_))
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MockEntry {
    service: String,
    operation: String,
    #[serde(default)]
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MockDocument {
    mocks: Vec<MockEntry>,
}

/// Output templates per operation; `{#Tag}` is replaced by the invocation's
/// input value for `Tag`.
#[derive(Debug, Clone, Default)]
pub struct MockDb {
    outputs: BTreeMap<OperationRef, BTreeMap<String, String>>,
}

impl MockDb {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let doc: MockDocument =
            serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        let mut outputs = BTreeMap::new();
        for m in doc.mocks {
            let op = OperationRef::new(m.service, m.operation);
            if outputs.insert(op.clone(), m.outputs).is_some() {
                return Err(SimError::Parse(format!("duplicate mock for {op}")));
            }
        }
        Ok(Self { outputs })
    }

    pub fn insert(&mut self, op: OperationRef, outputs: BTreeMap<String, String>) {
        self.outputs.insert(op, outputs);
    }

    /// Every mocked operation must exist in the registry.
    pub fn check(&self, registry: &Registry) -> Result<(), SimError> {
        match self
            .outputs
            .keys()
            .find(|op| registry.operation(op).is_none())
        {
            Some(op) => Err(SimError::UnknownMockTarget(op.clone())),
            None => Ok(()),
        }
    }

    fn invoke(&self, op: &OperationRef, inputs: &Message) -> Result<Message, SimError> {
        let templates = self
            .outputs
            .get(op)
            .ok_or_else(|| SimError::MissingMock(op.clone()))?;
        let template_err = |message: String| SimError::Template {
            op: op.clone(),
            message,
        };
        let mut out = Message::new();
        for (tag, template) in templates {
            let mut value = String::new();
            for (is_part, text) in template_segments(template).map_err(template_err)? {
                if is_part {
                    let v = inputs
                        .get(&text)
                        .ok_or_else(|| template_err(format!("input `{text}` not available")))?;
                    value.push_str(v);
                } else {
                    value.push_str(&text);
                }
            }
            out.insert(tag.clone(), value);
        }
        Ok(out)
    }
}

pub struct Simulator<'a> {
    specs: &'a BTreeMap<String, TransformationSpec>,
    mocks: &'a MockDb,
    prompts: &'a BTreeMap<String, Message>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        specs: &'a BTreeMap<String, TransformationSpec>,
        mocks: &'a MockDb,
        prompts: &'a BTreeMap<String, Message>,
    ) -> Self {
        Self {
            specs,
            mocks,
            prompts,
        }
    }

    pub fn run(&self, wf: &Workflow, initial: &Message) -> Result<Message, SimError> {
        let mut msg = initial.clone();
        self.run_list(&wf.body, &mut msg)?;
        Ok(msg)
    }

    fn spec(&self, id: &str) -> Result<&TransformationSpec, SimError> {
        self.specs
            .get(id)
            .ok_or_else(|| SimError::MissingSpec(id.to_string()))
    }

    fn run_list(&self, nodes: &[WfNode], msg: &mut Message) -> Result<(), SimError> {
        nodes.iter().try_for_each(|n| self.run_node(n, msg))
    }

    fn run_node(&self, node: &WfNode, msg: &mut Message) -> Result<(), SimError> {
        match node {
            WfNode::Sequence(children) => self.run_list(children, msg),
            WfNode::Flow(branches) => {
                let base = msg.clone();
                let mut emitted: BTreeSet<String> = BTreeSet::new();
                for branch in branches {
                    let mut local = base.clone();
                    self.run_list(branch, &mut local)?;
                    for (tag, value) in local {
                        if base.get(&tag) == Some(&value) {
                            continue;
                        }
                        if !emitted.insert(tag.clone()) {
                            return Err(SimError::MessageConflict(tag));
                        }
                        msg.insert(tag, value);
                    }
                }
                Ok(())
            }
            WfNode::Switch(cases) => {
                let case = cases
                    .iter()
                    .find(|c| {
                        c.condition
                            .as_deref()
                            .is_none_or(|cond| condition_holds(cond, msg))
                    })
                    .ok_or(SimError::NoMatchingCase)?;
                self.run_list(&case.body, msg)
            }
            WfNode::Transform { spec } => {
                let out = apply_transformation(self.spec(spec)?, msg)?;
                msg.extend(out);
                Ok(())
            }
            WfNode::Invoke {
                service,
                operation,
                transform,
            } => {
                let op = OperationRef::new(service, operation);
                let mut inputs = Message::new();
                if let Some(id) = transform {
                    for tag in self.spec(id)?.target_tags() {
                        let v = msg
                            .get(tag)
                            .ok_or_else(|| DataReconError::MissingTag(tag.to_string()))?;
                        inputs.insert(tag.to_string(), v.clone());
                    }
                }
                msg.extend(self.mocks.invoke(&op, &inputs)?);
                Ok(())
            }
            WfNode::HumanTask { stub } => {
                let values = self
                    .prompts
                    .get(stub)
                    .ok_or_else(|| SimError::MissingHumanInput(stub.clone()))?;
                msg.extend(values.clone());
                Ok(())
            }
        }
    }
}

/// `tag=value` holds when the message carries exactly that value.
pub fn condition_holds(condition: &str, msg: &Message) -> bool {
    match condition.split_once('=') {
        Some((tag, value)) => msg.get(tag.trim()).is_some_and(|v| v == value.trim()),
        None => false,
    }
}

pub fn simulate(
    wf: &Workflow,
    specs: &BTreeMap<String, TransformationSpec>,
    mocks: &MockDb,
    prompts: &BTreeMap<String, Message>,
    initial: &Message,
) -> Result<Message, SimError> {
    Simulator::new(specs, mocks, prompts).run(wf, initial)
}
