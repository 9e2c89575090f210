//! Technical-service registry and the cheap prefilters applied before any
//! semantic matchmaking (partner, domain, non-functional requirements).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::procmodel::{check_tags, Annotation, TagSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("registry parse error: {0}")]
    Parse(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("invalid registry: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationDescriptor {
    pub id: String,
    pub name: String,
    #[serde(rename = "operation")]
    pub operation_concept: String,
    #[serde(default)]
    pub inputs: Vec<TagSpec>,
    #[serde(default)]
    pub outputs: Vec<TagSpec>,
    /// Concepts of internal sub-steps, in order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behaviour: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceDescriptor {
    pub id: String,
    pub name: String,
    pub endpoint: String,
    #[serde(default)]
    pub partner: String,
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub nfr: BTreeMap<String, String>,
    pub operations: Vec<OperationDescriptor>,
}

/// Stable reference to one operation of one service.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OperationRef {
    pub service: String,
    pub operation: String,
}

impl OperationRef {
    pub fn new(service: impl Into<String>, operation: impl Into<String>) -> Self {
        Self {
            service: service.into(),
            operation: operation.into(),
        }
    }
}

impl std::fmt::Display for OperationRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.service, self.operation)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterCriteria {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub nfr_required: BTreeMap<String, String>,
}

impl FilterCriteria {
    pub fn from_annotation(a: &Annotation) -> Self {
        Self {
            partner: a.partner.clone(),
            domain: a.domain.clone(),
            nfr_required: a.nfr.clone(),
        }
    }

    pub fn accepts(&self, s: &ServiceDescriptor) -> bool {
        self.partner.as_ref().is_none_or(|p| *p == s.partner)
            && self.domain.as_ref().is_none_or(|d| *d == s.domain)
            && self
                .nfr_required
                .iter()
                .all(|(k, v)| s.nfr.get(k) == Some(v))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryDocument {
    #[serde(default)]
    pub services: Vec<ServiceDescriptor>,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    /// Sorted by service id.
    services: Vec<ServiceDescriptor>,
    by_partner: BTreeMap<String, Vec<usize>>,
    by_domain: BTreeMap<String, Vec<usize>>,
    by_concept: BTreeMap<String, Vec<OperationRef>>,
}

impl Registry {
    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let doc: RegistryDocument =
            serde_json::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        Self::from_services(doc.services)
    }

    pub fn from_services(mut services: Vec<ServiceDescriptor>) -> Result<Self, RegistryError> {
        let mut ids = BTreeSet::new();
        for s in &services {
            if !ids.insert(s.id.clone()) {
                return Err(RegistryError::DuplicateId(s.id.clone()));
            }
            if s.operations.is_empty() {
                return Err(RegistryError::Invalid(format!(
                    "service `{}` has no operations",
                    s.id
                )));
            }
            let mut op_ids = BTreeSet::new();
            for op in &s.operations {
                if !op_ids.insert(op.id.as_str()) {
                    return Err(RegistryError::DuplicateId(format!("{}.{}", s.id, op.id)));
                }
                let owner = format!("{}.{}", s.id, op.id);
                check_tags(&owner, "input", &op.inputs).map_err(RegistryError::Invalid)?;
                check_tags(&owner, "output", &op.outputs).map_err(RegistryError::Invalid)?;
            }
        }
        services.sort_by(|a, b| a.id.cmp(&b.id));
        for s in &mut services {
            s.operations.sort_by(|a, b| a.id.cmp(&b.id));
        }

        let mut reg = Registry {
            services,
            ..Default::default()
        };
        for (i, s) in reg.services.iter().enumerate() {
            reg.by_partner.entry(s.partner.clone()).or_default().push(i);
            reg.by_domain.entry(s.domain.clone()).or_default().push(i);
            for op in &s.operations {
                reg.by_concept
                    .entry(op.operation_concept.clone())
                    .or_default()
                    .push(OperationRef::new(&s.id, &op.id));
            }
        }
        Ok(reg)
    }

    pub fn services(&self) -> &[ServiceDescriptor] {
        &self.services
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    pub fn service(&self, id: &str) -> Option<&ServiceDescriptor> {
        self.services
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.services[i])
    }

    pub fn operation(&self, r: &OperationRef) -> Option<&OperationDescriptor> {
        self.service(&r.service)?
            .operations
            .iter()
            .find(|o| o.id == r.operation)
    }

    pub fn operation_count(&self) -> usize {
        self.services.iter().map(|s| s.operations.len()).sum()
    }

    /// Operation concept -> operations offering it.
    pub fn concept_index(&self) -> &BTreeMap<String, Vec<OperationRef>> {
        &self.by_concept
    }

    pub fn concept_index_len(&self) -> usize {
        self.by_concept.values().map(Vec::len).sum()
    }

    pub fn services_of_partner(&self, partner: &str) -> impl Iterator<Item = &ServiceDescriptor> {
        self.by_partner
            .get(partner)
            .into_iter()
            .flatten()
            .map(|&i| &self.services[i])
    }

    pub fn services_in_domain(&self, domain: &str) -> impl Iterator<Item = &ServiceDescriptor> {
        self.by_domain
            .get(domain)
            .into_iter()
            .flatten()
            .map(|&i| &self.services[i])
    }

    /// Operations whose service satisfies every present criterion, ordered
    /// by (service id, operation id).
    pub fn prefilter(&self, criteria: &FilterCriteria) -> Vec<OperationRef> {
        let candidates: Box<dyn Iterator<Item = &ServiceDescriptor>> =
            match (&criteria.partner, &criteria.domain) {
                (Some(p), _) => Box::new(self.services_of_partner(p)),
                (None, Some(d)) => Box::new(self.services_in_domain(d)),
                (None, None) => Box::new(self.services.iter()),
            };
        candidates
            .filter(|s| criteria.accepts(s))
            .flat_map(|s| s.operations.iter().map(|o| OperationRef::new(&s.id, &o.id)))
            .collect()
    }
}
