use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("lookup table parse error: {0}")]
    Parse(String),
    #[error("duplicate lookup table `{0}`")]
    Duplicate(String),
    #[error("unknown lookup table `{0}`")]
    Unknown(String),
}

/// Static value-to-value replacement table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookupTable {
    pub id: String,
    pub entries: BTreeMap<String, String>,
}

impl LookupTable {
    pub fn replace(&self, value: &str) -> Option<&str> {
        self.entries.get(value).map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDocument {
    #[serde(default)]
    pub tables: Vec<LookupTable>,
}

#[derive(Debug, Clone, Default)]
pub struct TableDb {
    tables: BTreeMap<String, LookupTable>,
}

impl TableDb {
    pub fn from_json(text: &str) -> Result<Self, TableError> {
        let doc: TableDocument =
            serde_json::from_str(text).map_err(|e| TableError::Parse(e.to_string()))?;
        Self::from_tables(doc.tables)
    }

    pub fn from_tables(tables: Vec<LookupTable>) -> Result<Self, TableError> {
        let mut out = BTreeMap::new();
        for t in tables {
            if out.contains_key(&t.id) {
                return Err(TableError::Duplicate(t.id));
            }
            out.insert(t.id.clone(), t);
        }
        Ok(Self { tables: out })
    }

    pub fn get(&self, id: &str) -> Result<&LookupTable, TableError> {
        self.tables
            .get(id)
            .ok_or_else(|| TableError::Unknown(id.to_string()))
    }
}
