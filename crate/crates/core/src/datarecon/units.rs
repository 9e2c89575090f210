use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{parse_expression, ExprError, Expression};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitError {
    #[error("unit database parse error: {0}")]
    Parse(String),
    #[error("conversion {from} -> {to}: {source}")]
    Expression {
        from: String,
        to: String,
        source: ExprError,
    },
    #[error("conversion {from} -> {to} must reference exactly one placeholder")]
    Placeholder { from: String, to: String },
    #[error("duplicate conversion {from} -> {to}")]
    Duplicate { from: String, to: String },
    #[error("no conversion from {from} to {to}")]
    NoConversion { from: String, to: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitConversion {
    pub from: String,
    pub to: String,
    pub expression: String,
}

impl UnitConversion {
    pub fn compile(&self) -> Result<Expression, UnitError> {
        let e = parse_expression(&self.expression).map_err(|source| UnitError::Expression {
            from: self.from.clone(),
            to: self.to.clone(),
            source,
        })?;
        if e.variable().is_none() {
            return Err(UnitError::Placeholder {
                from: self.from.clone(),
                to: self.to.clone(),
            });
        }
        Ok(e)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitDocument {
    #[serde(default)]
    pub conversions: Vec<UnitConversion>,
}

#[derive(Debug, Clone, Default)]
pub struct UnitDb {
    entries: BTreeMap<(String, String), (UnitConversion, Expression)>,
}

impl UnitDb {
    pub fn from_json(text: &str) -> Result<Self, UnitError> {
        let doc: UnitDocument =
            serde_json::from_str(text).map_err(|e| UnitError::Parse(e.to_string()))?;
        Self::from_conversions(doc.conversions)
    }

    pub fn from_conversions(cs: Vec<UnitConversion>) -> Result<Self, UnitError> {
        let mut entries = BTreeMap::new();
        for c in cs {
            let expr = c.compile()?;
            let key = (c.from.clone(), c.to.clone());
            if entries.contains_key(&key) {
                return Err(UnitError::Duplicate {
                    from: c.from,
                    to: c.to,
                });
            }
            entries.insert(key, (c, expr));
        }
        Ok(Self { entries })
    }

    pub fn conversions(&self) -> impl Iterator<Item = &UnitConversion> {
        self.entries.values().map(|(c, _)| c)
    }

    /// Conversion step between two units: `None` when they are identical,
    /// the stored entry when present, otherwise the algebraic inverse of a
    /// stored affine `to -> from` entry.
    pub fn derive_unit_step(
        &self,
        from: &str,
        to: &str,
    ) -> Result<Option<UnitConversion>, UnitError> {
        if from == to {
            return Ok(None);
        }
        if let Some((c, _)) = self.entries.get(&(from.to_string(), to.to_string())) {
            return Ok(Some(c.clone()));
        }
        if let Some((_, reverse)) = self.entries.get(&(to.to_string(), from.to_string())) {
            if let Some(inv) = reverse.inverse(from) {
                return Ok(Some(UnitConversion {
                    from: from.to_string(),
                    to: to.to_string(),
                    expression: inv.to_string(),
                }));
            }
        }
        Err(UnitError::NoConversion {
            from: from.to_string(),
            to: to.to_string(),
        })
    }

    pub fn can_convert(&self, from: &str, to: &str) -> bool {
        self.derive_unit_step(from, to).is_ok()
    }
}
