//! Informational reconciliation: per-input message transformations built
//! from concept bindings, format decompositions, unit conversions and
//! lookup tables.

pub mod binding;
pub mod expr;
pub mod format;
pub mod spec;
pub mod tables;
pub mod units;
pub mod xslt;

use thiserror::Error;

pub use binding::{bind_concepts, Binding, BindingKind, BindingOutcome, UnboundTag};
pub use expr::{parse_expression, ExprError, Expression};
pub use format::{FormatDb, FormatDecomposition, FormatError, FormatKey, PartSpec};
pub use spec::{
    apply_transformation, derive_format_steps, generate_transformation_spec, Message, Step,
    TagTransform, TransformationSpec,
};
pub use tables::{LookupTable, TableDb, TableError};
pub use units::{UnitConversion, UnitDb, UnitError};
pub use xslt::{render_xslt, XsltError};

use crate::ontology::OntologyError;

pub const DEFAULT_FORMATS: &str = include_str!("../../data/formats.json");
pub const DEFAULT_UNITS: &str = include_str!("../../data/units.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataReconError {
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Unit(#[from] UnitError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Expression(#[from] ExprError),
    #[error("message lacks tag `{0}`")]
    MissingTag(String),
    #[error("tag `{tag}`: `{value}` is not a number")]
    NotANumber { tag: String, value: String },
    #[error("value `{value}` not found in lookup table `{table}`")]
    LookupMiss { table: String, value: String },
    #[error("input `{0}` is unbound and was not supplied")]
    Unbound(String),
    #[error("invalid transformation spec: {0}")]
    InvalidSpec(String),
}

/// The three reconciliation databases, immutable once loaded.
#[derive(Debug, Clone, Default)]
pub struct MediationDb {
    pub formats: FormatDb,
    pub units: UnitDb,
    pub tables: TableDb,
}

impl MediationDb {
    /// Shipped format and unit databases, no lookup tables.
    pub fn defaults() -> Self {
        Self {
            formats: FormatDb::from_json(DEFAULT_FORMATS).expect("default formats are valid"),
            units: UnitDb::from_json(DEFAULT_UNITS).expect("default units are valid"),
            tables: TableDb::default(),
        }
    }
}
