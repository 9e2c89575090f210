//! Design-time mediation compiler.
//!
//! Reconciles an annotated business process with a registry of annotated
//! technical services: matches activity groups to service compositions,
//! generates per-input message transformations, and emits an executable
//! orchestration document.

pub mod datarecon;
pub mod matchmaker;
pub mod ontology;
pub mod pipeline;
pub mod procmodel;
pub mod registry;
pub mod simulate;
pub mod textsim;
pub mod wfgen;
