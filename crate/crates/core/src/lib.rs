//! Step-level diagnosis of chain-of-thought reasoning traces.
//!
//! A trace is split into sentence-level steps, each step is tagged with its
//! functional role and a verifiability judgment, verifiable steps are linked
//! into a premise dependency graph, and then checked twice: against retrieved
//! web evidence (factual errors) and with an SMT solver (logical errors).
//! Errors are propagated along premise edges, steps are ranked by importance,
//! and everything is bundled into a content-addressed [`model::DiagnosisReport`].

pub mod annotate;
pub mod diagnostics;
pub mod eval;
pub mod fact;
pub mod fixture;
pub mod gateway;
pub mod logic;
pub mod model;
pub mod pipeline;
pub mod premise;
pub mod segment;
pub mod store;
pub mod summarizer;

pub use model::{
    parse_report, serialize_report, DependencyGraph, DiagnosisReport, ErrorAnnotation,
    FunctionTag, ReasoningStep,
};
pub use pipeline::{DiagnoseOptions, Pipeline};

/// Lowercase hex SHA-256 of `data`.
pub fn sha256_hex(data: impl AsRef<[u8]>) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(data.as_ref()))
}
