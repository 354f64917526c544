//! Deterministic checkers: concept factuality alignment and topic-flow
//! validation.

pub mod concept;
pub mod flow;

pub use concept::{
    factuality_pr, match_concepts, render_feedback, CheckError, ConceptReport, MatchConfig,
    MatchStage, MatchedPair,
};
pub use flow::{
    render_flow_feedback, validate_flow, validate_micro_intents, FlowReport, FlowViolation,
    FlowViolationKind, IntentViolation,
};
