//! Grounded multi-party EMS dialogue synthesis and evaluation.
//!
//! The crate covers the full loop: structured patient-care-record ingest,
//! deterministic concept extraction, a plan -> generate -> refine agent
//! pipeline gated by concept / topic-flow / style checkers, intrinsic quality
//! metrics with an LLM-judge harness, and a turn-by-turn diagnosis-prediction
//! evaluation harness with training-data builders.

pub mod agents;
pub mod checker;
pub mod corpus;
pub mod embed;
pub mod extract;
pub mod forecast;
pub mod gateway;
pub mod intrinsic;
pub mod text;

pub use checker::{match_concepts, validate_flow, ConceptReport, FlowReport, MatchConfig};
pub use corpus::{
    parse_dialogue_line, parse_epcr, serialize_dialogue, Dialogue, DialoguePlan, PatientCareRecord,
    TopicOntology, Utterance,
};
pub use embed::Embedder;
pub use extract::{extract_from_record, select_branch, Branch, Lexicon};
pub use gateway::{BackendConfig, ChatBackend, ChatRequest, Gateway};
