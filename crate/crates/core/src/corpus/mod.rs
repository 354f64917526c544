//! Domain types and wire formats: patient care records, dialogues, plans,
//! topic ontologies, and concepts.

mod concept;
mod dialogue;
mod ontology;
mod plan;
mod record;

pub use concept::{Concept, ConceptSet};
pub use dialogue::{
    parse_dialogue_corpus, parse_dialogue_line, serialize_dialogue, serialize_utterance, Dialogue,
    DialogueError, LineParseError, Utterance, RESERVED_TAGS,
};
pub use ontology::{load_topic_ontology, OntologyError, TopicOntology, DEFAULT_EMS_ONTOLOGY_JSON};
pub use plan::{DialoguePlan, PlanStep, PlanViolation};
pub use record::{
    parse_epcr, parse_epcr_stream, IngestError, Intervention, InterventionKind, LabelSet,
    PatientCareRecord, VitalKind, VitalReading,
};
