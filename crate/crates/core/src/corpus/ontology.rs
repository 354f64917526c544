//! Topic ontology: a directed graph over conversation topics plus the
//! per-topic micro-intent inventory.

use crate::text::normalize_symbol;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// The bundled default EMS ontology (13 topics with self-loops).
pub const DEFAULT_EMS_ONTOLOGY_JSON: &str = include_str!("../../assets/ems_ontology.json");

#[derive(Debug, Deserialize, Serialize)]
struct OntologyConfig {
    topics: Vec<TopicConfig>,
    edges: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Deserialize, Serialize)]
struct TopicConfig {
    id: String,
    micro_intents: Vec<String>,
}

/// Directed topic graph with per-topic micro-intent inventories. Topic order
/// follows the config document; adjacency and intents are keyed by topic id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicOntology {
    topic_order: Vec<String>,
    topics: BTreeSet<String>,
    adjacency: BTreeMap<String, Vec<String>>,
    micro_intents: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("ontology config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("ontology declares no topics")]
    NoTopics,
    #[error("duplicate topic id {0:?}")]
    DuplicateTopic(String),
    #[error("topic {0:?} has no micro-intents")]
    NoMicroIntents(String),
    #[error("edge references undeclared topic {topic:?} (in adjacency of {from:?})")]
    UnknownEdgeTarget { from: String, topic: String },
    #[error("adjacency key {0:?} is not a declared topic")]
    UnknownEdgeSource(String),
}

/// Load and validate a topic ontology from its JSON config document.
pub fn load_topic_ontology(config: &str) -> Result<TopicOntology, OntologyError> {
    let parsed: OntologyConfig = serde_json::from_str(config)?;
    if parsed.topics.is_empty() {
        return Err(OntologyError::NoTopics);
    }

    let mut topic_order = Vec::with_capacity(parsed.topics.len());
    let mut topics = BTreeSet::new();
    let mut micro_intents = BTreeMap::new();
    for topic in &parsed.topics {
        let id = normalize_symbol(&topic.id);
        if !topics.insert(id.clone()) {
            return Err(OntologyError::DuplicateTopic(id));
        }
        let intents: Vec<String> = topic.micro_intents.iter().map(|s| normalize_symbol(s)).collect();
        if intents.is_empty() {
            return Err(OntologyError::NoMicroIntents(id));
        }
        micro_intents.insert(id.clone(), intents);
        topic_order.push(id);
    }

    let mut adjacency = BTreeMap::new();
    for (from, tos) in &parsed.edges {
        let from = normalize_symbol(from);
        if !topics.contains(&from) {
            return Err(OntologyError::UnknownEdgeSource(from));
        }
        let mut targets = Vec::with_capacity(tos.len());
        for to in tos {
            let to = normalize_symbol(to);
            if !topics.contains(&to) {
                return Err(OntologyError::UnknownEdgeTarget { from: from.clone(), topic: to });
            }
            targets.push(to);
        }
        adjacency.insert(from, targets);
    }

    Ok(TopicOntology {
        topic_order,
        topics,
        adjacency,
        micro_intents,
    })
}

impl TopicOntology {
    /// The bundled default EMS ontology.
    pub fn default_ems() -> Self {
        load_topic_ontology(DEFAULT_EMS_ONTOLOGY_JSON)
            .expect("bundled EMS ontology must be valid")
    }

    pub fn contains_topic(&self, topic: &str) -> bool {
        self.topics.contains(topic)
    }

    /// Topics in declaration order.
    pub fn topic_ids(&self) -> &[String] {
        &self.topic_order
    }

    pub fn len(&self) -> usize {
        self.topic_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topic_order.is_empty()
    }

    /// Allowed next topics from `topic` (empty if none declared).
    pub fn allowed_next(&self, topic: &str) -> &[String] {
        self.adjacency.get(topic).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.allowed_next(from).iter().any(|t| t == to)
    }

    /// Micro-intent inventory of `topic` (empty if the topic is unknown).
    pub fn micro_intents(&self, topic: &str) -> &[String] {
        self.micro_intents.get(topic).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Deterministic text rendering of the flow for prompt injection: one
    /// line per topic with its steps and allowed next topics.
    pub fn render_flow_text(&self) -> String {
        let mut out = String::new();
        for topic in &self.topic_order {
            out.push_str(&format!(
                "- {} (steps: {}) -> allowed next: {}\n",
                topic,
                self.micro_intents(topic).join("; "),
                self.allowed_next(topic).join(" | "),
            ));
        }
        out
    }
}
