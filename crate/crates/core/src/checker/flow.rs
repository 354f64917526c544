//! Topic-flow checker: validates a topic sequence as a walk in the ontology
//! graph.

use crate::corpus::TopicOntology;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowViolationKind {
    TransitionError,
    HallucinatedTopic,
}

/// One flow defect. For a transition error, `index` is the position of the
/// source topic of the offending pair; for a hallucinated topic it is the
/// position of the unknown topic itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowViolation {
    pub index: usize,
    pub kind: FlowViolationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_topic: Option<String>,
    pub to_topic: String,
}

impl fmt::Display for FlowViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FlowViolationKind::TransitionError => write!(
                f,
                "transition error at position {} -> {}: no edge from {:?} to {:?}",
                self.index,
                self.index + 1,
                self.from_topic.as_deref().unwrap_or(""),
                self.to_topic
            ),
            FlowViolationKind::HallucinatedTopic => write!(
                f,
                "hallucinated topic at position {}: {:?} is not in the ontology",
                self.index, self.to_topic
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowReport {
    pub violations: Vec<FlowViolation>,
}

impl FlowReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Validate a topic sequence against the ontology. Unknown topics are flagged
/// as hallucinated; consecutive pairs of known topics without a declared edge
/// are transition errors. A hallucinated topic does not additionally produce
/// transition errors for the pairs it participates in.
pub fn validate_flow(topics: &[String], ontology: &TopicOntology) -> FlowReport {
    let mut violations = Vec::new();
    for (i, topic) in topics.iter().enumerate() {
        if !ontology.contains_topic(topic) {
            violations.push(FlowViolation {
                index: i,
                kind: FlowViolationKind::HallucinatedTopic,
                from_topic: None,
                to_topic: topic.clone(),
            });
            continue;
        }
        if i > 0 {
            let prev = &topics[i - 1];
            if ontology.contains_topic(prev) && !ontology.has_edge(prev, topic) {
                violations.push(FlowViolation {
                    index: i - 1,
                    kind: FlowViolationKind::TransitionError,
                    from_topic: Some(prev.clone()),
                    to_topic: topic.clone(),
                });
            }
        }
    }
    FlowReport { violations }
}

/// Optional strict check (off by default in the pipeline): every
/// (topic, micro_intent) pair must use an intent from the topic's inventory.
/// Unknown topics are skipped here; `validate_flow` already reports them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentViolation {
    pub index: usize,
    pub topic: String,
    pub micro_intent: String,
}

impl fmt::Display for IntentViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "micro-intent {:?} at position {} is not in the inventory of topic {:?}",
            self.micro_intent, self.index, self.topic
        )
    }
}

pub fn validate_micro_intents(
    pairs: &[(String, String)],
    ontology: &TopicOntology,
) -> Vec<IntentViolation> {
    pairs
        .iter()
        .enumerate()
        .filter(|(_, (topic, intent))| {
            ontology.contains_topic(topic)
                && !ontology.micro_intents(topic).iter().any(|i| i == intent)
        })
        .map(|(index, (topic, intent))| IntentViolation {
            index,
            topic: topic.clone(),
            micro_intent: intent.clone(),
        })
        .collect()
}

/// Enumerated feedback in the same style as the concept critique.
pub fn render_flow_feedback(report: &FlowReport) -> String {
    if report.is_pass() {
        return "Topic flow check passed: the topic sequence is a valid walk.".to_string();
    }
    let mut out = String::from("Topic flow check failed.\n");
    for (i, violation) in report.violations.iter().enumerate() {
        out.push_str(&format!("  {}. {}\n", i + 1, violation));
    }
    out.trim_end().to_string()
}
