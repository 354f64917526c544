//! Dialogue plans: ordered (topic, micro_intent, evidence) tuples produced by
//! the planner stage.

use crate::text::normalize_symbol;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// One plan step. Evidence entries are verbatim snippets of the source
/// record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub topic: String,
    pub micro_intent: String,
    #[serde(default)]
    pub evidence: Vec<String>,
}

/// A planner output: an ordered sequence of plan steps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialoguePlan {
    pub steps: Vec<PlanStep>,
}

/// Structural plan defects, rendered as checker feedback for the planner
/// loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanViolation {
    /// Evidence text does not occur verbatim in the source record.
    EvidenceNotVerbatim { step: usize, evidence: String },
    /// The same evidence snippet is assigned to more than one step.
    EvidenceReused { first_step: usize, second_step: usize, evidence: String },
    /// A step carries an empty topic or micro-intent.
    EmptyField { step: usize, field: &'static str },
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EvidenceNotVerbatim { step, evidence } => write!(
                f,
                "step {step}: evidence {evidence:?} does not occur verbatim in the source record"
            ),
            Self::EvidenceReused { first_step, second_step, evidence } => write!(
                f,
                "evidence {evidence:?} is used by both step {first_step} and step {second_step}; each snippet must be used exactly once"
            ),
            Self::EmptyField { step, field } => write!(f, "step {step}: empty {field}"),
        }
    }
}

impl DialoguePlan {
    /// Parse the JSON array form emitted inside a `<plan>` block. Topics and
    /// intents are NFC-normalized and trimmed.
    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let steps: Vec<PlanStep> = serde_json::from_str(json)?;
        Ok(Self {
            steps: steps
                .into_iter()
                .map(|s| PlanStep {
                    topic: normalize_symbol(&s.topic),
                    micro_intent: normalize_symbol(&s.micro_intent),
                    evidence: s.evidence,
                })
                .collect(),
        })
    }

    /// The plan's topic sequence, in step order.
    pub fn topic_sequence(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.topic.clone()).collect()
    }

    /// Evidence snippets and topic/intent names joined into one text block
    /// (what the plan-level concept check extracts from).
    pub fn grounding_text(&self) -> String {
        let mut parts = Vec::new();
        for step in &self.steps {
            parts.push(step.topic.clone());
            parts.push(step.micro_intent.clone());
            parts.extend(step.evidence.iter().cloned());
        }
        parts.join("\n")
    }

    /// Check the structural plan invariants against the record text: every
    /// snippet occurs verbatim, and no snippet is used twice. Steps are
    /// numbered from 1 in the report.
    pub fn structural_violations(&self, record_text: &str) -> Vec<PlanViolation> {
        let mut violations = Vec::new();
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (idx, step) in self.steps.iter().enumerate() {
            let step_no = idx + 1;
            if step.topic.is_empty() {
                violations.push(PlanViolation::EmptyField { step: step_no, field: "topic" });
            }
            if step.micro_intent.is_empty() {
                violations.push(PlanViolation::EmptyField { step: step_no, field: "micro_intent" });
            }
            for evidence in &step.evidence {
                if !record_text.contains(evidence.as_str()) {
                    violations.push(PlanViolation::EvidenceNotVerbatim {
                        step: step_no,
                        evidence: evidence.clone(),
                    });
                }
                match seen.get(evidence.as_str()) {
                    Some(&first) if first != step_no => violations.push(PlanViolation::EvidenceReused {
                        first_step: first,
                        second_step: step_no,
                        evidence: evidence.clone(),
                    }),
                    Some(_) => {}
                    None => {
                        seen.insert(evidence.as_str(), step_no);
                    }
                }
            }
        }
        violations
    }
}
