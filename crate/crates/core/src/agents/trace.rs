//! Pipeline audit traces: per-stage iteration counts, per-iteration checker
//! findings, and the final outcome. Serialized to the traces / rejects
//! streams.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Accepted,
    Exhausted,
}

/// What one checker pass of one iteration found.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hallucinated: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flow_violations: Vec<String>,
    /// Plan-structure defects, unparseable lines, turn-numbering problems,
    /// and branch-conformance violations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub structural_issues: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_approved: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub style_critiques: Vec<String>,
    pub pass: bool,
}

impl IterationReport {
    pub fn hard_pass(&self) -> bool {
        self.missing.is_empty()
            && self.hallucinated.is_empty()
            && self.flow_violations.is_empty()
            && self.structural_issues.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub status: StageStatus,
    pub iterations: u32,
    pub reports: Vec<IterationReport>,
}

impl StageTrace {
    pub fn new() -> Self {
        Self {
            status: StageStatus::Exhausted,
            iterations: 0,
            reports: Vec::new(),
        }
    }
}

impl Default for StageTrace {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStatus {
    Accepted,
    Exhausted,
}

/// Full per-record audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub record_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_id: Option<String>,
    pub status: PipelineStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_approved: Option<bool>,
    pub branch: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<StageTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<StageTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<StageTrace>,
    /// Hard error (backend failure, unparseable output after the format
    /// retry) that routed this record to the rejects stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PipelineTrace {
    pub fn total_iterations(&self) -> u32 {
        [&self.plan, &self.generate, &self.refine]
            .into_iter()
            .flatten()
            .map(|s| s.iterations)
            .sum()
    }

    /// Iterations spent fixing concept and topic-flow errors in the plan and
    /// generate stages (the figure reported by the generate summary).
    pub fn plan_generate_iterations(&self) -> u32 {
        [&self.plan, &self.generate]
            .into_iter()
            .flatten()
            .map(|s| s.iterations)
            .sum()
    }
}
