//! Turn-by-turn diagnosis-prediction evaluation: the commit/defer policy,
//! per-trajectory metrics (first/last accuracy and confidence, earliness,
//! edit overhead), aggregation, training-data builders, and the concept
//! error injector used to validate the checker.

mod inject;
mod train;

pub use inject::{inject_concept_errors, InjectionOutcome};
pub use train::{build_dynamic_examples, build_static_example, TrainingExample, UnrollConfig};

use crate::corpus::DialogueError;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("{0}")]
    Precondition(String),
    #[error("dialogue {0} carries no labels")]
    Unlabeled(String),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error("trajectory line {line}: {detail}")]
    Ingest { line: usize, detail: String },
}

/// Per-label confidences at one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnPrediction {
    #[serde(rename = "t")]
    pub turn: u32,
    pub probs: BTreeMap<String, f64>,
}

/// Per-turn label probabilities for one dialogue, covering turns 1..=T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrajectory {
    pub dialogue_id: String,
    pub turns: Vec<TurnPrediction>,
}

impl PredictionTrajectory {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.turns.is_empty() {
            return Err(ForecastError::Precondition(format!(
                "trajectory {} has no turns",
                self.dialogue_id
            )));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.turn as usize != i + 1 {
                return Err(ForecastError::Precondition(format!(
                    "trajectory {} must cover turns 1..T contiguously; index {} holds turn {}",
                    self.dialogue_id,
                    i,
                    turn.turn
                )));
            }
            for (label, p) in &turn.probs {
                if !(0.0..=1.0).contains(p) {
                    return Err(ForecastError::Precondition(format!(
                        "trajectory {} turn {} label {label:?}: probability {p} outside [0, 1]",
                        self.dialogue_id, turn.turn
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parse the newline-delimited trajectory format
/// `{"dialogue_id", "turns": [{"t", "probs": {label: p, ...}}, ...]}`.
pub fn parse_trajectories(input: &str) -> Result<Vec<PredictionTrajectory>, ForecastError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let traj: PredictionTrajectory = serde_json::from_str(line)
            .map_err(|e| ForecastError::Ingest { line: idx + 1, detail: e.to_string() })?;
        traj.validate()
            .map_err(|e| ForecastError::Ingest { line: idx + 1, detail: e.to_string() })?;
        out.push(traj);
    }
    Ok(out)
}

/// Commit threshold tau in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommitPolicy {
    pub tau: f64,
}

impl Default for CommitPolicy {
    fn default() -> Self {
        Self { tau: 0.5 }
    }
}

impl CommitPolicy {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.tau > 0.0 && self.tau < 1.0 {
            Ok(())
        } else {
            Err(ForecastError::Precondition(format!("tau must be in (0, 1), got {}", self.tau)))
        }
    }
}

/// The per-turn decision: the committed label set (probability >= tau,
/// boundary inclusive) with its top label, or a deferral when the set is
/// empty. Ties on the top probability break lexicographically by label id.
#[derive(Debug, Clone, PartialEq)]
pub enum CommitDecision {
    Defer,
    Commit {
        labels: Vec<String>,
        top_label: String,
        top_confidence: f64,
    },
}

impl CommitDecision {
    pub fn is_commit(&self) -> bool {
        matches!(self, Self::Commit { .. })
    }
}

pub fn commit(prediction: &TurnPrediction, policy: &CommitPolicy) -> CommitDecision {
    let mut labels: Vec<String> = Vec::new();
    for (label, &p) in &prediction.probs {
        if p >= policy.tau {
            labels.push(label.clone());
        }
    }
    match top_commit(prediction, policy.tau) {
        None => CommitDecision::Defer,
        Some((label, confidence)) => CommitDecision::Commit {
            labels,
            top_label: label.to_string(),
            top_confidence: confidence,
        },
    }
}

/// Allocation-free top pick: the highest probability at or above tau; strict
/// `>` keeps the lexicographically first label on ties (BTreeMap iterates in
/// ascending label order).
fn top_commit(prediction: &TurnPrediction, tau: f64) -> Option<(&str, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for (label, &p) in &prediction.probs {
        if p >= tau && best.map(|(_, bp)| p > bp).unwrap_or(true) {
            best = Some((label.as_str(), p));
        }
    }
    best
}

/// Earliness of a commit: 1 - t_pred / T.
pub fn earliness(t_pred: u32, dialogue_length: u32) -> Result<f64, ForecastError> {
    if t_pred == 0 || dialogue_length == 0 || t_pred > dialogue_length {
        return Err(ForecastError::Precondition(format!(
            "earliness requires 1 <= t_pred <= T, got t_pred={t_pred}, T={dialogue_length}"
        )));
    }
    Ok(1.0 - t_pred as f64 / dialogue_length as f64)
}

/// Edit overheads over the post-commit top-label sequence: the fraction of
/// label flips that were unnecessary. With zero flips, EO is 0 when the
/// single committed label is correct and 1 otherwise; a lone correction from
/// a wrong first label to the ground truth is necessary and free.
pub fn edit_overheads(sequence: &[String], ground_truth: &BTreeSet<String>) -> Result<f64, ForecastError> {
    let refs: Vec<&str> = sequence.iter().map(String::as_str).collect();
    edit_overheads_refs(&refs, ground_truth)
}

fn edit_overheads_refs(sequence: &[&str], ground_truth: &BTreeSet<String>) -> Result<f64, ForecastError> {
    if sequence.is_empty() {
        return Err(ForecastError::Precondition("edit overheads needs a non-empty sequence".into()));
    }
    let total_changes = sequence.windows(2).filter(|w| w[0] != w[1]).count();
    if total_changes == 0 {
        return Ok(if ground_truth.contains(sequence[0]) { 0.0 } else { 1.0 });
    }
    let first_wrong = !ground_truth.contains(sequence[0]);
    let reaches_truth = sequence.iter().any(|label| ground_truth.contains(*label));
    let necessary = usize::from(first_wrong && reaches_truth);
    Ok((total_changes - necessary) as f64 / total_changes as f64)
}

/// Everything derived from one trajectory under a commit policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub dialogue_id: String,
    pub committed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_correct: Option<bool>,
    pub earliness_first: f64,
    pub earliness_first_correct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_overhead: Option<f64>,
}

/// Evaluate one trajectory against its ground-truth label set.
pub fn evaluate_trajectory(
    trajectory: &PredictionTrajectory,
    ground_truth: &BTreeSet<String>,
    policy: &CommitPolicy,
) -> Result<TrajectoryMetrics, ForecastError> {
    policy.validate()?;
    trajectory.validate()?;
    let total_turns = trajectory.turns.len() as u32;

    let committed_turns: Vec<(u32, &str, f64)> = trajectory
        .turns
        .iter()
        .filter_map(|turn| top_commit(turn, policy.tau).map(|(label, conf)| (turn.turn, label, conf)))
        .collect();

    let Some(&(first_turn, first_label, first_confidence)) = committed_turns.first() else {
        return Ok(TrajectoryMetrics {
            dialogue_id: trajectory.dialogue_id.clone(),
            committed: false,
            first_label: None,
            first_confidence: None,
            first_correct: None,
            last_label: None,
            last_confidence: None,
            last_correct: None,
            earliness_first: 0.0,
            earliness_first_correct: 0.0,
            edit_overhead: None,
        });
    };
    let &(_, last_label, last_confidence) = committed_turns.last().expect("non-empty");

    let earliness_first = earliness(first_turn, total_turns)?;
    let earliness_first_correct = committed_turns
        .iter()
        .find(|(_, label, _)| ground_truth.contains(*label))
        .map(|&(turn, _, _)| earliness(turn, total_turns))
        .transpose()?
        .unwrap_or(0.0);

    let top_sequence: Vec<&str> = committed_turns.iter().map(|&(_, label, _)| label).collect();
    let edit_overhead = edit_overheads_refs(&top_sequence, ground_truth)?;

    Ok(TrajectoryMetrics {
        dialogue_id: trajectory.dialogue_id.clone(),
        committed: true,
        first_correct: Some(ground_truth.contains(first_label)),
        last_correct: Some(ground_truth.contains(last_label)),
        first_label: Some(first_label.to_string()),
        first_confidence: Some(first_confidence),
        last_label: Some(last_label.to_string()),
        last_confidence: Some(last_confidence),
        earliness_first,
        earliness_first_correct,
        edit_overhead: Some(edit_overhead),
    })
}

/// Mean earliness over committed trajectories, as percentages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EarlinessSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_correct: Option<f64>,
}

/// Batch summary. Accuracy, confidence, earliness, and edit overhead are
/// averaged over committed trajectories only; the non-commit rate covers all.
/// Everything is reported in percent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub trajectories: usize,
    pub committed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_confidence: Option<f64>,
    pub earliness: EarlinessSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_overhead: Option<f64>,
    pub non_commit_rate: f64,
}

pub fn aggregate(metrics: &[TrajectoryMetrics]) -> Result<AggregateSummary, ForecastError> {
    if metrics.is_empty() {
        return Err(ForecastError::Precondition("aggregate needs at least one trajectory".into()));
    }
    let committed: Vec<&TrajectoryMetrics> = metrics.iter().filter(|m| m.committed).collect();
    let pct_mean = |values: Vec<f64>| -> Option<f64> {
        if values.is_empty() {
            None
        } else {
            Some(100.0 * values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    let bool_rate = |select: fn(&TrajectoryMetrics) -> Option<bool>| -> Option<f64> {
        pct_mean(committed.iter().filter_map(|m| select(m)).map(|b| if b { 1.0 } else { 0.0 }).collect())
    };

    Ok(AggregateSummary {
        trajectories: metrics.len(),
        committed: committed.len(),
        first_accuracy: bool_rate(|m| m.first_correct),
        first_confidence: pct_mean(committed.iter().filter_map(|m| m.first_confidence).collect()),
        last_accuracy: bool_rate(|m| m.last_correct),
        last_confidence: pct_mean(committed.iter().filter_map(|m| m.last_confidence).collect()),
        earliness: EarlinessSummary {
            first: pct_mean(committed.iter().map(|m| m.earliness_first).collect()),
            first_correct: pct_mean(committed.iter().map(|m| m.earliness_first_correct).collect()),
        },
        edit_overhead: pct_mean(committed.iter().filter_map(|m| m.edit_overhead).collect()),
        non_commit_rate: 100.0 * (metrics.len() - committed.len()) as f64 / metrics.len() as f64,
    })
}
