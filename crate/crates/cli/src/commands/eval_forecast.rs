//! `colloquy eval forecast`: trajectory metrics and the aggregate summary.

use crate::{io, CliError, ForecastArgs};
use colloquy::forecast::{aggregate, evaluate_trajectory, parse_trajectories, AggregateSummary, CommitPolicy, TrajectoryMetrics};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Deserialize)]
struct LabelLine {
    dialogue_id: String,
    labels: Vec<String>,
}

#[derive(Serialize)]
struct ForecastReport {
    tau: f64,
    per_dialogue: Vec<TrajectoryMetrics>,
    summary: AggregateSummary,
}

pub fn run(args: ForecastArgs) -> Result<i32, CliError> {
    let trajectories = parse_trajectories(&io::read_file(&args.trajectories)?)
        .map_err(|e| CliError::usage(format!("trajectories {}: {e}", args.trajectories.display())))?;
    if trajectories.is_empty() {
        return Err(CliError::usage("trajectory file is empty"));
    }

    let mut labels: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (idx, line) in io::read_file(&args.labels)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LabelLine = serde_json::from_str(line)
            .map_err(|e| CliError::usage(format!("labels {} line {}: {e}", args.labels.display(), idx + 1)))?;
        labels.insert(parsed.dialogue_id, parsed.labels.into_iter().collect());
    }

    let policy = CommitPolicy { tau: args.tau };
    let mut per_dialogue = Vec::with_capacity(trajectories.len());
    for trajectory in &trajectories {
        let ground_truth = labels.get(&trajectory.dialogue_id).ok_or_else(|| {
            CliError::usage(format!("no ground-truth labels for dialogue {}", trajectory.dialogue_id))
        })?;
        let metrics = evaluate_trajectory(trajectory, ground_truth, &policy)
            .map_err(|e| CliError::usage(format!("trajectory {}: {e}", trajectory.dialogue_id)))?;
        per_dialogue.push(metrics);
    }
    let summary = aggregate(&per_dialogue).map_err(|e| CliError::other(e.to_string()))?;

    let report = ForecastReport { tau: args.tau, per_dialogue, summary };
    if let Some(out) = &args.out {
        io::write_json(out, &report)?;
    }
    let s = &report.summary;
    println!("trajectories: {} (committed {})", s.trajectories, s.committed);
    println!("first accuracy %: {}", fmt_opt(s.first_accuracy));
    println!("first confidence %: {}", fmt_opt(s.first_confidence));
    println!("last accuracy %: {}", fmt_opt(s.last_accuracy));
    println!("last confidence %: {}", fmt_opt(s.last_confidence));
    println!("earliness (1st / 1st-correct) %: {} / {}", fmt_opt(s.earliness.first), fmt_opt(s.earliness.first_correct));
    println!("edit overhead %: {}", fmt_opt(s.edit_overhead));
    println!("non-commit rate %: {:.2}", s.non_commit_rate);
    Ok(0)
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".to_string())
}
