//! `colloquy check`: standalone concept + topic-flow audit of a dialogue
//! corpus against its source records, with corpus-level factuality P/R.

use crate::config::RunConfig;
use crate::{io, CliError, CheckArgs};
use colloquy::checker::{factuality_pr, match_concepts, validate_flow, ConceptReport, MatchConfig};
use colloquy::corpus::{parse_dialogue_corpus, parse_epcr_stream, LabelSet};
use colloquy::extract::{extract_from_record, extract_with_anchors};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Serialize)]
struct DialogueCheck {
    dialogue_id: String,
    source_record_id: String,
    matched: usize,
    missing: Vec<String>,
    hallucinated: Vec<String>,
    precision: f64,
    recall: f64,
    flow_violations: Vec<String>,
    pass: bool,
}

#[derive(Serialize)]
struct CheckReport {
    corpus_precision: f64,
    corpus_recall: f64,
    dialogues: usize,
    passing: usize,
    unknown_records: Vec<String>,
    per_dialogue: Vec<DialogueCheck>,
}

pub fn run(args: CheckArgs) -> Result<i32, CliError> {
    let config = RunConfig::load(args.config.as_deref())?;
    let lexicon = config.lexicon()?;
    let ontology = config.ontology()?;
    let embedder = config.embedder()?;

    let corpus = parse_dialogue_corpus(&io::read_file(&args.corpus)?)
        .map_err(|e| CliError::usage(format!("corpus {}: {e}", args.corpus.display())))?;
    let records = parse_epcr_stream(&io::read_file(&args.records)?, &LabelSet::Open)
        .map_err(|e| CliError::usage(format!("records {}: {e}", args.records.display())))?;
    let by_id: BTreeMap<&str, _> = records.iter().map(|r| (r.record_id.as_str(), r)).collect();

    let match_config = MatchConfig::default();
    let mut per_dialogue = Vec::new();
    let mut unknown_records = Vec::new();
    let mut totals = (0usize, 0usize, 0usize); // matched, fp, fn

    for dialogue in &corpus {
        let Some(record) = by_id.get(dialogue.source_record_id.as_str()) else {
            unknown_records.push(dialogue.dialogue_id.clone());
            continue;
        };
        let source = extract_from_record(record, &lexicon);
        let target = extract_with_anchors(&dialogue.joined_text(), &lexicon, &source);
        let concept_report = match_concepts(&source, &target, embedder.as_ref(), &match_config)
            .map_err(|e| CliError::other(format!("dialogue {}: {e}", dialogue.dialogue_id)))?;
        let flow_report = validate_flow(&dialogue.topic_sequence(), &ontology);
        let (precision, recall) = factuality_pr(&concept_report);
        totals.0 += concept_report.matched.len();
        totals.1 += concept_report.hallucinated.len();
        totals.2 += concept_report.missing.len();
        per_dialogue.push(DialogueCheck {
            dialogue_id: dialogue.dialogue_id.clone(),
            source_record_id: dialogue.source_record_id.clone(),
            matched: concept_report.matched.len(),
            missing: concept_report.missing.surfaces(),
            hallucinated: concept_report.hallucinated.surfaces(),
            precision,
            recall,
            flow_violations: flow_report.violations.iter().map(ToString::to_string).collect(),
            pass: concept_report.is_pass() && flow_report.is_pass(),
        });
    }

    // corpus-level micro P/R via the same definitional route
    let merged = ConceptReport {
        matched: (0..totals.0)
            .map(|_| colloquy::checker::MatchedPair {
                source: colloquy::corpus::Concept::structured("x", "merge"),
                target: colloquy::corpus::Concept::structured("x", "merge"),
                stage: colloquy::checker::MatchStage::Syntactic,
                similarity: 1.0,
            })
            .collect(),
        missing: (0..totals.2)
            .map(|i| colloquy::corpus::Concept::structured(format!("fn{i}"), "merge"))
            .collect(),
        hallucinated: (0..totals.1)
            .map(|i| colloquy::corpus::Concept::structured(format!("fp{i}"), "merge"))
            .collect(),
    };
    let (corpus_precision, corpus_recall) = factuality_pr(&merged);

    let passing = per_dialogue.iter().filter(|d| d.pass).count();
    let report = CheckReport {
        corpus_precision,
        corpus_recall,
        dialogues: per_dialogue.len(),
        passing,
        unknown_records: unknown_records.clone(),
        per_dialogue,
    };
    if let Some(out) = &args.out {
        io::write_json(out, &report)?;
    }
    println!("dialogues checked: {}", report.dialogues);
    println!("passing: {passing}");
    println!("corpus precision: {corpus_precision:.4}");
    println!("corpus recall: {corpus_recall:.4}");
    if !unknown_records.is_empty() {
        eprintln!("error: {} dialogue(s) reference unknown records: {unknown_records:?}", unknown_records.len());
        return Ok(1);
    }
    Ok(0)
}
