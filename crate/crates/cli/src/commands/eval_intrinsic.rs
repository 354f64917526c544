//! `colloquy eval intrinsic`: Self-BLEU, corpus statistics, LLM-judge
//! metrics (logic, realism, safety, role, groundedness), and comparative
//! ranking with MRR across corpora.

use crate::config::{JudgeProvider, RunConfig};
use crate::{io, CliError, IntrinsicArgs};
use colloquy::agents::DEFAULT_RULES;
use colloquy::corpus::{parse_dialogue_corpus, parse_epcr_stream, Dialogue, LabelSet, PatientCareRecord};
use colloquy::intrinsic::{
    corpus_stats, judge_conversation, judge_ranking, judge_utterance, mrr, self_bleu, yes_rate,
    CorpusStats, JudgeHarness, JudgeLogRecord, JudgeMetric, UtteranceContext, VerdictValue,
};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

#[derive(Serialize, Default)]
struct IntrinsicReport {
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    self_bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<CorpusStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logic_mean: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    yes_rates: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mrr: Option<f64>,
    judged_items: usize,
}

pub fn run(args: IntrinsicArgs) -> Result<i32, CliError> {
    let config = RunConfig::load(args.config.as_deref())?;
    let seed = config.seed(args.seed);
    let workers = config.workers(args.workers);

    let corpora: Vec<Vec<Dialogue>> = args
        .corpus
        .iter()
        .map(|path| {
            parse_dialogue_corpus(&io::read_file(path)?)
                .map_err(|e| CliError::usage(format!("corpus {}: {e}", path.display())))
        })
        .collect::<Result<_, _>>()?;
    let base = &corpora[0];

    let records: Option<Vec<PatientCareRecord>> = match &args.records {
        None => None,
        Some(path) => Some(
            parse_epcr_stream(&io::read_file(path)?, &LabelSet::Open)
                .map_err(|e| CliError::usage(format!("records {}: {e}", path.display())))?,
        ),
    };
    let records_by_id: BTreeMap<&str, &PatientCareRecord> = records
        .iter()
        .flatten()
        .map(|r| (r.record_id.as_str(), r))
        .collect();

    let mut report = IntrinsicReport { seed, ..Default::default() };
    if args.self_bleu {
        report.self_bleu = Some(self_bleu(base).map_err(|e| CliError::usage(e.to_string()))?);
    }
    if args.stats {
        report.stats = Some(corpus_stats(base));
    }

    let metrics: Vec<JudgeMetric> = args
        .judge
        .iter()
        .map(|name| match name.as_str() {
            "logic" => Ok(JudgeMetric::Logic),
            "ranking" => Ok(JudgeMetric::Ranking),
            "realism" => Ok(JudgeMetric::Realism),
            "safety" => Ok(JudgeMetric::Safety),
            "role" => Ok(JudgeMetric::Role),
            "groundedness" => Ok(JudgeMetric::Groundedness),
            other => Err(CliError::usage(format!("unknown judge metric {other:?}"))),
        })
        .collect::<Result<_, _>>()?;

    let mut log: Vec<JudgeLogRecord> = Vec::new();
    if !metrics.is_empty() {
        let provider = config.judge_provider()?;
        let agent_config = config.agent_config()?;
        let rules = agent_config.rules.clone();
        let exemplar = agent_config.exemplars.first().cloned().unwrap_or_else(|| DEFAULT_RULES.to_string());

        for metric in &metrics {
            match metric {
                JudgeMetric::Logic => {
                    let verdicts = judge_dialogues(base, &provider, &agent_config.templates, workers)?;
                    let scores: Vec<f64> = verdicts
                        .iter()
                        .map(|(_, v)| match v.value {
                            VerdictValue::Likert(s) => s as f64,
                            _ => 0.0,
                        })
                        .collect();
                    report.logic_mean = Some(scores.iter().sum::<f64>() / scores.len().max(1) as f64);
                    log.extend(verdicts.iter().map(|(id, v)| v.log_record(id, None)));
                    report.judged_items += verdicts.len();
                }
                JudgeMetric::Ranking => {
                    if corpora.len() < 2 {
                        return Err(CliError::usage("ranking needs at least two --corpus files"));
                    }
                    let (value, outcomes) = rank_corpora(&corpora, &provider, &config, seed)?;
                    report.mrr = Some(value);
                    log.extend(outcomes);
                    report.judged_items += 1;
                }
                utterance_metric => {
                    if *utterance_metric == JudgeMetric::Groundedness && records_by_id.is_empty() {
                        return Err(CliError::usage("groundedness judging needs --records"));
                    }
                    let verdicts = judge_utterances(
                        base,
                        *utterance_metric,
                        &provider,
                        &agent_config.templates,
                        &rules,
                        &exemplar,
                        &records_by_id,
                        workers,
                    )?;
                    let bools: Vec<bool> = verdicts
                        .iter()
                        .map(|(_, v)| matches!(v.value, VerdictValue::YesNo(true)))
                        .collect();
                    let rate = yes_rate(&bools).map_err(|e| CliError::usage(e.to_string()))?;
                    report.yes_rates.insert(utterance_metric.as_str().to_string(), rate);
                    log.extend(verdicts.iter().map(|(id, v)| v.log_record(id, None)));
                    report.judged_items += verdicts.len();
                }
            }
        }
    }

    if let Some(path) = &args.judge_log {
        io::write_jsonl(path, &log)?;
    }
    if let Some(out) = &args.out {
        io::write_json(out, &report)?;
    }
    println!("seed: {seed}");
    if let Some(v) = report.self_bleu {
        println!("self-BLEU %: {v:.4}");
    }
    if let Some(stats) = &report.stats {
        println!(
            "dialogues: {} utterances: {} tokens: {} vocab: {} U/D: {:.2} T/U: {:.2}",
            stats.dialogues, stats.utterances, stats.tokens, stats.vocab,
            stats.utterances_per_dialogue, stats.tokens_per_utterance
        );
    }
    if let Some(v) = report.logic_mean {
        println!("logic mean (1-5): {v:.3}");
    }
    for (metric, rate) in &report.yes_rates {
        println!("{metric} yes-rate %: {rate:.2}");
    }
    if let Some(v) = report.mrr {
        println!("MRR: {v:.4}");
    }
    Ok(0)
}

type Judged = Vec<(String, colloquy::intrinsic::JudgeVerdict)>;

fn judge_dialogues(
    corpus: &[Dialogue],
    provider: &JudgeProvider,
    templates: &colloquy::agents::PromptTemplates,
    workers: usize,
) -> Result<Judged, CliError> {
    parallel_indexed(corpus.len(), workers, |index| {
        let backend = provider.backend_for_item(index);
        let harness = JudgeHarness::new(backend.as_ref(), templates, provider.model_id());
        let dialogue = &corpus[index];
        judge_conversation(&harness, dialogue, JudgeMetric::Logic)
            .map(|v| (dialogue.dialogue_id.clone(), v))
            .map_err(|e| CliError::other(format!("logic judge on {}: {e}", dialogue.dialogue_id)))
    })
}

#[allow(clippy::too_many_arguments)]
fn judge_utterances(
    corpus: &[Dialogue],
    metric: JudgeMetric,
    provider: &JudgeProvider,
    templates: &colloquy::agents::PromptTemplates,
    rules: &str,
    exemplar: &str,
    records_by_id: &BTreeMap<&str, &PatientCareRecord>,
    workers: usize,
) -> Result<Judged, CliError> {
    let items: Vec<(usize, usize)> = corpus
        .iter()
        .enumerate()
        .flat_map(|(d, dialogue)| (0..dialogue.utterances.len()).map(move |u| (d, u)))
        .collect();
    parallel_indexed(items.len(), workers, |index| {
        let (d, u) = items[index];
        let dialogue = &corpus[d];
        let utterance = &dialogue.utterances[u];
        let record = records_by_id.get(dialogue.source_record_id.as_str()).copied();
        if metric == JudgeMetric::Groundedness && record.is_none() {
            return Err(CliError::usage(format!(
                "no source record {} for dialogue {}",
                dialogue.source_record_id, dialogue.dialogue_id
            )));
        }
        let backend = provider.backend_for_item(index);
        let harness = JudgeHarness::new(backend.as_ref(), templates, provider.model_id());
        let context = UtteranceContext {
            record,
            dialogue: Some(dialogue),
            rules: Some(rules),
            exemplar: Some(exemplar),
        };
        judge_utterance(&harness, utterance, metric, &context)
            .map(|v| (format!("{}:{}", dialogue.dialogue_id, utterance.turn), v))
            .map_err(|e| CliError::other(format!("{} judge on {}:{}: {e}", metric.as_str(), dialogue.dialogue_id, utterance.turn)))
    })
}

/// Rank aligned dialogue groups across corpora; returns the MRR of the first
/// corpus plus the per-case log records.
fn rank_corpora(
    corpora: &[Vec<Dialogue>],
    provider: &JudgeProvider,
    config: &RunConfig,
    seed: u64,
) -> Result<(f64, Vec<JudgeLogRecord>), CliError> {
    let agent_config = config.agent_config()?;
    let mut common: BTreeSet<&str> = corpora[0].iter().map(|d| d.source_record_id.as_str()).collect();
    for corpus in &corpora[1..] {
        let ids: BTreeSet<&str> = corpus.iter().map(|d| d.source_record_id.as_str()).collect();
        common = common.intersection(&ids).copied().collect();
    }
    if common.is_empty() {
        return Err(CliError::usage("no source_record_id is shared across all corpora"));
    }

    let mut ranks = Vec::new();
    let mut log = Vec::new();
    for (case, record_id) in common.iter().enumerate() {
        let candidates: Vec<Dialogue> = corpora
            .iter()
            .map(|corpus| {
                corpus
                    .iter()
                    .find(|d| d.source_record_id == *record_id)
                    .cloned()
                    .expect("id is in the intersection")
            })
            .collect();
        let backend = provider.backend_for_item(case);
        let harness = JudgeHarness::new(backend.as_ref(), &agent_config.templates, provider.model_id());
        let case_seed = seed.wrapping_add(case as u64);
        let outcome = judge_ranking(&harness, &candidates, case_seed)
            .map_err(|e| CliError::other(format!("ranking judge on record {record_id}: {e}")))?;
        let rank = outcome
            .rank_of(0)
            .ok_or_else(|| CliError::other(format!("no rank for the target corpus on record {record_id}")))?;
        ranks.push(rank);
        log.push(JudgeLogRecord {
            metric: "ranking".to_string(),
            item_id: record_id.to_string(),
            value: serde_json::json!({
                "raw_ranking": outcome.raw_ranking,
                "presented": outcome.presented,
                "best_to_worst": outcome.best_to_worst,
                "target_rank": rank,
            }),
            why: String::new(),
            seed: Some(case_seed),
            prompt_hash: outcome.prompt_hash,
        });
    }
    let value = mrr(&ranks).map_err(|e| CliError::other(e.to_string()))?;
    Ok((value, log))
}

/// Ordered parallel map over item indices with a bounded worker pool.
fn parallel_indexed<R: Send>(
    count: usize,
    workers: usize,
    work: impl Fn(usize) -> Result<R, CliError> + Sync,
) -> Result<Vec<R>, CliError> {
    let results: Mutex<Vec<Option<Result<R, CliError>>>> = Mutex::new((0..count).map(|_| None).collect());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let workers = workers.max(1).min(count.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if index >= count {
                    break;
                }
                let outcome = work(index);
                results.lock().unwrap()[index] = Some(outcome);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("all indices processed"))
        .collect()
}
