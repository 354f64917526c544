//! Intrinsic dialogue-quality metrics: Self-BLEU diversity, mean reciprocal
//! rank, binary yes-rates, corpus statistics, judge harness, and agreement
//! statistics.

mod agreement;
mod judge;

pub use agreement::{krippendorff_alpha, spearman, RatingsMatrix};
pub use judge::{
    judge_conversation, judge_ranking, judge_utterance, JudgeError, JudgeHarness, JudgeLogRecord,
    JudgeMetric, JudgeVerdict, RankingOutcome, UtteranceContext, VerdictValue,
};

use crate::corpus::Dialogue;
use crate::text::whitespace_tokens;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("{0}")]
    Precondition(String),
    #[error("undefined correlation: {0}")]
    Undefined(String),
}

/// BLEU n-gram order used throughout.
pub const MAX_NGRAM_ORDER: usize = 4;
/// Numerator floor applied when a clipped n-gram count is zero.
pub const BLEU_SMOOTHING_EPS: f64 = 1e-4;

/// Corpus Self-BLEU as a percentage: each dialogue's concatenated utterance
/// text is scored (lowercased whitespace tokens, n-grams 1..4, uniform
/// weights, brevity penalty) against all other dialogues as references, and
/// the per-dialogue scores are averaged. Lower means more diverse.
pub fn self_bleu(corpus: &[Dialogue]) -> Result<f64, MetricError> {
    let texts: Vec<String> = corpus.iter().map(Dialogue::joined_text).collect();
    self_bleu_texts(&texts)
}

/// Self-BLEU over pre-joined dialogue texts.
pub fn self_bleu_texts(texts: &[String]) -> Result<f64, MetricError> {
    if texts.len() < 2 {
        return Err(MetricError::Precondition(format!(
            "self-BLEU needs at least 2 dialogues, got {}",
            texts.len()
        )));
    }
    let token_lists: Vec<Vec<String>> = texts.iter().map(|t| whitespace_tokens(t)).collect();
    let mut total = 0.0;
    for i in 0..token_lists.len() {
        let refs: Vec<&[String]> = token_lists
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, t)| t.as_slice())
            .collect();
        total += bleu(&token_lists[i], &refs);
    }
    Ok(total / token_lists.len() as f64 * 100.0)
}

/// Multi-reference BLEU for one hypothesis, in [0, 1]. Orders longer than the
/// hypothesis are skipped; a zero clipped count is floored at
/// [`BLEU_SMOOTHING_EPS`].
pub fn bleu(hypothesis: &[String], references: &[&[String]]) -> f64 {
    if hypothesis.is_empty() {
        return 0.0;
    }
    let ref_counts: Vec<Vec<HashMap<&[String], usize>>> = (1..=MAX_NGRAM_ORDER)
        .map(|n| references.iter().map(|r| ngram_counts(r, n)).collect())
        .collect();

    let mut log_sum = 0.0;
    let mut orders_used = 0usize;
    for n in 1..=MAX_NGRAM_ORDER {
        if hypothesis.len() < n {
            break;
        }
        let total = hypothesis.len() - n + 1;
        let hyp_counts = ngram_counts(hypothesis, n);
        let mut clipped = 0usize;
        for (gram, count) in &hyp_counts {
            let best_ref = ref_counts[n - 1]
                .iter()
                .map(|rc| rc.get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += (*count).min(best_ref);
        }
        let precision = if clipped == 0 {
            BLEU_SMOOTHING_EPS / total as f64
        } else {
            clipped as f64 / total as f64
        };
        log_sum += precision.ln();
        orders_used += 1;
    }
    if orders_used == 0 {
        return 0.0;
    }
    let geometric_mean = (log_sum / orders_used as f64).exp();

    let c = hypothesis.len() as f64;
    let r = closest_reference_length(hypothesis.len(), references) as f64;
    let brevity_penalty = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    brevity_penalty * geometric_mean
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// The reference length closest to the hypothesis length; ties prefer the
/// shorter reference.
fn closest_reference_length(hyp_len: usize, references: &[&[String]]) -> usize {
    references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(hyp_len), len))
        .unwrap_or(0)
}

/// Mean reciprocal rank over 1-based rank positions.
pub fn mrr(ranks: &[usize]) -> Result<f64, MetricError> {
    if ranks.is_empty() {
        return Err(MetricError::Precondition("MRR needs at least one rank".into()));
    }
    if let Some(bad) = ranks.iter().find(|&&r| r == 0) {
        return Err(MetricError::Precondition(format!("ranks must be >= 1, got {bad}")));
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Aggregate yes-rate as a percentage.
pub fn yes_rate(verdicts: &[bool]) -> Result<f64, MetricError> {
    if verdicts.is_empty() {
        return Err(MetricError::Precondition("yes-rate needs at least one verdict".into()));
    }
    let yes = verdicts.iter().filter(|&&v| v).count();
    Ok(100.0 * yes as f64 / verdicts.len() as f64)
}

/// Dataset-level statistics: whitespace tokenization after lowercasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dialogues: usize,
    pub utterances: usize,
    pub tokens: usize,
    pub vocab: usize,
    pub utterances_per_dialogue: f64,
    pub tokens_per_utterance: f64,
}

pub fn corpus_stats(corpus: &[Dialogue]) -> CorpusStats {
    let mut utterances = 0usize;
    let mut tokens = 0usize;
    let mut vocab: BTreeSet<String> = BTreeSet::new();
    for dialogue in corpus {
        utterances += dialogue.utterances.len();
        for utt in &dialogue.utterances {
            let toks = whitespace_tokens(&utt.text);
            tokens += toks.len();
            vocab.extend(toks);
        }
    }
    CorpusStats {
        dialogues: corpus.len(),
        utterances,
        tokens,
        vocab: vocab.len(),
        utterances_per_dialogue: if corpus.is_empty() { 0.0 } else { utterances as f64 / corpus.len() as f64 },
        tokens_per_utterance: if utterances == 0 { 0.0 } else { tokens as f64 / utterances as f64 },
    }
}
