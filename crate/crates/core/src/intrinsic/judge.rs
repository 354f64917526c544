//! LLM-judge harness: conversation-level logic scoring and comparative
//! ranking, plus the four utterance-level binary metrics. Each judge renders
//! its prompt template, calls the backend, and parses the strict JSON schema,
//! with one format re-prompt before surfacing a parse error.

use crate::agents::{render_template, PromptTemplates, TemplateError};
use crate::corpus::{serialize_dialogue, Dialogue, PatientCareRecord, Utterance};
use crate::gateway::{ChatBackend, ChatRequest, Decoding, GatewayError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMetric {
    Logic,
    Ranking,
    Realism,
    Safety,
    Role,
    Groundedness,
}

impl JudgeMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Logic => "logic",
            Self::Ranking => "ranking",
            Self::Realism => "realism",
            Self::Safety => "safety",
            Self::Role => "role",
            Self::Groundedness => "groundedness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictValue {
    Likert(u8),
    YesNo(bool),
    Ranking(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub metric: JudgeMetric,
    pub value: VerdictValue,
    pub why: String,
    pub prompt_hash: u64,
}

/// One line of the newline-delimited judgment log; enough to recompute
/// yes-rates, Likert means, MRR, and agreement offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeLogRecord {
    pub metric: String,
    pub item_id: String,
    pub value: serde_json::Value,
    pub why: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub prompt_hash: u64,
}

impl JudgeVerdict {
    pub fn log_record(&self, item_id: &str, seed: Option<u64>) -> JudgeLogRecord {
        let value = match &self.value {
            VerdictValue::Likert(score) => serde_json::json!(score),
            VerdictValue::YesNo(yes) => serde_json::json!(if *yes { "yes" } else { "no" }),
            VerdictValue::Ranking(order) => serde_json::json!(order),
        };
        JudgeLogRecord {
            metric: self.metric.as_str().to_string(),
            item_id: item_id.to_string(),
            value,
            why: self.why.clone(),
            seed,
            prompt_hash: self.prompt_hash,
        }
    }
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("judge response unparseable after format reminder: {detail}")]
    Malformed { detail: String },
    #[error("{metric} judging requires {what}")]
    MissingContext { metric: &'static str, what: &'static str },
    #[error("{0}")]
    Precondition(String),
}

/// Judge backend plus templates and decoding settings.
pub struct JudgeHarness<'a> {
    pub chat: &'a dyn ChatBackend,
    pub templates: &'a PromptTemplates,
    pub model_id: String,
    pub decoding: Decoding,
}

impl<'a> JudgeHarness<'a> {
    pub fn new(chat: &'a dyn ChatBackend, templates: &'a PromptTemplates, model_id: impl Into<String>) -> Self {
        Self {
            chat,
            templates,
            model_id: model_id.into(),
            decoding: Decoding { temperature: 0.0, max_tokens: 1024 },
        }
    }

    fn call_parsed<T>(
        &self,
        user: String,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<(T, u64), JudgeError> {
        let mut req = ChatRequest::new(self.templates.judge_system.clone(), user, self.model_id.clone());
        req.decoding = self.decoding.clone();
        let hash = req.prompt_hash();
        let first = self.chat.chat(&req)?;
        match parse(&first) {
            Ok(value) => Ok((value, hash)),
            Err(err) => {
                let mut retry = req.clone();
                retry.user = format!(
                    "{}\n\nYour previous reply was invalid: {err}\nReturn JSON only, matching the schema exactly.",
                    req.user
                );
                let second = self.chat.chat(&retry)?;
                match parse(&second) {
                    Ok(value) => Ok((value, hash)),
                    Err(detail) => Err(JudgeError::Malformed { detail }),
                }
            }
        }
    }
}

fn vars<'a>(pairs: &[(&'a str, String)]) -> BTreeMap<&'a str, String> {
    pairs.iter().cloned().collect()
}

#[derive(Deserialize)]
struct LogicResponse {
    logic: LogicBody,
}

#[derive(Deserialize)]
struct LogicBody {
    score: i64,
    #[serde(default)]
    why: String,
}

/// Conversation-level Likert judgment; only the logic metric is defined at
/// this level.
pub fn judge_conversation(
    harness: &JudgeHarness,
    dialogue: &Dialogue,
    metric: JudgeMetric,
) -> Result<JudgeVerdict, JudgeError> {
    if metric != JudgeMetric::Logic {
        return Err(JudgeError::Precondition(format!(
            "conversation-level judging supports logic only, got {}",
            metric.as_str()
        )));
    }
    let text = serialize_dialogue(dialogue)
        .map_err(|e| JudgeError::Precondition(format!("dialogue does not serialize: {e}")))?;
    let user = render_template(&harness.templates.judge_logic_user, &vars(&[("dialogue_text", text)]))?;
    let (body, prompt_hash) = harness.call_parsed(user, |raw| {
        let parsed: LogicResponse = serde_json::from_str(raw.trim()).map_err(|e| format!("not schema JSON: {e}"))?;
        if !(1..=5).contains(&parsed.logic.score) {
            return Err(format!("logic score {} outside 1..5", parsed.logic.score));
        }
        Ok(parsed.logic)
    })?;
    Ok(JudgeVerdict {
        metric: JudgeMetric::Logic,
        value: VerdictValue::Likert(body.score as u8),
        why: body.why,
        prompt_hash,
    })
}

#[derive(Deserialize)]
struct RankingResponse {
    overall_ranking: Vec<usize>,
}

/// Outcome of one comparative ranking call. `presented[p]` is the canonical
/// candidate index shown at presentation position `p`; `raw_ranking` is the
/// judge's permutation over presentation positions (1-based, best first);
/// `best_to_worst` maps it back to canonical indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingOutcome {
    pub seed: u64,
    pub presented: Vec<usize>,
    pub raw_ranking: Vec<usize>,
    pub best_to_worst: Vec<usize>,
    pub why: String,
    pub prompt_hash: u64,
}

impl RankingOutcome {
    /// 1-based rank of a canonical candidate index.
    pub fn rank_of(&self, canonical_index: usize) -> Option<usize> {
        self.best_to_worst.iter().position(|&c| c == canonical_index).map(|p| p + 1)
    }
}

/// Comparative ranking of candidate dialogues. Presentation order is
/// randomized from `seed` (recorded in the outcome) to counter positional
/// bias; the judge must return a permutation of 1..=N over the presented
/// positions.
pub fn judge_ranking(
    harness: &JudgeHarness,
    candidates: &[Dialogue],
    seed: u64,
) -> Result<RankingOutcome, JudgeError> {
    if candidates.len() < 2 {
        return Err(JudgeError::Precondition(format!(
            "ranking needs at least 2 candidates, got {}",
            candidates.len()
        )));
    }
    let mut presented: Vec<usize> = (0..candidates.len()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    presented.shuffle(&mut rng);

    let mut cards = String::new();
    for (position, &canonical) in presented.iter().enumerate() {
        let text = serialize_dialogue(&candidates[canonical])
            .map_err(|e| JudgeError::Precondition(format!("candidate does not serialize: {e}")))?;
        cards.push_str(&format!("Dialogue {}:\n{}\n\n", position + 1, text));
    }
    let user = render_template(
        &harness.templates.judge_ranking_user,
        &vars(&[("dialogues", cards.trim_end().to_string())]),
    )?;

    let n = candidates.len();
    let (raw_ranking, prompt_hash) = harness.call_parsed(user, move |raw| {
        let parsed: RankingResponse = serde_json::from_str(raw.trim()).map_err(|e| format!("not schema JSON: {e}"))?;
        let ranking = parsed.overall_ranking;
        let mut seen = vec![false; n];
        if ranking.len() != n {
            return Err(format!("ranking length {} != {n}", ranking.len()));
        }
        for &r in &ranking {
            if r < 1 || r > n || seen[r - 1] {
                return Err(format!("ranking {ranking:?} is not a permutation of 1..={n}"));
            }
            seen[r - 1] = true;
        }
        Ok(ranking)
    })?;

    let best_to_worst: Vec<usize> = raw_ranking.iter().map(|&pos| presented[pos - 1]).collect();
    Ok(RankingOutcome {
        seed,
        presented,
        raw_ranking,
        best_to_worst,
        why: String::new(),
        prompt_hash,
    })
}

/// Context handed to the utterance-level judges; each metric uses the pieces
/// it needs.
#[derive(Clone, Copy, Default)]
pub struct UtteranceContext<'a> {
    pub record: Option<&'a PatientCareRecord>,
    pub dialogue: Option<&'a Dialogue>,
    pub rules: Option<&'a str>,
    pub exemplar: Option<&'a str>,
}

/// Utterance-level binary judgment (realism, safety, role, groundedness).
pub fn judge_utterance(
    harness: &JudgeHarness,
    utterance: &Utterance,
    metric: JudgeMetric,
    context: &UtteranceContext,
) -> Result<JudgeVerdict, JudgeError> {
    let utt_id = utterance.turn.to_string();
    let user = match metric {
        JudgeMetric::Realism => {
            let rules = context.rules.ok_or(JudgeError::MissingContext { metric: "realism", what: "a rules rubric" })?;
            render_template(
                &harness.templates.judge_realism_user,
                &vars(&[
                    ("rules", rules.to_string()),
                    ("utt_id", utt_id),
                    ("role", utterance.role.clone()),
                    ("text", utterance.text.clone()),
                ]),
            )?
        }
        JudgeMetric::Safety => {
            let rules = context.rules.ok_or(JudgeError::MissingContext { metric: "safety", what: "protocol guidelines" })?;
            render_template(
                &harness.templates.judge_safety_user,
                &vars(&[
                    ("protocol_text", rules.to_string()),
                    ("utt_id", utt_id),
                    ("role", utterance.role.clone()),
                    ("text", utterance.text.clone()),
                ]),
            )?
        }
        JudgeMetric::Role => {
            let exemplar = context.exemplar.ok_or(JudgeError::MissingContext { metric: "role", what: "a role exemplar dialogue" })?;
            let dialogue = context.dialogue.ok_or(JudgeError::MissingContext { metric: "role", what: "the full dialogue" })?;
            let full = serialize_dialogue(dialogue)
                .map_err(|e| JudgeError::Precondition(format!("dialogue does not serialize: {e}")))?;
            render_template(
                &harness.templates.judge_role_user,
                &vars(&[
                    ("role_exemplar", exemplar.to_string()),
                    ("full_dialogue_text", full),
                    ("utt_id", utt_id),
                    ("claimed_role", utterance.role.clone()),
                    ("text", utterance.text.clone()),
                ]),
            )?
        }
        JudgeMetric::Groundedness => {
            let record = context.record.ok_or(JudgeError::MissingContext { metric: "groundedness", what: "the source record" })?;
            render_template(
                &harness.templates.judge_groundedness_user,
                &vars(&[
                    ("epcr_text", record.to_prompt_text()),
                    ("utt_id", utt_id),
                    ("role", utterance.role.clone()),
                    ("text", utterance.text.clone()),
                ]),
            )?
        }
        JudgeMetric::Logic | JudgeMetric::Ranking => {
            return Err(JudgeError::Precondition(format!(
                "{} is not an utterance-level metric",
                metric.as_str()
            )))
        }
    };

    let key = metric.as_str().to_string();
    let (body, prompt_hash) = harness.call_parsed(user, move |raw| parse_yes_no_response(raw, &key))?;
    Ok(JudgeVerdict {
        metric,
        value: VerdictValue::YesNo(body.0),
        why: body.1,
        prompt_hash,
    })
}

/// Parse `{"utt_id": ..., "<metric>": {"yes_no": "yes"|"no", "why": str}}`.
fn parse_yes_no_response(raw: &str, key: &str) -> Result<(bool, String), String> {
    let value: serde_json::Value = serde_json::from_str(raw.trim()).map_err(|e| format!("not JSON: {e}"))?;
    let body = value
        .get(key)
        .ok_or_else(|| format!("missing {key:?} object"))?;
    let yes_no = body
        .get("yes_no")
        .and_then(|v| v.as_str())
        .ok_or_else(|| "missing yes_no string".to_string())?;
    let yes = match yes_no {
        "yes" => true,
        "no" => false,
        other => return Err(format!("yes_no must be \"yes\" or \"no\", got {other:?}")),
    };
    let why = body.get("why").and_then(|v| v.as_str()).unwrap_or("").to_string();
    Ok((yes, why))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use crate::gateway::{Gateway, MockOutcome, RetryConfig, ScriptedChat};
    use std::time::Duration;

    fn dialogue(id: &str, text: &str) -> Dialogue {
        Dialogue {
            dialogue_id: id.into(),
            source_record_id: "r1".into(),
            labels: vec!["L".into()],
            utterances: vec![Utterance::new(1, "Dispatch", "Radio dispatch", "Dispatcher", text).unwrap()],
        }
    }

    fn gateway(replies: Vec<&str>) -> Gateway<ScriptedChat> {
        Gateway::new(
            ScriptedChat::new(replies.into_iter().map(|r| MockOutcome::Reply(r.into())).collect()),
            RetryConfig { max_attempts: 1, base_backoff: Duration::ZERO },
            1,
        )
    }

    #[test]
    fn logic_verdict_parses() {
        let templates = PromptTemplates::default();
        let gw = gateway(vec![r#"{"logic": {"score": 4, "why": "sensible order"}}"#]);
        let harness = JudgeHarness::new(&gw, &templates, "judge");
        let verdict = judge_conversation(&harness, &dialogue("a", "hello"), JudgeMetric::Logic).unwrap();
        assert_eq!(verdict.value, VerdictValue::Likert(4));
        assert_eq!(verdict.why, "sensible order");
    }

    #[test]
    fn out_of_range_logic_score_is_a_parse_error() {
        let templates = PromptTemplates::default();
        let gw = gateway(vec![
            r#"{"logic": {"score": 7, "why": "x"}}"#,
            r#"{"logic": {"score": 7, "why": "x"}}"#,
        ]);
        let harness = JudgeHarness::new(&gw, &templates, "judge");
        let err = judge_conversation(&harness, &dialogue("a", "hello"), JudgeMetric::Logic).unwrap_err();
        assert!(matches!(err, JudgeError::Malformed { .. }));
    }

    #[test]
    fn malformed_then_valid_recovers_via_reprompt() {
        let templates = PromptTemplates::default();
        let gw = gateway(vec!["not json", r#"{"logic": {"score": 2, "why": "eh"}}"#]);
        let harness = JudgeHarness::new(&gw, &templates, "judge");
        let verdict = judge_conversation(&harness, &dialogue("a", "hello"), JudgeMetric::Logic).unwrap();
        assert_eq!(verdict.value, VerdictValue::Likert(2));
        assert_eq!(gw.transport().calls(), 2);
    }

    #[test]
    fn ranking_permutation_maps_back_to_canonical() {
        let templates = PromptTemplates::default();
        let candidates: Vec<Dialogue> = (0..4).map(|i| dialogue(&format!("d{i}"), &format!("text {i}"))).collect();
        let gw = gateway(vec![r#"{"overall_ranking": [2, 1, 4, 3]}"#]);
        let harness = JudgeHarness::new(&gw, &templates, "judge");
        let outcome = judge_ranking(&harness, &candidates, 7).unwrap();
        assert_eq!(outcome.raw_ranking, vec![2, 1, 4, 3]);
        // round-trip: best_to_worst must be presented[raw - 1]
        for (slot, &pos) in outcome.raw_ranking.iter().enumerate() {
            assert_eq!(outcome.best_to_worst[slot], outcome.presented[pos - 1]);
        }
        // every canonical candidate has exactly one rank
        let mut ranks: Vec<usize> = (0..4).map(|c| outcome.rank_of(c).unwrap()).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, vec![1, 2, 3, 4]);
    }

    #[test]
    fn presentation_shuffle_round_trips_for_many_seeds() {
        let templates = PromptTemplates::default();
        let candidates: Vec<Dialogue> = (0..4).map(|i| dialogue(&format!("d{i}"), &format!("text {i}"))).collect();
        for seed in 0..20u64 {
            let gw = gateway(vec![r#"{"overall_ranking": [1, 2, 3, 4]}"#]);
            let harness = JudgeHarness::new(&gw, &templates, "judge");
            let outcome = judge_ranking(&harness, &candidates, seed).unwrap();
            // identity judge ranking means best_to_worst == presented
            assert_eq!(outcome.best_to_worst, outcome.presented);
            let mut sorted = outcome.presented.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, vec![0, 1, 2, 3]);
            // same seed reproduces the same presentation
            let gw2 = gateway(vec![r#"{"overall_ranking": [1, 2, 3, 4]}"#]);
            let harness2 = JudgeHarness::new(&gw2, &templates, "judge");
            let outcome2 = judge_ranking(&harness2, &candidates, seed).unwrap();
            assert_eq!(outcome.presented, outcome2.presented);
        }
    }

    #[test]
    fn non_permutation_ranking_rejected() {
        let templates = PromptTemplates::default();
        let candidates: Vec<Dialogue> = (0..3).map(|i| dialogue(&format!("d{i}"), "t")).collect();
        let gw = gateway(vec![r#"{"overall_ranking": [1, 1, 3]}"#, r#"{"overall_ranking": [5, 1, 3]}"#]);
        let harness = JudgeHarness::new(&gw, &templates, "judge");
        assert!(matches!(
            judge_ranking(&harness, &candidates, 0),
            Err(JudgeError::Malformed { .. })
        ));
    }

    #[test]
    fn utterance_judges_parse_yes_and_no() {
        let templates = PromptTemplates::default();
        let utt = Utterance::new(3, "Vital Signs", "Blood pressure", "Partner", "BP time.").unwrap();
        let ctx_rules = "no leading questions";
        let gw = gateway(vec![r#"{"utt_id": 3, "realism": {"yes_no": "yes", "why": "sounds human"}}"#]);
        let harness = JudgeHarness::new(&gw, &templates, "judge");
        let ctx = UtteranceContext { rules: Some(ctx_rules), ..Default::default() };
        let verdict = judge_utterance(&harness, &utt, JudgeMetric::Realism, &ctx).unwrap();
        assert_eq!(verdict.value, VerdictValue::YesNo(true));

        let gw = gateway(vec![r#"{"utt_id": 3, "safety": {"yes_no": "no", "why": "contraindicated"}}"#]);
        let harness = JudgeHarness::new(&gw, &templates, "judge");
        let verdict = judge_utterance(&harness, &utt, JudgeMetric::Safety, &ctx).unwrap();
        assert_eq!(verdict.value, VerdictValue::YesNo(false));
    }

    #[test]
    fn groundedness_requires_the_record() {
        let templates = PromptTemplates::default();
        let utt = Utterance::new(1, "Dispatch", "Radio dispatch", "Dispatcher", "go").unwrap();
        let gw = gateway(vec![]);
        let harness = JudgeHarness::new(&gw, &templates, "judge");
        let err = judge_utterance(&harness, &utt, JudgeMetric::Groundedness, &UtteranceContext::default()).unwrap_err();
        assert!(matches!(err, JudgeError::MissingContext { .. }));
    }

    #[test]
    fn verdict_log_record_round_trips_as_json() {
        let verdict = JudgeVerdict {
            metric: JudgeMetric::Realism,
            value: VerdictValue::YesNo(true),
            why: "sounds natural".into(),
            prompt_hash: 42,
        };
        let record = verdict.log_record("d1:3", None);
        let line = serde_json::to_string(&record).unwrap();
        let parsed: JudgeLogRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(parsed, record);
        assert_eq!(parsed.value, serde_json::json!("yes"));
    }
}
