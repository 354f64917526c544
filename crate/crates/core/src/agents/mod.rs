//! Planner -> Generator -> Refiner orchestration with repeat-until-pass
//! checker gating.
//!
//! The planner and generator iterate until the deterministic concept and
//! topic-flow checkers (plus plan-structure and branch-conformance checks)
//! are clean, or their iteration caps run out. The refiner additionally runs
//! the LLM style checker and terminates early on a triple pass; at its cap it
//! keeps the last concept/flow-clean candidate and flags the unapproved
//! style in the trace.

mod tags;
mod templates;
mod trace;

pub use tags::{extract_tag_block, parse_style_response, render_style_response, StyleReport, TagError};
pub use templates::{render_template, PromptTemplates, TemplateError, DEFAULT_EXEMPLARS, DEFAULT_RULES};
pub use trace::{IterationReport, PipelineStatus, PipelineTrace, StageStatus, StageTrace};

use crate::checker::{
    factuality_pr, match_concepts, render_feedback, render_flow_feedback, validate_flow,
    validate_micro_intents, CheckError, MatchConfig,
};
use crate::corpus::{
    parse_dialogue_line, serialize_dialogue, Dialogue, DialogueError, DialoguePlan,
    PatientCareRecord, TopicOntology, Utterance,
};
use crate::embed::Embedder;
use crate::extract::{extract_from_record, extract_gcs_from_record, extract_with_anchors, Branch, Lexicon};
use crate::gateway::{ChatBackend, ChatRequest, Decoding, Gateway, GatewayError, MockOutcome, RetryConfig, ScriptedChat};
use crate::corpus::ConceptSet;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// Iteration caps. The refiner cap is 5; the plan/generate caps keep the
/// repeat-until-pass loops terminating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopConfig {
    pub max_plan_iterations: u32,
    pub max_generate_iterations: u32,
    pub max_refine_iterations: u32,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_plan_iterations: 8,
            max_generate_iterations: 8,
            max_refine_iterations: 5,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_plan_iterations == 0 || self.max_generate_iterations == 0 || self.max_refine_iterations == 0 {
            return Err(AgentError::Config("iteration caps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Comatose-branch conformance: deferred topics must not occur before the
/// gate topic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchRule {
    pub deferred_topics: Vec<String>,
    pub gate_topic: String,
}

impl Default for BranchRule {
    fn default() -> Self {
        Self {
            deferred_topics: vec![
                "History of Present Illness (S.A.M.P.L.E.)".to_string(),
                "Pain Assessment (O.P.Q.R.S.T.)".to_string(),
            ],
            gate_topic: "Exit to Protocol".to_string(),
        }
    }
}

impl BranchRule {
    pub fn violations(&self, topics: &[String], branch: Branch) -> Vec<String> {
        if branch != Branch::Comatose {
            return Vec::new();
        }
        let gate_at = topics
            .iter()
            .position(|t| t == &self.gate_topic)
            .unwrap_or(topics.len());
        topics[..gate_at]
            .iter()
            .enumerate()
            .filter(|(_, t)| self.deferred_topics.contains(t))
            .map(|(i, t)| {
                format!(
                    "branch conformance: history-taking topic {t:?} at position {i} must not occur before {:?} on the comatose branch",
                    self.gate_topic
                )
            })
            .collect()
    }
}

/// Static pipeline configuration shared by all stages.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub templates: PromptTemplates,
    pub rules: String,
    pub exemplars: Vec<String>,
    pub match_config: MatchConfig,
    pub loop_config: LoopConfig,
    pub branch_rule: BranchRule,
    pub model_id: String,
    pub decoding: Decoding,
    /// When set, micro-intents must come from the topic's inventory.
    pub strict_intents: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            templates: PromptTemplates::default(),
            rules: DEFAULT_RULES.to_string(),
            exemplars: DEFAULT_EXEMPLARS.iter().map(|s| s.to_string()).collect(),
            match_config: MatchConfig::default(),
            loop_config: LoopConfig::default(),
            branch_rule: BranchRule::default(),
            model_id: "local-model".to_string(),
            decoding: Decoding::default(),
            strict_intents: false,
        }
    }
}

/// Runtime dependencies for one record's stages.
pub struct AgentServices<'a> {
    pub chat: &'a dyn ChatBackend,
    pub embedder: &'a dyn Embedder,
    pub lexicon: &'a Lexicon,
    pub ontology: &'a TopicOntology,
    pub config: &'a AgentConfig,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{stage}: output unparseable after format reminder: {detail}")]
    MalformedOutput { stage: &'static str, detail: String },
    #[error("invalid agent config: {0}")]
    Config(String),
}

#[derive(Debug)]
pub struct PlanResult {
    /// `Some` iff the stage was accepted.
    pub plan: Option<DialoguePlan>,
    pub trace: StageTrace,
}

#[derive(Debug)]
pub struct GenerateResult {
    pub dialogue: Option<Dialogue>,
    pub trace: StageTrace,
}

#[derive(Debug)]
pub struct RefineResult {
    /// The last candidate passing concept + flow checks (possibly the input
    /// dialogue when every refinement attempt regressed).
    pub dialogue: Dialogue,
    pub style_approved: bool,
    pub trace: StageTrace,
}

fn vars<'a>(pairs: &[(&'a str, String)]) -> BTreeMap<&'a str, String> {
    pairs.iter().cloned().collect()
}

fn concepts_prompt_text(set: &ConceptSet) -> String {
    set.surfaces()
        .iter()
        .map(|s| format!("- {s}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn flow_text_for_branch(ontology: &TopicOntology, branch: Branch, rule: &BranchRule) -> String {
    let mut text = ontology.render_flow_text();
    match branch {
        Branch::Conscious => text.push_str("Branch: the patient is conscious (GCS > 8); full history-taking applies.\n"),
        Branch::Comatose => text.push_str(&format!(
            "Branch: the patient is comatose (GCS <= 8); history-taking is deferred. Do not use {} before {:?}.\n",
            rule.deferred_topics
                .iter()
                .map(|t| format!("{t:?}"))
                .collect::<Vec<_>>()
                .join(" or "),
            rule.gate_topic
        )),
    }
    text
}

/// Call the backend, parse, and on a parse failure re-prompt once with a
/// format reminder; a second failure is a hard error.
fn chat_with_format_retry<T>(
    chat: &dyn ChatBackend,
    req: &ChatRequest,
    stage: &'static str,
    reminder: &str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<(T, String), AgentError> {
    let first = chat.chat(req)?;
    match parse(&first) {
        Ok(value) => Ok((value, first)),
        Err(parse_err) => {
            let mut retry = req.clone();
            retry.user = format!(
                "{}\n\nYour previous reply could not be parsed: {parse_err}\nFormat reminder: {reminder}",
                req.user
            );
            let second = chat.chat(&retry)?;
            match parse(&second) {
                Ok(value) => Ok((value, second)),
                Err(detail) => Err(AgentError::MalformedOutput { stage, detail }),
            }
        }
    }
}

fn feedback_user(base_user: &str, prior_output: &str, feedback: &str) -> String {
    format!(
        "{base_user}\n\nYour previous output was:\n{prior_output}\n\nThe checkers reported these violations:\n{feedback}\n\nRevise your output to fix every violation and return the same tagged block format."
    )
}

struct CheckOutcome {
    report: IterationReport,
    feedback: String,
}

/// Run concept + flow (+ structural/branch/intent) checks over one candidate
/// and fold the findings into a per-iteration report plus rendered feedback.
#[allow(clippy::too_many_arguments)]
fn run_checks(
    svc: &AgentServices,
    iteration: u32,
    source_concepts: &ConceptSet,
    candidate_text: &str,
    topic_sequence: &[String],
    intent_pairs: Option<&[(String, String)]>,
    structural: Vec<String>,
    branch: Branch,
) -> Result<CheckOutcome, AgentError> {
    let target = extract_with_anchors(candidate_text, svc.lexicon, source_concepts);
    let concept_report = match_concepts(source_concepts, &target, svc.embedder, &svc.config.match_config)?;
    let flow_report = validate_flow(topic_sequence, svc.ontology);

    let mut structural = structural;
    structural.extend(svc.config.branch_rule.violations(topic_sequence, branch));
    if svc.config.strict_intents {
        if let Some(pairs) = intent_pairs {
            structural.extend(
                validate_micro_intents(pairs, svc.ontology)
                    .into_iter()
                    .map(|v| v.to_string()),
            );
        }
    }

    let report = IterationReport {
        iteration,
        missing: concept_report.missing.surfaces(),
        hallucinated: concept_report.hallucinated.surfaces(),
        flow_violations: flow_report.violations.iter().map(ToString::to_string).collect(),
        structural_issues: structural.clone(),
        style_approved: None,
        style_critiques: Vec::new(),
        pass: false,
    };

    let mut feedback = String::new();
    if !structural.is_empty() {
        feedback.push_str("Structural problems:\n");
        for (i, issue) in structural.iter().enumerate() {
            feedback.push_str(&format!("  {}. {}\n", i + 1, issue));
        }
    }
    if !concept_report.is_pass() {
        feedback.push_str(&render_feedback(&concept_report));
        feedback.push('\n');
    }
    if !flow_report.is_pass() {
        feedback.push_str(&render_flow_feedback(&flow_report));
        feedback.push('\n');
    }

    Ok(CheckOutcome { report, feedback: feedback.trim_end().to_string() })
}

/// Planner loop: propose a plan, check it, re-prompt with feedback until it
/// is clean or the cap is exhausted.
pub fn plan(
    svc: &AgentServices,
    record: &PatientCareRecord,
    concepts: &ConceptSet,
    branch: Branch,
) -> Result<PlanResult, AgentError> {
    svc.config.loop_config.validate()?;
    let flow_text = flow_text_for_branch(svc.ontology, branch, &svc.config.branch_rule);
    let system = render_template(&svc.config.templates.planner_system, &vars(&[("topic_flow", flow_text)]))?;
    let base_user = render_template(
        &svc.config.templates.planner_user,
        &vars(&[("epcr", record.to_prompt_text()), ("concept", concepts_prompt_text(concepts))]),
    )?;
    let record_text = record.to_prompt_text();

    let mut trace = StageTrace::new();
    let mut user = base_user.clone();
    for iteration in 1..=svc.config.loop_config.max_plan_iterations {
        let mut req = ChatRequest::new(system.clone(), user.clone(), svc.config.model_id.clone());
        req.decoding = svc.config.decoding.clone();
        let (parsed, raw) = chat_with_format_retry(
            svc.chat,
            &req,
            "planner",
            "return exactly one <plan>...</plan> block containing a JSON array of {\"topic\", \"micro_intent\", \"evidence\"} objects",
            |text| {
                let block = extract_tag_block(text, "plan").map_err(|e| e.to_string())?;
                DialoguePlan::from_json(&block).map_err(|e| format!("plan JSON: {e}"))
            },
        )?;

        let structural: Vec<String> = parsed
            .structural_violations(&record_text)
            .iter()
            .map(ToString::to_string)
            .collect();
        let intent_pairs: Vec<(String, String)> = parsed
            .steps
            .iter()
            .map(|s| (s.topic.clone(), s.micro_intent.clone()))
            .collect();
        let mut outcome = run_checks(
            svc,
            iteration,
            concepts,
            &parsed.grounding_text(),
            &parsed.topic_sequence(),
            Some(&intent_pairs),
            structural,
            branch,
        )?;
        trace.iterations = iteration;
        let clean = outcome.report.hard_pass();
        outcome.report.pass = clean;
        trace.reports.push(outcome.report);

        if clean {
            trace.status = StageStatus::Accepted;
            return Ok(PlanResult { plan: Some(parsed), trace });
        }
        user = feedback_user(&base_user, &raw, &outcome.feedback);
    }
    trace.status = StageStatus::Exhausted;
    Ok(PlanResult { plan: None, trace })
}

struct ParsedBlock {
    utterances: Vec<Utterance>,
    line_issues: Vec<String>,
}

fn parse_dialogue_block(block: &str) -> ParsedBlock {
    let mut utterances = Vec::new();
    let mut line_issues = Vec::new();
    for (idx, line) in block.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_dialogue_line(line) {
            Ok(utt) => utterances.push(utt),
            Err(err) => line_issues.push(format!("line {}: {err} :: {line}", idx + 1)),
        }
    }
    if line_issues.is_empty() {
        if let Some(first) = utterances.first() {
            if first.turn != 1 {
                line_issues.push(format!("turn numbering must start at 1, got {}", first.turn));
            }
        }
        for pair in utterances.windows(2) {
            if pair[1].turn <= pair[0].turn {
                line_issues.push(format!(
                    "turn numbers must be strictly increasing ({} then {})",
                    pair[0].turn, pair[1].turn
                ));
            }
        }
    }
    ParsedBlock { utterances, line_issues }
}

/// Generator loop: draft the dialogue from the accepted plan, check it, and
/// re-prompt until clean or the cap is exhausted.
pub fn generate(
    svc: &AgentServices,
    record: &PatientCareRecord,
    plan: &DialoguePlan,
    concepts: &ConceptSet,
    branch: Branch,
) -> Result<GenerateResult, AgentError> {
    svc.config.loop_config.validate()?;
    let flow_text = flow_text_for_branch(svc.ontology, branch, &svc.config.branch_rule);
    let system = render_template(&svc.config.templates.generator_system, &vars(&[("topic_flow", flow_text)]))?;
    let plan_json = serde_json::to_string_pretty(&plan.steps).expect("plan serializes");
    let base_user = render_template(
        &svc.config.templates.generator_user,
        &vars(&[("epcr", record.to_prompt_text()), ("plan", plan_json)]),
    )?;

    let mut trace = StageTrace::new();
    let mut user = base_user.clone();
    for iteration in 1..=svc.config.loop_config.max_generate_iterations {
        let mut req = ChatRequest::new(system.clone(), user.clone(), svc.config.model_id.clone());
        req.decoding = svc.config.decoding.clone();
        let (block, raw) = chat_with_format_retry(
            svc.chat,
            &req,
            "generator",
            "return exactly one <dialogue>...</dialogue> block of `<turn>. <topic>; <micro_intent>; <role>: <utterance>` lines",
            |text| extract_tag_block(text, "dialogue").map_err(|e| e.to_string()),
        )?;

        let parsed = parse_dialogue_block(&block);
        trace.iterations = iteration;

        if !parsed.line_issues.is_empty() {
            // Format defects block the checkers this iteration; echo the
            // offending lines back instead.
            let report = IterationReport {
                iteration,
                structural_issues: parsed.line_issues.clone(),
                ..Default::default()
            };
            trace.reports.push(report);
            let mut feedback = String::from("Unparseable or misnumbered dialogue lines:\n");
            for (i, issue) in parsed.line_issues.iter().enumerate() {
                feedback.push_str(&format!("  {}. {}\n", i + 1, issue));
            }
            user = feedback_user(&base_user, &raw, feedback.trim_end());
            continue;
        }

        let candidate = Dialogue {
            dialogue_id: format!("dlg-{}", record.record_id),
            source_record_id: record.record_id.clone(),
            labels: record.diagnosis_labels.clone(),
            utterances: parsed.utterances,
        };
        let structural = match candidate.validate() {
            Ok(()) => Vec::new(),
            Err(e) => vec![e.to_string()],
        };
        let intent_pairs: Vec<(String, String)> = candidate
            .utterances
            .iter()
            .map(|u| (u.topic.clone(), u.micro_intent.clone()))
            .collect();
        let mut outcome = run_checks(
            svc,
            iteration,
            concepts,
            &candidate.joined_text(),
            &candidate.topic_sequence(),
            Some(&intent_pairs),
            structural,
            branch,
        )?;
        let clean = outcome.report.hard_pass();
        outcome.report.pass = clean;
        trace.reports.push(outcome.report);

        if clean {
            trace.status = StageStatus::Accepted;
            return Ok(GenerateResult { dialogue: Some(candidate), trace });
        }
        user = feedback_user(&base_user, &raw, &outcome.feedback);
    }
    trace.status = StageStatus::Exhausted;
    Ok(GenerateResult { dialogue: None, trace })
}

/// One style-checker call: sends the critic prompt and parses the
/// `<approved>` / `<critique>` blocks (with one format re-prompt).
pub fn style_check(
    svc: &AgentServices,
    record: &PatientCareRecord,
    dialogue: &Dialogue,
) -> Result<StyleReport, AgentError> {
    let text = serialize_dialogue(dialogue)?;
    style_check_text(svc, record, &text)
}

fn style_check_text(
    svc: &AgentServices,
    record: &PatientCareRecord,
    dialogue_text: &str,
) -> Result<StyleReport, AgentError> {
    let system = render_template(&svc.config.templates.style_system, &vars(&[("rules", svc.config.rules.clone())]))?;
    let user = render_template(
        &svc.config.templates.style_user,
        &vars(&[
            ("topic_flow", svc.ontology.render_flow_text()),
            ("epcr", record.to_prompt_text()),
            ("dialogue", dialogue_text.to_string()),
        ]),
    )?;
    let mut req = ChatRequest::new(system, user, svc.config.model_id.clone());
    req.decoding = svc.config.decoding.clone();
    let (report, _raw) = chat_with_format_retry(
        svc.chat,
        &req,
        "style checker",
        "return <approved>true|false</approved> followed by a <critique>...</critique> block of numbered items",
        |text| parse_style_response(text).map_err(|e| e.to_string()),
    )?;
    Ok(report)
}

/// Refiner loop: edit for style while preserving factual grounding. Each
/// iteration re-runs concept, flow, and style checks; terminates early on a
/// triple pass. At the cap the last concept/flow-clean candidate wins and the
/// unapproved style is flagged in the trace.
pub fn refine(
    svc: &AgentServices,
    record: &PatientCareRecord,
    dialogue: &Dialogue,
    concepts: &ConceptSet,
    branch: Branch,
) -> Result<RefineResult, AgentError> {
    svc.config.loop_config.validate()?;
    let flow_text = flow_text_for_branch(svc.ontology, branch, &svc.config.branch_rule);
    let exemplar_1 = svc.config.exemplars.first().cloned().unwrap_or_default();
    let exemplar_2 = svc.config.exemplars.get(1).cloned().unwrap_or_default();
    let system = render_template(
        &svc.config.templates.refiner_system,
        &vars(&[
            ("rules", svc.config.rules.clone()),
            ("example_1", exemplar_1),
            ("example_2", exemplar_2),
        ]),
    )?;

    let mut trace = StageTrace::new();
    let mut current = dialogue.clone();
    let mut last_clean = dialogue.clone();
    let mut pending_feedback: Option<String> = None;

    for iteration in 1..=svc.config.loop_config.max_refine_iterations {
        let mut user = render_template(
            &svc.config.templates.refiner_user,
            &vars(&[
                ("topic_flow", flow_text.clone()),
                ("epcr", record.to_prompt_text()),
                ("dialogue", serialize_dialogue(&current)?),
            ]),
        )?;
        if let Some(feedback) = pending_feedback.take() {
            user.push_str(&format!("\n\nThe checkers reported these violations on your previous revision:\n{feedback}\nFix every violation while keeping the dialogue grounded."));
        }
        let mut req = ChatRequest::new(system.clone(), user, svc.config.model_id.clone());
        req.decoding = svc.config.decoding.clone();
        let (block, _raw) = chat_with_format_retry(
            svc.chat,
            &req,
            "refiner",
            "return exactly one <dialogue>...</dialogue> block of `<turn>. <topic>; <micro_intent>; <role>: <utterance>` lines",
            |text| extract_tag_block(text, "dialogue").map_err(|e| e.to_string()),
        )?;

        let parsed = parse_dialogue_block(&block);
        trace.iterations = iteration;

        if !parsed.line_issues.is_empty() {
            let report = IterationReport {
                iteration,
                structural_issues: parsed.line_issues.clone(),
                ..Default::default()
            };
            trace.reports.push(report);
            let mut feedback = String::from("Unparseable or misnumbered dialogue lines:\n");
            for (i, issue) in parsed.line_issues.iter().enumerate() {
                feedback.push_str(&format!("  {}. {}\n", i + 1, issue));
            }
            pending_feedback = Some(feedback.trim_end().to_string());
            continue;
        }

        let candidate = Dialogue {
            dialogue_id: current.dialogue_id.clone(),
            source_record_id: current.source_record_id.clone(),
            labels: current.labels.clone(),
            utterances: parsed.utterances,
        };
        let structural = match candidate.validate() {
            Ok(()) => Vec::new(),
            Err(e) => vec![e.to_string()],
        };
        let intent_pairs: Vec<(String, String)> = candidate
            .utterances
            .iter()
            .map(|u| (u.topic.clone(), u.micro_intent.clone()))
            .collect();
        let mut outcome = run_checks(
            svc,
            iteration,
            concepts,
            &candidate.joined_text(),
            &candidate.topic_sequence(),
            Some(&intent_pairs),
            structural,
            branch,
        )?;
        let hard_clean = outcome.report.hard_pass();
        if hard_clean {
            last_clean = candidate.clone();
        }

        let style = style_check_text(svc, record, &serialize_dialogue_lossy(&candidate))?;
        outcome.report.style_approved = Some(style.approved);
        outcome.report.style_critiques = style.critiques.clone();
        outcome.report.pass = hard_clean && style.approved;
        let pass = outcome.report.pass;
        trace.reports.push(outcome.report);

        if pass {
            trace.status = StageStatus::Accepted;
            return Ok(RefineResult { dialogue: candidate, style_approved: true, trace });
        }

        let mut feedback = outcome.feedback;
        if !style.approved {
            feedback.push_str("\nStyle critiques:\n");
            for (i, critique) in style.critiques.iter().enumerate() {
                feedback.push_str(&format!("  {}. {}\n", i + 1, critique));
            }
        }
        pending_feedback = Some(feedback.trim().to_string());
        current = candidate;
    }

    trace.status = StageStatus::Exhausted;
    Ok(RefineResult { dialogue: last_clean, style_approved: false, trace })
}

/// Serialize a validated candidate for the style prompt; candidates reaching
/// here already validated, so failures cannot occur in practice.
fn serialize_dialogue_lossy(dialogue: &Dialogue) -> String {
    serialize_dialogue(dialogue).unwrap_or_else(|_| dialogue.joined_text())
}

/// Supplies the chat backend for each record. HTTP deployments share one
/// gateway; the scripted playbook hands every record a fresh script so runs
/// stay deterministic under record-level parallelism.
pub trait ChatProvider: Send + Sync {
    fn backend_for(&self, record_index: usize, record_id: &str) -> Arc<dyn ChatBackend>;
}

pub struct SharedChat(pub Arc<dyn ChatBackend>);

impl ChatProvider for SharedChat {
    fn backend_for(&self, _record_index: usize, _record_id: &str) -> Arc<dyn ChatBackend> {
        Arc::clone(&self.0)
    }
}

/// Per-record scripted outcomes: the default script plays for every record
/// unless an override is registered for its record id.
pub struct ScriptedPlaybook {
    default_script: Vec<MockOutcome>,
    overrides: BTreeMap<String, Vec<MockOutcome>>,
    retry: RetryConfig,
}

impl ScriptedPlaybook {
    pub fn new(default_script: Vec<MockOutcome>) -> Self {
        Self {
            default_script,
            overrides: BTreeMap::new(),
            retry: RetryConfig { max_attempts: 3, base_backoff: std::time::Duration::ZERO },
        }
    }

    pub fn with_override(mut self, record_id: &str, script: Vec<MockOutcome>) -> Self {
        self.overrides.insert(record_id.to_string(), script);
        self
    }
}

impl ChatProvider for ScriptedPlaybook {
    fn backend_for(&self, _record_index: usize, record_id: &str) -> Arc<dyn ChatBackend> {
        let script = self
            .overrides
            .get(record_id)
            .cloned()
            .unwrap_or_else(|| self.default_script.clone());
        Arc::new(Gateway::new(ScriptedChat::new(script), self.retry.clone(), 1))
    }
}

pub struct PipelineDeps<'a> {
    pub chat: &'a dyn ChatProvider,
    pub embedder: &'a dyn Embedder,
    pub lexicon: &'a Lexicon,
    pub ontology: &'a TopicOntology,
    pub config: &'a AgentConfig,
}

#[derive(Debug, Default)]
pub struct PipelineRun {
    /// Accepted dialogues, in input record order.
    pub dialogues: Vec<Dialogue>,
    /// One trace per input record, in input order.
    pub traces: Vec<PipelineTrace>,
    /// Traces of rejected records only.
    pub rejects: Vec<PipelineTrace>,
}

/// Run the full pipeline over a batch of records: extract -> branch -> plan
/// -> generate -> refine. Records are processed in parallel across up to
/// `workers` threads; stages within a record are strictly sequential. The
/// `stop` flag drains in-flight records and skips the rest.
pub fn run_pipeline(
    records: &[PatientCareRecord],
    deps: &PipelineDeps,
    workers: usize,
    stop: Option<&AtomicBool>,
) -> PipelineRun {
    type RecordOutcome = (Option<Dialogue>, PipelineTrace);
    let results: Mutex<Vec<Option<RecordOutcome>>> =
        Mutex::new((0..records.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = workers.max(1).min(records.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if stop.map(|s| s.load(Ordering::SeqCst)).unwrap_or(false) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= records.len() {
                    break;
                }
                let record = &records[index];
                let outcome = process_record(index, record, deps);
                results.lock().unwrap()[index] = Some(outcome);
            });
        }
    });

    let mut run = PipelineRun::default();
    for (dialogue, trace) in results.into_inner().unwrap().into_iter().flatten() {
        if let Some(d) = dialogue {
            run.dialogues.push(d);
        } else {
            run.rejects.push(trace.clone());
        }
        run.traces.push(trace);
    }
    run
}

fn process_record(
    index: usize,
    record: &PatientCareRecord,
    deps: &PipelineDeps,
) -> (Option<Dialogue>, PipelineTrace) {
    let backend = deps.chat.backend_for(index, &record.record_id);
    let svc = AgentServices {
        chat: backend.as_ref(),
        embedder: deps.embedder,
        lexicon: deps.lexicon,
        ontology: deps.ontology,
        config: deps.config,
    };

    let concepts = extract_from_record(record, deps.lexicon);
    let gcs = extract_gcs_from_record(record);
    let branch = crate::extract::select_branch(gcs.value);

    let mut trace = PipelineTrace {
        record_id: record.record_id.clone(),
        dialogue_id: None,
        status: PipelineStatus::Exhausted,
        failed_stage: None,
        style_approved: None,
        branch: branch.as_str().to_string(),
        plan: None,
        generate: None,
        refine: None,
        error: None,
    };

    let plan_result = match plan(&svc, record, &concepts, branch) {
        Ok(r) => r,
        Err(e) => {
            trace.failed_stage = Some("plan".into());
            trace.error = Some(e.to_string());
            return (None, trace);
        }
    };
    trace.plan = Some(plan_result.trace);
    let Some(accepted_plan) = plan_result.plan else {
        trace.failed_stage = Some("plan".into());
        return (None, trace);
    };

    let generate_result = match generate(&svc, record, &accepted_plan, &concepts, branch) {
        Ok(r) => r,
        Err(e) => {
            trace.failed_stage = Some("generate".into());
            trace.error = Some(e.to_string());
            return (None, trace);
        }
    };
    trace.generate = Some(generate_result.trace);
    let Some(draft) = generate_result.dialogue else {
        trace.failed_stage = Some("generate".into());
        return (None, trace);
    };

    let refine_result = match refine(&svc, record, &draft, &concepts, branch) {
        Ok(r) => r,
        Err(e) => {
            trace.failed_stage = Some("refine".into());
            trace.error = Some(e.to_string());
            return (None, trace);
        }
    };
    trace.refine = Some(refine_result.trace);
    trace.style_approved = Some(refine_result.style_approved);
    trace.status = PipelineStatus::Accepted;
    trace.dialogue_id = Some(refine_result.dialogue.dialogue_id.clone());
    (Some(refine_result.dialogue), trace)
}

/// Recompute the gating invariant for an emitted dialogue: FN = FP = 0 and
/// zero flow violations against its source record.
pub fn recheck_dialogue(
    record: &PatientCareRecord,
    dialogue: &Dialogue,
    lexicon: &Lexicon,
    ontology: &TopicOntology,
    embedder: &dyn Embedder,
    match_config: &MatchConfig,
) -> Result<(crate::checker::ConceptReport, crate::checker::FlowReport), CheckError> {
    let source = extract_from_record(record, lexicon);
    let target = extract_with_anchors(&dialogue.joined_text(), lexicon, &source);
    let concept_report = match_concepts(&source, &target, embedder, match_config)?;
    let flow_report = validate_flow(&dialogue.topic_sequence(), ontology);
    let _ = factuality_pr(&concept_report);
    Ok((concept_report, flow_report))
}

#[cfg(test)]
mod tests;
