use super::*;
use crate::corpus::{parse_epcr, LabelSet};
use crate::embed::IdentityEmbedder;
use crate::gateway::{Gateway, MockOutcome, RetryConfig, ScriptedChat};
use std::time::Duration;

const PLAN_OK: &str = r#"<plan>[
  {"topic": "Dispatch", "micro_intent": "Radio dispatch", "evidence": []},
  {"topic": "Introduction", "micro_intent": "Introduction", "evidence": []},
  {"topic": "Chief Complaint", "micro_intent": "Identify primary complaint", "evidence": ["chest pain"]},
  {"topic": "Responsiveness Exam", "micro_intent": "AVPU", "evidence": []},
  {"topic": "Primary Assessment", "micro_intent": "Check airway", "evidence": ["nausea"]},
  {"topic": "Interventions", "micro_intent": "Administer medications", "evidence": ["aspirin"]},
  {"topic": "Exit to Protocol", "micro_intent": "Decide EMS protocol", "evidence": []}
]</plan>"#;

const PLAN_MISSING_ASPIRIN: &str = r#"<plan>[
  {"topic": "Dispatch", "micro_intent": "Radio dispatch", "evidence": []},
  {"topic": "Introduction", "micro_intent": "Introduction", "evidence": []},
  {"topic": "Chief Complaint", "micro_intent": "Identify primary complaint", "evidence": ["chest pain"]},
  {"topic": "Responsiveness Exam", "micro_intent": "AVPU", "evidence": []},
  {"topic": "Primary Assessment", "micro_intent": "Check airway", "evidence": ["nausea"]},
  {"topic": "Exit to Protocol", "micro_intent": "Decide EMS protocol", "evidence": []}
]</plan>"#;

const PLAN_BAD_FLOW: &str = r#"<plan>[
  {"topic": "Chief Complaint", "micro_intent": "Identify primary complaint", "evidence": ["chest pain"]},
  {"topic": "Transport", "micro_intent": "Destination decision", "evidence": []},
  {"topic": "Interventions", "micro_intent": "Administer medications", "evidence": ["aspirin"]},
  {"topic": "Primary Assessment", "micro_intent": "Check airway", "evidence": ["nausea"]}
]</plan>"#;

const DIALOGUE_OK: &str = "<dialogue>
1. Dispatch; Radio dispatch; Dispatcher: Unit 3, respond for chest pain.
2. Introduction; Introduction; EMT: Hi, I'm Alex with the rescue squad.
3. Chief Complaint; Identify primary complaint; Patient: My chest hurts and I have nausea.
4. Responsiveness Exam; AVPU; EMT: Can you tell me your name and where we are?
5. Primary Assessment; Check airway; EMT: I'm going to check your airway and breathing, okay?
6. Interventions; Administer medications; Partner: I'm going to give you aspirin to chew now.
7. Exit to Protocol; Decide EMS protocol; EMT: We'll treat this as a cardiac case and get moving.
</dialogue>";

const DIALOGUE_HALLUCINATED_MED: &str = "<dialogue>
1. Dispatch; Radio dispatch; Dispatcher: Unit 3, respond for chest pain.
2. Introduction; Introduction; EMT: Hi, I'm Alex with the rescue squad.
3. Chief Complaint; Identify primary complaint; Patient: My chest hurts and I have nausea.
4. Responsiveness Exam; AVPU; EMT: Can you tell me your name and where we are?
5. Primary Assessment; Check airway; EMT: I'm going to check your airway and breathing, okay?
6. Interventions; Administer medications; Partner: I'm going to give you morphine right now.
7. Exit to Protocol; Decide EMS protocol; EMT: We'll treat this as a cardiac case and get moving.
</dialogue>";

const DIALOGUE_BAD_LINE: &str = "<dialogue>
1. Dispatch; Radio dispatch; Dispatcher: Unit 3, respond for chest pain.
2. Introduction Introduction; EMT: Hi, I'm Alex with the rescue squad.
3. Chief Complaint; Identify primary complaint; Patient: My chest hurts and I have nausea.
</dialogue>";

const STYLE_TRUE: &str = "<approved>true</approved>\n<critique>\n</critique>";
const STYLE_FALSE: &str =
    "<approved>false</approved>\n<critique>\n1. Partner batches vitals; deliver one per turn.\n</critique>";

fn record() -> PatientCareRecord {
    let doc = serde_json::json!({
        "record_id": "r1",
        "chief_complaint": "chest pain",
        "current_medications": ["aspirin"],
        "narrative": "Patient reports chest pain and nausea. GCS 15.",
        "diagnosis_labels": ["Chest Pain: Cardiac Suspected"]
    })
    .to_string();
    parse_epcr(&doc, &LabelSet::Open).unwrap()
}

fn comatose_record() -> PatientCareRecord {
    let doc = serde_json::json!({
        "record_id": "r9",
        "chief_complaint": "unresponsive",
        "narrative": "Found unresponsive. GCS 6.",
        "diagnosis_labels": ["Altered Mental Status"]
    })
    .to_string();
    parse_epcr(&doc, &LabelSet::Open).unwrap()
}

fn lexicon() -> Lexicon {
    Lexicon::from_tsv("chest pain\tL1\tT184\nnausea\tL2\tT184\naspirin\tL3\tT121\nmorphine\tL4\tT121\n").unwrap()
}

fn gateway(script: Vec<MockOutcome>) -> Gateway<ScriptedChat> {
    Gateway::new(
        ScriptedChat::new(script),
        RetryConfig { max_attempts: 2, base_backoff: Duration::ZERO },
        1,
    )
}

fn replies(texts: &[&str]) -> Vec<MockOutcome> {
    texts.iter().map(|t| MockOutcome::Reply(t.to_string())).collect()
}

struct Fixture {
    lexicon: Lexicon,
    ontology: TopicOntology,
    config: AgentConfig,
    embedder: IdentityEmbedder,
}

impl Fixture {
    fn new() -> Self {
        Self {
            lexicon: lexicon(),
            ontology: TopicOntology::default_ems(),
            config: AgentConfig::default(),
            embedder: IdentityEmbedder,
        }
    }

    fn with_caps(mut self, plan: u32, generate: u32, refine: u32) -> Self {
        self.config.loop_config = LoopConfig {
            max_plan_iterations: plan,
            max_generate_iterations: generate,
            max_refine_iterations: refine,
        };
        self
    }

    fn services<'a>(&'a self, chat: &'a dyn ChatBackend) -> AgentServices<'a> {
        AgentServices {
            chat,
            embedder: &self.embedder,
            lexicon: &self.lexicon,
            ontology: &self.ontology,
            config: &self.config,
        }
    }
}

fn source_concepts(fixture: &Fixture, record: &PatientCareRecord) -> ConceptSet {
    extract_from_record(record, &fixture.lexicon)
}

#[test]
fn plan_accepts_after_missing_concept_feedback() {
    let fixture = Fixture::new();
    let gw = gateway(replies(&[PLAN_MISSING_ASPIRIN, PLAN_OK]));
    let record = record();
    let concepts = source_concepts(&fixture, &record);
    let result = plan(&fixture.services(&gw), &record, &concepts, Branch::Conscious).unwrap();

    assert!(result.plan.is_some());
    assert_eq!(result.trace.status, StageStatus::Accepted);
    assert_eq!(result.trace.iterations, 2);
    assert_eq!(result.trace.reports[0].missing, vec!["aspirin"]);
    assert!(result.trace.reports[1].missing.is_empty());
    assert!(result.trace.reports[1].pass);
}

#[test]
fn plan_records_transition_error_before_acceptance() {
    let fixture = Fixture::new();
    let gw = gateway(replies(&[PLAN_BAD_FLOW, PLAN_OK]));
    let record = record();
    let concepts = source_concepts(&fixture, &record);
    let result = plan(&fixture.services(&gw), &record, &concepts, Branch::Conscious).unwrap();

    assert_eq!(result.trace.status, StageStatus::Accepted);
    assert!(result.trace.reports[0]
        .flow_violations
        .iter()
        .any(|v| v.contains("transition error")));
}

#[test]
fn plan_cap_exhaustion_reports_exhausted_status() {
    let fixture = Fixture::new().with_caps(3, 8, 5);
    let gw = gateway(replies(&[PLAN_MISSING_ASPIRIN; 3]));
    let record = record();
    let concepts = source_concepts(&fixture, &record);
    let result = plan(&fixture.services(&gw), &record, &concepts, Branch::Conscious).unwrap();

    assert!(result.plan.is_none());
    assert_eq!(result.trace.status, StageStatus::Exhausted);
    assert_eq!(result.trace.iterations, 3);
    assert_eq!(gw.transport().calls(), 3);
}

#[test]
fn plan_format_retry_recovers_within_the_iteration() {
    let fixture = Fixture::new();
    let gw = gateway(replies(&["no tags here at all", PLAN_OK]));
    let record = record();
    let concepts = source_concepts(&fixture, &record);
    let result = plan(&fixture.services(&gw), &record, &concepts, Branch::Conscious).unwrap();
    assert_eq!(result.trace.iterations, 1);
    assert_eq!(gw.transport().calls(), 2);
}

#[test]
fn plan_unparseable_after_reminder_is_a_hard_error() {
    let fixture = Fixture::new();
    let gw = gateway(replies(&["junk", "more junk"]));
    let record = record();
    let concepts = source_concepts(&fixture, &record);
    let err = plan(&fixture.services(&gw), &record, &concepts, Branch::Conscious).unwrap_err();
    assert!(matches!(err, AgentError::MalformedOutput { stage: "planner", .. }));
}

#[test]
fn plan_reused_evidence_is_fed_back() {
    let fixture = Fixture::new();
    let reused = r#"<plan>[
      {"topic": "Chief Complaint", "micro_intent": "Identify primary complaint", "evidence": ["chest pain"]},
      {"topic": "Responsiveness Exam", "micro_intent": "AVPU", "evidence": ["chest pain", "nausea", "aspirin"]}
    ]</plan>"#;
    let gw = gateway(replies(&[reused, PLAN_OK]));
    let record = record();
    let concepts = source_concepts(&fixture, &record);
    let result = plan(&fixture.services(&gw), &record, &concepts, Branch::Conscious).unwrap();
    assert!(result.trace.reports[0]
        .structural_issues
        .iter()
        .any(|s| s.contains("exactly once")));
    assert_eq!(result.trace.status, StageStatus::Accepted);
}

fn accepted_plan(fixture: &Fixture, record: &PatientCareRecord) -> DialoguePlan {
    let gw = gateway(replies(&[PLAN_OK]));
    let concepts = source_concepts(fixture, record);
    plan(&fixture.services(&gw), record, &concepts, Branch::Conscious)
        .unwrap()
        .plan
        .unwrap()
}

#[test]
fn generate_accepts_valid_dialogue_in_one_iteration() {
    let fixture = Fixture::new();
    let record = record();
    let p = accepted_plan(&fixture, &record);
    let gw = gateway(replies(&[DIALOGUE_OK]));
    let concepts = source_concepts(&fixture, &record);
    let result = generate(&fixture.services(&gw), &record, &p, &concepts, Branch::Conscious).unwrap();

    let dialogue = result.dialogue.unwrap();
    assert_eq!(result.trace.iterations, 1);
    assert_eq!(dialogue.utterances.len(), 7);
    assert_eq!(dialogue.labels, record.diagnosis_labels);
    assert_eq!(dialogue.source_record_id, "r1");
}

#[test]
fn generate_flags_hallucinated_medication_then_accepts() {
    let fixture = Fixture::new();
    let record = record();
    let p = accepted_plan(&fixture, &record);
    let gw = gateway(replies(&[DIALOGUE_HALLUCINATED_MED, DIALOGUE_OK]));
    let concepts = source_concepts(&fixture, &record);
    let result = generate(&fixture.services(&gw), &record, &p, &concepts, Branch::Conscious).unwrap();

    assert_eq!(result.trace.iterations, 2);
    assert_eq!(result.trace.reports[0].hallucinated, vec!["morphine"]);
    assert_eq!(result.trace.reports[0].missing, vec!["aspirin"]);
    assert!(result.dialogue.is_some());
}

#[test]
fn generate_echoes_unparseable_line_in_feedback() {
    let fixture = Fixture::new();
    let record = record();
    let p = accepted_plan(&fixture, &record);
    let gw = gateway(replies(&[DIALOGUE_BAD_LINE, DIALOGUE_OK]));
    let concepts = source_concepts(&fixture, &record);
    let result = generate(&fixture.services(&gw), &record, &p, &concepts, Branch::Conscious).unwrap();

    assert_eq!(result.trace.iterations, 2);
    let issues = &result.trace.reports[0].structural_issues;
    assert!(issues.iter().any(|i| i.contains("Introduction Introduction")), "issues: {issues:?}");
}

#[test]
fn generate_accepts_a_hundred_line_dialogue_in_one_iteration() {
    let fixture = Fixture::new();
    let record = record();
    let p = accepted_plan(&fixture, &record);
    let mut lines = vec![
        "1. Dispatch; Radio dispatch; Dispatcher: Unit 3, respond for chest pain.".to_string(),
        "2. Introduction; Introduction; EMT: Hi, I'm Alex with the rescue squad.".to_string(),
        "3. Chief Complaint; Identify primary complaint; Patient: My chest hurts and I have nausea.".to_string(),
        "4. Responsiveness Exam; AVPU; EMT: Can you tell me your name and where we are?".to_string(),
        "5. Primary Assessment; Check airway; EMT: I'm going to check your airway, okay?".to_string(),
        "6. Interventions; Administer medications; Partner: I'm going to give you aspirin to chew now.".to_string(),
        "7. Exit to Protocol; Decide EMS protocol; EMT: We'll treat this as a cardiac case.".to_string(),
    ];
    for turn in 8..=100 {
        lines.push(format!("{turn}. Transport; Destination decision; EMT: Filler update number {turn}."));
    }
    let block = format!("<dialogue>\n{}\n</dialogue>", lines.join("\n"));
    let gw = gateway(vec![MockOutcome::Reply(block)]);
    let concepts = source_concepts(&fixture, &record);
    let result = generate(&fixture.services(&gw), &record, &p, &concepts, Branch::Conscious).unwrap();
    let dialogue = result.dialogue.unwrap();
    assert_eq!(result.trace.iterations, 1);
    assert_eq!(dialogue.utterances.len(), 100);
}

#[test]
fn generate_cap_exhaustion() {
    let fixture = Fixture::new().with_caps(8, 2, 5);
    let record = record();
    let p = accepted_plan(&fixture, &record);
    let gw = gateway(replies(&[DIALOGUE_HALLUCINATED_MED, DIALOGUE_HALLUCINATED_MED]));
    let concepts = source_concepts(&fixture, &record);
    let result = generate(&fixture.services(&gw), &record, &p, &concepts, Branch::Conscious).unwrap();
    assert!(result.dialogue.is_none());
    assert_eq!(result.trace.status, StageStatus::Exhausted);
}

fn generated_dialogue(fixture: &Fixture, record: &PatientCareRecord) -> Dialogue {
    let p = accepted_plan(fixture, record);
    let gw = gateway(replies(&[DIALOGUE_OK]));
    let concepts = source_concepts(fixture, record);
    generate(&fixture.services(&gw), record, &p, &concepts, Branch::Conscious)
        .unwrap()
        .dialogue
        .unwrap()
}

#[test]
fn style_check_parses_approval() {
    let fixture = Fixture::new();
    let record = record();
    let dialogue = generated_dialogue(&fixture, &record);
    let gw = gateway(replies(&[STYLE_TRUE]));
    let report = style_check(&fixture.services(&gw), &record, &dialogue).unwrap();
    assert!(report.approved);
    assert!(report.critiques.is_empty());
}

#[test]
fn style_check_parses_ordered_critiques() {
    let fixture = Fixture::new();
    let record = record();
    let dialogue = generated_dialogue(&fixture, &record);
    let response = "<approved>false</approved>\n<critique>\n1. first\n2. second\n3. third\n</critique>";
    let gw = gateway(replies(&[response]));
    let report = style_check(&fixture.services(&gw), &record, &dialogue).unwrap();
    assert!(!report.approved);
    assert_eq!(report.critiques, vec!["first", "second", "third"]);
}

#[test]
fn style_check_missing_tags_error_after_retry() {
    let fixture = Fixture::new();
    let record = record();
    let dialogue = generated_dialogue(&fixture, &record);
    let gw = gateway(replies(&["nope", "still nope"]));
    let err = style_check(&fixture.services(&gw), &record, &dialogue).unwrap_err();
    assert!(matches!(err, AgentError::MalformedOutput { stage: "style checker", .. }));
}

#[test]
fn refine_terminates_early_on_first_approval() {
    let fixture = Fixture::new();
    let record = record();
    let dialogue = generated_dialogue(&fixture, &record);
    let concepts = source_concepts(&fixture, &record);
    let gw = gateway(replies(&[DIALOGUE_OK, STYLE_TRUE]));
    let result = refine(&fixture.services(&gw), &record, &dialogue, &concepts, Branch::Conscious).unwrap();
    assert!(result.style_approved);
    assert_eq!(result.trace.iterations, 1);
    assert_eq!(result.trace.status, StageStatus::Accepted);
}

#[test]
fn refine_accepts_on_third_approval() {
    let fixture = Fixture::new();
    let record = record();
    let dialogue = generated_dialogue(&fixture, &record);
    let concepts = source_concepts(&fixture, &record);
    let gw = gateway(replies(&[
        DIALOGUE_OK, STYLE_FALSE, DIALOGUE_OK, STYLE_FALSE, DIALOGUE_OK, STYLE_TRUE,
    ]));
    let result = refine(&fixture.services(&gw), &record, &dialogue, &concepts, Branch::Conscious).unwrap();
    assert!(result.style_approved);
    assert_eq!(result.trace.iterations, 3);
    assert_eq!(result.trace.reports[0].style_approved, Some(false));
    assert_eq!(result.trace.reports[2].style_approved, Some(true));
}

#[test]
fn refine_cap_keeps_last_clean_dialogue_and_flags_style() {
    let fixture = Fixture::new();
    let record = record();
    let dialogue = generated_dialogue(&fixture, &record);
    let concepts = source_concepts(&fixture, &record);
    let gw = gateway(replies(&[
        DIALOGUE_OK, STYLE_FALSE, DIALOGUE_OK, STYLE_FALSE, DIALOGUE_OK, STYLE_FALSE,
        DIALOGUE_OK, STYLE_FALSE, DIALOGUE_OK, STYLE_FALSE,
    ]));
    let result = refine(&fixture.services(&gw), &record, &dialogue, &concepts, Branch::Conscious).unwrap();
    assert!(!result.style_approved);
    assert_eq!(result.trace.iterations, 5);
    assert_eq!(result.trace.status, StageStatus::Exhausted);
    assert_eq!(result.dialogue.utterances.len(), 7);
}

#[test]
fn refine_never_exceeds_default_cap_of_five() {
    assert_eq!(LoopConfig::default().max_refine_iterations, 5);
}

#[test]
fn comatose_branch_rejects_history_taking_before_protocol_exit() {
    let fixture = Fixture::new();
    let record = comatose_record();
    // 'unresponsive' is not in the test lexicon, so only the structured
    // complaint grounds the concept check.
    let concepts = source_concepts(&fixture, &record);
    let bad_plan = r#"<plan>[
      {"topic": "Chief Complaint", "micro_intent": "Identify primary complaint", "evidence": ["unresponsive"]},
      {"topic": "Responsiveness Exam", "micro_intent": "AVPU", "evidence": []},
      {"topic": "Primary Assessment", "micro_intent": "Check airway", "evidence": []},
      {"topic": "Secondary Assessment", "micro_intent": "Skin exam", "evidence": []},
      {"topic": "History of Present Illness (S.A.M.P.L.E.)", "micro_intent": "Allergies", "evidence": []},
      {"topic": "Exit to Protocol", "micro_intent": "Decide EMS protocol", "evidence": []}
    ]</plan>"#;
    let good_plan = r#"<plan>[
      {"topic": "Chief Complaint", "micro_intent": "Identify primary complaint", "evidence": ["unresponsive"]},
      {"topic": "Responsiveness Exam", "micro_intent": "AVPU", "evidence": []},
      {"topic": "Primary Assessment", "micro_intent": "Check airway", "evidence": []},
      {"topic": "Secondary Assessment", "micro_intent": "Skin exam", "evidence": []},
      {"topic": "Exit to Protocol", "micro_intent": "Decide EMS protocol", "evidence": []}
    ]</plan>"#;
    let gw = gateway(replies(&[bad_plan, good_plan]));
    let result = plan(&fixture.services(&gw), &record, &concepts, Branch::Comatose).unwrap();
    assert_eq!(result.trace.iterations, 2);
    assert!(result.trace.reports[0]
        .structural_issues
        .iter()
        .any(|s| s.contains("branch conformance")));
    assert_eq!(result.trace.status, StageStatus::Accepted);
}

#[test]
fn deferred_topics_after_gate_are_allowed_on_comatose_branch() {
    let rule = BranchRule::default();
    let topics: Vec<String> = [
        "Primary Assessment",
        "Exit to Protocol",
        "History of Present Illness (S.A.M.P.L.E.)",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    assert!(rule.violations(&topics, Branch::Comatose).is_empty());
    let before: Vec<String> = ["History of Present Illness (S.A.M.P.L.E.)", "Exit to Protocol"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    assert_eq!(rule.violations(&before, Branch::Comatose).len(), 1);
    assert!(rule.violations(&before, Branch::Conscious).is_empty());
}

fn full_script() -> Vec<MockOutcome> {
    replies(&[PLAN_OK, DIALOGUE_OK, DIALOGUE_OK, STYLE_TRUE])
}

fn three_records() -> Vec<PatientCareRecord> {
    (1..=3)
        .map(|i| {
            let doc = serde_json::json!({
                "record_id": format!("r{i}"),
                "chief_complaint": "chest pain",
                "current_medications": ["aspirin"],
                "narrative": "Patient reports chest pain and nausea. GCS 15.",
                "diagnosis_labels": ["Chest Pain: Cardiac Suspected"]
            })
            .to_string();
            parse_epcr(&doc, &LabelSet::Open).unwrap()
        })
        .collect()
}

#[test]
fn pipeline_emits_dialogues_that_repass_checks() {
    let fixture = Fixture::new();
    let records = three_records();
    let playbook = ScriptedPlaybook::new(full_script());
    let deps = PipelineDeps {
        chat: &playbook,
        embedder: &fixture.embedder,
        lexicon: &fixture.lexicon,
        ontology: &fixture.ontology,
        config: &fixture.config,
    };
    let run = run_pipeline(&records, &deps, 2, None);

    assert_eq!(run.dialogues.len(), 3);
    assert!(run.rejects.is_empty());
    assert_eq!(run.traces.len(), 3);

    for (record, dialogue) in records.iter().zip(&run.dialogues) {
        assert_eq!(dialogue.labels, record.diagnosis_labels);
        let (concept_report, flow_report) = recheck_dialogue(
            record,
            dialogue,
            &fixture.lexicon,
            &fixture.ontology,
            &fixture.embedder,
            &fixture.config.match_config,
        )
        .unwrap();
        assert!(concept_report.is_pass(), "FN={:?} FP={:?}", concept_report.missing, concept_report.hallucinated);
        assert!(flow_report.is_pass());
    }
}

#[test]
fn pipeline_routes_exhausted_records_to_rejects() {
    let mut fixture = Fixture::new();
    fixture.config.loop_config.max_plan_iterations = 2;
    let records = three_records();
    let playbook = ScriptedPlaybook::new(full_script())
        .with_override("r2", replies(&[PLAN_MISSING_ASPIRIN, PLAN_MISSING_ASPIRIN]));
    let deps = PipelineDeps {
        chat: &playbook,
        embedder: &fixture.embedder,
        lexicon: &fixture.lexicon,
        ontology: &fixture.ontology,
        config: &fixture.config,
    };
    let run = run_pipeline(&records, &deps, 2, None);

    assert_eq!(run.dialogues.len(), 2);
    assert_eq!(run.rejects.len(), 1);
    assert_eq!(run.rejects[0].record_id, "r2");
    assert_eq!(run.rejects[0].status, PipelineStatus::Exhausted);
    assert_eq!(run.rejects[0].failed_stage.as_deref(), Some("plan"));
    // traces preserve input order for all records
    let ids: Vec<_> = run.traces.iter().map(|t| t.record_id.as_str()).collect();
    assert_eq!(ids, vec!["r1", "r2", "r3"]);
}

#[test]
fn pipeline_output_order_is_input_order_regardless_of_workers() {
    let fixture = Fixture::new();
    let records = three_records();
    let playbook = ScriptedPlaybook::new(full_script());
    let deps = PipelineDeps {
        chat: &playbook,
        embedder: &fixture.embedder,
        lexicon: &fixture.lexicon,
        ontology: &fixture.ontology,
        config: &fixture.config,
    };
    let run_a = run_pipeline(&records, &deps, 1, None);
    let run_b = run_pipeline(&records, &deps, 3, None);
    let ids_a: Vec<_> = run_a.dialogues.iter().map(|d| d.dialogue_id.clone()).collect();
    let ids_b: Vec<_> = run_b.dialogues.iter().map(|d| d.dialogue_id.clone()).collect();
    assert_eq!(ids_a, ids_b);
    assert_eq!(run_a.dialogues, run_b.dialogues);
}

#[test]
fn pipeline_hard_errors_route_to_rejects_with_message() {
    let fixture = Fixture::new();
    let records = three_records();
    let playbook = ScriptedPlaybook::new(full_script())
        .with_override("r3", replies(&["garbage", "garbage"]));
    let deps = PipelineDeps {
        chat: &playbook,
        embedder: &fixture.embedder,
        lexicon: &fixture.lexicon,
        ontology: &fixture.ontology,
        config: &fixture.config,
    };
    let run = run_pipeline(&records, &deps, 2, None);
    assert_eq!(run.rejects.len(), 1);
    assert!(run.rejects[0].error.as_deref().unwrap().contains("unparseable"));
}

#[test]
fn trace_iteration_accounting() {
    let fixture = Fixture::new();
    let records = vec![record()];
    let playbook = ScriptedPlaybook::new(replies(&[
        PLAN_MISSING_ASPIRIN,
        PLAN_OK,
        DIALOGUE_HALLUCINATED_MED,
        DIALOGUE_OK,
        DIALOGUE_OK,
        STYLE_TRUE,
    ]));
    let deps = PipelineDeps {
        chat: &playbook,
        embedder: &fixture.embedder,
        lexicon: &fixture.lexicon,
        ontology: &fixture.ontology,
        config: &fixture.config,
    };
    let run = run_pipeline(&records, &deps, 1, None);
    let trace = &run.traces[0];
    assert_eq!(trace.plan.as_ref().unwrap().iterations, 2);
    assert_eq!(trace.generate.as_ref().unwrap().iterations, 2);
    assert_eq!(trace.refine.as_ref().unwrap().iterations, 1);
    assert_eq!(trace.plan_generate_iterations(), 4);
    assert_eq!(trace.total_iterations(), 5);
    assert_eq!(trace.style_approved, Some(true));
}
