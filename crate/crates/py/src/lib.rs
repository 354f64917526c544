//! Python bindings: the parsers, checkers, metrics, and training-data
//! builders exposed as one extension module.

use colloquy::checker::{factuality_pr, match_concepts, MatchConfig, MatchStage};
use colloquy::corpus::{load_topic_ontology, Concept, ConceptSet};
use colloquy::embed::{EmbedError, Embedder, HashEmbedder};
use colloquy::extract::{extract_from_text, select_branch, Branch, Lexicon as CoreLexicon};
use colloquy::forecast::{
    aggregate, build_dynamic_examples, build_static_example, evaluate_trajectory,
    inject_concept_errors, parse_trajectories, CommitPolicy, UnrollConfig,
};
use colloquy::intrinsic::{
    corpus_stats, krippendorff_alpha, mrr, self_bleu_texts, spearman, yes_rate, RatingsMatrix,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::collections::{BTreeMap, BTreeSet};

fn value_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// serde_json::Value -> native Python object.
fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None().into_bound(py),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py_json<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &json)
}

// ---------------------------------------------------------------------------
// Corpus types
// ---------------------------------------------------------------------------

/// One dialogue turn.
#[pyclass(name = "Utterance", from_py_object)]
#[derive(Clone)]
struct PyUtterance {
    inner: colloquy::corpus::Utterance,
}

#[pymethods]
impl PyUtterance {
    #[new]
    fn new(turn: u32, topic: &str, micro_intent: &str, role: &str, text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: colloquy::corpus::Utterance::new(turn, topic, micro_intent, role, text)
                .map_err(value_err)?,
        })
    }

    #[getter]
    fn turn(&self) -> u32 {
        self.inner.turn
    }

    #[getter]
    fn topic(&self) -> String {
        self.inner.topic.clone()
    }

    #[getter]
    fn micro_intent(&self) -> String {
        self.inner.micro_intent.clone()
    }

    #[getter]
    fn role(&self) -> String {
        self.inner.role.clone()
    }

    #[getter]
    fn text(&self) -> String {
        self.inner.text.clone()
    }

    /// Render in the generator line grammar.
    fn to_line(&self) -> PyResult<String> {
        colloquy::corpus::serialize_utterance(&self.inner).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Utterance(turn={}, topic={:?}, role={:?})",
            self.inner.turn, self.inner.topic, self.inner.role
        )
    }
}

/// An ordered multi-party dialogue.
#[pyclass(name = "Dialogue", from_py_object)]
#[derive(Clone)]
struct PyDialogue {
    inner: colloquy::corpus::Dialogue,
}

#[pymethods]
impl PyDialogue {
    #[new]
    fn new(
        dialogue_id: &str,
        source_record_id: &str,
        labels: Vec<String>,
        utterances: Vec<PyUtterance>,
    ) -> PyResult<Self> {
        let inner = colloquy::corpus::Dialogue {
            dialogue_id: dialogue_id.to_string(),
            source_record_id: source_record_id.to_string(),
            labels,
            utterances: utterances.into_iter().map(|u| u.inner).collect(),
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Parse the corpus JSON object form.
    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        let inner: colloquy::corpus::Dialogue = serde_json::from_str(json).map_err(value_err)?;
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[getter]
    fn dialogue_id(&self) -> String {
        self.inner.dialogue_id.clone()
    }

    #[getter]
    fn source_record_id(&self) -> String {
        self.inner.source_record_id.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.clone()
    }

    #[getter]
    fn utterances(&self) -> Vec<PyUtterance> {
        self.inner
            .utterances
            .iter()
            .map(|u| PyUtterance { inner: u.clone() })
            .collect()
    }

    fn topic_sequence(&self) -> Vec<String> {
        self.inner.topic_sequence()
    }

    /// Newline-delimited generator-grammar rendering.
    fn serialize(&self) -> PyResult<String> {
        colloquy::corpus::serialize_dialogue(&self.inner).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.utterances.len()
    }
}

/// Parse one generator-grammar line.
#[pyfunction]
fn parse_dialogue_line(line: &str) -> PyResult<PyUtterance> {
    Ok(PyUtterance {
        inner: colloquy::corpus::parse_dialogue_line(line).map_err(value_err)?,
    })
}

/// The directed topic graph with micro-intent inventories.
#[pyclass(name = "TopicOntology", skip_from_py_object)]
#[derive(Clone)]
struct PyOntology {
    inner: colloquy::corpus::TopicOntology,
}

#[pymethods]
impl PyOntology {
    /// Load from the JSON config document.
    #[staticmethod]
    fn from_json(config: &str) -> PyResult<Self> {
        Ok(Self { inner: load_topic_ontology(config).map_err(value_err)? })
    }

    /// The bundled default EMS ontology (13 topics).
    #[staticmethod]
    fn default_ems() -> Self {
        Self { inner: colloquy::corpus::TopicOntology::default_ems() }
    }

    #[getter]
    fn topics(&self) -> Vec<String> {
        self.inner.topic_ids().to_vec()
    }

    fn micro_intents(&self, topic: &str) -> Vec<String> {
        self.inner.micro_intents(topic).to_vec()
    }

    fn allowed_next(&self, topic: &str) -> Vec<String> {
        self.inner.allowed_next(topic).to_vec()
    }

    fn has_edge(&self, from_topic: &str, to_topic: &str) -> bool {
        self.inner.has_edge(from_topic, to_topic)
    }

    /// Validate a topic sequence; returns one dict per violation.
    fn validate_flow<'py>(&self, py: Python<'py>, topics: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
        let report = colloquy::checker::validate_flow(&topics, &self.inner);
        to_py_json(py, &report.violations)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Term dictionary for concept extraction.
#[pyclass(name = "Lexicon", skip_from_py_object)]
#[derive(Clone)]
struct PyLexicon {
    inner: CoreLexicon,
}

#[pymethods]
impl PyLexicon {
    /// Parse the `term<TAB>id<TAB>tag[,tag...]` format.
    #[staticmethod]
    fn from_tsv(tsv: &str) -> PyResult<Self> {
        Ok(Self { inner: CoreLexicon::from_tsv(tsv).map_err(value_err)? })
    }

    /// The bundled starter lexicon.
    #[staticmethod]
    fn starter() -> Self {
        Self { inner: CoreLexicon::starter() }
    }

    /// Longest-match extraction over free text; returns concept dicts.
    fn extract<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        let set = extract_from_text(text, &self.inner);
        let concepts: Vec<&Concept> = set.iter().collect();
        to_py_json(py, &concepts)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// First GCS mention in the text, when in [3, 15].
#[pyfunction]
fn extract_gcs(text: &str) -> Option<u8> {
    colloquy::extract::extract_gcs(text).value
}

/// "comatose" iff GCS <= 8; a missing GCS defaults to "conscious".
#[pyfunction]
#[pyo3(signature = (gcs=None))]
fn branch_for_gcs(gcs: Option<u8>) -> &'static str {
    match select_branch(gcs) {
        Branch::Conscious => "conscious",
        Branch::Comatose => "comatose",
    }
}

// ---------------------------------------------------------------------------
// Concept checker
// ---------------------------------------------------------------------------

struct CallableEmbedder {
    callable: Py<PyAny>,
}

impl Embedder for CallableEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Python::attach(|py| {
            let arg = PyList::new(py, texts).map_err(|e| EmbedError::Backend(e.to_string()))?;
            let out = self
                .callable
                .bind(py)
                .call1((arg,))
                .map_err(|e| EmbedError::Backend(e.to_string()))?;
            out.extract::<Vec<Vec<f64>>>()
                .map_err(|e| EmbedError::Contract(format!("embedder must return list[list[float]]: {e}")))
        })
    }
}

fn surfaces_to_set(surfaces: Vec<String>) -> ConceptSet {
    surfaces
        .into_iter()
        .map(|s| Concept::structured(colloquy::text::canonical_term(&s), "python"))
        .collect()
}

/// Two-stage concept alignment between source and target surfaces. The
/// optional `embedder` is a callable `list[str] -> list[list[float]]`; the
/// default is the deterministic hash embedder.
#[pyfunction]
#[pyo3(signature = (source, target, threshold=0.8, embedder=None))]
fn match_concept_surfaces<'py>(
    py: Python<'py>,
    source: Vec<String>,
    target: Vec<String>,
    threshold: f64,
    embedder: Option<Py<PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let src = surfaces_to_set(source);
    let tgt = surfaces_to_set(target);
    let cfg = MatchConfig { similarity_threshold: threshold };
    let report = match embedder {
        Some(callable) => {
            let adapter = CallableEmbedder { callable };
            match_concepts(&src, &tgt, &adapter, &cfg).map_err(value_err)?
        }
        None => match_concepts(&src, &tgt, &HashEmbedder::default(), &cfg).map_err(value_err)?,
    };
    let (precision, recall) = factuality_pr(&report);

    let result = PyDict::new(py);
    let matched = PyList::empty(py);
    for pair in &report.matched {
        let entry = PyDict::new(py);
        entry.set_item("source", &pair.source.surface)?;
        entry.set_item("target", &pair.target.surface)?;
        entry.set_item(
            "stage",
            match pair.stage {
                MatchStage::Syntactic => "syntactic",
                MatchStage::Semantic => "semantic",
            },
        )?;
        entry.set_item("similarity", pair.similarity)?;
        matched.append(entry)?;
    }
    result.set_item("matched", matched)?;
    result.set_item("missing", report.missing.surfaces())?;
    result.set_item("hallucinated", report.hallucinated.surfaces())?;
    result.set_item("precision", precision)?;
    result.set_item("recall", recall)?;
    Ok(result.into_any())
}

/// Inject `n_fp` hallucinated and `n_fn` missing concepts (with
/// `substitutions` correlated pairs) into a surface set; deterministic under
/// `seed`.
#[pyfunction]
#[pyo3(signature = (surfaces, n_fp, n_fn, substitutions=0, seed=0))]
fn inject_errors<'py>(
    py: Python<'py>,
    surfaces: Vec<String>,
    n_fp: usize,
    n_fn: usize,
    substitutions: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let set = surfaces_to_set(surfaces);
    let outcome = inject_concept_errors(&set, n_fp, n_fn, substitutions, seed).map_err(value_err)?;
    let dict = PyDict::new(py);
    dict.set_item("corrupted", outcome.corrupted.surfaces())?;
    dict.set_item("injected_fp", outcome.injected_fp.surfaces())?;
    dict.set_item("injected_fn", outcome.injected_fn.surfaces())?;
    Ok(dict.into_any())
}

// ---------------------------------------------------------------------------
// Intrinsic metrics
// ---------------------------------------------------------------------------

/// Corpus Self-BLEU (percentage) over pre-joined dialogue texts.
#[pyfunction]
fn self_bleu(texts: Vec<String>) -> PyResult<f64> {
    self_bleu_texts(&texts).map_err(value_err)
}

/// Mean reciprocal rank over 1-based ranks.
#[pyfunction]
#[pyo3(name = "mrr")]
fn mrr_py(ranks: Vec<usize>) -> PyResult<f64> {
    mrr(&ranks).map_err(value_err)
}

/// Yes-rate percentage over booleans.
#[pyfunction]
#[pyo3(name = "yes_rate")]
fn yes_rate_py(verdicts: Vec<bool>) -> PyResult<f64> {
    yes_rate(&verdicts).map_err(value_err)
}

/// Spearman rank correlation with average-rank ties.
#[pyfunction]
#[pyo3(name = "spearman")]
fn spearman_py(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    spearman(&x, &y).map_err(value_err)
}

/// Krippendorff's alpha (nominal) over an items x raters matrix; `None`
/// cells are absent ratings.
#[pyfunction]
#[pyo3(name = "krippendorff_alpha")]
fn krippendorff_alpha_py(rows: Vec<Vec<Option<String>>>) -> PyResult<f64> {
    let items = rows.len();
    let raters = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != raters) {
        return Err(PyValueError::new_err("all matrix rows must have the same width"));
    }
    let mut matrix = RatingsMatrix::new(items, raters).map_err(value_err)?;
    for (item, row) in rows.iter().enumerate() {
        for (rater, cell) in row.iter().enumerate() {
            if let Some(label) = cell {
                matrix.set(item, rater, label.clone());
            }
        }
    }
    krippendorff_alpha(&matrix).map_err(value_err)
}

/// Dataset statistics for a list of dialogues.
#[pyfunction]
#[pyo3(name = "corpus_stats")]
fn corpus_stats_py<'py>(py: Python<'py>, dialogues: Vec<PyDialogue>) -> PyResult<Bound<'py, PyAny>> {
    let corpus: Vec<colloquy::corpus::Dialogue> = dialogues.into_iter().map(|d| d.inner).collect();
    to_py_json(py, &corpus_stats(&corpus))
}

// ---------------------------------------------------------------------------
// Forecast evaluation
// ---------------------------------------------------------------------------

/// Per-turn commit decision for `{label: probability}` under threshold tau.
/// Returns `None` on defer, else a dict with the committed set and top label.
#[pyfunction]
#[pyo3(signature = (probs, tau=0.5))]
fn commit<'py>(py: Python<'py>, probs: BTreeMap<String, f64>, tau: f64) -> PyResult<Option<Bound<'py, PyAny>>> {
    let prediction = colloquy::forecast::TurnPrediction { turn: 1, probs };
    match colloquy::forecast::commit(&prediction, &CommitPolicy { tau }) {
        colloquy::forecast::CommitDecision::Defer => Ok(None),
        colloquy::forecast::CommitDecision::Commit { labels, top_label, top_confidence } => {
            let dict = PyDict::new(py);
            dict.set_item("labels", labels)?;
            dict.set_item("top_label", top_label)?;
            dict.set_item("top_confidence", top_confidence)?;
            Ok(Some(dict.into_any()))
        }
    }
}

/// Earliness of a commit: 1 - t_pred / T.
#[pyfunction]
fn earliness(t_pred: u32, dialogue_length: u32) -> PyResult<f64> {
    colloquy::forecast::earliness(t_pred, dialogue_length).map_err(value_err)
}

/// Edit overheads over a post-commit top-label sequence.
#[pyfunction]
fn edit_overheads(sequence: Vec<String>, ground_truth: Vec<String>) -> PyResult<f64> {
    let gt: BTreeSet<String> = ground_truth.into_iter().collect();
    colloquy::forecast::edit_overheads(&sequence, &gt).map_err(value_err)
}

/// Evaluate one trajectory (the `{"dialogue_id", "turns": [...]}` JSON form)
/// against ground-truth labels.
#[pyfunction]
#[pyo3(signature = (trajectory_json, labels, tau=0.5))]
fn evaluate_trajectory_json<'py>(
    py: Python<'py>,
    trajectory_json: &str,
    labels: Vec<String>,
    tau: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let trajectory: colloquy::forecast::PredictionTrajectory =
        serde_json::from_str(trajectory_json).map_err(value_err)?;
    let gt: BTreeSet<String> = labels.into_iter().collect();
    let metrics = evaluate_trajectory(&trajectory, &gt, &CommitPolicy { tau }).map_err(value_err)?;
    to_py_json(py, &metrics)
}

/// Full forecast report (per-dialogue metrics + aggregate summary) from
/// newline-delimited trajectories and `{"dialogue_id", "labels"}` lines.
#[pyfunction]
#[pyo3(signature = (trajectories_jsonl, labels_jsonl, tau=0.5))]
fn forecast_report<'py>(
    py: Python<'py>,
    trajectories_jsonl: &str,
    labels_jsonl: &str,
    tau: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let trajectories = parse_trajectories(trajectories_jsonl).map_err(value_err)?;
    let mut labels: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for line in labels_jsonl.lines().filter(|l| !l.trim().is_empty()) {
        let value: serde_json::Value = serde_json::from_str(line).map_err(value_err)?;
        let id = value["dialogue_id"]
            .as_str()
            .ok_or_else(|| PyValueError::new_err("labels line missing dialogue_id"))?;
        let set: BTreeSet<String> = value["labels"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_owned)).collect())
            .unwrap_or_default();
        labels.insert(id.to_string(), set);
    }
    let policy = CommitPolicy { tau };
    let mut per_dialogue = Vec::new();
    for trajectory in &trajectories {
        let gt = labels
            .get(&trajectory.dialogue_id)
            .ok_or_else(|| PyValueError::new_err(format!("no labels for {}", trajectory.dialogue_id)))?;
        per_dialogue.push(evaluate_trajectory(trajectory, gt, &policy).map_err(value_err)?);
    }
    let summary = aggregate(&per_dialogue).map_err(value_err)?;
    let dict = PyDict::new(py);
    dict.set_item("per_dialogue", to_py_json(py, &per_dialogue)?)?;
    dict.set_item("summary", to_py_json(py, &summary)?)?;
    Ok(dict.into_any())
}

/// One static training example per dialogue: (input, labels).
#[pyfunction]
fn static_example(dialogue: &PyDialogue) -> PyResult<(String, Vec<String>)> {
    let example = build_static_example(&dialogue.inner).map_err(value_err)?;
    Ok((example.input, example.labels))
}

/// Dynamic unrolling: min(K, T) nested prefix examples, longest first.
#[pyfunction]
#[pyo3(signature = (dialogue, k=5))]
fn dynamic_examples(dialogue: &PyDialogue, k: u32) -> PyResult<Vec<(String, Vec<String>)>> {
    let examples = build_dynamic_examples(&dialogue.inner, &UnrollConfig { k }).map_err(value_err)?;
    Ok(examples.into_iter().map(|e| (e.input, e.labels)).collect())
}

#[pymodule]
fn colloquy_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyUtterance>()?;
    m.add_class::<PyDialogue>()?;
    m.add_class::<PyOntology>()?;
    m.add_class::<PyLexicon>()?;
    m.add_function(wrap_pyfunction!(parse_dialogue_line, m)?)?;
    m.add_function(wrap_pyfunction!(extract_gcs, m)?)?;
    m.add_function(wrap_pyfunction!(branch_for_gcs, m)?)?;
    m.add_function(wrap_pyfunction!(match_concept_surfaces, m)?)?;
    m.add_function(wrap_pyfunction!(inject_errors, m)?)?;
    m.add_function(wrap_pyfunction!(self_bleu, m)?)?;
    m.add_function(wrap_pyfunction!(mrr_py, m)?)?;
    m.add_function(wrap_pyfunction!(yes_rate_py, m)?)?;
    m.add_function(wrap_pyfunction!(spearman_py, m)?)?;
    m.add_function(wrap_pyfunction!(krippendorff_alpha_py, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_stats_py, m)?)?;
    m.add_function(wrap_pyfunction!(commit, m)?)?;
    m.add_function(wrap_pyfunction!(earliness, m)?)?;
    m.add_function(wrap_pyfunction!(edit_overheads, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_trajectory_json, m)?)?;
    m.add_function(wrap_pyfunction!(forecast_report, m)?)?;
    m.add_function(wrap_pyfunction!(static_example, m)?)?;
    m.add_function(wrap_pyfunction!(dynamic_examples, m)?)?;
    Ok(())
}
