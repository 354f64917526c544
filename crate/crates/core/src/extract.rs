//! Deterministic concept and feature extraction from records and dialogue
//! text — the pipeline's grounding source.
//!
//! Structured field values become concepts verbatim (they are ground truth by
//! construction and bypass the semantic-tag filter). Free text is scanned
//! with an exact longest-match dictionary lookup after canonicalization;
//! overlapping spans resolve longest-span-first, then leftmost.

use crate::corpus::{Concept, ConceptSet, Dialogue, PatientCareRecord};
use crate::text::{canonical_term, canonical_tokens};
use regex::Regex;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;
use thiserror::Error;

/// The bundled starter lexicon (synthetic ids, tagged with the default
/// semantic-tag allowlist). Intended for tests and small demos, not clinical
/// coverage.
pub const STARTER_LEXICON_TSV: &str = include_str!("../assets/ems_lexicon.tsv");

/// Default semantic-tag allowlist applied to lexicon matches.
pub const DEFAULT_ALLOWED_TAGS: [&str; 39] = [
    "T058", "T059", "T060", "T061", "T184", "T033", "T034", "T037", "T019", "T020", "T046",
    "T047", "T048", "T191", "T049", "T050", "T074", "T203", "T200", "T192", "T075", "T120",
    "T121", "T195", "T122", "T123", "T125", "T126", "T127", "T129", "T130", "T131", "T104",
    "T109", "T114", "T116", "T197", "T196", "T168",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub canonical_id: String,
    pub semantic_tags: BTreeSet<String>,
}

/// Term dictionary: canonical term -> (canonical id, semantic tags), plus the
/// semantic-tag allowlist that gates free-text matches.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: BTreeMap<String, LexiconEntry>,
    allowed_tags: BTreeSet<String>,
    max_term_tokens: usize,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: expected `term<TAB>canonical_id<TAB>tag[,tag...]`")]
    BadLine { line: usize },
    #[error("lexicon line {line}: term is empty after normalization")]
    EmptyTerm { line: usize },
    #[error("allowed-tag set must be non-empty")]
    NoAllowedTags,
    #[error("i/o error reading lexicon: {0}")]
    Io(#[from] std::io::Error),
}

impl Lexicon {
    /// Parse the tab-separated lexicon format with the default allowlist.
    /// Blank lines and `#` comments are skipped.
    pub fn from_tsv(input: &str) -> Result<Self, LexiconError> {
        Self::from_tsv_with_tags(
            input,
            DEFAULT_ALLOWED_TAGS.iter().map(|t| t.to_string()).collect(),
        )
    }

    pub fn from_tsv_with_tags(
        input: &str,
        allowed_tags: BTreeSet<String>,
    ) -> Result<Self, LexiconError> {
        if allowed_tags.is_empty() {
            return Err(LexiconError::NoAllowedTags);
        }
        let mut entries = BTreeMap::new();
        let mut max_term_tokens = 1;
        for (idx, raw) in input.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (term, id, tags) = match (parts.next(), parts.next(), parts.next()) {
                (Some(t), Some(i), Some(g)) => (t, i, g),
                _ => return Err(LexiconError::BadLine { line: line_no }),
            };
            let term = canonical_term(term);
            if term.is_empty() {
                return Err(LexiconError::EmptyTerm { line: line_no });
            }
            let semantic_tags: BTreeSet<String> = tags
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_owned)
                .collect();
            max_term_tokens = max_term_tokens.max(term.split(' ').count());
            entries.insert(
                term,
                LexiconEntry {
                    canonical_id: id.trim().to_string(),
                    semantic_tags,
                },
            );
        }
        Ok(Self {
            entries,
            allowed_tags,
            max_term_tokens,
        })
    }

    /// The bundled starter lexicon.
    pub fn starter() -> Self {
        Self::from_tsv(STARTER_LEXICON_TSV).expect("bundled lexicon must parse")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, canonical: &str) -> Option<&LexiconEntry> {
        self.entries.get(canonical)
    }

    fn tag_allowed(&self, entry: &LexiconEntry) -> bool {
        entry.semantic_tags.iter().any(|t| self.allowed_tags.contains(t))
    }
}

/// Longest-match lexicon scan over canonical tokens. Returns concepts for
/// hits whose semantic tags intersect the allowlist; overlapping candidate
/// spans are resolved longest-first, then leftmost.
pub fn scan_text(text: &str, lexicon: &Lexicon, source: &str) -> Vec<Concept> {
    let tokens = canonical_tokens(text);
    let mut candidates: Vec<(usize, usize)> = Vec::new(); // (start, token_len)
    for start in 0..tokens.len() {
        let max_len = lexicon.max_term_tokens.min(tokens.len() - start);
        for len in 1..=max_len {
            let term = tokens[start..start + len].join(" ");
            if let Some(entry) = lexicon.lookup(&term) {
                if lexicon.tag_allowed(entry) {
                    candidates.push((start, len));
                }
            }
        }
    }
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut taken = vec![false; tokens.len()];
    let mut picked: Vec<(usize, usize)> = Vec::new();
    for (start, len) in candidates {
        if taken[start..start + len].iter().any(|&t| t) {
            continue;
        }
        taken[start..start + len].iter_mut().for_each(|t| *t = true);
        picked.push((start, len));
    }
    picked.sort_by_key(|&(start, _)| start);

    picked
        .into_iter()
        .map(|(start, len)| {
            let surface = tokens[start..start + len].join(" ");
            let entry = lexicon.lookup(&surface).expect("picked span is a lexicon hit");
            Concept {
                surface,
                canonical_id: Some(entry.canonical_id.clone()),
                semantic_tags: entry.semantic_tags.clone(),
                source: source.to_string(),
            }
        })
        .collect()
}

/// Extract the grounding concept set of a record: structured field values
/// verbatim, plus lexicon hits in the free-text fields (medical history and
/// narrative).
pub fn extract_from_record(record: &PatientCareRecord, lexicon: &Lexicon) -> ConceptSet {
    let mut set = ConceptSet::new();
    let mut push_structured = |value: &str, source: String| {
        let surface = canonical_term(value);
        if !surface.is_empty() {
            set.insert_unique_surface(Concept::structured(surface, source));
        }
    };

    push_structured(&record.chief_complaint, "chief_complaint".into());
    for med in &record.current_medications {
        push_structured(med, "current_medications".into());
    }
    for allergy in &record.allergies {
        push_structured(allergy, "allergies".into());
    }
    for vital in &record.vitals {
        push_structured(&vital.value, format!("vitals.{}", vital.kind.as_str()));
    }
    for iv in &record.interventions {
        push_structured(&iv.description, format!("interventions.{}", iv.kind.as_str()));
    }

    for concept in scan_text(&record.medical_history, lexicon, "medical_history") {
        set.insert_unique_surface(concept);
    }
    for concept in scan_text(&record.narrative, lexicon, "narrative") {
        set.insert_unique_surface(concept);
    }
    set
}

/// Extract lexicon concepts from free text.
pub fn extract_from_text(text: &str, lexicon: &Lexicon) -> ConceptSet {
    scan_text(text, lexicon, "text").into_iter().collect()
}

/// Extract lexicon concepts from a dialogue's utterance text.
pub fn extract_from_dialogue(dialogue: &Dialogue, lexicon: &Lexicon) -> ConceptSet {
    scan_text(&dialogue.joined_text(), lexicon, "dialogue")
        .into_iter()
        .collect()
}

/// Lexicon extraction plus anchored recall of known source surfaces: any
/// anchor surface occurring as a canonical token subsequence of `text` is
/// added as well. The pipeline uses this on generated plans and dialogues so
/// structured record values (which the lexicon may not cover) are creditable.
pub fn extract_with_anchors(text: &str, lexicon: &Lexicon, anchors: &ConceptSet) -> ConceptSet {
    let mut set: ConceptSet = scan_text(text, lexicon, "text").into_iter().collect();
    let tokens = canonical_tokens(text);
    for anchor in anchors.iter() {
        let needle: Vec<String> = anchor.surface.split(' ').map(str::to_owned).collect();
        if contains_token_seq(&tokens, &needle) {
            set.insert_unique_surface(Concept {
                surface: anchor.surface.clone(),
                canonical_id: anchor.canonical_id.clone(),
                semantic_tags: anchor.semantic_tags.clone(),
                source: "anchored".to_string(),
            });
        }
    }
    set
}

fn contains_token_seq(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// GCS feature extraction: the first `GCS`, `GCS:`, or `GCS of` mention
/// followed by an integer. A first match outside [3, 15] is discarded with a
/// warning.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GcsExtraction {
    pub value: Option<u8>,
    pub warning: Option<String>,
}

const GCS_MIN: i64 = 3;
const GCS_MAX: i64 = 15;

fn gcs_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bGCS\b\s*(?::|of)?\s*(\d{1,3})\b").unwrap())
}

pub fn extract_gcs(text: &str) -> GcsExtraction {
    match gcs_regex().captures(text) {
        None => GcsExtraction::default(),
        Some(caps) => {
            let raw = &caps[1];
            let value: i64 = raw.parse().unwrap_or(-1);
            if (GCS_MIN..=GCS_MAX).contains(&value) {
                GcsExtraction {
                    value: Some(value as u8),
                    warning: None,
                }
            } else {
                GcsExtraction {
                    value: None,
                    warning: Some(format!(
                        "GCS mention {raw:?} is outside [{GCS_MIN}, {GCS_MAX}]; discarded"
                    )),
                }
            }
        }
    }
}

/// GCS extraction over a whole record (structured text plus narrative).
pub fn extract_gcs_from_record(record: &PatientCareRecord) -> GcsExtraction {
    extract_gcs(&record.all_text())
}

/// The topic-flow branch a record selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Conscious,
    Comatose,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Conscious => "conscious",
            Self::Comatose => "comatose",
        }
    }
}

/// GCS <= 8 selects the comatose branch; a missing GCS defaults to conscious
/// so history-taking remains possible.
pub fn select_branch(gcs: Option<u8>) -> Branch {
    match gcs {
        Some(value) if value <= 8 => Branch::Comatose,
        _ => Branch::Conscious,
    }
}
