//! Patient care record ingest: one JSON object per line, fixed field names.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Vital sign kinds carried by a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VitalKind {
    Pulse,
    Respiration,
    BloodPressure,
    Glucose,
    Spo2,
    Ekg,
}

impl VitalKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pulse => "pulse",
            Self::Respiration => "respiration",
            Self::BloodPressure => "blood_pressure",
            Self::Glucose => "glucose",
            Self::Spo2 => "spo2",
            Self::Ekg => "ekg",
        }
    }
}

/// A single timestamped vital reading. The timestamp, when present, must be
/// ISO-8601.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VitalReading {
    pub kind: VitalKind,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    Procedure,
    Medication,
}

impl InterventionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Procedure => "procedure",
            Self::Medication => "medication",
        }
    }
}

/// A documented procedure or medication administration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intervention {
    pub kind: InterventionKind,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// Structured source record: structured fields plus the free-text narrative
/// and the diagnosis labels the derived dialogue inherits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientCareRecord {
    pub record_id: String,
    #[serde(default)]
    pub chief_complaint: String,
    #[serde(default)]
    pub medical_history: String,
    #[serde(default)]
    pub current_medications: Vec<String>,
    #[serde(default)]
    pub allergies: Vec<String>,
    #[serde(default)]
    pub vitals: Vec<VitalReading>,
    #[serde(default)]
    pub interventions: Vec<Intervention>,
    #[serde(default)]
    pub narrative: String,
    pub diagnosis_labels: Vec<String>,
}

impl PatientCareRecord {
    /// Deterministic flat-text rendering used in prompts and as the haystack
    /// for verbatim plan-evidence checks.
    pub fn to_prompt_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("Record ID: {}\n", self.record_id));
        out.push_str(&format!("Chief Complaint: {}\n", self.chief_complaint));
        out.push_str(&format!("Medical History: {}\n", self.medical_history));
        out.push_str(&format!(
            "Current Medications: {}\n",
            self.current_medications.join("; ")
        ));
        out.push_str(&format!("Allergies: {}\n", self.allergies.join("; ")));
        out.push_str("Vital Signs:\n");
        for v in &self.vitals {
            match &v.timestamp {
                Some(ts) => out.push_str(&format!("  - {} = {} at {}\n", v.kind.as_str(), v.value, ts)),
                None => out.push_str(&format!("  - {} = {}\n", v.kind.as_str(), v.value)),
            }
        }
        out.push_str("Interventions:\n");
        for i in &self.interventions {
            match &i.timestamp {
                Some(ts) => {
                    out.push_str(&format!("  - {}: {} at {}\n", i.kind.as_str(), i.description, ts))
                }
                None => out.push_str(&format!("  - {}: {}\n", i.kind.as_str(), i.description)),
            }
        }
        out.push_str(&format!("Narrative: {}\n", self.narrative));
        out
    }

    /// All free-text and structured text of the record, for feature regexes
    /// (GCS extraction and similar).
    pub fn all_text(&self) -> String {
        self.to_prompt_text()
    }
}

/// The configured diagnosis label universe. `Open` accepts any label id;
/// `Closed` rejects labels outside the set.
#[derive(Debug, Clone)]
pub enum LabelSet {
    Open,
    Closed(BTreeSet<String>),
}

impl LabelSet {
    pub fn closed<I: IntoIterator<Item = S>, S: Into<String>>(labels: I) -> Self {
        Self::Closed(labels.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, label: &str) -> bool {
        match self {
            Self::Open => true,
            Self::Closed(set) => set.contains(label),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("record line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("record {record_id}: empty record_id")]
    EmptyRecordId { record_id: String },
    #[error("record {record_id}: diagnosis_labels must be non-empty")]
    NoLabels { record_id: String },
    #[error("record {record_id}: unknown diagnosis label {label:?} (not in the configured label universe)")]
    UnknownLabel { record_id: String, label: String },
    #[error("record {record_id}: field {field_path}: invalid ISO-8601 timestamp {value:?}")]
    BadTimestamp {
        record_id: String,
        field_path: String,
        value: String,
    },
    #[error("i/o error reading records: {0}")]
    Io(#[from] std::io::Error),
}

/// Parse one record document (a single JSON object) and enforce the record
/// invariants against the configured label universe.
pub fn parse_epcr(document: &str, labels: &LabelSet) -> Result<PatientCareRecord, IngestError> {
    let record: PatientCareRecord =
        serde_json::from_str(document).map_err(|source| IngestError::Malformed { line: 1, source })?;
    validate_record(&record, labels)?;
    Ok(record)
}

/// Parse a newline-delimited record stream. Blank lines are skipped; the
/// error names the 1-based offending line.
pub fn parse_epcr_stream(input: &str, labels: &LabelSet) -> Result<Vec<PatientCareRecord>, IngestError> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PatientCareRecord = serde_json::from_str(line)
            .map_err(|source| IngestError::Malformed { line: idx + 1, source })?;
        validate_record(&record, labels)?;
        records.push(record);
    }
    Ok(records)
}

fn validate_record(record: &PatientCareRecord, labels: &LabelSet) -> Result<(), IngestError> {
    if record.record_id.trim().is_empty() {
        return Err(IngestError::EmptyRecordId {
            record_id: record.record_id.clone(),
        });
    }
    if record.diagnosis_labels.is_empty() {
        return Err(IngestError::NoLabels {
            record_id: record.record_id.clone(),
        });
    }
    for label in &record.diagnosis_labels {
        if !labels.contains(label) {
            return Err(IngestError::UnknownLabel {
                record_id: record.record_id.clone(),
                label: label.clone(),
            });
        }
    }
    for (i, vital) in record.vitals.iter().enumerate() {
        if let Some(ts) = &vital.timestamp {
            if !is_iso8601(ts) {
                return Err(IngestError::BadTimestamp {
                    record_id: record.record_id.clone(),
                    field_path: format!("vitals[{i}].timestamp"),
                    value: ts.clone(),
                });
            }
        }
    }
    for (i, iv) in record.interventions.iter().enumerate() {
        if let Some(ts) = &iv.timestamp {
            if !is_iso8601(ts) {
                return Err(IngestError::BadTimestamp {
                    record_id: record.record_id.clone(),
                    field_path: format!("interventions[{i}].timestamp"),
                    value: ts.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Accepts RFC 3339, a naive `YYYY-MM-DDTHH:MM:SS[.fff]` datetime, or a bare
/// date.
fn is_iso8601(s: &str) -> bool {
    chrono::DateTime::parse_from_rfc3339(s).is_ok()
        || chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").is_ok()
        || chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f").is_ok()
        || chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
}
