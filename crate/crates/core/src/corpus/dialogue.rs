//! Dialogues, utterances, and the strict generator line grammar:
//!
//! ```text
//! <turn>. <topic>; <micro_intent>; <role>: <utterance>
//! ```
//!
//! Separators are exact (`. `, `; `, `: `); topic and intent must be free of
//! `;`, the role free of `;` and `:`, and no component may contain a reserved
//! tag string or a newline. Parsing and serialization are exact inverses on
//! well-formed lines.

use crate::text::normalize_symbol;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Literal tag strings that must never occur inside any utterance text,
/// topic, intent, or role. Both opening and closing forms are reserved.
pub const RESERVED_TAGS: [&str; 8] = [
    "<dialogue>",
    "</dialogue>",
    "<plan>",
    "</plan>",
    "<approved>",
    "</approved>",
    "<critique>",
    "</critique>",
];

pub(crate) fn find_reserved_tag(text: &str) -> Option<&'static str> {
    RESERVED_TAGS.iter().copied().find(|tag| text.contains(tag))
}

/// One dialogue turn: topic, micro-intent, speaker role, and the spoken text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub turn: u32,
    pub topic: String,
    pub micro_intent: String,
    pub role: String,
    pub text: String,
}

impl Utterance {
    /// Build a validated utterance. Topic, intent, and role are NFC-normalized
    /// and trimmed; the text is trimmed.
    pub fn new(
        turn: u32,
        topic: &str,
        micro_intent: &str,
        role: &str,
        text: &str,
    ) -> Result<Self, LineParseError> {
        let utt = Self {
            turn,
            topic: normalize_symbol(topic),
            micro_intent: normalize_symbol(micro_intent),
            role: normalize_symbol(role),
            text: text.trim().to_string(),
        };
        utt.validate()?;
        Ok(utt)
    }

    pub fn validate(&self) -> Result<(), LineParseError> {
        if self.turn == 0 {
            return Err(LineParseError::BadTurn { turn: self.turn.to_string() });
        }
        for (name, value) in [
            ("topic", &self.topic),
            ("micro_intent", &self.micro_intent),
            ("role", &self.role),
        ] {
            if value.is_empty() {
                return Err(LineParseError::EmptyComponent { component: name });
            }
            if value.contains(';') || value.contains('\n') {
                return Err(LineParseError::ForbiddenCharacter { component: name });
            }
        }
        if self.role.contains(':') {
            return Err(LineParseError::ForbiddenCharacter { component: "role" });
        }
        if self.text.is_empty() {
            return Err(LineParseError::EmptyComponent { component: "text" });
        }
        if self.text.contains('\n') {
            return Err(LineParseError::ForbiddenCharacter { component: "text" });
        }
        for (name, value) in [
            ("topic", &self.topic),
            ("micro_intent", &self.micro_intent),
            ("role", &self.role),
            ("text", &self.text),
        ] {
            if let Some(tag) = find_reserved_tag(value) {
                return Err(LineParseError::ReservedTag { component: name, tag });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LineParseError {
    #[error("line does not match `<turn>. <topic>; <micro_intent>; <role>: <utterance>`: {line:?}")]
    Grammar { line: String },
    #[error("turn number is not a positive integer: {turn:?}")]
    BadTurn { turn: String },
    #[error("empty {component}")]
    EmptyComponent { component: &'static str },
    #[error("{component} contains a forbidden separator or newline")]
    ForbiddenCharacter { component: &'static str },
    #[error("{component} contains the reserved tag string {tag:?}")]
    ReservedTag { component: &'static str, tag: &'static str },
}

/// Parse one generator-grammar line into an [`Utterance`].
///
/// Trailing whitespace (including `\r`) is ignored; everything else is exact.
pub fn parse_dialogue_line(line: &str) -> Result<Utterance, LineParseError> {
    let line = line.trim_end();
    let grammar = || LineParseError::Grammar { line: line.to_string() };

    let (turn_str, rest) = line.split_once(". ").ok_or_else(grammar)?;
    if turn_str.is_empty() || !turn_str.bytes().all(|b| b.is_ascii_digit()) {
        return Err(grammar());
    }
    let turn: u32 = turn_str.parse().map_err(|_| LineParseError::BadTurn {
        turn: turn_str.to_string(),
    })?;
    if turn == 0 {
        return Err(LineParseError::BadTurn { turn: turn_str.to_string() });
    }

    let (topic, rest) = rest.split_once("; ").ok_or_else(grammar)?;
    let (intent, rest) = rest.split_once("; ").ok_or_else(grammar)?;
    // The role must not contain ';' or ':', so the first ": " closes it.
    let (role, text) = rest.split_once(": ").ok_or_else(grammar)?;
    if role.contains(';') {
        return Err(grammar());
    }
    if topic.is_empty() || intent.is_empty() || role.is_empty() || text.is_empty() {
        return Err(grammar());
    }

    Utterance::new(turn, topic, intent, role, text)
}

/// Render one utterance in the generator grammar.
pub fn serialize_utterance(utt: &Utterance) -> Result<String, DialogueError> {
    utt.validate().map_err(|source| DialogueError::InvalidUtterance {
        turn: utt.turn,
        source,
    })?;
    Ok(format!(
        "{}. {}; {}; {}: {}",
        utt.turn, utt.topic, utt.micro_intent, utt.role, utt.text
    ))
}

/// An ordered multi-party dialogue derived from one source record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub source_record_id: String,
    pub labels: Vec<String>,
    pub utterances: Vec<Utterance>,
}

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("dialogue has no utterances")]
    Empty,
    #[error("turn numbering must start at 1 (got {first})")]
    FirstTurnNotOne { first: u32 },
    #[error("turn numbers must be strictly increasing ({prev} then {next})")]
    NonIncreasingTurns { prev: u32, next: u32 },
    #[error("utterance {turn}: {source}")]
    InvalidUtterance {
        turn: u32,
        #[source]
        source: LineParseError,
    },
    #[error("dialogue corpus line {line}: {message}")]
    Corpus { line: usize, message: String },
}

impl Dialogue {
    pub fn validate(&self) -> Result<(), DialogueError> {
        if self.utterances.is_empty() {
            return Err(DialogueError::Empty);
        }
        if self.utterances[0].turn != 1 {
            return Err(DialogueError::FirstTurnNotOne {
                first: self.utterances[0].turn,
            });
        }
        for pair in self.utterances.windows(2) {
            if pair[1].turn <= pair[0].turn {
                return Err(DialogueError::NonIncreasingTurns {
                    prev: pair[0].turn,
                    next: pair[1].turn,
                });
            }
        }
        for utt in &self.utterances {
            utt.validate().map_err(|source| DialogueError::InvalidUtterance {
                turn: utt.turn,
                source,
            })?;
        }
        Ok(())
    }

    /// The dialogue's topic sequence, in turn order.
    pub fn topic_sequence(&self) -> Vec<String> {
        self.utterances.iter().map(|u| u.topic.clone()).collect()
    }

    /// All utterance text joined with single spaces (used by the extractor
    /// and the metrics).
    pub fn joined_text(&self) -> String {
        self.utterances
            .iter()
            .map(|u| u.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Render a dialogue as newline-delimited generator-grammar lines (no
/// trailing newline). `parse_dialogue_line` inverts each line.
pub fn serialize_dialogue(dialogue: &Dialogue) -> Result<String, DialogueError> {
    dialogue.validate()?;
    let lines: Vec<String> = dialogue
        .utterances
        .iter()
        .map(serialize_utterance)
        .collect::<Result<_, _>>()?;
    Ok(lines.join("\n"))
}

/// Parse a newline-delimited dialogue corpus (one JSON object per line) and
/// validate every dialogue. Errors carry the 1-based line number.
pub fn parse_dialogue_corpus(input: &str) -> Result<Vec<Dialogue>, DialogueError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let dialogue: Dialogue = serde_json::from_str(line).map_err(|e| DialogueError::Corpus {
            line: idx + 1,
            message: e.to_string(),
        })?;
        dialogue.validate().map_err(|e| DialogueError::Corpus {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(dialogue);
    }
    Ok(out)
}
