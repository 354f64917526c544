//! Text canonicalization shared by parsers, the lexicon matcher, and the
//! concept checker.
//!
//! Two levels exist on purpose: `normalize_symbol` preserves case for topic,
//! intent, and role identifiers (compared case-sensitively after NFC and
//! trimming), while `canonical_term` folds case and punctuation for concept
//! surfaces and lexicon keys.

use unicode_normalization::UnicodeNormalization;

/// NFC-normalize and trim surrounding whitespace, preserving case.
///
/// Used for topic ids, micro-intents, and speaker roles.
pub fn normalize_symbol(s: &str) -> String {
    let nfc: String = s.nfc().collect();
    collapse_whitespace(nfc.trim())
}

/// Canonical form for concept surfaces and lexicon terms: NFC, lowercase,
/// every non-alphanumeric run folded to a single space, trimmed.
///
/// `canonical_term("ST-Elevation ") == "st elevation"` and
/// `canonical_term("120/80") == "120 80"`, so surface comparison survives
/// punctuation and spacing differences.
pub fn canonical_term(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for ch in s.nfc().flat_map(|c| c.to_lowercase()) {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Canonical whitespace-delimited tokens of `text`.
pub fn canonical_tokens(text: &str) -> Vec<String> {
    canonical_term(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Lowercased whitespace tokenization used by the corpus statistics and
/// Self-BLEU (punctuation is kept attached to tokens).
pub fn whitespace_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_ws = false;
    for ch in s.chars() {
        if ch.is_whitespace() {
            in_ws = true;
        } else {
            if in_ws && !out.is_empty() {
                out.push(' ');
            }
            in_ws = false;
            out.push(ch);
        }
    }
    out
}
