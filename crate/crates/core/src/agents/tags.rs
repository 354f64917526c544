//! Tagged-block extraction for agent outputs (`<plan>`, `<dialogue>`,
//! `<approved>`, `<critique>`) and the style-report wire format.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TagError {
    #[error("missing <{tag}> block")]
    MissingOpen { tag: String },
    #[error("missing </{tag}> close for <{tag}>")]
    MissingClose { tag: String },
    #[error("<approved> must contain the literal token `true` or `false`, got {got:?}")]
    BadApproved { got: String },
    #[error("style report not approved but carries no critiques")]
    EmptyCritiques,
}

/// Extract the inner text of the first `<tag>...</tag>` block, trimmed.
pub fn extract_tag_block(text: &str, tag: &str) -> Result<String, TagError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text
        .find(&open)
        .ok_or_else(|| TagError::MissingOpen { tag: tag.to_string() })?
        + open.len();
    let end = text[start..]
        .find(&close)
        .map(|off| start + off)
        .ok_or_else(|| TagError::MissingClose { tag: tag.to_string() })?;
    Ok(text[start..end].trim().to_string())
}

/// Style checker verdict: approval flag plus ordered critique texts.
/// `approved == false` implies at least one critique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleReport {
    pub approved: bool,
    pub critiques: Vec<String>,
}

impl StyleReport {
    pub fn approved() -> Self {
        Self { approved: true, critiques: Vec::new() }
    }
}

/// Parse the `<approved>` / `<critique>` blocks of a style-checker response.
pub fn parse_style_response(text: &str) -> Result<StyleReport, TagError> {
    let approved_raw = extract_tag_block(text, "approved")?;
    let approved = match approved_raw.as_str() {
        "true" => true,
        "false" => false,
        other => return Err(TagError::BadApproved { got: other.to_string() }),
    };

    let critique_raw = extract_tag_block(text, "critique")?;
    let critiques = parse_numbered_items(&critique_raw);
    if !approved && critiques.is_empty() {
        return Err(TagError::EmptyCritiques);
    }
    Ok(StyleReport { approved, critiques })
}

/// Render a style report back into its tagged wire format;
/// `parse_style_response` inverts this.
pub fn render_style_response(report: &StyleReport) -> String {
    let mut out = format!("<approved>{}</approved>\n<critique>\n", report.approved);
    for (i, critique) in report.critiques.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, critique));
    }
    out.push_str("</critique>");
    out
}

/// Split a critique block into ordered items. Lines starting with `N.` or
/// `N)` open a new item; continuation lines append to the current one. A
/// non-empty block with no numbering is a single item.
fn parse_numbered_items(block: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    let mut saw_number = false;
    for line in block.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = strip_item_number(trimmed) {
            saw_number = true;
            items.push(rest.to_string());
        } else if saw_number {
            if let Some(last) = items.last_mut() {
                last.push(' ');
                last.push_str(trimmed);
            }
        } else {
            items.push(trimmed.to_string());
            // unnumbered block: treat the whole remainder as one item
        }
    }
    if !saw_number && items.len() > 1 {
        return vec![items.join(" ")];
    }
    items
}

fn strip_item_number(line: &str) -> Option<&str> {
    let digits_end = line.find(|c: char| !c.is_ascii_digit())?;
    if digits_end == 0 {
        return None;
    }
    let rest = &line[digits_end..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    let rest = rest.trim_start();
    if rest.is_empty() {
        None
    } else {
        Some(rest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_first_block() {
        let text = "noise <plan>[1, 2]</plan> trailing";
        assert_eq!(extract_tag_block(text, "plan").unwrap(), "[1, 2]");
    }

    #[test]
    fn missing_open_and_close_are_distinct_errors() {
        assert!(matches!(extract_tag_block("x", "plan"), Err(TagError::MissingOpen { .. })));
        assert!(matches!(extract_tag_block("<plan>[", "plan"), Err(TagError::MissingClose { .. })));
    }

    #[test]
    fn approved_true_with_empty_critique() {
        let report = parse_style_response("<approved>true</approved><critique></critique>").unwrap();
        assert!(report.approved);
        assert!(report.critiques.is_empty());
    }

    #[test]
    fn not_approved_with_three_numbered_critiques() {
        let text = "<approved>false</approved>\n<critique>\n1. Patient uses jargon.\n2. Vitals batched in one turn.\n3. No consent before glucose check.\n</critique>";
        let report = parse_style_response(text).unwrap();
        assert!(!report.approved);
        assert_eq!(report.critiques.len(), 3);
        assert_eq!(report.critiques[1], "Vitals batched in one turn.");
    }

    #[test]
    fn missing_approved_is_a_parse_error() {
        let err = parse_style_response("<critique>1. x</critique>").unwrap_err();
        assert!(matches!(err, TagError::MissingOpen { .. }));
    }

    #[test]
    fn non_boolean_approved_rejected() {
        let err = parse_style_response("<approved>maybe</approved><critique></critique>").unwrap_err();
        assert!(matches!(err, TagError::BadApproved { .. }));
    }

    #[test]
    fn false_with_no_critiques_violates_the_invariant() {
        let err = parse_style_response("<approved>false</approved><critique></critique>").unwrap_err();
        assert!(matches!(err, TagError::EmptyCritiques));
    }

    #[test]
    fn render_parse_round_trip() {
        let report = StyleReport {
            approved: false,
            critiques: vec!["First issue.".into(), "Second one, with 3 details.".into()],
        };
        assert_eq!(parse_style_response(&render_style_response(&report)).unwrap(), report);

        let approved = StyleReport::approved();
        assert_eq!(parse_style_response(&render_style_response(&approved)).unwrap(), approved);
    }

    #[test]
    fn continuation_lines_join_their_item() {
        let text = "<approved>false</approved><critique>\n1. Broken line\nthat continues here.\n2. Second.\n</critique>";
        let report = parse_style_response(text).unwrap();
        assert_eq!(report.critiques[0], "Broken line that continues here.");
    }

    #[test]
    fn unnumbered_block_is_one_critique() {
        let text = "<approved>false</approved><critique>everything reads like a chart\nnot like speech</critique>";
        let report = parse_style_response(text).unwrap();
        assert_eq!(report.critiques.len(), 1);
    }
}
