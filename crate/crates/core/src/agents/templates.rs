//! Prompt templates: external text files keyed by stage, populated by named
//! `{placeholder}` substitution (`{{` and `}}` escape literal braces, so the
//! JSON schemas inside the judge prompts survive rendering).

use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown placeholder {name:?}")]
    UnknownPlaceholder { name: String },
    #[error("unterminated placeholder starting at byte {at}")]
    Unterminated { at: usize },
    #[error("stray '}}' at byte {at}")]
    StrayClose { at: usize },
    #[error("failed to read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Substitute `{name}` placeholders from `vars`; `{{` and `}}` render as
/// literal braces. Unknown placeholders are an error.
pub fn render_template(template: &str, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let bytes = template.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' => {
                if bytes.get(i + 1) == Some(&b'{') {
                    out.push('{');
                    i += 2;
                    continue;
                }
                let start = i + 1;
                let end = template[start..]
                    .find('}')
                    .map(|off| start + off)
                    .ok_or(TemplateError::Unterminated { at: i })?;
                let name = &template[start..end];
                let value = vars
                    .get(name)
                    .ok_or_else(|| TemplateError::UnknownPlaceholder { name: name.to_string() })?;
                out.push_str(value);
                i = end + 1;
            }
            b'}' => {
                if bytes.get(i + 1) == Some(&b'}') {
                    out.push('}');
                    i += 2;
                } else {
                    return Err(TemplateError::StrayClose { at: i });
                }
            }
            _ => {
                // advance one full UTF-8 character
                let ch_len = template[i..].chars().next().map(char::len_utf8).unwrap_or(1);
                out.push_str(&template[i..i + ch_len]);
                i += ch_len;
            }
        }
    }
    Ok(out)
}

macro_rules! template_fields {
    ($($field:ident => $file:literal),+ $(,)?) => {
        /// The full per-stage template set, bundled defaults included.
        #[derive(Debug, Clone)]
        pub struct PromptTemplates {
            $(pub $field: String,)+
        }

        impl Default for PromptTemplates {
            fn default() -> Self {
                Self {
                    $($field: include_str!(concat!("../../assets/prompts/", $file)).to_string(),)+
                }
            }
        }

        impl PromptTemplates {
            /// Load templates from a directory; files that are absent fall
            /// back to the bundled defaults.
            pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
                let mut templates = Self::default();
                $(
                    let path = dir.join($file);
                    if path.exists() {
                        templates.$field = std::fs::read_to_string(&path).map_err(|source| {
                            TemplateError::Io { path: path.display().to_string(), source }
                        })?;
                    }
                )+
                Ok(templates)
            }
        }
    };
}

template_fields! {
    planner_system => "planner_system.txt",
    planner_user => "planner_user.txt",
    generator_system => "generator_system.txt",
    generator_user => "generator_user.txt",
    refiner_system => "refiner_system.txt",
    refiner_user => "refiner_user.txt",
    style_system => "style_system.txt",
    style_user => "style_user.txt",
    judge_system => "judge_system.txt",
    judge_logic_user => "judge_logic_user.txt",
    judge_ranking_user => "judge_ranking_user.txt",
    judge_realism_user => "judge_realism_user.txt",
    judge_safety_user => "judge_safety_user.txt",
    judge_role_user => "judge_role_user.txt",
    judge_groundedness_user => "judge_groundedness_user.txt",
}

/// The bundled expert rules rubric.
pub const DEFAULT_RULES: &str = include_str!("../../assets/rules.txt");

/// Bundled exemplar dialogues for the refiner prompt.
pub const DEFAULT_EXEMPLARS: [&str; 2] = [
    include_str!("../../assets/exemplar_1.txt"),
    include_str!("../../assets/exemplar_2.txt"),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn substitutes_placeholders() {
        let out = render_template("ePCR: {epcr}\nconcepts: {concept}", &vars(&[("epcr", "X"), ("concept", "Y")])).unwrap();
        assert_eq!(out, "ePCR: X\nconcepts: Y");
    }

    #[test]
    fn double_braces_escape() {
        let out = render_template("{{\"logic\": {{\"score\": int}}}} for {name}", &vars(&[("name", "n")])).unwrap();
        assert_eq!(out, "{\"logic\": {\"score\": int}} for n");
    }

    #[test]
    fn unknown_placeholder_is_an_error() {
        assert!(matches!(
            render_template("{missing}", &vars(&[])),
            Err(TemplateError::UnknownPlaceholder { .. })
        ));
    }

    #[test]
    fn unterminated_and_stray_braces_error() {
        assert!(matches!(render_template("{open", &vars(&[])), Err(TemplateError::Unterminated { .. })));
        assert!(matches!(render_template("close}", &vars(&[])), Err(TemplateError::StrayClose { .. })));
    }

    #[test]
    fn default_templates_render_with_their_placeholders() {
        let t = PromptTemplates::default();
        render_template(&t.planner_system, &vars(&[("topic_flow", "flow")])).unwrap();
        render_template(&t.planner_user, &vars(&[("epcr", "e"), ("concept", "c")])).unwrap();
        render_template(&t.generator_system, &vars(&[("topic_flow", "flow")])).unwrap();
        render_template(&t.generator_user, &vars(&[("epcr", "e"), ("plan", "p")])).unwrap();
        render_template(&t.refiner_system, &vars(&[("rules", "r"), ("example_1", "a"), ("example_2", "b")])).unwrap();
        render_template(&t.refiner_user, &vars(&[("topic_flow", "f"), ("epcr", "e"), ("dialogue", "d")])).unwrap();
        render_template(&t.style_system, &vars(&[("rules", "r")])).unwrap();
        render_template(&t.style_user, &vars(&[("topic_flow", "f"), ("epcr", "e"), ("dialogue", "d")])).unwrap();
        render_template(&t.judge_logic_user, &vars(&[("dialogue_text", "d")])).unwrap();
        render_template(&t.judge_ranking_user, &vars(&[("dialogues", "d")])).unwrap();
        render_template(&t.judge_realism_user, &vars(&[("rules", "r"), ("utt_id", "1"), ("role", "x"), ("text", "t")])).unwrap();
        render_template(&t.judge_safety_user, &vars(&[("protocol_text", "p"), ("utt_id", "1"), ("role", "x"), ("text", "t")])).unwrap();
        render_template(
            &t.judge_role_user,
            &vars(&[("role_exemplar", "e"), ("full_dialogue_text", "d"), ("utt_id", "1"), ("claimed_role", "x"), ("text", "t")]),
        )
        .unwrap();
        render_template(&t.judge_groundedness_user, &vars(&[("epcr_text", "e"), ("utt_id", "1"), ("role", "x"), ("text", "t")])).unwrap();
    }

    #[test]
    fn from_dir_falls_back_to_defaults() {
        let dir = std::env::temp_dir().join("colloquy-templates-test");
        let _ = std::fs::create_dir_all(&dir);
        std::fs::write(dir.join("planner_user.txt"), "custom {epcr} {concept}").unwrap();
        let t = PromptTemplates::from_dir(&dir).unwrap();
        assert!(t.planner_user.starts_with("custom"));
        assert_eq!(t.generator_user, PromptTemplates::default().generator_user);
        let _ = std::fs::remove_dir_all(&dir);
    }
}
