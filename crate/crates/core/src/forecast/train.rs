//! Training-example builders: one static example per full transcript, or K
//! nested prefix examples per dialogue (dynamic unrolling).

use super::ForecastError;
use crate::corpus::{serialize_dialogue, Dialogue};
use serde::{Deserialize, Serialize};

/// How many trailing prefixes dynamic unrolling emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnrollConfig {
    pub k: u32,
}

impl Default for UnrollConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// One fine-tuning example: the serialized transcript (or prefix) as input,
/// the dialogue's diagnosis labels as the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub input: String,
    pub labels: Vec<String>,
}

/// Full-transcript example.
pub fn build_static_example(dialogue: &Dialogue) -> Result<TrainingExample, ForecastError> {
    if dialogue.labels.is_empty() {
        return Err(ForecastError::Unlabeled(dialogue.dialogue_id.clone()));
    }
    Ok(TrainingExample {
        input: serialize_dialogue(dialogue)?,
        labels: dialogue.labels.clone(),
    })
}

/// Dynamic unrolling: min(K, T) examples over the prefixes
/// `u_{1:T}, u_{1:T-1}, ..., u_{1:T-K+1}`, longest first, each targeting the
/// dialogue's labels.
pub fn build_dynamic_examples(
    dialogue: &Dialogue,
    config: &UnrollConfig,
) -> Result<Vec<TrainingExample>, ForecastError> {
    if config.k == 0 {
        return Err(ForecastError::Precondition("unroll K must be >= 1".into()));
    }
    if dialogue.labels.is_empty() {
        return Err(ForecastError::Unlabeled(dialogue.dialogue_id.clone()));
    }
    dialogue.validate()?;

    let total = dialogue.utterances.len();
    let count = (config.k as usize).min(total);
    let mut examples = Vec::with_capacity(count);
    for cut in 0..count {
        let prefix_len = total - cut;
        let prefix = Dialogue {
            dialogue_id: dialogue.dialogue_id.clone(),
            source_record_id: dialogue.source_record_id.clone(),
            labels: dialogue.labels.clone(),
            utterances: dialogue.utterances[..prefix_len].to_vec(),
        };
        examples.push(TrainingExample {
            input: serialize_dialogue(&prefix)?,
            labels: dialogue.labels.clone(),
        });
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;

    fn dialogue(turns: usize) -> Dialogue {
        Dialogue {
            dialogue_id: "d1".into(),
            source_record_id: "r1".into(),
            labels: vec!["Chest Pain: Cardiac Suspected".into()],
            utterances: (1..=turns)
                .map(|t| {
                    Utterance::new(t as u32, "Dispatch", "Radio dispatch", "EMT", &format!("line {t} words here")).unwrap()
                })
                .collect(),
        }
    }

    #[test]
    fn static_example_is_the_full_serialized_transcript() {
        let d = dialogue(12);
        let example = build_static_example(&d).unwrap();
        assert_eq!(example.input.lines().count(), 12);
        assert_eq!(example.input, serialize_dialogue(&d).unwrap());
        assert_eq!(example.labels, d.labels);
    }

    #[test]
    fn unlabeled_dialogue_is_an_error() {
        let mut d = dialogue(3);
        d.labels.clear();
        assert!(matches!(build_static_example(&d), Err(ForecastError::Unlabeled(_))));
        assert!(matches!(
            build_dynamic_examples(&d, &UnrollConfig::default()),
            Err(ForecastError::Unlabeled(_))
        ));
    }

    #[test]
    fn dynamic_unrolls_last_k_prefixes() {
        let examples = build_dynamic_examples(&dialogue(12), &UnrollConfig { k: 5 }).unwrap();
        assert_eq!(examples.len(), 5);
        let lengths: Vec<usize> = examples.iter().map(|e| e.input.lines().count()).collect();
        assert_eq!(lengths, vec![12, 11, 10, 9, 8]);
    }

    #[test]
    fn short_dialogues_truncate_at_the_start() {
        let examples = build_dynamic_examples(&dialogue(3), &UnrollConfig { k: 5 }).unwrap();
        assert_eq!(examples.len(), 3);
        let lengths: Vec<usize> = examples.iter().map(|e| e.input.lines().count()).collect();
        assert_eq!(lengths, vec![3, 2, 1]);
    }

    #[test]
    fn each_prefix_is_a_byte_prefix_of_the_next_longer_one() {
        let examples = build_dynamic_examples(&dialogue(9), &UnrollConfig { k: 6 }).unwrap();
        for pair in examples.windows(2) {
            let longer = &pair[0].input;
            let shorter = &pair[1].input;
            assert!(longer.starts_with(shorter), "{shorter:?} is not a prefix of {longer:?}");
        }
    }

    #[test]
    fn zero_k_rejected() {
        assert!(build_dynamic_examples(&dialogue(3), &UnrollConfig { k: 0 }).is_err());
    }

    #[test]
    fn examples_serialize_to_jsonl_shape() {
        let example = build_static_example(&dialogue(2)).unwrap();
        let line = serde_json::to_string(&example).unwrap();
        assert!(line.contains("\"input\""));
        assert!(line.contains("\"labels\""));
    }
}
