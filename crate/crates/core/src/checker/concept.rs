//! Concept checker: aligns source and generated concept sets in two stages
//! (exact surface match, then embedding cosine similarity) and reports
//! missing (FN) and hallucinated (FP) concepts.

use crate::corpus::{Concept, ConceptSet};
use crate::embed::{EmbedError, Embedder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Alignment configuration. Pairing is global greedy on the descending
/// similarity list, one-to-one, ties broken lexicographically by
/// (source surface, target surface).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Minimum cosine similarity for a stage-2 semantic pair, in (0, 1].
    pub similarity_threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { similarity_threshold: 0.8 }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), CheckError> {
        if self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0 {
            Ok(())
        } else {
            Err(CheckError::Config(format!(
                "similarity_threshold must be in (0, 1], got {}",
                self.similarity_threshold
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStage {
    Syntactic,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub source: Concept,
    pub target: Concept,
    pub stage: MatchStage,
    pub similarity: f64,
}

/// Alignment result. `matched` plus `missing` partitions the source set;
/// `matched` plus `hallucinated` partitions the target set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConceptReport {
    pub matched: Vec<MatchedPair>,
    pub missing: ConceptSet,
    pub hallucinated: ConceptSet,
}

impl ConceptReport {
    pub fn is_pass(&self) -> bool {
        self.missing.is_empty() && self.hallucinated.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("invalid match config: {0}")]
    Config(String),
    #[error("embedding capability failed: {0}")]
    Embedding(#[source] EmbedError),
    #[error("embedding contract violation: {0}")]
    Contract(String),
}

/// Align `src` against `tgt`. Stage 1 pairs exact canonical-surface matches;
/// stage 2 embeds every remaining surface in one batch and greedily pairs
/// descending-similarity one-to-one pairs at or above the threshold.
pub fn match_concepts(
    src: &ConceptSet,
    tgt: &ConceptSet,
    embedder: &dyn Embedder,
    cfg: &MatchConfig,
) -> Result<ConceptReport, CheckError> {
    cfg.validate()?;

    let mut report = ConceptReport::default();
    let mut tgt_remaining: Vec<Concept> = tgt.iter().cloned().collect();
    let mut src_remaining: Vec<Concept> = Vec::new();

    // Stage 1: exact surface matches, first available target wins.
    for source in src.iter() {
        match tgt_remaining.iter().position(|t| t.surface == source.surface) {
            Some(pos) => {
                let target = tgt_remaining.remove(pos);
                report.matched.push(MatchedPair {
                    source: source.clone(),
                    target,
                    stage: MatchStage::Syntactic,
                    similarity: 1.0,
                });
            }
            None => src_remaining.push(source.clone()),
        }
    }

    // Stage 2: semantic pairing over whatever both sides still hold.
    if !src_remaining.is_empty() && !tgt_remaining.is_empty() {
        let texts: Vec<String> = src_remaining
            .iter()
            .map(|c| c.surface.clone())
            .chain(tgt_remaining.iter().map(|c| c.surface.clone()))
            .collect();
        let vectors = embedder.embed(&texts).map_err(CheckError::Embedding)?;
        if vectors.len() != texts.len() {
            return Err(CheckError::Contract(format!(
                "embedder returned {} vectors for {} texts",
                vectors.len(),
                texts.len()
            )));
        }
        let dim = vectors.first().map(Vec::len).unwrap_or(0);
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(CheckError::Contract(
                "embedder returned vectors of differing dimensions".into(),
            ));
        }
        let vectors: Vec<Vec<f64>> = vectors.into_iter().map(renormalize).collect();
        let (src_vecs, tgt_vecs) = vectors.split_at(src_remaining.len());

        let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
        for (i, sv) in src_vecs.iter().enumerate() {
            for (j, tv) in tgt_vecs.iter().enumerate() {
                let sim = dot(sv, tv);
                if sim >= cfg.similarity_threshold {
                    candidates.push((i, j, sim));
                }
            }
        }
        candidates.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| src_remaining[a.0].surface.cmp(&src_remaining[b.0].surface))
                .then_with(|| tgt_remaining[a.1].surface.cmp(&tgt_remaining[b.1].surface))
        });

        let mut src_used = vec![false; src_remaining.len()];
        let mut tgt_used = vec![false; tgt_remaining.len()];
        for (i, j, sim) in candidates {
            if src_used[i] || tgt_used[j] {
                continue;
            }
            src_used[i] = true;
            tgt_used[j] = true;
            report.matched.push(MatchedPair {
                source: src_remaining[i].clone(),
                target: tgt_remaining[j].clone(),
                stage: MatchStage::Semantic,
                similarity: sim,
            });
        }

        for (i, concept) in src_remaining.iter().enumerate() {
            if !src_used[i] {
                report.missing.insert(concept.clone());
            }
        }
        for (j, concept) in tgt_remaining.iter().enumerate() {
            if !tgt_used[j] {
                report.hallucinated.insert(concept.clone());
            }
        }
    } else {
        for concept in src_remaining {
            report.missing.insert(concept);
        }
        for concept in tgt_remaining {
            report.hallucinated.insert(concept);
        }
    }

    Ok(report)
}

fn renormalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Concept-level precision and recall. Empty denominators yield 1.0.
pub fn factuality_pr(report: &ConceptReport) -> (f64, f64) {
    let matched = report.matched.len() as f64;
    let fp = report.hallucinated.len() as f64;
    let fn_ = report.missing.len() as f64;
    let precision = if matched + fp == 0.0 { 1.0 } else { matched / (matched + fp) };
    let recall = if matched + fn_ == 0.0 { 1.0 } else { matched / (matched + fn_) };
    (precision, recall)
}

/// Deterministic enumerated critique suitable for prompt injection: missing
/// concepts first, then hallucinated ones, both sorted by surface.
pub fn render_feedback(report: &ConceptReport) -> String {
    if report.is_pass() {
        return "Concept check passed: no missing or hallucinated concepts.".to_string();
    }
    let mut out = String::from("Concept check failed.\n");
    if !report.missing.is_empty() {
        out.push_str("Missing concepts (present in the source record but absent from the output):\n");
        for (i, surface) in report.missing.surfaces().iter().enumerate() {
            out.push_str(&format!("  {}. {}\n", i + 1, surface));
        }
    }
    if !report.hallucinated.is_empty() {
        out.push_str("Hallucinated concepts (present in the output but not supported by the source record):\n");
        for (i, surface) in report.hallucinated.surfaces().iter().enumerate() {
            out.push_str(&format!("  {}. {}\n", i + 1, surface));
        }
    }
    out.trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{FailingEmbedder, HashEmbedder, IdentityEmbedder, TableEmbedder};

    fn set(surfaces: &[&str]) -> ConceptSet {
        surfaces
            .iter()
            .map(|s| Concept::structured(*s, "test"))
            .collect()
    }

    #[test]
    fn exact_match_needs_no_embedding() {
        let report = match_concepts(
            &set(&["chest pain"]),
            &set(&["chest pain"]),
            &FailingEmbedder,
            &MatchConfig::default(),
        )
        .unwrap();
        assert_eq!(report.matched.len(), 1);
        assert_eq!(report.matched[0].stage, MatchStage::Syntactic);
        assert!(report.is_pass());
    }

    #[test]
    fn semantic_match_at_threshold() {
        // cos(ekg, ecg) = 0.9 >= 0.8
        let embedder = TableEmbedder::new([
            ("ekg", vec![1.0, 0.0]),
            ("ecg", vec![0.9, (1.0f64 - 0.81).sqrt()]),
        ]);
        let report = match_concepts(
            &set(&["ekg"]),
            &set(&["ecg"]),
            &embedder,
            &MatchConfig::default(),
        )
        .unwrap();
        assert_eq!(report.matched.len(), 1);
        assert_eq!(report.matched[0].stage, MatchStage::Semantic);
        assert!(report.matched[0].similarity >= 0.8);
    }

    #[test]
    fn unmatched_source_concept_is_missing() {
        let report = match_concepts(
            &set(&["aspirin", "nausea"]),
            &set(&["nausea"]),
            &IdentityEmbedder,
            &MatchConfig::default(),
        )
        .unwrap();
        assert_eq!(report.missing.surfaces(), vec!["aspirin"]);
        assert!(report.hallucinated.is_empty());
    }

    #[test]
    fn partition_invariant_holds() {
        let src = set(&["a", "b", "c", "d"]);
        let tgt = set(&["b", "c", "x"]);
        let report =
            match_concepts(&src, &tgt, &HashEmbedder::default(), &MatchConfig::default()).unwrap();
        assert_eq!(src.len(), report.matched.len() + report.missing.len());
        assert_eq!(tgt.len(), report.matched.len() + report.hallucinated.len());
    }

    #[test]
    fn threshold_one_with_orthogonal_embedder_reduces_to_exact() {
        let cfg = MatchConfig { similarity_threshold: 1.0 };
        let report = match_concepts(
            &set(&["ekg", "nausea"]),
            &set(&["ecg", "nausea"]),
            &IdentityEmbedder,
            &cfg,
        )
        .unwrap();
        assert_eq!(report.matched.len(), 1);
        assert_eq!(report.matched[0].stage, MatchStage::Syntactic);
        assert_eq!(report.missing.surfaces(), vec!["ekg"]);
        assert_eq!(report.hallucinated.surfaces(), vec!["ecg"]);
    }

    #[test]
    fn swapping_sides_swaps_fn_and_fp() {
        let a = set(&["one", "two", "three"]);
        let b = set(&["two"]);
        let cfg = MatchConfig::default();
        let ab = match_concepts(&a, &b, &IdentityEmbedder, &cfg).unwrap();
        let ba = match_concepts(&b, &a, &IdentityEmbedder, &cfg).unwrap();
        assert_eq!(ab.missing.len(), ba.hallucinated.len());
        assert_eq!(ab.hallucinated.len(), ba.missing.len());
    }

    #[test]
    fn pair_similarities_never_below_threshold() {
        let src = set(&["alpha", "beta", "gamma", "delta"]);
        let tgt = set(&["alfa", "betta", "gama", "delta"]);
        let report =
            match_concepts(&src, &tgt, &HashEmbedder { dim: 8 }, &MatchConfig::default()).unwrap();
        for pair in &report.matched {
            assert!(pair.similarity >= 0.8 - 1e-12);
        }
    }

    #[test]
    fn embedding_failure_surfaces_as_check_error() {
        let err = match_concepts(
            &set(&["a"]),
            &set(&["b"]),
            &FailingEmbedder,
            &MatchConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CheckError::Embedding(_)));
    }

    #[test]
    fn dimension_mismatch_is_a_contract_error() {
        let embedder = TableEmbedder::new([("a", vec![1.0, 0.0]), ("b", vec![1.0])]);
        let err = match_concepts(
            &set(&["a"]),
            &set(&["b"]),
            &embedder,
            &MatchConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CheckError::Contract(_)));
    }

    #[test]
    fn pr_matches_definitions() {
        // matched 3, FP 1, FN 2 -> (0.75, 0.60)
        let report = ConceptReport {
            matched: (0..3)
                .map(|i| MatchedPair {
                    source: Concept::structured(format!("s{i}"), "t"),
                    target: Concept::structured(format!("s{i}"), "t"),
                    stage: MatchStage::Syntactic,
                    similarity: 1.0,
                })
                .collect(),
            missing: set(&["m1", "m2"]),
            hallucinated: set(&["h1"]),
        };
        let (p, r) = factuality_pr(&report);
        assert!((p - 0.75).abs() < 1e-12);
        assert!((r - 0.60).abs() < 1e-12);
    }

    #[test]
    fn pr_empty_denominators_are_one() {
        let report = ConceptReport {
            matched: vec![MatchedPair {
                source: Concept::structured("x", "t"),
                target: Concept::structured("x", "t"),
                stage: MatchStage::Syntactic,
                similarity: 1.0,
            }],
            ..Default::default()
        };
        assert_eq!(factuality_pr(&report), (1.0, 1.0));
        assert_eq!(factuality_pr(&ConceptReport::default()), (1.0, 1.0));
    }

    #[test]
    fn pr_agrees_with_recount_oracle_on_random_reports() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = rng.random_range(0..6usize);
            let fp = rng.random_range(0..6usize);
            let fn_ = rng.random_range(0..6usize);
            let report = ConceptReport {
                matched: (0..m)
                    .map(|i| MatchedPair {
                        source: Concept::structured(format!("s{i}"), "t"),
                        target: Concept::structured(format!("s{i}"), "t"),
                        stage: MatchStage::Syntactic,
                        similarity: 1.0,
                    })
                    .collect(),
                missing: (0..fn_).map(|i| Concept::structured(format!("m{i}"), "t")).collect(),
                hallucinated: (0..fp).map(|i| Concept::structured(format!("h{i}"), "t")).collect(),
            };
            let (p, r) = factuality_pr(&report);
            let oracle_p = if m + fp == 0 { 1.0 } else { m as f64 / (m + fp) as f64 };
            let oracle_r = if m + fn_ == 0 { 1.0 } else { m as f64 / (m + fn_) as f64 };
            assert_eq!(p, oracle_p);
            assert_eq!(r, oracle_r);
        }
    }

    #[test]
    fn feedback_lists_missing_then_hallucinated() {
        let report = ConceptReport {
            matched: vec![],
            missing: set(&["aspirin"]),
            hallucinated: set(&["morphine"]),
        };
        let text = render_feedback(&report);
        let missing_at = text.find("Missing concepts").unwrap();
        let halluc_at = text.find("Hallucinated concepts").unwrap();
        assert!(missing_at < halluc_at);
        assert!(text.contains("1. aspirin"));
        assert!(text.contains("1. morphine"));
    }

    #[test]
    fn empty_report_renders_pass_message() {
        let text = render_feedback(&ConceptReport::default());
        assert!(text.contains("passed"));
        assert!(!text.contains("Missing"));
    }

    #[test]
    fn feedback_is_stable_across_runs() {
        let report = ConceptReport {
            matched: vec![],
            missing: set(&["zeta", "alpha", "mid"]),
            hallucinated: set(&["b", "a"]),
        };
        let a = render_feedback(&report);
        let b = render_feedback(&report);
        assert_eq!(a, b);
        assert!(a.find("alpha").unwrap() < a.find("mid").unwrap());
        assert!(a.find("mid").unwrap() < a.find("zeta").unwrap());
    }

    #[test]
    fn invalid_threshold_rejected() {
        let cfg = MatchConfig { similarity_threshold: 0.0 };
        assert!(match_concepts(&set(&["a"]), &set(&["a"]), &IdentityEmbedder, &cfg).is_err());
        let cfg = MatchConfig { similarity_threshold: 1.5 };
        assert!(match_concepts(&set(&["a"]), &set(&["a"]), &IdentityEmbedder, &cfg).is_err());
    }
}
