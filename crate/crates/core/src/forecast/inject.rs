//! Controlled concept-error injection for validating the concept checker:
//! deletions (missing), insertions of spurious surfaces (hallucinated), and
//! substitutions (one missing plus one hallucinated each), deterministic
//! under a seed.

use super::ForecastError;
use crate::corpus::{Concept, ConceptSet};
use rand::seq::SliceRandom;
use rand::SeedableRng;

/// The corrupted set plus the injected ground-truth diff.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionOutcome {
    pub corrupted: ConceptSet,
    /// Concepts present only in the corrupted set (insertions and
    /// substitution replacements); |injected_fp| == n_fp.
    pub injected_fp: ConceptSet,
    /// Concepts removed from the original set (deletions and substitution
    /// victims); |injected_fn| == n_fn.
    pub injected_fn: ConceptSet,
}

/// Corrupt `concepts` with `n_fn` removals and `n_fp` additions, of which
/// `substitutions` pairs are correlated (a victim replaced by a synthetic
/// alternative). Requires `n_fn <= |concepts|` and
/// `substitutions <= min(n_fp, n_fn)`.
pub fn inject_concept_errors(
    concepts: &ConceptSet,
    n_fp: usize,
    n_fn: usize,
    substitutions: usize,
    seed: u64,
) -> Result<InjectionOutcome, ForecastError> {
    if n_fn > concepts.len() {
        return Err(ForecastError::Precondition(format!(
            "cannot delete {n_fn} concepts from a set of {}",
            concepts.len()
        )));
    }
    if substitutions > n_fp.min(n_fn) {
        return Err(ForecastError::Precondition(format!(
            "substitutions ({substitutions}) must not exceed min(n_fp, n_fn) = {}",
            n_fp.min(n_fn)
        )));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let ordered: Vec<&Concept> = concepts.iter().collect();
    let mut indices: Vec<usize> = (0..ordered.len()).collect();
    indices.shuffle(&mut rng);
    let victim_indices: Vec<usize> = indices.into_iter().take(n_fn).collect();

    let mut injected_fn = ConceptSet::new();
    for &idx in &victim_indices {
        injected_fn.insert(ordered[idx].clone());
    }

    let mut corrupted = ConceptSet::new();
    for (idx, concept) in ordered.iter().enumerate() {
        if !victim_indices.contains(&idx) {
            corrupted.insert((*concept).clone());
        }
    }

    let mut injected_fp = ConceptSet::new();
    let mut synth_counter = 0usize;
    let mut fresh_surface = |prefix: &str, existing: &ConceptSet, extra: &ConceptSet| -> String {
        loop {
            let surface = format!("{prefix} {seed} {synth_counter}");
            synth_counter += 1;
            if !existing.contains_surface(&surface) && !extra.contains_surface(&surface) {
                return surface;
            }
        }
    };

    for _ in 0..substitutions {
        let surface = fresh_surface("substituted concept", concepts, &injected_fp);
        let concept = Concept::structured(surface, "injected:substitution");
        injected_fp.insert(concept.clone());
        corrupted.insert(concept);
    }
    for _ in 0..n_fp.saturating_sub(substitutions) {
        let surface = fresh_surface("spurious concept", concepts, &injected_fp);
        let concept = Concept::structured(surface, "injected:insertion");
        injected_fp.insert(concept.clone());
        corrupted.insert(concept);
    }

    Ok(InjectionOutcome {
        corrupted,
        injected_fp,
        injected_fn,
    })
}
