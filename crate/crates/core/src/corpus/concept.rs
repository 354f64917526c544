//! Concepts and deduplicated concept sets.

use serde::{Deserialize, Serialize};
use std::collections::{btree_map, BTreeMap, BTreeSet};

/// A single extracted concept. `surface` is the canonical (lowercased,
/// punctuation-folded) form; `canonical_id` is present iff the concept came
/// from a lexicon entry (regex-extracted features use a reserved `feature:`
/// namespace).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_id: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub semantic_tags: BTreeSet<String>,
    pub source: String,
}

impl Concept {
    pub fn structured(surface: impl Into<String>, source: impl Into<String>) -> Self {
        Self {
            surface: surface.into(),
            canonical_id: None,
            semantic_tags: BTreeSet::new(),
            source: source.into(),
        }
    }

    /// Key used for set deduplication: the lexicon id when present, the
    /// canonical surface otherwise.
    pub fn dedup_key(&self) -> String {
        match &self.canonical_id {
            Some(id) => format!("id:{id}"),
            None => format!("surface:{}", self.surface),
        }
    }
}

/// A set of concepts deduplicated by [`Concept::dedup_key`]. Iteration order
/// is deterministic (sorted by key).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptSet {
    concepts: BTreeMap<String, Concept>,
}

impl ConceptSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a concept; the first occurrence of a key wins.
    pub fn insert(&mut self, concept: Concept) {
        self.concepts.entry(concept.dedup_key()).or_insert(concept);
    }

    /// Insert only if no concept with the same surface exists yet. Extractors
    /// use this so a value reachable through several routes (structured field
    /// and lexicon hit) yields one concept.
    pub fn insert_unique_surface(&mut self, concept: Concept) {
        if !self.contains_surface(&concept.surface) {
            self.insert(concept);
        }
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn contains_surface(&self, surface: &str) -> bool {
        self.concepts.values().any(|c| c.surface == surface)
    }

    /// Sorted concept surfaces.
    pub fn surfaces(&self) -> Vec<String> {
        let mut out: Vec<String> = self.concepts.values().map(|c| c.surface.clone()).collect();
        out.sort();
        out
    }
}

impl FromIterator<Concept> for ConceptSet {
    fn from_iter<T: IntoIterator<Item = Concept>>(iter: T) -> Self {
        let mut set = Self::new();
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl IntoIterator for ConceptSet {
    type Item = Concept;
    type IntoIter = btree_map::IntoValues<String, Concept>;

    fn into_iter(self) -> Self::IntoIter {
        self.concepts.into_values()
    }
}
