//! Relation label vocabulary with a fixed capacity and a reserved UNK slot.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dependency::conllu::DependencyParse;
use crate::error::{CoreError, Result};

pub const UNK_RELATION: &str = "<unk>";

/// Frequency-ranked relation labels; indices are dense and UNK is last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct RelationVocab {
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl RelationVocab {
    /// Ranks labels by corpus frequency (ties lexicographic), keeps the top
    /// `capacity - 1`, and appends the UNK slot.
    pub fn build<'a>(
        parses: impl IntoIterator<Item = &'a DependencyParse>,
        capacity: usize,
    ) -> Result<Self> {
        if capacity < 2 {
            return Err(CoreError::config(format!(
                "relation vocabulary capacity must be >= 2, got {capacity}"
            )));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for parse in parses {
            for sentence in &parse.sentences {
                for rel in &sentence.relations {
                    *counts.entry(rel.as_str()).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut labels: Vec<String> = ranked
            .into_iter()
            .take(capacity - 1)
            .map(|(label, _)| label.to_string())
            .collect();
        labels.push(UNK_RELATION.to_string());
        Self::from_labels(labels)
    }

    /// Rebuilds a vocabulary from its ranked label list (UNK last).
    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        if labels.last().map(String::as_str) != Some(UNK_RELATION) {
            return Err(CoreError::structure(format!(
                "relation vocabulary must end with {UNK_RELATION:?}"
            )));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i).is_some() {
                return Err(CoreError::structure(format!(
                    "duplicate relation label {label:?}"
                )));
            }
        }
        Ok(RelationVocab { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn unk_index(&self) -> usize {
        self.labels.len() - 1
    }

    /// Index for a label; unknown labels land on the UNK slot.
    pub fn lookup(&self, label: &str) -> usize {
        self.index
            .get(label)
            .copied()
            .unwrap_or_else(|| self.unk_index())
    }

    pub fn label_of(&self, index: usize) -> Result<&str> {
        self.labels
            .get(index)
            .map(String::as_str)
            .ok_or_else(|| {
                CoreError::Index(format!(
                    "relation index {index} outside vocabulary of size {}",
                    self.labels.len()
                ))
            })
    }

    /// Whether the exact label (not UNK-mapped) is present.
    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl TryFrom<Vec<String>> for RelationVocab {
    type Error = CoreError;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        RelationVocab::from_labels(labels)
    }
}

impl From<RelationVocab> for Vec<String> {
    fn from(v: RelationVocab) -> Vec<String> {
        v.labels
    }
}
