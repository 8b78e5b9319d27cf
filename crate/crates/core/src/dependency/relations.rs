//! Pairwise dependency-relation tensor over a concatenated token sequence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dependency::conllu::{DependencyParse, Head};
use crate::dependency::vocab::RelationVocab;
use crate::error::{CoreError, Result};

/// Sparse symmetric map (i, j) -> relation index; absent pairs mean "no
/// grammatical relation" and contribute nothing to the attention mask.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DepRelationTensor {
    seq_len: usize,
    entries: BTreeMap<(usize, usize), usize>,
}

impl DepRelationTensor {
    pub fn empty(seq_len: usize) -> Self {
        DepRelationTensor {
            seq_len,
            entries: BTreeMap::new(),
        }
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<usize> {
        self.entries.get(&(i, j)).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.entries.iter().map(|(&(i, j), &r)| (i, j, r))
    }

    /// Entry list in (i, j, relation) form for the scatter op.
    pub fn entry_list(&self) -> Vec<(usize, usize, usize)> {
        self.entries().collect()
    }

    /// Keeps only entries whose both endpoints fall inside `new_len`.
    pub fn truncated(&self, new_len: usize) -> DepRelationTensor {
        DepRelationTensor {
            seq_len: new_len.min(self.seq_len),
            entries: self
                .entries
                .iter()
                .filter(|((i, j), _)| *i < new_len && *j < new_len)
                .map(|(&k, &v)| (k, v))
                .collect(),
        }
    }

    fn insert(&mut self, i: usize, j: usize, r: usize) -> Result<()> {
        if i >= self.seq_len || j >= self.seq_len {
            return Err(CoreError::structure(format!(
                "relation entry ({i}, {j}) outside sequence length {}",
                self.seq_len
            )));
        }
        if let Some(prev) = self.entries.insert((i, j), r) {
            if prev != r {
                return Err(CoreError::structure(format!(
                    "conflicting relations {prev} and {r} at pair ({i}, {j})"
                )));
            }
        }
        Ok(())
    }
}

/// Builds the relation tensor for a parse whose sentences start at the given
/// global token offsets. Arcs stay within their sentence; the root token gets
/// a diagonal entry carrying its own relation label.
pub fn build_dep_tensor(
    parse: &DependencyParse,
    vocab: &RelationVocab,
    offsets: &[usize],
    seq_len: usize,
) -> Result<DepRelationTensor> {
    if offsets.len() != parse.sentences.len() {
        return Err(CoreError::structure(format!(
            "{} sentence offsets for {} sentences",
            offsets.len(),
            parse.sentences.len()
        )));
    }
    let mut tensor = DepRelationTensor::empty(seq_len);
    for (sentence, &off) in parse.sentences.iter().zip(offsets.iter()) {
        let end = off
            .checked_add(sentence.len())
            .ok_or_else(|| CoreError::structure("sentence offset overflow".to_string()))?;
        if end > seq_len {
            return Err(CoreError::structure(format!(
                "sentence at offset {off} with {} tokens overflows sequence length {seq_len}",
                sentence.len()
            )));
        }
        for (d, (head, rel)) in sentence.heads.iter().zip(sentence.relations.iter()).enumerate() {
            let r = vocab.lookup(rel);
            match head {
                Head::Root => tensor.insert(off + d, off + d, r)?,
                Head::Token(h) => {
                    tensor.insert(off + d, off + h, r)?;
                    tensor.insert(off + h, off + d, r)?;
                }
            }
        }
    }
    Ok(tensor)
}

/// Corpus-level parse statistics for inspection and reconciliation against
/// generator ground truth.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseStatistics {
    /// Relation label -> number of occurrences (root edges included).
    pub relation_counts: BTreeMap<String, usize>,
    /// Non-root arcs per sentence -> number of sentences with that count.
    pub arc_histogram: BTreeMap<usize, usize>,
    pub sentences: usize,
    pub tokens: usize,
    /// Total non-root arcs across the corpus.
    pub arcs: usize,
}

pub fn parse_statistics<'a>(
    parses: impl IntoIterator<Item = &'a DependencyParse>,
) -> ParseStatistics {
    let mut stats = ParseStatistics::default();
    for parse in parses {
        for sentence in &parse.sentences {
            stats.sentences += 1;
            stats.tokens += sentence.len();
            let arcs = sentence.non_root_arcs();
            stats.arcs += arcs;
            *stats.arc_histogram.entry(arcs).or_insert(0) += 1;
            for rel in &sentence.relations {
                *stats.relation_counts.entry(rel.clone()).or_insert(0) += 1;
            }
        }
    }
    stats
}
