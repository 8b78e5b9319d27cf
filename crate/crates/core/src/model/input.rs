//! Encoder input assembly: document concatenation, per-token positions and
//! document indices, and the aligned dependency tensor.

use crate::dependency::{build_dep_tensor, DependencyParse, DepRelationTensor, RelationVocab};
use crate::encodings::{fuse_positional, token_positional_encoding, PositionalPlan};
use crate::error::{CoreError, Result};
use crate::numerics::Tensor;

/// Flattened multi-document encoder input. Every document contributes a
/// marker token followed by its own tokens; token positions restart at 0 on
/// each marker, and `doc_index` carries the 1-based document number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderInput {
    pub token_ids: Vec<usize>,
    pub positions: Vec<usize>,
    pub doc_index: Vec<usize>,
    pub dep_tensor: DepRelationTensor,
    pub doc_count: usize,
}

impl EncoderInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Per-token positional rows: token sinusoid, with the document scalar
    /// mixed in when alpha is nonzero. Alpha zero takes the plain-sinusoid
    /// path without evaluating the document function at all.
    pub fn positional_rows(&self, plan: &PositionalPlan) -> Result<Tensor> {
        let d = plan.d_model;
        let mut data = Vec::with_capacity(self.len() * d);
        if plan.alpha == 0.0 {
            for &pos in &self.positions {
                data.extend_from_slice(&token_positional_encoding(pos, d)?);
            }
        } else {
            for (&pos, &k) in self.positions.iter().zip(self.doc_index.iter()) {
                let scalar = plan.doc_fn.evaluate(k)?;
                let pe = token_positional_encoding(pos, d)?;
                data.extend_from_slice(&fuse_positional(scalar, &pe, plan.alpha));
            }
        }
        Tensor::from_vec(vec![self.len(), d], data)
    }
}

/// Builds the encoder input for one document cluster.
///
/// `docs[k]` holds the token ids of document k (no marker), `parses[k]` its
/// dependency parse; parse tokens must tile the document exactly. Inputs
/// longer than `max_len` are truncated when `truncate` is set and rejected
/// otherwise.
pub fn build_encoder_input(
    docs: &[Vec<usize>],
    parses: &[DependencyParse],
    rel_vocab: &RelationVocab,
    doc_marker: usize,
    max_len: usize,
    truncate: bool,
) -> Result<EncoderInput> {
    if docs.is_empty() {
        return Err(CoreError::domain("a document cluster needs at least one document"));
    }
    if docs.len() != parses.len() {
        return Err(CoreError::structure(format!(
            "{} documents but {} parses",
            docs.len(),
            parses.len()
        )));
    }
    let mut token_ids = Vec::new();
    let mut positions = Vec::new();
    let mut doc_index = Vec::new();
    let mut all_sentences = DependencyParse::default();
    let mut offsets = Vec::new();
    for (k, (doc, parse)) in docs.iter().zip(parses.iter()).enumerate() {
        if parse.token_count() != doc.len() {
            return Err(CoreError::structure(format!(
                "document {} has {} tokens but its parse covers {}",
                k + 1,
                doc.len(),
                parse.token_count()
            )));
        }
        let doc_start = token_ids.len();
        token_ids.push(doc_marker);
        token_ids.extend_from_slice(doc);
        positions.extend(0..=doc.len());
        doc_index.extend(std::iter::repeat_n(k + 1, doc.len() + 1));
        let mut sentence_start = doc_start + 1;
        for sentence in &parse.sentences {
            offsets.push(sentence_start);
            sentence_start += sentence.len();
            all_sentences.sentences.push(sentence.clone());
        }
    }
    let total = token_ids.len();
    let dep_tensor = build_dep_tensor(&all_sentences, rel_vocab, &offsets, total)?;
    if total > max_len {
        if !truncate {
            return Err(CoreError::domain(format!(
                "input length {total} exceeds the {max_len}-token limit and truncation is off"
            )));
        }
        token_ids.truncate(max_len);
        positions.truncate(max_len);
        doc_index.truncate(max_len);
        return Ok(EncoderInput {
            token_ids,
            positions,
            doc_index,
            dep_tensor: dep_tensor.truncated(max_len),
            doc_count: docs.len(),
        });
    }
    Ok(EncoderInput {
        token_ids,
        positions,
        doc_index,
        dep_tensor,
        doc_count: docs.len(),
    })
}
