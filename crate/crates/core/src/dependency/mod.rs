//! Dependency-parse ingestion and the relation mask pipeline: CoNLL-U text
//! to pairwise relation tensor to per-pair attention weights.

mod conllu;
mod mask;
mod relations;
mod vocab;

pub use conllu::{load_conllu, DependencyParse, Head, ParsedSentence};
pub use mask::{
    encode_pair_fixed, encode_pair_learned, encode_pair_one_layer, DepEncoderParams,
    RelationWeightStrategy, CORE_RELATIONS,
};
pub use relations::{build_dep_tensor, parse_statistics, DepRelationTensor, ParseStatistics};
pub use vocab::{RelationVocab, UNK_RELATION};
