//! Relation-to-weight encodings: the learned two-layer scorer and the fixed
//! arithmetic-sequence tables.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dependency::relations::DepRelationTensor;
use crate::dependency::vocab::RelationVocab;
use crate::error::{CoreError, Result};
use crate::numerics::{Tensor, Var};

/// Core dependents of clausal predicates, in the order the official relation
/// table lists them (subjects, objects, clausal complements).
pub const CORE_RELATIONS: [&str; 8] = [
    "nsubj",
    "nsubjpass",
    "dobj",
    "iobj",
    "csubj",
    "csubjpass",
    "ccomp",
    "xcomp",
];

/// Trainable parameters of the two-layer relation scorer.
#[derive(Debug, Clone)]
pub struct DepEncoderParams {
    /// [N, H] first linear layer over the one-hot relation.
    pub w1: Tensor,
    /// [H] first bias.
    pub b1: Tensor,
    /// [H, 1] second linear layer.
    pub w2: Tensor,
    /// [1] second bias.
    pub b2: Tensor,
    pub slope: f64,
}

impl DepEncoderParams {
    /// Uniform init in +-sqrt(6 / (fan_in + fan_out)) per layer, zero biases.
    pub fn init(relations: usize, hidden: usize, slope: f64, seed: u64) -> Result<Self> {
        if relations == 0 || hidden == 0 {
            return Err(CoreError::config(format!(
                "relation scorer needs relations >= 1 and hidden >= 1, got {relations} and {hidden}"
            )));
        }
        if !(0.0 < slope && slope < 1.0) {
            return Err(CoreError::config(format!(
                "leaky slope must lie in (0, 1), got {slope}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound1 = (6.0 / (relations + hidden) as f64).sqrt();
        let bound2 = (6.0 / (hidden + 1) as f64).sqrt();
        Ok(DepEncoderParams {
            w1: Tensor::uniform(&[relations, hidden], bound1, &mut rng),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::uniform(&[hidden, 1], bound2, &mut rng),
            b2: Tensor::zeros(&[1]),
            slope,
        })
    }

    pub fn relations(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape()[1]
    }
}

/// Per-relation scores for every relation at once. Feeding the full identity
/// through the scorer reduces to reading W1's rows, so the one-hot product
/// never materializes.
fn relation_scores(w1: &Var, b1: &Var, w2: &Var, b2: &Var, slope: f64) -> Result<Var> {
    let n = {
        let shape = w1.shape();
        if shape.len() != 2 {
            return Err(CoreError::structure(format!(
                "relation scorer W1 must be [N, H], got {shape:?}"
            )));
        }
        shape[0]
    };
    let hidden = w1.add_row(b1)?.leaky_relu(slope)?;
    hidden.matmul(w2)?.add_row(b2)?.reshape(&[n])
}

/// Learned mask of the relation tensor: present pairs score through the
/// two-layer scorer, absent pairs stay exactly 0.
pub fn encode_pair_learned(
    tensor: &DepRelationTensor,
    w1: &Var,
    b1: &Var,
    w2: &Var,
    b2: &Var,
    slope: f64,
) -> Result<Var> {
    let scores = relation_scores(w1, b1, w2, b2, slope)?;
    scores.scatter_relation(&tensor.entry_list(), tensor.seq_len())
}

/// One-layer variant: a single linear map from the one-hot relation to its
/// score, i.e. the scorer with the nonlinearity and second layer removed.
pub fn encode_pair_one_layer(tensor: &DepRelationTensor, w: &Var, b: &Var) -> Result<Var> {
    let shape = w.shape();
    if shape.len() != 2 || shape[1] != 1 {
        return Err(CoreError::structure(format!(
            "one-layer scorer weights must be [N, 1], got {shape:?}"
        )));
    }
    let n = shape[0];
    let scores = w.add_row(b)?.reshape(&[n])?;
    scores.scatter_relation(&tensor.entry_list(), tensor.seq_len())
}

/// How relation indices become mask weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RelationWeightStrategy {
    /// Two linear layers around a LeakyReLU, trained with the model.
    LearnedOneHot,
    /// Single trained linear layer.
    LearnedOneLayer,
    /// Fixed weights (N-t)/N by corpus occurrence rank.
    ArithOccurrence,
    /// As occurrence, but the core clausal dependents take the top ranks.
    ArithCore,
    /// As occurrence, but "root" takes the top rank.
    ArithRoot,
}

impl RelationWeightStrategy {
    pub fn is_learned(&self) -> bool {
        matches!(
            self,
            RelationWeightStrategy::LearnedOneHot | RelationWeightStrategy::LearnedOneLayer
        )
    }

    pub const ALL: [RelationWeightStrategy; 5] = [
        RelationWeightStrategy::LearnedOneHot,
        RelationWeightStrategy::LearnedOneLayer,
        RelationWeightStrategy::ArithOccurrence,
        RelationWeightStrategy::ArithCore,
        RelationWeightStrategy::ArithRoot,
    ];

    /// Fixed weight per vocabulary index; only defined for Arith* kinds.
    pub fn weight_table(&self, vocab: &RelationVocab) -> Result<Vec<f64>> {
        if self.is_learned() {
            return Err(CoreError::config(format!(
                "{self} is learned and has no fixed weight table"
            )));
        }
        let n = vocab.len();
        // The vocabulary is already occurrence-ranked, so a rank order is a
        // permutation of vocab indices starting from that base order.
        let order: Vec<usize> = match self {
            RelationWeightStrategy::ArithOccurrence => (0..n).collect(),
            RelationWeightStrategy::ArithCore => {
                let mut order: Vec<usize> = CORE_RELATIONS
                    .iter()
                    .filter(|label| vocab.contains(label))
                    .map(|label| vocab.lookup(label))
                    .collect();
                let rest: Vec<usize> = (0..n).filter(|i| !order.contains(i)).collect();
                order.extend(rest);
                order
            }
            RelationWeightStrategy::ArithRoot => {
                if !vocab.contains("root") {
                    return Err(CoreError::config(
                        "root strategy needs the root relation in the vocabulary".to_string(),
                    ));
                }
                let root = vocab.lookup("root");
                let mut order = vec![root];
                order.extend((0..n).filter(|&i| i != root));
                order
            }
            _ => unreachable!("learned kinds rejected above"),
        };
        let mut table = vec![0.0; n];
        for (rank, &idx) in order.iter().enumerate() {
            table[idx] = (n - rank) as f64 / n as f64;
        }
        Ok(table)
    }
}

impl fmt::Display for RelationWeightStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationWeightStrategy::LearnedOneHot => write!(f, "learned"),
            RelationWeightStrategy::LearnedOneLayer => write!(f, "learned-one-layer"),
            RelationWeightStrategy::ArithOccurrence => write!(f, "arith-occurrence"),
            RelationWeightStrategy::ArithCore => write!(f, "arith-core"),
            RelationWeightStrategy::ArithRoot => write!(f, "arith-root"),
        }
    }
}

impl FromStr for RelationWeightStrategy {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(RelationWeightStrategy::LearnedOneHot),
            "learned-one-layer" => Ok(RelationWeightStrategy::LearnedOneLayer),
            "arith-occurrence" => Ok(RelationWeightStrategy::ArithOccurrence),
            "arith-core" => Ok(RelationWeightStrategy::ArithCore),
            "arith-root" => Ok(RelationWeightStrategy::ArithRoot),
            _ => Err(CoreError::config(format!(
                "unknown relation weight strategy {s:?}; expected learned, learned-one-layer, \
                 arith-occurrence, arith-core, or arith-root"
            ))),
        }
    }
}

impl TryFrom<String> for RelationWeightStrategy {
    type Error = CoreError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RelationWeightStrategy> for String {
    fn from(s: RelationWeightStrategy) -> String {
        s.to_string()
    }
}

/// Fixed mask: table weight for present pairs, 0 for absent pairs.
pub fn encode_pair_fixed(
    tensor: &DepRelationTensor,
    strategy: RelationWeightStrategy,
    vocab: &RelationVocab,
) -> Result<Tensor> {
    let table = strategy.weight_table(vocab)?;
    let t = tensor.seq_len();
    let mut data = vec![0.0; t * t];
    for (i, j, r) in tensor.entries() {
        let w = *table.get(r).ok_or_else(|| {
            CoreError::config(format!(
                "relation index {r} has no entry in the {strategy} weight table of size {}",
                table.len()
            ))
        })?;
        data[i * t + j] = w;
    }
    Tensor::from_vec(vec![t, t], data)
}
