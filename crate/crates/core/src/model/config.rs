//! Model hyperparameters and the mask-source switch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dependency::RelationWeightStrategy;
use crate::encodings::PositionalPlan;
use crate::error::{CoreError, Result};

/// Where the encoder attention mask comes from: nowhere (vanilla attention)
/// or one of the relation weight strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MaskSource {
    None,
    Strategy(RelationWeightStrategy),
}

impl MaskSource {
    pub fn is_learned(&self) -> bool {
        matches!(self, MaskSource::Strategy(s) if s.is_learned())
    }
}

impl fmt::Display for MaskSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskSource::None => write!(f, "none"),
            MaskSource::Strategy(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for MaskSource {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(MaskSource::None);
        }
        Ok(MaskSource::Strategy(s.parse()?))
    }
}

impl TryFrom<String> for MaskSource {
    type Error = CoreError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MaskSource> for String {
    fn from(m: MaskSource) -> String {
        m.to_string()
    }
}

/// Encoder-decoder hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    pub positional: PositionalPlan,
    pub mask_source: MaskSource,
    /// Relation vocabulary size; feeds the learned relation scorer.
    pub relations: usize,
    /// Hidden width of the two-layer relation scorer.
    pub dep_hidden: usize,
    /// LeakyReLU slope of the relation scorer.
    pub dep_slope: f64,
    pub max_src_len: usize,
    pub truncate_src: bool,
}

impl ModelConfig {
    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(CoreError::config(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        self.positional.validate()?;
        if self.positional.d_model != self.d_model {
            return Err(CoreError::config(format!(
                "positional plan width {} disagrees with d_model {}",
                self.positional.d_model, self.d_model
            )));
        }
        if self.n_layers == 0 {
            return Err(CoreError::config("n_layers must be >= 1"));
        }
        if self.d_ff == 0 {
            return Err(CoreError::config("d_ff must be >= 1"));
        }
        if self.vocab_size < 5 {
            return Err(CoreError::config(format!(
                "vocab_size {} cannot hold the reserved tokens",
                self.vocab_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.max_src_len == 0 {
            return Err(CoreError::config("max_src_len must be >= 1"));
        }
        if let MaskSource::Strategy(s) = self.mask_source {
            if self.relations < 2 {
                return Err(CoreError::config(format!(
                    "mask strategy {s} needs a relation vocabulary (relations >= 2), got {}",
                    self.relations
                )));
            }
            if s == RelationWeightStrategy::LearnedOneHot && self.dep_hidden == 0 {
                return Err(CoreError::config("dep_hidden must be >= 1"));
            }
            if s.is_learned() && !(0.0 < self.dep_slope && self.dep_slope < 1.0) {
                return Err(CoreError::config(format!(
                    "dep_slope must lie in (0, 1), got {}",
                    self.dep_slope
                )));
            }
        }
        Ok(())
    }
}
