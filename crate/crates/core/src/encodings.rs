//! Token-level and document-level positional encodings.
//!
//! Tokens get the standard sinusoid. Documents get a scalar from a chosen
//! encoding function, broadcast over the embedding dimension and mixed in
//! with a trade-off weight alpha. A validator checks candidate document
//! functions against the three admission rules (uniqueness, boundedness,
//! moderate magnitude) before they are used.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numerics::Tensor;
use crate::rng::stream_rng;

/// Document-level encoding function; maps a 1-based document index to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DocEncodingFunction {
    Sin,
    Cos,
    /// Odd k uses sin(k), even k uses cos(k).
    IterSinCos,
    /// As IterSinCos but with argument 0.1k.
    IterSinCosScaled,
    /// c * k; deliberately violates the protocol for c >= 1.
    Linear(f64),
    /// Constant 1.0; deliberately violates uniqueness.
    SameEncoding,
    /// Seeded uniform draw in [0, 1), deterministic per k.
    Random(u64),
}

impl DocEncodingFunction {
    /// Evaluates the function at document index `k` (1-based).
    pub fn evaluate(&self, k: usize) -> Result<f64> {
        if k < 1 {
            return Err(CoreError::domain(
                "document index is 1-based; got 0".to_string(),
            ));
        }
        let kf = k as f64;
        Ok(match *self {
            DocEncodingFunction::Sin => kf.sin(),
            DocEncodingFunction::Cos => kf.cos(),
            DocEncodingFunction::IterSinCos => {
                if k % 2 == 1 {
                    kf.sin()
                } else {
                    kf.cos()
                }
            }
            DocEncodingFunction::IterSinCosScaled => {
                if k % 2 == 1 {
                    (0.1 * kf).sin()
                } else {
                    (0.1 * kf).cos()
                }
            }
            DocEncodingFunction::Linear(c) => c * kf,
            DocEncodingFunction::SameEncoding => 1.0,
            DocEncodingFunction::Random(seed) => {
                stream_rng(seed, "doc-encoding", k as u64).gen::<f64>()
            }
        })
    }
}

impl fmt::Display for DocEncodingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DocEncodingFunction::Sin => write!(f, "sin"),
            DocEncodingFunction::Cos => write!(f, "cos"),
            DocEncodingFunction::IterSinCos => write!(f, "iter-sin-cos"),
            DocEncodingFunction::IterSinCosScaled => write!(f, "iter-sin-cos-scaled"),
            DocEncodingFunction::Linear(c) => write!(f, "linear:{c}"),
            DocEncodingFunction::SameEncoding => write!(f, "same"),
            DocEncodingFunction::Random(seed) => write!(f, "random:{seed}"),
        }
    }
}

impl FromStr for DocEncodingFunction {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sin" => return Ok(DocEncodingFunction::Sin),
            "cos" => return Ok(DocEncodingFunction::Cos),
            "iter-sin-cos" => return Ok(DocEncodingFunction::IterSinCos),
            "iter-sin-cos-scaled" => return Ok(DocEncodingFunction::IterSinCosScaled),
            "same" => return Ok(DocEncodingFunction::SameEncoding),
            "random" => return Ok(DocEncodingFunction::Random(0)),
            _ => {}
        }
        if let Some(c) = s.strip_prefix("linear:") {
            let c: f64 = c
                .parse()
                .map_err(|_| CoreError::config(format!("bad linear coefficient in {s:?}")))?;
            if !c.is_finite() {
                return Err(CoreError::config(format!("non-finite coefficient in {s:?}")));
            }
            return Ok(DocEncodingFunction::Linear(c));
        }
        if let Some(seed) = s.strip_prefix("random:") {
            let seed: u64 = seed
                .parse()
                .map_err(|_| CoreError::config(format!("bad random seed in {s:?}")))?;
            return Ok(DocEncodingFunction::Random(seed));
        }
        Err(CoreError::config(format!(
            "unknown document encoding {s:?}; expected sin, cos, iter-sin-cos, \
             iter-sin-cos-scaled, same, linear:<c>, or random[:<seed>]"
        )))
    }
}

impl TryFrom<String> for DocEncodingFunction {
    type Error = CoreError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DocEncodingFunction> for String {
    fn from(f: DocEncodingFunction) -> String {
        f.to_string()
    }
}

/// How positional information enters the encoder input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionalPlan {
    pub doc_fn: DocEncodingFunction,
    pub alpha: f64,
    pub d_model: usize,
}

impl PositionalPlan {
    pub fn new(doc_fn: DocEncodingFunction, alpha: f64, d_model: usize) -> Result<Self> {
        let plan = PositionalPlan {
            doc_fn,
            alpha,
            d_model,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(CoreError::config(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if self.d_model < 2 || !self.d_model.is_multiple_of(2) {
            return Err(CoreError::config(format!(
                "d_model must be even and >= 2, got {}",
                self.d_model
            )));
        }
        Ok(())
    }
}

/// Which protocol rule a candidate function broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolRule {
    Uniqueness,
    Bounded,
    Magnitude,
}

impl fmt::Display for ProtocolRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolRule::Uniqueness => write!(f, "uniqueness"),
            ProtocolRule::Bounded => write!(f, "bounded"),
            ProtocolRule::Magnitude => write!(f, "magnitude"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolViolation {
    pub rule: ProtocolRule,
    pub detail: String,
}

/// Validator outcome; `pass` holds exactly when `violations` is empty.
#[derive(Debug, Clone)]
pub struct ProtocolVerdict {
    pub pass: bool,
    pub violations: Vec<ProtocolViolation>,
}

impl ProtocolVerdict {
    fn from_violations(violations: Vec<ProtocolViolation>) -> Self {
        ProtocolVerdict {
            pass: violations.is_empty(),
            violations,
        }
    }
}

/// Standard sinusoidal token encoding for a 0-based position.
pub fn token_positional_encoding(pos: usize, d_model: usize) -> Result<Vec<f64>> {
    if !d_model.is_multiple_of(2) || d_model == 0 {
        return Err(CoreError::config(format!(
            "token positional encoding needs even d_model, got {d_model}"
        )));
    }
    let mut out = vec![0.0; d_model];
    for i in 0..d_model / 2 {
        let rate = (pos as f64) / 10000f64.powf(2.0 * i as f64 / d_model as f64);
        out[2 * i] = rate.sin();
        out[2 * i + 1] = rate.cos();
    }
    Ok(out)
}

/// Token encodings for a whole position sequence as a [T, d_model] tensor.
pub fn token_positional_matrix(positions: &[usize], d_model: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(positions.len() * d_model);
    for &pos in positions {
        data.extend_from_slice(&token_positional_encoding(pos, d_model)?);
    }
    Tensor::from_vec(vec![positions.len(), d_model], data)
}

/// Scalar document encoding for a 1-based document index.
pub fn doc_positional_encoding(k: usize, f: &DocEncodingFunction) -> Result<f64> {
    f.evaluate(k)
}

/// Checks a candidate document encoding against the three admission rules
/// over the window k = 1..=q_max.
pub fn validate_protocol(
    f: &DocEncodingFunction,
    q_max: usize,
    token_pe_bound: f64,
) -> Result<ProtocolVerdict> {
    if q_max < 2 {
        return Err(CoreError::config(format!(
            "protocol validation needs q_max >= 2, got {q_max}"
        )));
    }
    if !(token_pe_bound > 0.0 && token_pe_bound.is_finite()) {
        return Err(CoreError::config(format!(
            "token_pe_bound must be positive and finite, got {token_pe_bound}"
        )));
    }
    let values: Vec<f64> = (1..=q_max)
        .map(|k| f.evaluate(k))
        .collect::<Result<_>>()?;
    let mut violations = Vec::new();

    'unique: for i in 0..values.len() {
        for j in i + 1..values.len() {
            if (values[i] - values[j]).abs() < 1e-9 {
                violations.push(ProtocolViolation {
                    rule: ProtocolRule::Uniqueness,
                    detail: format!(
                        "documents {} and {} encode to indistinguishable values {} and {}",
                        i + 1,
                        j + 1,
                        values[i],
                        values[j]
                    ),
                });
                break 'unique;
            }
        }
    }

    let strictly_growing = values.windows(2).all(|w| w[1].abs() > w[0].abs());
    let last = values[values.len() - 1].abs();
    if strictly_growing && last > 10.0 * token_pe_bound {
        violations.push(ProtocolViolation {
            rule: ProtocolRule::Bounded,
            detail: format!(
                "|f| grows monotonically over 1..={q_max} and reaches {last} at k={q_max}, \
                 more than 10x the token bound {token_pe_bound}"
            ),
        });
    }

    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs > 5.0 * token_pe_bound {
        violations.push(ProtocolViolation {
            rule: ProtocolRule::Magnitude,
            detail: format!(
                "max |f(k)| = {max_abs} exceeds 5x the token bound {token_pe_bound}"
            ),
        });
    }

    Ok(ProtocolVerdict::from_violations(violations))
}

/// Mixes the broadcast document scalar into the token encoding.
pub fn fuse_positional(doc_scalar: f64, token_pe: &[f64], alpha: f64) -> Vec<f64> {
    token_pe.iter().map(|&t| alpha * doc_scalar + t).collect()
}

/// Adds the fused positional vector onto a token embedding.
pub fn embed_input(token_embedding: &[f64], fused_pos: &[f64]) -> Result<Vec<f64>> {
    if token_embedding.len() != fused_pos.len() {
        return Err(CoreError::ShapeMismatch {
            op: "embed_input",
            lhs: vec![token_embedding.len()],
            rhs: vec![fused_pos.len()],
        });
    }
    Ok(token_embedding
        .iter()
        .zip(fused_pos.iter())
        .map(|(e, p)| e + p)
        .collect())
}
