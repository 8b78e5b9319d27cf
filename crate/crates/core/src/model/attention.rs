//! Scaled dot-product attention with optional relation-mask fusion.

use crate::error::{CoreError, Result};
use crate::numerics::{Tensor, Var};

/// Additive pre-softmax constant for blocked positions. Finite on purpose:
/// it underflows to exactly 0 after the softmax's max-subtraction, while
/// keeping every intermediate tensor finite.
pub const BLOCK: f64 = -1e30;

/// The fusion rule: element-wise product of mask and attention, added back
/// onto the attention. No renormalization afterwards.
pub fn fuse_mask(attention: &Var, mask: &Var) -> Result<Var> {
    mask.mul(attention)?.add(attention)
}

/// Pre-softmax additive bias encoding causal and key-padding constraints;
/// `None` when nothing is blocked.
fn score_bias(
    q_len: usize,
    k_len: usize,
    key_pad: Option<&[bool]>,
    causal: bool,
) -> Result<Option<Tensor>> {
    if let Some(pad) = key_pad {
        if pad.len() != k_len {
            return Err(CoreError::ShapeMismatch {
                op: "attention key padding",
                lhs: vec![k_len],
                rhs: vec![pad.len()],
            });
        }
    }
    let any_pad = key_pad.map(|p| p.iter().any(|&b| b)).unwrap_or(false);
    if !causal && !any_pad {
        return Ok(None);
    }
    let mut data = vec![0.0; q_len * k_len];
    for i in 0..q_len {
        for j in 0..k_len {
            let blocked = (causal && j > i)
                || key_pad.map(|p| p[j]).unwrap_or(false);
            if blocked {
                data[i * k_len + j] = BLOCK;
            }
        }
    }
    Ok(Some(Tensor::from_vec(vec![q_len, k_len], data)?))
}

/// Shared scaled-dot-product core over [h, T, d_k] projections.
///
/// `mask` is the optional fused relation mask [h, T_q, T_k]; when absent the
/// fusion step is skipped entirely and this is vanilla attention.
pub fn attention_core(
    q: &Var,
    k: &Var,
    v: &Var,
    mask: Option<&Var>,
    key_pad: Option<&[bool]>,
    causal: bool,
) -> Result<Var> {
    let (qs, ks, vs) = (q.shape(), k.shape(), v.shape());
    if qs.len() != 3 || ks.len() != 3 || vs.len() != 3 || qs[0] != ks[0] || ks != vs
        || qs[2] != ks[2]
    {
        return Err(CoreError::ShapeMismatch {
            op: "attention",
            lhs: qs,
            rhs: ks,
        });
    }
    let heads = qs[0];
    let d_k = qs[2];
    let scores = q
        .matmul(&k.transpose_last()?)?
        .scale(1.0 / (d_k as f64).sqrt())?;
    let scores = match score_bias(qs[1], ks[1], key_pad, causal)? {
        Some(bias) => {
            let bias = q.tape().constant(bias).stack_heads(heads)?;
            scores.add(&bias)?
        }
        None => scores,
    };
    let attention = scores.softmax_rows()?;
    let fused = match mask {
        Some(m) => {
            if m.shape() != [heads, qs[1], ks[1]] {
                return Err(CoreError::ShapeMismatch {
                    op: "attention mask",
                    lhs: m.shape(),
                    rhs: vec![heads, qs[1], ks[1]],
                });
            }
            fuse_mask(&attention, m)?
        }
        None => attention,
    };
    fused.matmul(v)
}

/// Relation-fused multi-head attention over per-head projections.
pub fn fused_attention(
    q: &Var,
    k: &Var,
    v: &Var,
    mask: &Var,
    key_pad: Option<&[bool]>,
) -> Result<Var> {
    attention_core(q, k, v, Some(mask), key_pad, false)
}

/// Full multi-head block: project, attend, merge, project out.
#[allow(clippy::too_many_arguments)]
pub fn multi_head(
    x: &Var,
    memory: &Var,
    wq: &Var,
    wk: &Var,
    wv: &Var,
    wo: &Var,
    heads: usize,
    mask: Option<&Var>,
    key_pad: Option<&[bool]>,
    causal: bool,
) -> Result<Var> {
    let q = x.matmul(wq)?.split_heads(heads)?;
    let k = memory.matmul(wk)?.split_heads(heads)?;
    let v = memory.matmul(wv)?.split_heads(heads)?;
    let attended = attention_core(&q, &k, &v, mask, key_pad, causal)?;
    attended.merge_heads()?.matmul(wo)
}

#[cfg(test)]
trait ToVecTensor {
    fn to_vec_tensor(&self, shape: &[usize]) -> Tensor;
}

#[cfg(test)]
impl ToVecTensor for [f64] {
    fn to_vec_tensor(&self, shape: &[usize]) -> Tensor {
        Tensor::from_vec(shape.to_vec(), self.to_vec()).unwrap()
    }
}
