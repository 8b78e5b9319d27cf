//! Encoder-decoder wiring: fused encoder, causal decoder, the training
//! loss, the plain reference network, and greedy generation.

use rand_chacha::ChaCha8Rng;

use crate::dependency::{
    encode_pair_fixed, encode_pair_learned, encode_pair_one_layer, RelationVocab,
    RelationWeightStrategy,
};
use crate::encodings::token_positional_matrix;
use crate::error::{CoreError, Result};
use crate::model::attention::{attention_core, multi_head};
use crate::model::config::{MaskSource, ModelConfig};
use crate::model::input::EncoderInput;
use crate::model::params::{BoundParams, ModelParams};
use crate::numerics::{Tape, Var};

/// Layer-norm epsilon used throughout the network.
pub const LN_EPS: f64 = 1e-6;

/// Dropout configuration for one forward pass; absent at inference time.
pub struct DropoutCtx<'a> {
    pub p: f64,
    pub rng: &'a mut ChaCha8Rng,
}

fn drop(x: &Var, ctx: &mut Option<DropoutCtx>) -> Result<Var> {
    match ctx {
        Some(c) if c.p > 0.0 => x.dropout(c.p, c.rng),
        _ => Ok(x.clone()),
    }
}

/// Builds the [h, T, T] relation mask dictated by the config, or `None` when
/// masking is off. Fixed strategies need the relation vocabulary.
pub fn build_encoder_mask(
    config: &ModelConfig,
    bound: &BoundParams,
    input: &EncoderInput,
    rel_vocab: Option<&RelationVocab>,
    tape: &Tape,
) -> Result<Option<Var>> {
    let strategy = match config.mask_source {
        MaskSource::None => return Ok(None),
        MaskSource::Strategy(s) => s,
    };
    let m = match strategy {
        RelationWeightStrategy::LearnedOneHot => encode_pair_learned(
            &input.dep_tensor,
            bound.get("dep.w1")?,
            bound.get("dep.b1")?,
            bound.get("dep.w2")?,
            bound.get("dep.b2")?,
            config.dep_slope,
        )?,
        RelationWeightStrategy::LearnedOneLayer => {
            encode_pair_one_layer(&input.dep_tensor, bound.get("dep.w")?, bound.get("dep.b")?)?
        }
        fixed => {
            let vocab = rel_vocab.ok_or_else(|| {
                CoreError::config(format!(
                    "mask strategy {fixed} needs the relation vocabulary at forward time"
                ))
            })?;
            tape.constant(encode_pair_fixed(&input.dep_tensor, fixed, vocab)?)
        }
    };
    Ok(Some(m.stack_heads(config.heads)?))
}

fn encoder_layer(
    config: &ModelConfig,
    bound: &BoundParams,
    layer: usize,
    x: &Var,
    mask: Option<&Var>,
    dropctx: &mut Option<DropoutCtx>,
) -> Result<Var> {
    let p = |suffix: &str| format!("enc.{layer}.{suffix}");
    let attn = multi_head(
        x,
        x,
        bound.get(&p("attn.wq"))?,
        bound.get(&p("attn.wk"))?,
        bound.get(&p("attn.wv"))?,
        bound.get(&p("attn.wo"))?,
        config.heads,
        mask,
        None,
        false,
    )?;
    let x = x.add(&drop(&attn, dropctx)?)?.layer_norm(
        bound.get(&p("norm1.gain"))?,
        bound.get(&p("norm1.bias"))?,
        LN_EPS,
    )?;
    let ffn = x
        .matmul(bound.get(&p("ffn.w1"))?)?
        .add_row(bound.get(&p("ffn.b1"))?)?
        .relu()?
        .matmul(bound.get(&p("ffn.w2"))?)?
        .add_row(bound.get(&p("ffn.b2"))?)?;
    x.add(&drop(&ffn, dropctx)?)?.layer_norm(
        bound.get(&p("norm2.gain"))?,
        bound.get(&p("norm2.bias"))?,
        LN_EPS,
    )
}

/// Fused encoder: document-aware positions on the embeddings, relation mask
/// in every self-attention layer.
pub fn encoder_forward(
    config: &ModelConfig,
    bound: &BoundParams,
    input: &EncoderInput,
    rel_vocab: Option<&RelationVocab>,
    dropctx: &mut Option<DropoutCtx>,
) -> Result<Var> {
    if input.is_empty() {
        return Err(CoreError::domain("empty encoder input"));
    }
    if input.len() > config.max_src_len {
        return Err(CoreError::domain(format!(
            "encoder input length {} exceeds max_src_len {}",
            input.len(),
            config.max_src_len
        )));
    }
    let embed = bound.get("embed.tokens")?;
    let tape = embed.tape().clone();
    let x = embed.embedding(&input.token_ids)?;
    let pos = tape.constant(input.positional_rows(&config.positional)?);
    let mut x = drop(&x.add(&pos)?, dropctx)?;
    let mask = build_encoder_mask(config, bound, input, rel_vocab, &tape)?;
    for layer in 0..config.n_layers {
        x = encoder_layer(config, bound, layer, &x, mask.as_ref(), dropctx)?;
    }
    Ok(x)
}

fn decoder_layer(
    config: &ModelConfig,
    bound: &BoundParams,
    layer: usize,
    x: &Var,
    memory: &Var,
    dropctx: &mut Option<DropoutCtx>,
) -> Result<Var> {
    let p = |suffix: &str| format!("dec.{layer}.{suffix}");
    let self_attn = multi_head(
        x,
        x,
        bound.get(&p("self.wq"))?,
        bound.get(&p("self.wk"))?,
        bound.get(&p("self.wv"))?,
        bound.get(&p("self.wo"))?,
        config.heads,
        None,
        None,
        true,
    )?;
    let x = x.add(&drop(&self_attn, dropctx)?)?.layer_norm(
        bound.get(&p("norm1.gain"))?,
        bound.get(&p("norm1.bias"))?,
        LN_EPS,
    )?;
    let cross = multi_head(
        &x,
        memory,
        bound.get(&p("cross.wq"))?,
        bound.get(&p("cross.wk"))?,
        bound.get(&p("cross.wv"))?,
        bound.get(&p("cross.wo"))?,
        config.heads,
        None,
        None,
        false,
    )?;
    let x = x.add(&drop(&cross, dropctx)?)?.layer_norm(
        bound.get(&p("norm2.gain"))?,
        bound.get(&p("norm2.bias"))?,
        LN_EPS,
    )?;
    let ffn = x
        .matmul(bound.get(&p("ffn.w1"))?)?
        .add_row(bound.get(&p("ffn.b1"))?)?
        .relu()?
        .matmul(bound.get(&p("ffn.w2"))?)?
        .add_row(bound.get(&p("ffn.b2"))?)?;
    x.add(&drop(&ffn, dropctx)?)?.layer_norm(
        bound.get(&p("norm3.gain"))?,
        bound.get(&p("norm3.bias"))?,
        LN_EPS,
    )
}

/// Causal decoder over a summary prefix; plain token positions only.
pub fn decoder_forward(
    config: &ModelConfig,
    bound: &BoundParams,
    prefix: &[usize],
    memory: &Var,
    dropctx: &mut Option<DropoutCtx>,
) -> Result<Var> {
    if prefix.is_empty() {
        return Err(CoreError::domain("empty decoder prefix"));
    }
    if memory.shape().first().copied().unwrap_or(0) == 0 {
        return Err(CoreError::domain("empty encoder memory"));
    }
    let embed = bound.get("embed.tokens")?;
    let tape = embed.tape().clone();
    let positions: Vec<usize> = (0..prefix.len()).collect();
    let pos = tape.constant(token_positional_matrix(&positions, config.d_model)?);
    let x = embed.embedding(prefix)?;
    let mut x = drop(&x.add(&pos)?, dropctx)?;
    for layer in 0..config.n_layers {
        x = decoder_layer(config, bound, layer, &x, memory, dropctx)?;
    }
    x.matmul(bound.get("out.w")?)?.add_row(bound.get("out.b")?)
}

/// Teacher-forced cross-entropy over one sample: the decoder sees
/// `[bos, summary...]` and must predict `[summary..., eos]`.
#[allow(clippy::too_many_arguments)]
pub fn forward_loss(
    config: &ModelConfig,
    bound: &BoundParams,
    input: &EncoderInput,
    summary: &[usize],
    rel_vocab: Option<&RelationVocab>,
    bos: usize,
    eos: usize,
    pad: usize,
    dropctx: &mut Option<DropoutCtx>,
) -> Result<Var> {
    let memory = encoder_forward(config, bound, input, rel_vocab, dropctx)?;
    let mut prefix = Vec::with_capacity(summary.len() + 1);
    prefix.push(bos);
    prefix.extend_from_slice(summary);
    let mut targets = summary.to_vec();
    targets.push(eos);
    let logits = decoder_forward(config, bound, &prefix, &memory, dropctx)?;
    logits.cross_entropy(&targets, pad)
}

/// Vanilla transformer reference: identical weights and wiring, but no
/// document scalar and no relation mask anywhere. Kept as an independent
/// straight-line implementation for neutrality comparisons.
pub fn forward_reference_plain(
    config: &ModelConfig,
    bound: &BoundParams,
    input: &EncoderInput,
    prefix: &[usize],
    dropctx: &mut Option<DropoutCtx>,
) -> Result<Var> {
    if input.is_empty() {
        return Err(CoreError::domain("empty encoder input"));
    }
    if prefix.is_empty() {
        return Err(CoreError::domain("empty decoder prefix"));
    }
    let embed = bound.get("embed.tokens")?;
    let tape = embed.tape().clone();
    let pos = tape.constant(token_positional_matrix(&input.positions, config.d_model)?);
    let mut x = drop(&embed.embedding(&input.token_ids)?.add(&pos)?, dropctx)?;
    for layer in 0..config.n_layers {
        let p = |suffix: &str| format!("enc.{layer}.{suffix}");
        let q = x.matmul(bound.get(&p("attn.wq"))?)?.split_heads(config.heads)?;
        let k = x.matmul(bound.get(&p("attn.wk"))?)?.split_heads(config.heads)?;
        let v = x.matmul(bound.get(&p("attn.wv"))?)?.split_heads(config.heads)?;
        let attn = attention_core(&q, &k, &v, None, None, false)?
            .merge_heads()?
            .matmul(bound.get(&p("attn.wo"))?)?;
        x = x.add(&drop(&attn, dropctx)?)?.layer_norm(
            bound.get(&p("norm1.gain"))?,
            bound.get(&p("norm1.bias"))?,
            LN_EPS,
        )?;
        let ffn = x
            .matmul(bound.get(&p("ffn.w1"))?)?
            .add_row(bound.get(&p("ffn.b1"))?)?
            .relu()?
            .matmul(bound.get(&p("ffn.w2"))?)?
            .add_row(bound.get(&p("ffn.b2"))?)?;
        x = x.add(&drop(&ffn, dropctx)?)?.layer_norm(
            bound.get(&p("norm2.gain"))?,
            bound.get(&p("norm2.bias"))?,
            LN_EPS,
        )?;
    }
    let memory = x;
    let positions: Vec<usize> = (0..prefix.len()).collect();
    let pos = tape.constant(token_positional_matrix(&positions, config.d_model)?);
    let mut y = drop(&embed.embedding(prefix)?.add(&pos)?, dropctx)?;
    for layer in 0..config.n_layers {
        let p = |suffix: &str| format!("dec.{layer}.{suffix}");
        let q = y.matmul(bound.get(&p("self.wq"))?)?.split_heads(config.heads)?;
        let k = y.matmul(bound.get(&p("self.wk"))?)?.split_heads(config.heads)?;
        let v = y.matmul(bound.get(&p("self.wv"))?)?.split_heads(config.heads)?;
        let self_attn = attention_core(&q, &k, &v, None, None, true)?
            .merge_heads()?
            .matmul(bound.get(&p("self.wo"))?)?;
        y = y.add(&drop(&self_attn, dropctx)?)?.layer_norm(
            bound.get(&p("norm1.gain"))?,
            bound.get(&p("norm1.bias"))?,
            LN_EPS,
        )?;
        let q = y.matmul(bound.get(&p("cross.wq"))?)?.split_heads(config.heads)?;
        let k = memory
            .matmul(bound.get(&p("cross.wk"))?)?
            .split_heads(config.heads)?;
        let v = memory
            .matmul(bound.get(&p("cross.wv"))?)?
            .split_heads(config.heads)?;
        let cross = attention_core(&q, &k, &v, None, None, false)?
            .merge_heads()?
            .matmul(bound.get(&p("cross.wo"))?)?;
        y = y.add(&drop(&cross, dropctx)?)?.layer_norm(
            bound.get(&p("norm2.gain"))?,
            bound.get(&p("norm2.bias"))?,
            LN_EPS,
        )?;
        let ffn = y
            .matmul(bound.get(&p("ffn.w1"))?)?
            .add_row(bound.get(&p("ffn.b1"))?)?
            .relu()?
            .matmul(bound.get(&p("ffn.w2"))?)?
            .add_row(bound.get(&p("ffn.b2"))?)?;
        y = y.add(&drop(&ffn, dropctx)?)?.layer_norm(
            bound.get(&p("norm3.gain"))?,
            bound.get(&p("norm3.bias"))?,
            LN_EPS,
        )?;
    }
    y.matmul(bound.get("out.w")?)?.add_row(bound.get("out.b")?)
}

/// Greedy decoding with an end-token suppressed until `min_len` tokens have
/// been emitted; stops at the end token or `max_len`. Returns content tokens
/// only (no start or end token).
#[allow(clippy::too_many_arguments)]
pub fn generate(
    config: &ModelConfig,
    params: &ModelParams,
    input: &EncoderInput,
    rel_vocab: Option<&RelationVocab>,
    bos: usize,
    eos: usize,
    min_len: usize,
    max_len: usize,
) -> Result<Vec<usize>> {
    if min_len > max_len {
        return Err(CoreError::config(format!(
            "min_len {min_len} exceeds max_len {max_len}"
        )));
    }
    let tape = Tape::new();
    let bound = params.bind_frozen(&tape);
    let memory = encoder_forward(config, &bound, input, rel_vocab, &mut None)?;
    let mut emitted: Vec<usize> = Vec::new();
    loop {
        if emitted.len() >= max_len {
            return Ok(emitted);
        }
        let mut prefix = Vec::with_capacity(emitted.len() + 1);
        prefix.push(bos);
        prefix.extend_from_slice(&emitted);
        let logits = decoder_forward(config, &bound, &prefix, &memory, &mut None)?;
        let values = logits.value();
        let vocab = values.shape()[1];
        let row = &values.data()[(prefix.len() - 1) * vocab..prefix.len() * vocab];
        let suppress_eos = emitted.len() < min_len;
        let mut best: Option<(usize, f64)> = None;
        for (id, &score) in row.iter().enumerate() {
            if suppress_eos && id == eos {
                continue;
            }
            if best.map(|(_, s)| score > s).unwrap_or(true) {
                best = Some((id, score));
            }
        }
        let (choice, _) = best.ok_or_else(|| CoreError::domain("empty vocabulary row"))?;
        if choice == eos {
            return Ok(emitted);
        }
        emitted.push(choice);
    }
}
