//! Named parameter store and its per-forward binding onto a tape.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::dependency::{DepEncoderParams, RelationWeightStrategy};
use crate::error::{CoreError, Result};
use crate::model::config::{MaskSource, ModelConfig};
use crate::numerics::{Tape, Tensor, Var};
use crate::rng::stream_rng;

/// All trainable tensors, keyed by a stable dotted name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelParams {
    params: BTreeMap<String, Tensor>,
}

fn xavier(shape: [usize; 2], rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
    Tensor::uniform(&shape, bound, rng)
}

impl ModelParams {
    /// Fresh parameters for a config; the draw order is fixed, so equal
    /// seeds give bitwise-equal parameters.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, "init", 0);
        let d = config.d_model;
        let mut params = ModelParams::default();
        params.insert(
            "embed.tokens",
            Tensor::normal(&[config.vocab_size, d], 0.02, &mut rng),
        )?;
        for layer in 0..config.n_layers {
            for proj in ["wq", "wk", "wv", "wo"] {
                params.insert(
                    &format!("enc.{layer}.attn.{proj}"),
                    xavier([d, d], &mut rng),
                )?;
            }
            params.insert(&format!("enc.{layer}.ffn.w1"), xavier([d, config.d_ff], &mut rng))?;
            params.insert(&format!("enc.{layer}.ffn.b1"), Tensor::zeros(&[config.d_ff]))?;
            params.insert(&format!("enc.{layer}.ffn.w2"), xavier([config.d_ff, d], &mut rng))?;
            params.insert(&format!("enc.{layer}.ffn.b2"), Tensor::zeros(&[d]))?;
            for norm in ["norm1", "norm2"] {
                params.insert(&format!("enc.{layer}.{norm}.gain"), Tensor::ones(&[d]))?;
                params.insert(&format!("enc.{layer}.{norm}.bias"), Tensor::zeros(&[d]))?;
            }
        }
        for layer in 0..config.n_layers {
            for block in ["self", "cross"] {
                for proj in ["wq", "wk", "wv", "wo"] {
                    params.insert(
                        &format!("dec.{layer}.{block}.{proj}"),
                        xavier([d, d], &mut rng),
                    )?;
                }
            }
            params.insert(&format!("dec.{layer}.ffn.w1"), xavier([d, config.d_ff], &mut rng))?;
            params.insert(&format!("dec.{layer}.ffn.b1"), Tensor::zeros(&[config.d_ff]))?;
            params.insert(&format!("dec.{layer}.ffn.w2"), xavier([config.d_ff, d], &mut rng))?;
            params.insert(&format!("dec.{layer}.ffn.b2"), Tensor::zeros(&[d]))?;
            for norm in ["norm1", "norm2", "norm3"] {
                params.insert(&format!("dec.{layer}.{norm}.gain"), Tensor::ones(&[d]))?;
                params.insert(&format!("dec.{layer}.{norm}.bias"), Tensor::zeros(&[d]))?;
            }
        }
        params.insert("out.w", xavier([d, config.vocab_size], &mut rng))?;
        params.insert("out.b", Tensor::zeros(&[config.vocab_size]))?;
        match config.mask_source {
            MaskSource::Strategy(RelationWeightStrategy::LearnedOneHot) => {
                let dep = DepEncoderParams::init(
                    config.relations,
                    config.dep_hidden,
                    config.dep_slope,
                    // Deterministic function of the model seed, separate stream.
                    seed.wrapping_add(1),
                )?;
                params.insert("dep.w1", dep.w1)?;
                params.insert("dep.b1", dep.b1)?;
                params.insert("dep.w2", dep.w2)?;
                params.insert("dep.b2", dep.b2)?;
            }
            MaskSource::Strategy(RelationWeightStrategy::LearnedOneLayer) => {
                let bound = (6.0 / (config.relations + 1) as f64).sqrt();
                params.insert(
                    "dep.w",
                    Tensor::uniform(&[config.relations, 1], bound, &mut rng),
                )?;
                params.insert("dep.b", Tensor::zeros(&[1]))?;
            }
            _ => {}
        }
        Ok(params)
    }

    /// Wraps an already-assembled name-to-tensor map, e.g. one read back
    /// from a checkpoint.
    pub fn from_named(params: BTreeMap<String, Tensor>) -> Result<Self> {
        if params.is_empty() {
            return Err(CoreError::structure("parameter store cannot be empty"));
        }
        Ok(ModelParams { params })
    }

    /// Checks that the store holds exactly the parameter names and shapes
    /// that `config` prescribes.
    pub fn validate_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = ModelParams::init(config, 0)?;
        for (name, tensor) in expected.iter() {
            let got = self.params.get(name).ok_or_else(|| {
                CoreError::structure(format!("missing parameter {name} for this configuration"))
            })?;
            if got.shape() != tensor.shape() {
                return Err(CoreError::structure(format!(
                    "parameter {name} has shape {:?}, configuration requires {:?}",
                    got.shape(),
                    tensor.shape()
                )));
            }
        }
        if self.params.len() != expected.len() {
            let extra: Vec<&str> = self
                .names()
                .filter(|n| expected.get(n).is_err())
                .collect();
            return Err(CoreError::structure(format!(
                "unexpected parameters {extra:?} for this configuration"
            )));
        }
        Ok(())
    }

    fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.params.insert(name.to_string(), tensor).is_some() {
            return Err(CoreError::structure(format!("duplicate parameter {name}")));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| CoreError::Index(format!("unknown parameter {name:?}")))
    }

    /// Replaces a parameter value; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .params
            .get_mut(name)
            .ok_or_else(|| CoreError::Index(format!("unknown parameter {name:?}")))?;
        if slot.shape() != value.shape() {
            return Err(CoreError::ShapeMismatch {
                op: "set parameter",
                lhs: slot.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        *slot = value;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Binds every parameter as a gradient-tracked leaf on the tape.
    pub fn bind(&self, tape: &Tape) -> BoundParams {
        self.bind_with(tape, true)
    }

    /// Inference binding: values on the tape, no gradient bookkeeping.
    pub fn bind_frozen(&self, tape: &Tape) -> BoundParams {
        self.bind_with(tape, false)
    }

    fn bind_with(&self, tape: &Tape, requires_grad: bool) -> BoundParams {
        let map = self
            .params
            .iter()
            .map(|(name, tensor)| (name.clone(), tape.leaf(tensor.clone(), requires_grad)))
            .collect();
        BoundParams { map }
    }
}

/// Tape-bound view of the parameters for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct BoundParams {
    map: BTreeMap<String, Var>,
}

impl BoundParams {
    /// Assembles a binding from explicit vars; test scaffolding for swapping
    /// a single parameter against a gradient-check leaf.
    pub fn from_map(map: BTreeMap<String, Var>) -> Self {
        BoundParams { map }
    }

    pub fn get(&self, name: &str) -> Result<&Var> {
        self.map
            .get(name)
            .ok_or_else(|| CoreError::Index(format!("unknown parameter {name:?}")))
    }

    /// Gradients accumulated on the bound leaves, keyed by parameter name.
    /// Parameters untouched by the loss are absent.
    pub fn grads(&self) -> BTreeMap<String, Tensor> {
        self.map
            .iter()
            .filter_map(|(name, var)| var.grad().map(|g| (name.clone(), g)))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }
}
