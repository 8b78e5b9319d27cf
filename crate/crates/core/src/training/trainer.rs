//! Teacher-forced training loop with gradient accumulation.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::dependency::RelationVocab;
use crate::error::{CoreError, Result};
use crate::model::network::{forward_loss, DropoutCtx};
use crate::model::EncoderInput;
use crate::numerics::Tensor;
use crate::rng::stream_rng;
use crate::training::adam::adam_step;
use crate::training::checkpoint::{save_checkpoint, Checkpoint};
use crate::training::schedule::{lr_at, TrainConfig};

/// One training example: an assembled encoder input and its summary ids
/// (content tokens only, no start/end markers).
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub input: EncoderInput,
    pub summary: Vec<usize>,
}

/// Everything the loop needs besides data and state.
pub struct TrainOptions<'a> {
    pub rel_vocab: Option<&'a RelationVocab>,
    pub bos: usize,
    pub eos: usize,
    pub pad: usize,
    pub checkpoint_dir: Option<&'a Path>,
    /// Updates between periodic saves; 0 saves only the final state.
    pub checkpoint_interval: u64,
}

impl<'a> TrainOptions<'a> {
    pub fn new(bos: usize, eos: usize, pad: usize) -> TrainOptions<'a> {
        TrainOptions {
            rel_vocab: None,
            bos,
            eos,
            pad,
            checkpoint_dir: None,
            checkpoint_interval: 0,
        }
    }
}

/// One optimizer update in the loss trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

impl TraceEntry {
    pub fn line(&self) -> String {
        format!("{}\t{}\t{}", self.step, self.lr, self.loss)
    }
}

/// Appends trace lines to a text file, creating it if needed.
pub fn append_trace(path: &Path, entries: &[TraceEntry]) -> Result<()> {
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    for entry in entries {
        writeln!(file, "{}", entry.line())?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub trace: Vec<TraceEntry>,
}

/// Deterministic epoch plan: shuffle, stable-sort by source length so each
/// batch holds similar lengths, chunk, then shuffle the batch order.
fn epoch_batches(lengths: &[usize], batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(&mut stream_rng(seed, "shuffle", epoch));
    order.sort_by_key(|&i| lengths[i]);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(&mut stream_rng(seed, "batch-order", epoch));
    batches
}

/// Runs optimizer updates from `checkpoint.step + 1` through
/// `config.max_steps`, returning the advanced state and the loss trace.
pub fn train(
    samples: &[TrainSample],
    config: &TrainConfig,
    checkpoint: Checkpoint,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    checkpoint.validate()?;
    if samples.is_empty() {
        return Err(CoreError::Usage("training corpus is empty".to_string()));
    }
    let Checkpoint {
        model,
        mut params,
        mut adam,
        step: start_step,
        seed,
        token_vocab,
        relation_vocab,
    } = checkpoint;

    let lengths: Vec<usize> = samples.iter().map(|s| s.input.len()).collect();
    let batches_per_epoch = lengths.len().div_ceil(config.batch_size) as u64;
    let mut cached_epoch: Option<(u64, Vec<Vec<usize>>)> = None;
    let mut trace = Vec::new();

    for step in start_step + 1..=config.max_steps {
        let mut grad_sums: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut loss_sum = 0.0;
        for micro in 0..config.accumulation as u64 {
            let k = (step - 1) * config.accumulation as u64 + micro;
            let epoch = k / batches_per_epoch;
            if cached_epoch.as_ref().map(|(e, _)| *e) != Some(epoch) {
                cached_epoch = Some((
                    epoch,
                    epoch_batches(&lengths, config.batch_size, seed, epoch),
                ));
            }
            let batch = &cached_epoch.as_ref().unwrap().1[(k % batches_per_epoch) as usize];

            let tape = crate::numerics::Tape::new();
            let bound = params.bind(&tape);
            let mut dropout_rng;
            let mut dropctx = if model.dropout > 0.0 {
                dropout_rng = stream_rng(seed, "dropout", k);
                Some(DropoutCtx {
                    p: model.dropout,
                    rng: &mut dropout_rng,
                })
            } else {
                None
            };
            let mut total: Option<crate::numerics::Var> = None;
            for &index in batch {
                let sample = &samples[index];
                let loss = forward_loss(
                    &model,
                    &bound,
                    &sample.input,
                    &sample.summary,
                    options.rel_vocab,
                    options.bos,
                    options.eos,
                    options.pad,
                    &mut dropctx,
                )
                .map_err(|e| CoreError::Training(format!("step {step}: {e}")))?;
                total = Some(match total {
                    None => loss,
                    Some(acc) => acc
                        .add(&loss)
                        .map_err(|e| CoreError::Training(format!("step {step}: {e}")))?,
                });
            }
            let micro_loss = total
                .expect("batches are never empty")
                .scale(1.0 / batch.len() as f64)
                .map_err(|e| CoreError::Training(format!("step {step}: {e}")))?;
            let value = micro_loss.value().data()[0];
            if !value.is_finite() {
                return Err(CoreError::Training(format!(
                    "non-finite loss at step {step}"
                )));
            }
            loss_sum += value;
            tape.backward(&micro_loss)?;
            for (name, grad) in bound.grads() {
                match grad_sums.get_mut(&name) {
                    Some(sum) => {
                        for (a, b) in sum.data_mut().iter_mut().zip(grad.data()) {
                            *a += b;
                        }
                    }
                    None => {
                        grad_sums.insert(name, grad);
                    }
                }
            }
        }
        for sum in grad_sums.values_mut() {
            sum.scale_in_place(1.0 / config.accumulation as f64);
        }
        let lr = lr_at(step, config);
        adam_step(&mut params, &grad_sums, &mut adam, step, lr, config)?;
        trace.push(TraceEntry {
            step,
            lr,
            loss: loss_sum / config.accumulation as f64,
        });

        if let Some(dir) = options.checkpoint_dir {
            if options.checkpoint_interval > 0 && step % options.checkpoint_interval == 0 {
                let snapshot = Checkpoint {
                    model: model.clone(),
                    params: params.clone(),
                    adam: adam.clone(),
                    step,
                    seed,
                    token_vocab: token_vocab.clone(),
                    relation_vocab: relation_vocab.clone(),
                };
                save_checkpoint(&snapshot, &dir.join(format!("checkpoint-{step:06}.ckpt")))?;
            }
        }
    }

    let final_step = config.max_steps.max(start_step);
    let checkpoint = Checkpoint {
        model,
        params,
        adam,
        step: final_step,
        seed,
        token_vocab,
        relation_vocab,
    };
    if let Some(dir) = options.checkpoint_dir {
        save_checkpoint(&checkpoint, &dir.join("checkpoint-final.ckpt"))?;
    }
    Ok(TrainOutcome { checkpoint, trace })
}
