//! End-to-end benchmarks: encoder forward pass and a full optimizer step on
//! a small synthetic batch.

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use mdsum_core::corpus::{encode_sample, synth_corpus, SynthSpec, TokenVocab};
use mdsum_core::dependency::{RelationVocab, RelationWeightStrategy};
use mdsum_core::encodings::{DocEncodingFunction, PositionalPlan};
use mdsum_core::model::{encoder_forward, MaskSource, ModelConfig, ModelParams};
use mdsum_core::training::{train, Checkpoint, TrainConfig, TrainOptions, TrainSample};
use mdsum_core::Tape;

struct Fixture {
    config: ModelConfig,
    samples: Vec<TrainSample>,
    rel_vocab: RelationVocab,
}

fn fixture() -> Fixture {
    let (samples, _) = synth_corpus(&SynthSpec {
        n_samples: 4,
        min_docs: 2,
        max_docs: 3,
        vocab_size: 60,
        seed: 17,
    })
    .unwrap();
    let vocab = TokenVocab::build(&samples, 128).unwrap();
    let parses: Vec<_> = samples
        .iter()
        .flat_map(|s| s.parsed().unwrap().unwrap())
        .collect();
    let rel_vocab = RelationVocab::build(parses.iter(), 8).unwrap();
    let config = ModelConfig {
        d_model: 32,
        heads: 4,
        n_layers: 2,
        d_ff: 64,
        vocab_size: vocab.len(),
        dropout: 0.0,
        positional: PositionalPlan::new(DocEncodingFunction::Sin, 0.1, 32).unwrap(),
        mask_source: MaskSource::Strategy(RelationWeightStrategy::LearnedOneHot),
        relations: rel_vocab.len(),
        dep_hidden: 4,
        dep_slope: 0.01,
        max_src_len: 96,
        truncate_src: true,
    };
    let samples = samples
        .iter()
        .map(|s| encode_sample(s, &vocab, &rel_vocab, 96, true).unwrap())
        .collect();
    Fixture { config, samples, rel_vocab }
}

pub fn encoder(c: &mut Criterion) {
    let fx = fixture();
    let params = ModelParams::init(&fx.config, 17).unwrap();
    let input = &fx.samples[0].input;
    c.bench_function("encoder forward (2 layers, d_model 32)", |bench| {
        bench.iter(|| {
            let tape = Tape::new();
            let bound = params.bind_frozen(&tape);
            let memory =
                encoder_forward(&fx.config, &bound, black_box(input), Some(&fx.rel_vocab), &mut None)
                    .unwrap();
            black_box(memory.value())
        });
    });
}

pub fn train_step(c: &mut Criterion) {
    let fx = fixture();
    let schedule = TrainConfig {
        beta1: 0.9,
        beta2: 0.998,
        eps: 1e-9,
        base_lr: 1e-3,
        warmup_steps: 10,
        decay_milestones: vec![1000],
        decay_factor: 0.5,
        accumulation: 1,
        max_steps: 1,
        seed: 17,
        batch_size: 4,
    };
    let options = TrainOptions {
        rel_vocab: Some(&fx.rel_vocab),
        bos: TokenVocab::BOS,
        eos: TokenVocab::EOS,
        pad: TokenVocab::PAD,
        checkpoint_dir: None,
        checkpoint_interval: 0,
    };
    let start = Checkpoint::fresh(fx.config.clone(), 17).unwrap();
    c.bench_function("train step (batch 4, 2 layers, d_model 32)", |bench| {
        bench.iter_batched(
            || start.clone(),
            |checkpoint| {
                black_box(train(&fx.samples, &schedule, checkpoint, &options).unwrap())
            },
            BatchSize::SmallInput,
        );
    });
}

criterion_group!(benches, encoder, train_step);
criterion_main!(benches);
