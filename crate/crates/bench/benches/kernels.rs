//! Microbenchmarks for the numeric kernels the training loop spends its
//! time in: matmul, row softmax, fused attention, and ROUGE scoring.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use mdsum_core::evaluation::score_pair;
use mdsum_core::model::fused_attention;
use mdsum_core::rng::stream_rng;
use mdsum_core::{Tape, Tensor};

fn seeded(shape: &[usize], index: u64) -> Tensor {
    let mut rng = stream_rng(4242, "bench-kernels", index);
    Tensor::uniform(shape, 1.0, &mut rng)
}

pub fn matmul(c: &mut Criterion) {
    let a = seeded(&[64, 64], 0);
    let b = seeded(&[64, 64], 1);
    c.bench_function("matmul 64x64 forward", |bench| {
        bench.iter(|| {
            let tape = Tape::new();
            let x = tape.constant(black_box(a.clone()));
            let y = tape.constant(black_box(b.clone()));
            black_box(x.matmul(&y).unwrap().value())
        });
    });
    c.bench_function("matmul 64x64 forward+backward", |bench| {
        bench.iter(|| {
            let tape = Tape::new();
            let x = tape.leaf(black_box(a.clone()), true);
            let y = tape.leaf(black_box(b.clone()), true);
            let loss = x.matmul(&y).unwrap().sum_all().unwrap();
            tape.backward(&loss).unwrap();
            black_box(x.grad().unwrap())
        });
    });
}

pub fn softmax(c: &mut Criterion) {
    let a = seeded(&[64, 64], 2);
    c.bench_function("softmax_rows 64x64", |bench| {
        bench.iter(|| {
            let tape = Tape::new();
            let x = tape.constant(black_box(a.clone()));
            black_box(x.softmax_rows().unwrap().value())
        });
    });
}

pub fn attention(c: &mut Criterion) {
    // 4 heads over a 32-token window, 16-dim keys: the encoder's hot shape.
    let q = seeded(&[4, 32, 16], 3);
    let k = seeded(&[4, 32, 16], 4);
    let v = seeded(&[4, 32, 16], 5);
    let m = seeded(&[4, 32, 32], 6);
    c.bench_function("fused attention forward", |bench| {
        bench.iter(|| {
            let tape = Tape::new();
            let out = fused_attention(
                &tape.constant(black_box(q.clone())),
                &tape.constant(black_box(k.clone())),
                &tape.constant(black_box(v.clone())),
                &tape.constant(black_box(m.clone())),
                None,
            )
            .unwrap();
            black_box(out.value())
        });
    });
    c.bench_function("fused attention forward+backward", |bench| {
        bench.iter(|| {
            let tape = Tape::new();
            let qv = tape.leaf(black_box(q.clone()), true);
            let kv = tape.leaf(black_box(k.clone()), true);
            let vv = tape.leaf(black_box(v.clone()), true);
            let mv = tape.leaf(black_box(m.clone()), true);
            let out = fused_attention(&qv, &kv, &vv, &mv, None).unwrap();
            let loss = out.sum_all().unwrap();
            tape.backward(&loss).unwrap();
            black_box(qv.grad().unwrap())
        });
    });
}

pub fn rouge(c: &mut Criterion) {
    // Fixed pseudo-texts over a 40-word vocabulary with heavy overlap.
    let words = |stride: usize, len: usize| -> Vec<String> {
        (0..len).map(|i| format!("w{}", (i * stride + 3) % 40)).collect()
    };
    let candidate = words(7, 120);
    let reference = words(11, 120);
    c.bench_function("rouge 1/2/su on 120-token pair", |bench| {
        bench.iter(|| black_box(score_pair(black_box(&candidate), black_box(&reference)).unwrap()));
    });
}

criterion_group!(benches, matmul, softmax, attention, rouge);
criterion_main!(benches);
