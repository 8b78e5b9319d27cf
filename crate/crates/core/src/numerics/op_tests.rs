use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{grad_check, Tape, Tensor};

fn tensor(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
}

fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
    assert_eq!(actual.len(), expected.len());
    for (i, (a, e)) in actual.iter().zip(expected.iter()).enumerate() {
        assert!(
            (a - e).abs() <= tol,
            "coord {i}: got {a}, expected {e} (tol {tol})"
        );
    }
}

#[test]
fn matmul_row_times_column() {
    let tape = Tape::new();
    let a = tape.constant(tensor(&[1, 2], &[1.0, 2.0]));
    let b = tape.constant(tensor(&[2, 1], &[3.0, 4.0]));
    let c = a.matmul(&b).unwrap();
    assert_eq!(c.value().shape(), &[1, 1]);
    assert_eq!(c.value().data(), &[11.0]);
}

#[test]
fn softmax_quarter_three_quarters() {
    let tape = Tape::new();
    let x = tape.constant(tensor(&[2], &[0.0, 3.0_f64.ln()]));
    let y = x.softmax_rows().unwrap();
    assert_close(y.value().data(), &[0.25, 0.75], 1e-12);
}

#[test]
fn softmax_is_shift_stable() {
    let tape = Tape::new();
    let x = tape.constant(tensor(&[2], &[1000.0, 1000.0 + 3.0_f64.ln()]));
    let y = x.softmax_rows().unwrap();
    assert_close(y.value().data(), &[0.25, 0.75], 1e-12);
}

#[test]
fn layer_norm_affine_oracle() {
    let tape = Tape::new();
    let x = tape.constant(tensor(&[1, 2], &[0.0, 2.0]));
    let g = tape.constant(tensor(&[2], &[2.0, 2.0]));
    let b = tape.constant(tensor(&[2], &[1.0, 1.0]));
    let y = x.layer_norm(&g, &b, 1e-12).unwrap();
    assert_close(y.value().data(), &[-1.0, 3.0], 1e-9);
}

#[test]
fn leaky_relu_oracle() {
    let tape = Tape::new();
    let x = tape.constant(tensor(&[2], &[2.0, -2.0]));
    let y = x.leaky_relu(0.01).unwrap();
    assert_close(y.value().data(), &[2.0, -0.02], 1e-15);
}

#[test]
fn leaky_relu_rejects_bad_slope() {
    let tape = Tape::new();
    let x = tape.constant(tensor(&[1], &[1.0]));
    assert!(x.leaky_relu(0.0).is_err());
    assert!(x.leaky_relu(1.0).is_err());
}

#[test]
fn cross_entropy_uniform_two_way() {
    let tape = Tape::new();
    let logits = tape.constant(tensor(&[1, 2], &[0.0, 0.0]));
    let loss = logits.cross_entropy(&[0], usize::MAX).unwrap();
    assert!((loss.item().unwrap() - 2.0_f64.ln()).abs() < 1e-12);
}

#[test]
fn cross_entropy_skips_pad_positions() {
    let tape = Tape::new();
    let logits = tape.constant(tensor(&[2, 3], &[0.0, 0.0, 0.0, 5.0, 0.0, 0.0]));
    let mixed = logits.cross_entropy(&[1, 0], 0).unwrap();
    let alone = tape
        .constant(tensor(&[1, 3], &[0.0, 0.0, 0.0]))
        .cross_entropy(&[1], 0)
        .unwrap();
    assert!((mixed.item().unwrap() - alone.item().unwrap()).abs() < 1e-12);
}

#[test]
fn cross_entropy_rejects_all_pad() {
    let tape = Tape::new();
    let logits = tape.constant(tensor(&[1, 2], &[0.0, 0.0]));
    assert!(logits.cross_entropy(&[0], 0).is_err());
}

#[test]
fn embedding_gathers_rows() {
    let tape = Tape::new();
    let table = tape.constant(tensor(&[3, 2], &[0.0, 1.0, 10.0, 11.0, 20.0, 21.0]));
    let out = table.embedding(&[2, 0, 2]).unwrap();
    assert_eq!(out.value().shape(), &[3, 2]);
    assert_close(out.value().data(), &[20.0, 21.0, 0.0, 1.0, 20.0, 21.0], 0.0);
    assert!(table.embedding(&[3]).is_err());
}

#[test]
fn split_merge_heads_roundtrip() {
    let tape = Tape::new();
    let x = tape.constant(tensor(&[2, 4], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]));
    let split = x.split_heads(2).unwrap();
    assert_eq!(split.value().shape(), &[2, 2, 2]);
    assert_close(
        split.value().data(),
        &[0.0, 1.0, 4.0, 5.0, 2.0, 3.0, 6.0, 7.0],
        0.0,
    );
    let merged = split.merge_heads().unwrap();
    assert_close(merged.value().data(), x.value().data(), 0.0);
}

#[test]
fn stack_heads_repeats_and_sums_back() {
    let tape = Tape::new();
    let m = tape.leaf(tensor(&[2, 2], &[1.0, 2.0, 3.0, 4.0]), true);
    let stacked = m.stack_heads(3).unwrap();
    assert_eq!(stacked.value().shape(), &[3, 2, 2]);
    let loss = stacked.sum_all().unwrap();
    tape.backward(&loss).unwrap();
    assert_close(m.grad().unwrap().data(), &[3.0; 4], 0.0);
}

#[test]
fn scatter_relation_writes_and_rejects_duplicates() {
    let tape = Tape::new();
    let w = tape.constant(tensor(&[2], &[0.5, -0.25]));
    let out = w.scatter_relation(&[(0, 1, 0), (1, 0, 0), (1, 1, 1)], 2).unwrap();
    assert_close(out.value().data(), &[0.0, 0.5, 0.5, -0.25], 0.0);
    assert!(w
        .scatter_relation(&[(0, 0, 0), (0, 0, 1)], 2)
        .is_err());
}

#[test]
fn dropout_zero_rate_is_identity() {
    let tape = Tape::new();
    let x = tape.constant(tensor(&[3], &[1.0, 2.0, 3.0]));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y = x.dropout(0.0, &mut rng).unwrap();
    assert_close(y.value().data(), x.value().data(), 0.0);
}

#[test]
fn dropout_scales_kept_coordinates() {
    let tape = Tape::new();
    let x = tape.constant(tensor(&[1000], &[1.0; 1000]));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y = x.dropout(0.5, &mut rng).unwrap();
    for &v in y.value().data() {
        assert!(v == 0.0 || v == 2.0, "unexpected dropout output {v}");
    }
    let kept = y.value().data().iter().filter(|&&v| v != 0.0).count();
    assert!((400..=600).contains(&kept), "kept {kept} of 1000 at p = 0.5");
}

#[test]
fn grads_add_mul_scale() {
    let x = tensor(&[2, 3], &[0.4, -1.2, 0.7, 2.0, -0.3, 0.9]);
    for f in [
        (|_: &Tape, v: &super::Var| v.add(v)?.sum_all())
            as fn(&Tape, &super::Var) -> crate::error::Result<super::Var>,
        |_, v| v.mul(v)?.sum_all(),
        |_, v| v.scale(-2.5)?.sum_all(),
    ] {
        let report = grad_check(f, &x, 1e-5, 1e-6).unwrap();
        assert!(report.passed(), "rel err {}", report.max_rel_err);
    }
}

#[test]
fn grads_add_row_both_sides() {
    let x = tensor(&[3, 2], &[0.4, -1.2, 0.7, 2.0, -0.3, 0.9]);
    let row = tensor(&[2], &[0.3, -0.8]);
    let report = grad_check(
        |tape, v| {
            let r = tape.constant(row.clone());
            v.add_row(&r)?.mul(v)?.sum_all()
        },
        &x,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "rel err {}", report.max_rel_err);

    let report = grad_check(
        |tape, v| {
            let base = tape.constant(x.clone());
            let y = base.add_row(v)?;
            y.mul(&y)?.sum_all()
        },
        &row,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "rel err {}", report.max_rel_err);
}

#[test]
fn grads_matmul_plain_and_broadcast() {
    let a = tensor(&[2, 3], &[0.4, -1.2, 0.7, 2.0, -0.3, 0.9]);
    let b = tensor(&[3, 2], &[1.0, 0.5, -0.25, 0.75, 0.1, -0.9]);
    let report = grad_check(
        |tape, v| {
            let rhs = tape.constant(b.clone());
            let prod = v.matmul(&rhs)?;
            prod.mul(&prod)?.sum_all()
        },
        &a,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "rel err {}", report.max_rel_err);

    let batched = tensor(
        &[2, 2, 3],
        &[0.4, -1.2, 0.7, 2.0, -0.3, 0.9, 1.1, 0.2, -0.6, 0.05, 0.8, -1.4],
    );
    let report = grad_check(
        |tape, v| {
            let rhs = tape.constant(batched.clone());
            let prod = rhs.matmul(v)?;
            prod.mul(&prod)?.sum_all()
        },
        &b,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "rel err {}", report.max_rel_err);
}

#[test]
fn grads_shape_ops() {
    let x = tensor(&[2, 4], &[0.4, -1.2, 0.7, 2.0, -0.3, 0.9, 1.1, 0.2]);
    for f in [
        (|_: &Tape, v: &super::Var| {
            let t = v.transpose_last()?;
            t.mul(&t)?.sum_all()
        }) as fn(&Tape, &super::Var) -> crate::error::Result<super::Var>,
        |_, v| {
            let r = v.reshape(&[4, 2])?;
            r.mul(&r)?.sum_all()
        },
        |_, v| {
            let s = v.split_heads(2)?;
            let m = s.merge_heads()?;
            let p = s.matmul(&s.transpose_last()?)?;
            p.sum_all()?.add(&m.mul(&m)?.sum_all()?)
        },
    ] {
        let report = grad_check(f, &x, 1e-5, 1e-6).unwrap();
        assert!(report.passed(), "rel err {}", report.max_rel_err);
    }
}

#[test]
fn grads_softmax_layer_norm() {
    let x = tensor(&[2, 3], &[0.4, -1.2, 0.7, 2.0, -0.3, 0.9]);
    let report = grad_check(
        |tape, v| {
            let w = tape.constant(tensor(&[2, 3], &[0.3, -0.9, 0.1, 1.2, 0.4, -0.5]));
            v.softmax_rows()?.mul(&w)?.sum_all()
        },
        &x,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "rel err {}", report.max_rel_err);

    let report = grad_check(
        |tape, v| {
            let g = tape.constant(tensor(&[3], &[1.1, 0.9, -0.4]));
            let b = tape.constant(tensor(&[3], &[0.2, -0.1, 0.05]));
            let w = tape.constant(tensor(&[2, 3], &[0.3, -0.9, 0.1, 1.2, 0.4, -0.5]));
            v.layer_norm(&g, &b, 1e-6)?.mul(&w)?.sum_all()
        },
        &x,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "rel err {}", report.max_rel_err);

    let gain = tensor(&[3], &[1.1, 0.9, -0.4]);
    let report = grad_check(
        |tape, v| {
            let x = tape.constant(tensor(&[2, 3], &[0.4, -1.2, 0.7, 2.0, -0.3, 0.9]));
            let b = tape.constant(tensor(&[3], &[0.2, -0.1, 0.05]));
            let y = x.layer_norm(v, &b, 1e-6)?;
            y.mul(&y)?.sum_all()
        },
        &gain,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "rel err {}", report.max_rel_err);
}

#[test]
fn grads_activations_and_dropout() {
    // Coordinates sit away from zero so central differences never straddle
    // the activation kink.
    let x = tensor(&[2, 3], &[0.4, -1.2, 0.7, 2.0, -0.3, 0.9]);
    for f in [
        (|_: &Tape, v: &super::Var| v.leaky_relu(0.01)?.sum_all())
            as fn(&Tape, &super::Var) -> crate::error::Result<super::Var>,
        |_, v| v.relu()?.mul(v)?.sum_all(),
        |_, v| {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            v.dropout(0.4, &mut rng)?.mul(v)?.sum_all()
        },
    ] {
        let report = grad_check(f, &x, 1e-5, 1e-6).unwrap();
        assert!(report.passed(), "rel err {}", report.max_rel_err);
    }
}

#[test]
fn grads_cross_entropy_embedding_scatter() {
    let logits = tensor(&[3, 4], &[0.4, -1.2, 0.7, 2.0, -0.3, 0.9, 1.1, 0.2, -0.6, 0.05, 0.8, -1.4]);
    let report = grad_check(
        |_, v| v.cross_entropy(&[2, 0, 0], 0),
        &logits,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "rel err {}", report.max_rel_err);

    let table = tensor(&[3, 2], &[0.4, -1.2, 0.7, 2.0, -0.3, 0.9]);
    let report = grad_check(
        |_, v| {
            let rows = v.embedding(&[2, 0, 2, 1])?;
            rows.mul(&rows)?.sum_all()
        },
        &table,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "rel err {}", report.max_rel_err);

    let weights = tensor(&[3], &[0.5, -0.25, 1.5]);
    let report = grad_check(
        |_, v| {
            let m = v.scatter_relation(&[(0, 1, 0), (1, 0, 0), (1, 1, 2)], 2)?;
            m.mul(&m)?.sum_all()
        },
        &weights,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "rel err {}", report.max_rel_err);
}

#[test]
fn add_rejects_shape_mismatch_with_both_shapes_in_message() {
    let tape = Tape::new();
    let a = tape.constant(tensor(&[2, 3], &[0.0; 6]));
    let b = tape.constant(tensor(&[3, 2], &[0.0; 6]));
    let err = a.add(&b).unwrap_err().to_string();
    assert!(err.contains("[2, 3]") && err.contains("[3, 2]"), "{err}");
}

#[test]
fn ops_refuse_cross_tape_operands() {
    let t1 = Tape::new();
    let t2 = Tape::new();
    let a = t1.constant(tensor(&[1], &[1.0]));
    let b = t2.constant(tensor(&[1], &[2.0]));
    assert!(a.add(&b).is_err());
}
