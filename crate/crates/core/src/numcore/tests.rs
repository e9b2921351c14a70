use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn eval1(f: impl Fn(&mut Tape, Var) -> Result<Var, NumError>, x: Tensor) -> Tensor {
    let mut tape = Tape::new();
    let v = tape.constant(x);
    let out = f(&mut tape, v).unwrap();
    tape.value(out).clone()
}

#[test]
fn sigmoid_at_zero() {
    let y = eval1(|t, v| t.sigmoid(v), Tensor::scalar(0.0));
    assert_eq!(y.data(), &[0.5]);
}

#[test]
fn sigmoid_saturates_without_overflow() {
    let y = eval1(|t, v| t.sigmoid(v), Tensor::row(&[-800.0, 800.0]));
    assert_eq!(y.data(), &[0.0, 1.0]);
}

#[test]
fn softmax_of_equal_entries_is_uniform() {
    let y = eval1(|t, v| t.softmax(v, Axis::Cols), Tensor::row(&[2.5, 2.5, 2.5]));
    for w in y.data() {
        assert!((w - 1.0 / 3.0).abs() < 1e-15);
    }
    let y = eval1(
        |t, v| t.softmax(v, Axis::Rows),
        Tensor::from_vec(3, 1, vec![-1.0; 3]).unwrap(),
    );
    for w in y.data() {
        assert!((w - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = rand_tensor(&mut rng, 2, 3);
    let b = rand_tensor(&mut rng, 3, 2);
    let mut tape = Tape::new();
    let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let c = tape.matmul(va, vb).unwrap();
    let bt = {
        let mut t = Tensor::zeros(2, 3);
        for i in 0..3 {
            for j in 0..2 {
                t.set(j, i, b.get(i, j));
            }
        }
        t
    };
    let vbt = tape.constant(bt);
    let c2 = tape.matmul_t(va, vbt).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let mut s = 0.0;
            for k in 0..3 {
                s += a.get(i, k) * b.get(k, j);
            }
            assert!((tape.value(c).get(i, j) - s).abs() < 1e-12);
            assert!((tape.value(c2).get(i, j) - s).abs() < 1e-12);
        }
    }
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(2, 3));
    let b = tape.constant(Tensor::zeros(2, 3));
    let err = tape.matmul(a, b).unwrap_err();
    assert_eq!(err.to_string(), "matmul: incompatible shapes [2, 3] and [2, 3]");
    let c = tape.constant(Tensor::zeros(3, 2));
    assert!(matches!(tape.add(a, c), Err(NumError::Shape { .. })));
}

#[test]
fn log_of_non_positive_is_domain_error() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::row(&[1.0, 0.0]));
    assert!(matches!(tape.log(a), Err(NumError::Domain { op: "log", .. })));
}

#[test]
fn non_finite_output_is_detected() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::scalar(1000.0));
    assert!(matches!(tape.exp(a), Err(NumError::NonFinite("exp"))));
}

#[test]
fn activation_derivatives_at_zero() {
    for (f, want) in [
        (Tape::sigmoid as fn(&mut Tape, Var) -> Result<Var, NumError>, 0.25),
        (Tape::tanh, 1.0),
    ] {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0), true);
        let y = f(&mut tape, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[want]);
    }
}

#[test]
fn backward_on_non_scalar_is_contract_error() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row(&[1.0, 2.0]), true);
    let y = tape.tanh(x).unwrap();
    assert!(matches!(tape.backward(y), Err(NumError::NonScalar([1, 2]))));
}

#[test]
fn gradient_accumulates_over_reuse() {
    // f(x) = sum(x ⊙ x + x) → df/dx = 2x + 1
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row(&[1.0, -2.0]), true);
    let sq = tape.mul(x, x).unwrap();
    let s = tape.add(sq, x).unwrap();
    let total = tape.sum(s).unwrap();
    let g = tape.backward(total).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[3.0, -3.0]);
}

#[test]
fn dropout_eval_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::row(&[1.0, 2.0, 3.0]));
    let y = tape.dropout(x, 0.5, &mut rng, false).unwrap();
    assert_eq!(x, y);
    let y = tape.dropout(x, 0.0, &mut rng, true).unwrap();
    assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0]);
    assert!(tape.dropout(x, 1.0, &mut rng, true).is_err());
}

#[test]
fn dropout_training_preserves_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = Tensor::row(&[1.0, -2.0, 0.5, 4.0]);
    let mut acc = [0.0; 4];
    let n = 10_000;
    for _ in 0..n {
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let y = tape.dropout(v, 0.5, &mut rng, true).unwrap();
        for (a, val) in acc.iter_mut().zip(tape.value(y).data()) {
            *a += val;
        }
    }
    for (a, want) in acc.iter().zip(x.data()) {
        let mean = a / n as f64;
        assert!((mean / want - 1.0).abs() < 0.02, "mean {mean} vs {want}");
    }
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = rand_tensor(&mut rng, 4, 3);
        let w = rand_tensor(&mut rng, 2, 3);
        let mut tape = Tape::new();
        let va = tape.constant(a);
        let vw = tape.leaf(w, true);
        let h = tape.matmul_t(va, vw).unwrap();
        let h = tape.tanh(h).unwrap();
        let h = tape.dropout(h, 0.3, &mut rng, true).unwrap();
        let s = tape.softmax(h, Axis::Cols).unwrap();
        let l = tape.sq_norm(s).unwrap();
        let g = tape.backward(l).unwrap();
        g.get(vw).unwrap().clone()
    };
    let (a, b) = (run(), run());
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn slices_and_concats_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, 3, 4);
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let l = tape.slice_cols(v, 0, 1).unwrap();
    let r = tape.slice_cols(v, 1, 3).unwrap();
    let back = tape.concat(&[l, r], Axis::Cols).unwrap();
    assert_eq!(tape.value(back), &x);
    let top = tape.slice_rows(v, 0, 2).unwrap();
    let bottom = tape.slice_rows(v, 2, 1).unwrap();
    let back = tape.concat(&[top, bottom], Axis::Rows).unwrap();
    assert_eq!(tape.value(back), &x);
    assert!(tape.slice_cols(v, 3, 2).is_err());
}

/// Every primitive composed with a random linear readout so the checked
/// function is scalar and exercises every output entry.
#[test]
fn every_primitive_passes_grad_check() {
    let rows = crate::diagnostics::primitive_grad_checks(20260101, 10).unwrap();
    for row in rows {
        assert!(row.max_rel_error < 1e-5, "{}: {}", row.name, row.max_rel_error);
    }
}
