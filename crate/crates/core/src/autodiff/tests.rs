use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    t(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn conv_eval(x: &Tensor<f64>, w: &Tensor<f64>, pad: usize) -> Tensor<f64> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), false);
    let wv = tape.leaf(w.clone(), false);
    let y = tape.conv2d(xv, wv, 1, pad).unwrap();
    tape.value(y).clone()
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[1, 1, 5, 6], &mut rng);
    let mut k = vec![0.0; 9];
    k[4] = 1.0;
    let y = conv_eval(&x, &t(&[1, 1, 3, 3], k), 1);
    assert_eq!(y, x);
}

#[test]
fn conv_all_ones_counts_neighbours() {
    let y = conv_eval(&t(&[1, 1, 3, 3], vec![1.0; 9]), &t(&[1, 1, 3, 3], vec![1.0; 9]), 1);
    // Oracle: count in-bounds neighbours of each cell.
    let mut expected = vec![];
    for i in 0..3i32 {
        for j in 0..3i32 {
            let mut n = 0.0;
            for di in -1..=1 {
                for dj in -1..=1 {
                    if (0..3).contains(&(i + di)) && (0..3).contains(&(j + dj)) {
                        n += 1.0;
                    }
                }
            }
            expected.push(n);
        }
    }
    assert_eq!(expected, vec![4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    assert_eq!(y.data(), &expected[..]);
}

#[test]
fn conv_keeps_spatial_size_with_unit_padding() {
    let mut tape = Tape::<f32>::new();
    let x = tape.leaf(Tensor::zeros(vec![1, 128, 128]), false);
    let w = tape.leaf(Tensor::zeros(vec![16, 1, 3, 3]), false);
    let y = tape.conv2d(x, w, 1, 1).unwrap();
    assert_eq!(tape.value(y).shape(), &[16, 128, 128]);
}

#[test]
fn conv_stride_and_shape_errors() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(vec![1, 2, 7, 5]), false);
    let w = tape.leaf(Tensor::zeros(vec![3, 2, 3, 3]), false);
    let y = tape.conv2d(x, w, 2, 0).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 3, 3, 2]);

    let bad = tape.leaf(Tensor::zeros(vec![3, 4, 3, 3]), false);
    let err = tape.conv2d(x, bad, 1, 1).unwrap_err();
    assert!(err.to_string().contains("channels"), "{err}");
    let tall = tape.leaf(Tensor::zeros(vec![1, 2, 9, 3]), false);
    let err = tape.conv2d(x, tall, 1, 0).unwrap_err();
    assert!(err.to_string().contains("height"), "{err}");
}

#[test]
fn conv_linearity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[2, 3, 6, 5], &mut rng);
    let y = random(&[2, 3, 6, 5], &mut rng);
    let w = random(&[4, 3, 3, 3], &mut rng);
    let (a, b) = (0.7, -1.3);
    let mix = t(
        x.shape(),
        x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect(),
    );
    let lhs = conv_eval(&mix, &w, 1);
    let (cx, cy) = (conv_eval(&x, &w, 1), conv_eval(&y, &w, 1));
    for ((l, p), q) in lhs.data().iter().zip(cx.data()).zip(cy.data()) {
        assert!((l - (a * p + b * q)).abs() < 1e-10);
    }
}

fn bn_eval(
    x: &Tensor<f64>,
    gamma: f64,
    beta: f64,
    mode: Mode,
    state: &mut BatchNormState<f64>,
) -> Result<Tensor<f64>, Error> {
    let c = x.shape()[1];
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), false);
    let g = tape.leaf(Tensor::full(vec![c], gamma), false);
    let b = tape.leaf(Tensor::full(vec![c], beta), false);
    let y = tape.batch_norm2d(xv, g, b, state, mode)?;
    Ok(tape.value(y).clone())
}

#[test]
fn batch_norm_constant_input_is_zero() {
    let x = Tensor::full(vec![2, 3, 4, 4], 7.5);
    let mut st = BatchNormState::new("bn", 3);
    let y = bn_eval(&x, 1.0, 0.0, Mode::Train, &mut st).unwrap();
    assert!(y.data().iter().all(|v| v.abs() <= 1e-3));
}

#[test]
fn batch_norm_zero_gamma_gives_beta() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[2, 2, 3, 3], &mut rng);
    let mut st = BatchNormState::new("bn", 2);
    let y = bn_eval(&x, 0.0, 0.25, Mode::Train, &mut st).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.25));
}

#[test]
fn batch_norm_train_output_is_standardized() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[3, 4, 5, 6], &mut rng);
    let mut st = BatchNormState::new("bn", 4);
    let y = bn_eval(&x, 1.0, 0.0, Mode::Train, &mut st).unwrap();
    let hw = 30;
    for c in 0..4 {
        let vals: Vec<f64> = (0..3)
            .flat_map(|b| y.data()[(b * 4 + c) * hw..(b * 4 + c + 1) * hw].to_vec())
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(
            mean.abs() < 1e-4 && (var - 1.0).abs() < 1e-4,
            "c={c} mean={mean} var={var}"
        );
    }
    assert!(st.initialized);
}

#[test]
fn batch_norm_eval_requires_statistics() {
    let x = Tensor::full(vec![1, 2, 2, 2], 1.0);
    let mut st = BatchNormState::new("l1.bn", 2);
    let err = bn_eval(&x, 1.0, 0.0, Mode::Eval, &mut st).unwrap_err();
    assert!(matches!(err, Error::UninitializedNorm(ref n) if n == "l1.bn"));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    bn_eval(&random(&[2, 2, 3, 3], &mut rng), 1.0, 0.0, Mode::Train, &mut st).unwrap();
    let before = st.clone();
    bn_eval(&x, 1.0, 0.0, Mode::Eval, &mut st).unwrap();
    assert_eq!(st, before, "eval mode must not touch running stats");
    assert!(st.running_var.iter().all(|v| *v >= 0.0));
}

#[test]
fn batch_norm_running_stats_use_momentum() {
    let mut st = BatchNormState::<f64>::new("bn", 1);
    st.update(&[2.0], &[1.0], 5);
    assert_eq!(st.running_mean, vec![2.0]);
    assert!((st.running_var[0] - 1.25).abs() < 1e-12);
    st.update(&[0.0], &[0.0], 5);
    assert!((st.running_mean[0] - 1.8).abs() < 1e-12);
    assert!((st.running_var[0] - 1.125).abs() < 1e-12);
}

#[test]
fn max_pool_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(t(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]), true);
    let y = tape.max_pool2d(x).unwrap();
    assert_eq!(tape.value(y).data(), &[4.0]);

    let odd = tape.leaf(Tensor::zeros(vec![1, 1, 27, 4]), false);
    let y = tape.max_pool2d(odd).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 1, 13, 2]);

    let thin = tape.leaf(Tensor::zeros(vec![1, 1, 1, 4]), false);
    assert!(tape.max_pool2d(thin).is_err());
}

#[test]
fn max_pool_ties_route_to_first() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::full(vec![1, 1, 4, 4], 3.0), true);
    let y = tape.max_pool2d(x).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 3.0));
    let s = tape.sum(y).unwrap();
    tape.backward(s).unwrap();
    let g = tape.grad(x).unwrap();
    assert_eq!(g.iter().sum::<f64>(), 4.0);
    // top-left of every window
    for (i, &v) in g.iter().enumerate() {
        let (r, c) = (i / 4, i % 4);
        assert_eq!(v, if r % 2 == 0 && c % 2 == 0 { 1.0 } else { 0.0 });
    }
}

#[test]
fn activations() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::from_vec(vec![-3.0, 0.0, 3.0]), true);
    let r = tape.activation(x, Activation::Relu).unwrap();
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 3.0]);
    let s = tape.activation(x, Activation::Sigmoid).unwrap();
    assert_eq!(tape.value(s).data()[1], 0.5);

    let fd = |v: f64| 1.0 / (1.0 + (-v).exp());
    let h = 1e-5;
    let numeric = (fd(h) - fd(-h)) / (2.0 * h);
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::scalar(0.0), true);
    let y = tape.sigmoid(x).unwrap();
    tape.backward(y).unwrap();
    let analytic = tape.grad(x).unwrap()[0];
    assert_eq!(analytic, 0.25);
    assert!((analytic - numeric).abs() < 1e-6);
}

fn bce(p: &[f64], y: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let pv = tape.leaf(Tensor::from_vec(p.to_vec()), false);
    let l = tape.bce_loss(pv, y).unwrap();
    tape.value(l).data()[0]
}

#[test]
#[allow(clippy::approx_constant)]
fn bce_examples() {
    assert!((bce(&[0.5], &[1.0]) - std::f64::consts::LN_2).abs() < 1e-6);
    assert!((bce(&[0.5], &[1.0]) - 0.693147).abs() < 1e-6);
    assert!(bce(&[1.0], &[1.0]) < 1e-6);
    assert!(bce(&[1.0 - 1e-12], &[1.0]) < 1e-6);
    // oracle loop
    let (p, y) = ([0.8, 0.2], [1.0, 0.0]);
    let oracle: f64 = p
        .iter()
        .zip(&y)
        .map(|(p, y)| -y * f64::ln(*p) - (1.0 - y) * f64::ln(1.0 - p))
        .sum::<f64>()
        / 2.0;
    assert!((bce(&p, &y) - oracle).abs() < 1e-12);
    assert!((bce(&p, &y) - 0.22314).abs() < 1e-5);
}

#[test]
fn bce_length_mismatch() {
    let mut tape = Tape::<f64>::new();
    let p = tape.leaf(Tensor::from_vec(vec![0.5, 0.5]), false);
    assert!(tape.bce_loss(p, &[1.0]).is_err());
}

proptest! {
    #[test]
    fn bce_nonnegative(p in proptest::collection::vec(0.0f64..=1.0, 1..8), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = p.iter().map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let l = bce(&p, &y);
        prop_assert!(l >= 0.0);
        let matching: Vec<f64> = y.clone();
        prop_assert!(bce(&matching, &y) < 1e-6);
    }
}

#[test]
fn backward_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(vec![2, 3]), true);
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0; 6]);

    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]), true);
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0, 6.0]);
    // accumulation without reset
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[4.0, 8.0, 12.0]);
    tape.zero_grad();
    assert!(tape.grad(x).is_none());

    assert!(tape.backward(sq).is_err(), "non-scalar root");
}

#[test]
fn non_finite_is_an_error() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::from_vec(vec![f64::MAX, 2.0]), false);
    let err = tape.mul(x, x).unwrap_err();
    assert!(matches!(err, Error::NonFinite { op: "mul" }));
}

#[test]
fn grad_check_examples() {
    let x = Tensor::from_vec(vec![0.3, -1.2, 2.0, 0.7]);
    let sq = |tape: &mut Tape<f64>, v: Var| {
        let m = tape.mul(v, v)?;
        tape.sum(m)
    };
    assert!(grad_check(sq, &x, 1e-4).unwrap() <= 1e-8);
    let sig = |tape: &mut Tape<f64>, v: Var| {
        let a = tape.sigmoid(v)?;
        let b = tape.mul(a, a)?;
        let c = tape.sigmoid(b)?;
        tape.sum(c)
    };
    assert!(grad_check(sig, &x, 1e-4).unwrap() <= 1e-6);
}

#[test]
fn every_operator_passes_grad_check() {
    let checks = operator_grad_checks(0..10).unwrap();
    assert!(checks.len() >= 150);
    for (name, e) in checks {
        assert!(e <= 1e-4, "{name}: {e}");
    }
}

#[test]
fn max_pool_backward_preserves_window_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random(&[1, 2, 6, 7], &mut rng);
    let mut tape = Tape::new();
    let xv = tape.leaf(x, true);
    let y = tape.max_pool2d(xv).unwrap();
    let w = random(&[1, 2, 3, 3], &mut rng);
    let upstream = w.data().to_vec();
    let wv = tape.leaf(w, false);
    let m = tape.mul(y, wv).unwrap();
    let s = tape.sum(m).unwrap();
    tape.backward(s).unwrap();
    let g = tape.grad(xv).unwrap();
    for c in 0..2 {
        for i in 0..3 {
            for j in 0..3 {
                let mass: f64 = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|(di, dj)| g[c * 42 + (2 * i + di) * 7 + 2 * j + dj])
                    .sum();
                assert!((mass - upstream[c * 9 + i * 3 + j]).abs() < 1e-12);
            }
        }
        // dropped last column gets nothing
        for r in 0..6 {
            assert_eq!(g[c * 42 + r * 7 + 6], 0.0);
        }
    }
}
