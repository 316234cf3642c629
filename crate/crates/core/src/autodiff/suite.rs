//! Finite-difference checks of every tape operator on small random
//! inputs in double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_check, BatchNormState, Mode, Pooling, Tape, Tensor, Var};
use crate::error::Result;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape matches")
}

fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

// Random projection keeps the scalar sensitive to every output entry.
fn weighted_sum(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let shape = tape.value(y).shape().to_vec();
    let r = random(&shape, &mut rng);
    let rv = tape.leaf(r, false);
    let m = tape.mul(y, rv)?;
    tape.sum(m)
}

/// Worst relative error of each operator (and each differentiable input
/// of it) for every seed, labelled `"<op> <input> seed <n>"`.
pub fn operator_grad_checks(seeds: impl IntoIterator<Item = u64>) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[2, 2, 5, 4], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);

        let wc = w.clone();
        let e = grad_check(
            move |tp, v| {
                let wv = tp.leaf(wc.clone(), false);
                let y = tp.conv2d(v, wv, 1, 1)?;
                weighted_sum(tp, y, seed)
            },
            &x,
            1e-5,
        )?;
        out.push((format!("conv2d input seed {seed}"), e));
        let xc = x.clone();
        let e = grad_check(
            move |tp, v| {
                let xv = tp.leaf(xc.clone(), false);
                let y = tp.conv2d(xv, v, 2, 1)?;
                weighted_sum(tp, y, seed)
            },
            &w,
            1e-5,
        )?;
        out.push((format!("conv2d filter seed {seed}"), e));

        let b = random(&[2], &mut rng);
        let xc = x.clone();
        let e = grad_check(
            move |tp, v| {
                let xv = tp.leaf(xc.clone(), false);
                let y = tp.bias_add(xv, v)?;
                weighted_sum(tp, y, seed)
            },
            &b,
            1e-5,
        )?;
        out.push((format!("bias seed {seed}"), e));

        for mode in [Mode::Train, Mode::Eval] {
            let gamma = random(&[2], &mut rng);
            let beta = random(&[2], &mut rng);
            let mut warm = BatchNormState::new("bn", 2);
            warm.update(&[0.1, -0.2], &[0.8, 1.3], 10);
            let (g2, b2, x2, w2) = (gamma.clone(), beta.clone(), x.clone(), warm.clone());
            let e = grad_check(
                move |tp, v| {
                    let mut st = w2.clone();
                    let g = tp.leaf(g2.clone(), false);
                    let b = tp.leaf(b2.clone(), false);
                    let y = tp.batch_norm2d(v, g, b, &mut st, mode)?;
                    weighted_sum(tp, y, seed)
                },
                &x2,
                1e-5,
            )?;
            out.push((format!("bn input {mode:?} seed {seed}"), e));
            let (b3, x3, w3) = (beta.clone(), x.clone(), warm.clone());
            let e = grad_check(
                move |tp, v| {
                    let mut st = w3.clone();
                    let xv = tp.leaf(x3.clone(), false);
                    let b = tp.leaf(b3.clone(), false);
                    let y = tp.batch_norm2d(xv, v, b, &mut st, mode)?;
                    weighted_sum(tp, y, seed)
                },
                &gamma,
                1e-5,
            )?;
            out.push((format!("bn gamma {mode:?} seed {seed}"), e));
            let (g4, x4, w4) = (gamma.clone(), x.clone(), warm.clone());
            let e = grad_check(
                move |tp, v| {
                    let mut st = w4.clone();
                    let xv = tp.leaf(x4.clone(), false);
                    let g = tp.leaf(g4.clone(), false);
                    let y = tp.batch_norm2d(xv, g, v, &mut st, mode)?;
                    weighted_sum(tp, y, seed)
                },
                &beta,
                1e-5,
            )?;
            out.push((format!("bn beta {mode:?} seed {seed}"), e));
        }

        // Distinct values keep max pooling away from ties.
        let e = grad_check(
            move |tp, v| {
                let y = tp.max_pool2d(v)?;
                weighted_sum(tp, y, seed)
            },
            &x,
            1e-6,
        )?;
        out.push((format!("max_pool seed {seed}"), e));

        // ReLU probed away from its kink.
        let away = t(
            x.shape(),
            x.data()
                .iter()
                .map(|v| if v.abs() < 0.05 { v + 0.1 } else { *v })
                .collect(),
        );
        let e = grad_check(
            move |tp, v| {
                let y = tp.relu(v)?;
                weighted_sum(tp, y, seed)
            },
            &away,
            1e-6,
        )?;
        out.push((format!("relu seed {seed}"), e));

        let e = grad_check(
            move |tp, v| {
                let y = tp.sigmoid(v)?;
                weighted_sum(tp, y, seed)
            },
            &x,
            1e-5,
        )?;
        out.push((format!("sigmoid seed {seed}"), e));

        for kind in [Pooling::Avg, Pooling::Max] {
            let e = grad_check(
                move |tp, v| {
                    let y = tp.global_pool(v, kind)?;
                    weighted_sum(tp, y, seed)
                },
                &x,
                1e-6,
            )?;
            out.push((format!("global_pool {kind:?} seed {seed}"), e));
        }

        let p = t(&[2, 3], (0..6).map(|_| rng.random_range(0.05..0.95)).collect());
        let y: Vec<f64> = (0..6).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let e = grad_check(move |tp, v| tp.bce_loss(v, &y), &p, 1e-6)?;
        out.push((format!("bce seed {seed}"), e));

        let other = random(&[2, 2, 5, 4], &mut rng);
        let e = grad_check(
            move |tp, v| {
                let o = tp.leaf(other.clone(), false);
                let m = tp.mul(v, o)?;
                tp.sum(m)
            },
            &x,
            1e-6,
        )?;
        out.push((format!("mul seed {seed}"), e));
    }
    Ok(out)
}
