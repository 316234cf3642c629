use rand::seq::index::sample;

use super::Model;
use crate::autodiff::Mode;
use crate::dsp::LogmelSpectrogram;
use crate::error::Result;
use crate::seed;

/// Gradients smaller than this are compared in absolute terms. With a loss
/// near 1, f64 round-off limits a central difference at `eps = 1e-6` to about
/// 1e-10, so exactly-zero gradients would otherwise fail. Round-off grows as
/// the step shrinks, so a step `h < eps` scales the floor by `eps / h`.
pub const NETWORK_GRAD_FLOOR: f64 = 1e-6;

const MIN_STEP_RATIO: f64 = 1e-3;

/// Central-difference check of the training loss against back-propagated
/// parameter gradients. Probes every coordinate, or at most `per_tensor`
/// seeded coordinates of each parameter tensor. Steps that cross a kink are
/// retried at a quarter of the size, down to `eps * MIN_STEP_RATIO`.
/// Returns the worst `|analytic - numeric| / max(|analytic|, |numeric|,
/// floor)` per tensor, with the floor described at [`NETWORK_GRAD_FLOOR`].
pub fn model_grad_check(
    model: &Model<f64>,
    inputs: &[&LogmelSpectrogram],
    targets: &[Vec<f64>],
    eps: f64,
    per_tensor: Option<usize>,
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    let (_, analytic) = model.clone().loss_and_grads(inputs, targets, Mode::Train)?;
    let x = Model::<f64>::batch_input(inputs)?;
    let loss_with = |ti: usize, i: usize, delta: f64| -> Result<(f64, u64)> {
        let mut m = model.clone();
        let v = &mut m.params_mut()[ti].value.data_mut()[i];
        *v += delta;
        m.loss_region(x.clone(), targets, Mode::Train)
    };
    // A difference straddling a ReLU, pooling or clamp kink is not a
    // derivative estimate; shrink the step until both sides stay on the base
    // point's piece. One-sided differences are no substitute: batch norm
    // makes the early layers strongly curved.
    let (_, r0) = model.clone().loss_region(x.clone(), targets, Mode::Train)?;
    let numeric = |ti: usize, i: usize| -> Result<(f64, f64)> {
        let mut h = eps;
        loop {
            let (up, ru) = loss_with(ti, i, h)?;
            let (down, rd) = loss_with(ti, i, -h)?;
            if (ru == r0 && rd == r0) || h < eps * MIN_STEP_RATIO {
                return Ok(((up - down) / (2.0 * h), h));
            }
            h /= 4.0;
        }
    };
    let mut out = Vec::with_capacity(model.params().len());
    for (ti, p) in model.params().iter().enumerate() {
        let n = p.value.len();
        let coords: Vec<usize> = match per_tensor {
            Some(k) if k < n => {
                let mut c = sample(&mut seed::rng(seed, ti as u64), n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        let mut worst = 0.0f64;
        for i in coords {
            let (numeric, h) = numeric(ti, i)?;
            let a = analytic[ti][i];
            let floor = NETWORK_GRAD_FLOOR * eps / h;
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(floor));
        }
        out.push((p.name.clone(), worst));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Pooling;
    use crate::model::ModelConfig;
    use rand::{Rng, SeedableRng};

    #[test]
    fn tiny_network_every_coordinate() {
        let cfg = ModelConfig {
            class_count: 3,
            block_filters: vec![2, 2, 2, 2, 2, 2],
            convs_per_block: 1,
            l7_filters: 3,
            pooling: Pooling::Avg,
            mel_bands: 128,
        };
        let model = Model::build(cfg, 4).unwrap().cast::<f64>();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<LogmelSpectrogram> = (0..2)
            .map(|_| {
                LogmelSpectrogram::from_values((0..128 * 128).map(|_| rng.random_range(-2.0..2.0)).collect(), 128, 128)
                    .unwrap()
            })
            .collect();
        let refs: Vec<&LogmelSpectrogram> = xs.iter().collect();
        let targets = vec![vec![1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]];
        let report = model_grad_check(&model, &refs, &targets, 1e-6, None, 0).unwrap();
        for (name, e) in report {
            assert!(e <= 1e-3, "{name}: {e}");
        }
    }
}
