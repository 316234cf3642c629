use super::Scalar;
use crate::error::{Error, Result};

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub step_count: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Defaults `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`. `sizes` gives
    /// the element count of each parameter tensor.
    pub fn new(lr: f64, sizes: &[usize]) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {lr}")));
        }
        Ok(Self {
            lr: T::from_f64_lossy(lr),
            beta1: T::from_f64_lossy(0.9),
            beta2: T::from_f64_lossy(0.999),
            eps: T::from_f64_lossy(1e-8),
            step_count: 0,
            first_moment: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        })
    }

    /// One update of every parameter tensor from its gradient.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if !(self.lr > T::zero()) {
            return Err(Error::InvalidArgument("learning rate must be > 0".into()));
        }
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.first_moment.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.first_moment[i].len() {
                return Err(Error::shape(
                    "adam_step",
                    format!("tensor {i}: {} params, {} grads", p.len(), g.len()),
                ));
            }
        }
        self.step_count += 1;
        let t = i32::try_from(self.step_count).unwrap_or(i32::MAX);
        let one = T::one();
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = self.beta1 * m[j] + (one - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (one - self.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] = p[j] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
