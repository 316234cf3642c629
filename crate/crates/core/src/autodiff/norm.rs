use super::Scalar;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running statistics of one batch-norm layer. The affine `gamma`/`beta`
/// are ordinary trainable parameters and live with the model's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub name: String,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
    /// False until the first train-mode batch (or a checkpoint load)
    /// provides statistics.
    pub initialized: bool,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self {
            name: name.into(),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::from_f64_lossy(BN_MOMENTUM),
            eps: T::from_f64_lossy(BN_EPS),
            initialized: false,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// Fold batch statistics (biased variance over `count` values) into the
    /// running estimates. The first batch replaces the placeholders.
    pub fn update(&mut self, mean: &[T], biased_var: &[T], count: usize) {
        let correction = if count > 1 {
            T::from_usize(count).expect("count") / T::from_usize(count - 1).expect("count")
        } else {
            T::one()
        };
        let keep = T::one() - self.momentum;
        for (i, (&m, &v)) in mean.iter().zip(biased_var).enumerate() {
            let v = v * correction;
            if self.initialized {
                self.running_mean[i] = keep * self.running_mean[i] + self.momentum * m;
                self.running_var[i] = keep * self.running_var[i] + self.momentum * v;
            } else {
                self.running_mean[i] = m;
                self.running_var[i] = v;
            }
        }
        self.initialized = true;
    }

    pub fn validate(&self) -> Result<()> {
        if self.running_var.len() != self.running_mean.len() {
            return Err(Error::shape("batch_norm2d", "running mean/var length differ"));
        }
        if self.running_var.iter().any(|v| *v < T::zero() || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{}: running variance must be >= 0",
                self.name
            )));
        }
        if self.eps <= T::zero() {
            return Err(Error::InvalidArgument(format!("{}: eps must be > 0", self.name)));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> BatchNormState<U> {
        let c = |v: &[T]| v.iter().map(|x| U::from_f64_lossy(x.to_f64_lossy())).collect();
        BatchNormState {
            name: self.name.clone(),
            running_mean: c(&self.running_mean),
            running_var: c(&self.running_var),
            momentum: U::from_f64_lossy(self.momentum.to_f64_lossy()),
            eps: U::from_f64_lossy(self.eps.to_f64_lossy()),
            initialized: self.initialized,
        }
    }
}
