use super::{Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Maximum over coordinates of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`, where the
/// numeric derivative is a central difference with step `eps`.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, eps: f64) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    grad_check_at(f, x, eps, None)
}

/// Like [`grad_check`] but only probes the listed coordinates.
pub fn grad_check_at<T, F>(f: F, x: &Tensor<T>, eps: f64, coords: Option<&[usize]>) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new();
        let v = tape.leaf(x.clone(), true);
        let out = f(&mut tape, v)?;
        tape.backward(out)?;
        tape.grad(v)
            .map(<[T]>::to_vec)
            .unwrap_or_else(|| vec![T::zero(); x.len()])
    };
    let eval = |probe: Tensor<T>| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(probe, false);
        let out = f(&mut tape, v)?;
        let value = tape.value(out);
        if value.len() != 1 {
            return Err(Error::shape("grad_check", "function must return a scalar"));
        }
        Ok(value.data()[0].to_f64_lossy())
    };
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let step = T::from_f64_lossy(eps);
    let mut worst = 0.0f64;
    for &i in coords {
        let mut plus = x.clone();
        plus.data_mut()[i] = plus.data()[i] + step;
        let mut minus = x.clone();
        minus.data_mut()[i] = minus.data()[i] - step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic[i].to_f64_lossy();
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
