use alloc::format;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::{Error, Result, Scalar, Tensor};

const CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy of probabilities `p` against 0/1 targets.
/// Returns the loss and `dL/dp`, both evaluated at `p` clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn bce_loss<T: Scalar>(p: &Tensor<T>, targets: &[f64]) -> Result<(f64, Tensor<T>)> {
    if p.len() != targets.len() || p.is_empty() {
        return Err(Error::ShapeMismatch(format!("bce: {} scores for {} targets", p.len(), targets.len())));
    }
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(p.shape());
    for ((&pi, &y), g) in p.data().iter().zip(targets).zip(grad.data_mut()) {
        let q = pi.as_f64().clamp(CLAMP, 1.0 - CLAMP);
        loss -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
        *g = T::from_f64((-y / q + (1.0 - y) / (1.0 - q)) / n);
    }
    Ok((loss / n, grad))
}
