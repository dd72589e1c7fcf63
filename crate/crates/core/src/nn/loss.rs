use crate::{Result, Tensor4};

/// Mean squared error over every element and its gradient
/// `2 (pred - target) / N` with respect to `pred`.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4)> {
    pred.check_same_dims(target)?;
    let n = pred.len() as f64;
    let mut grad = Tensor4::zeros(pred.dims());
    let mut sum = 0.0;
    for ((g, p), t) in grad.as_mut_slice().iter_mut().zip(pred.as_slice()).zip(target.as_slice()) {
        let d = p - t;
        sum += d * d;
        *g = 2.0 * d / n;
    }
    Ok((sum / n, grad))
}
