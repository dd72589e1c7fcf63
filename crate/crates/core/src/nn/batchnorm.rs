use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::{Error, Result, Tensor4};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel affine normalization state.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormParams {
    /// `gamma = 1`, `beta = 0`, running statistics `(0, 1)`.
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, input: &Tensor4) -> Result<()> {
        let c = self.channels();
        if input.channels() != c
            || self.beta.len() != c
            || self.running_mean.len() != c
            || self.running_var.len() != c
        {
            return Err(Error::shape(format!(
                "batchnorm over {} channels given input with {}",
                c,
                input.channels()
            )));
        }
        Ok(())
    }
}

/// Saved activations from a train-mode pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    x_hat: Tensor4,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads {
    pub input: Tensor4,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Train mode: normalizes with the batch statistics over
/// `(batch, height, width)` (population variance) and folds them into the
/// running statistics as `r <- (1 - momentum) r + momentum * batch_stat`.
pub fn batchnorm2d_train(
    input: &Tensor4,
    params: &mut BatchNormParams,
) -> Result<(Tensor4, BatchNormCache)> {
    params.check(input)?;
    let [batch, channels, h, w] = input.dims();
    let count = (batch * h * w) as f64;
    let mut out = Tensor4::zeros(input.dims());
    let mut x_hat = Tensor4::zeros(input.dims());
    let mut inv_std = vec![0.0; channels];
    for c in 0..channels {
        let mean = (0..batch).map(|n| input.plane(n, c).iter().sum::<f64>()).sum::<f64>() / count;
        let var = (0..batch)
            .map(|n| input.plane(n, c).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>())
            .sum::<f64>()
            / count;
        let istd = 1.0 / (var + params.epsilon).sqrt();
        inv_std[c] = istd;
        let (g, b) = (params.gamma[c], params.beta[c]);
        for n in 0..batch {
            let src = input.plane(n, c);
            let xh = x_hat.plane_mut(n, c);
            for (d, s) in xh.iter_mut().zip(src) {
                *d = (s - mean) * istd;
            }
            let xh = x_hat.plane(n, c);
            for (d, s) in out.plane_mut(n, c).iter_mut().zip(xh) {
                *d = g * s + b;
            }
        }
        let m = params.momentum;
        params.running_mean[c] = (1.0 - m) * params.running_mean[c] + m * mean;
        params.running_var[c] = (1.0 - m) * params.running_var[c] + m * var;
    }
    Ok((out, BatchNormCache { x_hat, inv_std }))
}

/// Eval mode: normalizes with the running statistics. Pure.
pub fn batchnorm2d_eval(input: &Tensor4, params: &BatchNormParams) -> Result<Tensor4> {
    params.check(input)?;
    let [batch, channels, _, _] = input.dims();
    let mut out = Tensor4::zeros(input.dims());
    for c in 0..channels {
        let istd = 1.0 / (params.running_var[c] + params.epsilon).sqrt();
        let scale = params.gamma[c] * istd;
        let shift = params.beta[c] - params.running_mean[c] * scale;
        for n in 0..batch {
            for (d, s) in out.plane_mut(n, c).iter_mut().zip(input.plane(n, c)) {
                *d = s * scale + shift;
            }
        }
    }
    Ok(out)
}

/// Dispatches on `mode`; the cache is only produced in train mode.
pub fn batchnorm2d(
    input: &Tensor4,
    params: &mut BatchNormParams,
    mode: Mode,
) -> Result<(Tensor4, Option<BatchNormCache>)> {
    match mode {
        Mode::Train => batchnorm2d_train(input, params).map(|(y, c)| (y, Some(c))),
        Mode::Eval => batchnorm2d_eval(input, params).map(|y| (y, None)),
    }
}

/// Backward pass of [`batchnorm2d_train`], differentiating through the
/// batch statistics.
pub fn batchnorm2d_grad(
    grad_out: &Tensor4,
    cache: &BatchNormCache,
    params: &BatchNormParams,
) -> Result<BatchNormGrads> {
    grad_out.check_same_dims(&cache.x_hat)?;
    params.check(grad_out)?;
    let [batch, channels, h, w] = grad_out.dims();
    let count = (batch * h * w) as f64;
    let mut grad_input = Tensor4::zeros(grad_out.dims());
    let mut grad_gamma = vec![0.0; channels];
    let mut grad_beta = vec![0.0; channels];
    for c in 0..channels {
        let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
        for n in 0..batch {
            let g = grad_out.plane(n, c);
            let xh = cache.x_hat.plane(n, c);
            sum_dy += g.iter().sum::<f64>();
            sum_dy_xh += g.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>();
        }
        grad_gamma[c] = sum_dy_xh;
        grad_beta[c] = sum_dy;
        let k = params.gamma[c] * cache.inv_std[c] / count;
        for n in 0..batch {
            let g = grad_out.plane(n, c);
            let xh = cache.x_hat.plane(n, c);
            for ((d, gy), x) in grad_input.plane_mut(n, c).iter_mut().zip(g).zip(xh) {
                *d = k * (count * gy - sum_dy - x * sum_dy_xh);
            }
        }
    }
    Ok(BatchNormGrads {
        input: grad_input,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{max_rel_err, numeric_grad, random_tensor};

    #[test]
    fn train_mode_normalizes_each_channel() {
        let x = random_tensor([3, 2, 4, 5], 1).map(|v| 3.0 * v + 7.0);
        let mut p = BatchNormParams::new(2);
        let (y, _) = batchnorm2d_train(&x, &mut p).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = (0..3).flat_map(|n| y.plane(n, c).to_vec()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / vals.len() as f64;
            let src: Vec<f64> = (0..3).flat_map(|n| x.plane(n, c).to_vec()).collect();
            let sm = src.iter().sum::<f64>() / src.len() as f64;
            let sv = src.iter().map(|a| (a - sm) * (a - sm)).sum::<f64>() / src.len() as f64;
            assert!(m.abs() < 1e-12);
            assert!((v - sv / (sv + BN_EPSILON)).abs() < 1e-12);
        }
        // running stats moved toward batch stats
        assert!(p.running_mean.iter().all(|&m| m > 0.5));
    }

    #[test]
    fn eval_with_unit_running_stats_is_near_identity_and_pure() {
        let x = random_tensor([2, 3, 3, 3], 2);
        let p = BatchNormParams::new(3);
        let y = batchnorm2d_eval(&x, &p).unwrap();
        let factor = 1.0 / (1.0 + BN_EPSILON).sqrt();
        for (a, b) in y.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b * factor).abs() < 1e-15);
        }
        let y2 = batchnorm2d_eval(&x, &p).unwrap();
        assert_eq!(y.as_slice(), y2.as_slice());
        assert_eq!(p, BatchNormParams::new(3));
    }

    #[test]
    fn batch_of_one_single_pixel_is_defined() {
        let x = Tensor4::filled([1, 1, 1, 1], 4.0);
        let mut p = BatchNormParams::new(1);
        let (y, _) = batchnorm2d_train(&x, &mut p).unwrap();
        assert_eq!(y.as_slice(), &[0.0]);
    }

    #[test]
    fn channel_mismatch() {
        let x = random_tensor([1, 2, 3, 3], 3);
        let mut p = BatchNormParams::new(3);
        assert!(matches!(batchnorm2d_train(&x, &mut p), Err(Error::Shape(_))));
        assert!(matches!(batchnorm2d_eval(&x, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = random_tensor([2, 2, 3, 3], 4);
        let u = random_tensor([2, 2, 3, 3], 5);
        let mut p = BatchNormParams::new(2);
        p.gamma = vec![1.3, 0.7];
        p.beta = vec![0.2, -0.5];
        let (_, cache) = batchnorm2d_train(&x, &mut p.clone()).unwrap();
        let g = batchnorm2d_grad(&u, &cache, &p).unwrap();
        let objective = |input: &Tensor4, params: &BatchNormParams| {
            let (y, _) = batchnorm2d_train(input, &mut params.clone()).unwrap();
            y.dot(&u).unwrap()
        };
        let gx = numeric_grad(x.as_slice(), |v| {
            objective(&Tensor4::from_vec(x.dims(), v.to_vec()).unwrap(), &p)
        });
        assert!(max_rel_err(g.input.as_slice(), &gx, 1e-6) < 1e-6);
        let gg = numeric_grad(&p.gamma, |v| {
            let mut q = p.clone();
            q.gamma = v.to_vec();
            objective(&x, &q)
        });
        assert!(max_rel_err(&g.gamma, &gg, 1e-6) < 1e-6);
        let gb = numeric_grad(&p.beta, |v| {
            let mut q = p.clone();
            q.beta = v.to_vec();
            objective(&x, &q)
        });
        assert!(max_rel_err(&g.beta, &gb, 1e-6) < 1e-6);
    }
}
