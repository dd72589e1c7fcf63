use num_traits::Float;

use crate::{Result, Tensor4};

/// ELU with `alpha = 1`.
#[inline]
pub fn elu_scalar(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu(input: &Tensor4) -> Tensor4 {
    input.map(elu_scalar)
}

/// Chain rule through [`elu`], given the pre-activation input.
pub fn elu_grad(grad_out: &Tensor4, input: &Tensor4) -> Result<Tensor4> {
    grad_out.check_same_dims(input)?;
    let mut out = grad_out.clone();
    for (g, &x) in out.as_mut_slice().iter_mut().zip(input.as_slice()) {
        if x <= 0.0 {
            *g *= x.exp();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{max_rel_err, numeric_grad, random_tensor};

    #[test]
    fn known_values() {
        assert_eq!(elu_scalar(0.0), 0.0);
        assert_eq!(elu_scalar(2.0), 2.0);
        assert!((elu_scalar(-1.0) - (-0.632_120_558_828_557_7)).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = random_tensor([1, 2, 4, 4], 1).map(|v| 3.0 * v);
        let u = random_tensor([1, 2, 4, 4], 2);
        let g = elu_grad(&u, &x).unwrap();
        let num = numeric_grad(x.as_slice(), |v| {
            elu(&Tensor4::from_vec(x.dims(), v.to_vec()).unwrap()).dot(&u).unwrap()
        });
        assert!(max_rel_err(g.as_slice(), &num, 1e-6) < 1e-6);
    }
}
