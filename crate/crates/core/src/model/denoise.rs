use alloc::format;

use super::FcDaeModel;
use crate::c2::{apply_standardization, standardize, C2Matrix, StandardizationParams};
use crate::{Error, Result, Tensor4};

/// A standardized (noisy, target) pair. Both maps are scaled with the noisy
/// map's statistics so one destandardization restores physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub noisy: C2Matrix,
    pub target: C2Matrix,
    pub params: StandardizationParams,
}

impl TrainingPair {
    pub fn from_maps(raw: &C2Matrix, truth: &C2Matrix) -> Result<Self> {
        if raw.n_frames() != truth.n_frames() {
            return Err(Error::shape(format!(
                "raw is {0}x{0}, truth is {1}x{1}",
                raw.n_frames(),
                truth.n_frames()
            )));
        }
        let (noisy, params) = standardize(raw)?;
        let target = apply_standardization(truth, &params);
        Ok(TrainingPair { noisy, target, params })
    }

    pub fn size(&self) -> usize {
        self.noisy.n_frames()
    }
}

/// Standardize, run the network in eval mode, undo the standardization,
/// then symmetrize as `(A + Aᵀ) / 2`.
pub fn denoise(model: &FcDaeModel, c2: &C2Matrix) -> Result<C2Matrix> {
    let n = c2.n_frames();
    let k = model.architecture().kernel_size;
    if n < k {
        return Err(Error::shape(format!("{n}x{n} map is smaller than the {k}x{k} kernel")));
    }
    let (std_map, params) = standardize(c2).map_err(|e| match e {
        Error::ZeroVariance => Error::ConstantInput,
        other => other,
    })?;
    let input = Tensor4::from_vec([1, 1, n, n], std_map.into_values())?;
    let mut out = model.forward(&input)?.into_vec();
    // The raw network output is not symmetric, so undo the scaling by hand
    // before it becomes a C2Matrix.
    for v in &mut out {
        *v = *v * params.std + params.mean;
    }
    Ok(C2Matrix::symmetrized(n, out)?.with_meta(c2.frame_interval_s, c2.q_label.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c2::destandardize;
    use crate::model::{build_model, FcDaeArchitecture};

    fn sample(n: usize) -> C2Matrix {
        C2Matrix::from_fn(n, |i, j| 1.0 + 0.3 / (1.0 + (i as f64 - j as f64).abs()) + 0.01 * ((i * 7 + j * 3) % 5) as f64)
            .with_meta(0.5, "q1")
    }

    #[test]
    fn matches_manual_composition() {
        let model = build_model(&FcDaeArchitecture::default(), 4).unwrap();
        let c2 = sample(12);
        let out = denoise(&model, &c2).unwrap();

        let (s, p) = standardize(&c2).unwrap();
        let y = model.forward(&Tensor4::from_vec([1, 1, 12, 12], s.values().to_vec()).unwrap()).unwrap();
        let y = y.as_slice();
        for i in 0..12 {
            for j in 0..12 {
                let d = |k: usize| y[k] * p.std + p.mean;
                let expect = 0.5 * (d(i * 12 + j) + d(j * 12 + i));
                assert!((out.get(i, j) - expect).abs() < 1e-12);
            }
        }
        assert_eq!(out.max_asymmetry(), 0.0);
        assert_eq!(out.frame_interval_s, 0.5);
        assert_eq!(out.q_label, "q1");
    }

    #[test]
    fn constant_and_tiny_inputs() {
        let model = build_model(&FcDaeArchitecture::default(), 4).unwrap();
        let flat = C2Matrix::from_fn(5, |_, _| 1.2);
        assert_eq!(denoise(&model, &flat), Err(Error::ConstantInput));
        assert!(matches!(denoise(&model, &sample(2)), Err(Error::Shape(_))));
    }

    #[test]
    fn pair_uses_noisy_statistics() {
        let raw = sample(6);
        let truth = C2Matrix::from_fn(6, |i, j| 1.0 + 0.3 / (1.0 + (i as f64 - j as f64).abs()));
        let pair = TrainingPair::from_maps(&raw, &truth).unwrap();
        let back = destandardize(&pair.target, &pair.params);
        for (a, b) in back.values().iter().zip(truth.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(TrainingPair::from_maps(&raw, &sample(5)).is_err());
    }
}
