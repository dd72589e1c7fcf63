use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{build_model, FcDaeArchitecture, FcDaeModel, TrainingPair};
use crate::nn::{mse_loss, AdamConfig, AdamState};
use crate::{Error, Result, Tensor4};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Training stops once an epoch's mean loss drops below this.
    pub early_stop_loss_threshold: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 8,
            max_epochs: 30,
            early_stop_loss_threshold: 1e-3,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.early_stop_loss_threshold > 0.0) {
            return Err(Error::invalid("early_stop_loss_threshold must be positive"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    /// Sample-weighted mean loss of each completed epoch.
    pub loss_history: Vec<f64>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.loss_history.len()
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_history.last().copied().unwrap_or(f64::NAN)
    }
}

pub fn train(model: &mut FcDaeModel, data: &[TrainingPair], config: &TrainConfig) -> Result<TrainReport> {
    train_with_progress(model, data, config, |_, _| {})
}

/// Like [`train`], calling `progress(epoch, mean_loss)` after every epoch.
///
/// Pairs are grouped by size. Each epoch shuffles every group, cuts it into
/// batches of at most `batch_size`, and visits the batches in shuffled
/// order.
pub fn train_with_progress(
    model: &mut FcDaeModel,
    data: &[TrainingPair],
    config: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, pair) in data.iter().enumerate() {
        groups.entry(pair.size()).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut params = model.trainable_parameters();
    let mut adam = AdamState::new(params.len(), config.adam())?;
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..config.max_epochs {
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for members in groups.values_mut() {
            members.shuffle(&mut rng);
            batches.extend(members.chunks(config.batch_size).map(<[usize]>::to_vec));
        }
        batches.shuffle(&mut rng);

        let mut weighted = 0.0;
        for batch in &batches {
            let (noisy, target) = stack(data, batch)?;
            let (pred, tape) = model.forward_train(&noisy)?;
            let (loss, grad) = mse_loss(&pred, &target)?;
            if !loss.is_finite() {
                return Err(Error::invalid("training loss is not finite"));
            }
            let grads = model.backward(&tape, &grad)?;
            adam.step(&mut params, &grads)?;
            model.set_trainable_parameters(&params)?;
            weighted += loss * batch.len() as f64;
        }
        let epoch_loss = weighted / data.len() as f64;
        history.push(epoch_loss);
        progress(epoch, epoch_loss);
        if epoch_loss < config.early_stop_loss_threshold {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainReport {
        loss_history: history,
        stopped_early,
    })
}

fn stack(data: &[TrainingPair], batch: &[usize]) -> Result<(Tensor4, Tensor4)> {
    let n = data[batch[0]].size();
    let mut noisy = Vec::with_capacity(batch.len() * n * n);
    let mut target = Vec::with_capacity(batch.len() * n * n);
    for &i in batch {
        noisy.extend_from_slice(data[i].noisy.values());
        target.extend_from_slice(data[i].target.values());
    }
    let dims = [batch.len(), 1, n, n];
    Ok((Tensor4::from_vec(dims, noisy)?, Tensor4::from_vec(dims, target)?))
}

/// One freshly initialized and trained model per seed. Seeds must be
/// distinct; everything else about training is shared.
pub fn train_ensemble(
    arch: &FcDaeArchitecture,
    data: &[TrainingPair],
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<(FcDaeModel, TrainReport)>> {
    for (i, s) in seeds.iter().enumerate() {
        if seeds[..i].contains(s) {
            return Err(Error::DuplicateSeed(*s));
        }
    }
    train_members(arch, data, config, seeds)
}

pub(crate) fn train_members(
    arch: &FcDaeArchitecture,
    data: &[TrainingPair],
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<(FcDaeModel, TrainReport)>> {
    seeds
        .iter()
        .map(|&seed| {
            let mut model = build_model(arch, seed)?;
            let report = train(&mut model, data, config)?;
            Ok((model, report))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c2::C2Matrix;
    use num_traits::Float;

    fn small_arch() -> FcDaeArchitecture {
        FcDaeArchitecture {
            encoder_channels: alloc::vec![2, 4],
            ..Default::default()
        }
    }

    /// Smooth target with a noisy copy as input.
    fn toy_pairs(count: usize, n: usize, seed: u64) -> Vec<TrainingPair> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|k| {
                let tau = 2.0 + k as f64;
                let truth = C2Matrix::from_fn(n, |i, j| 1.0 + 0.5 * (-2.0 * (i.abs_diff(j) as f64) / tau).exp());
                let raw = C2Matrix::from_fn(n, |i, j| truth.get(i, j) + 0.1 * rng.random_range(-1.0..1.0));
                TrainingPair::from_maps(&raw, &truth).unwrap()
            })
            .collect()
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut model = build_model(&small_arch(), 0).unwrap();
        assert_eq!(train(&mut model, &[], &TrainConfig::default()), Err(Error::EmptyDataset));
        let bad = TrainConfig { max_epochs: 0, ..Default::default() };
        assert!(train(&mut model, &toy_pairs(1, 6, 0), &bad).is_err());
        let bad = TrainConfig { early_stop_loss_threshold: 0.0, ..Default::default() };
        assert!(train(&mut model, &toy_pairs(1, 6, 0), &bad).is_err());
    }

    #[test]
    fn huge_threshold_stops_after_one_epoch() {
        let mut model = build_model(&small_arch(), 0).unwrap();
        let cfg = TrainConfig { early_stop_loss_threshold: 1e300, ..Default::default() };
        let report = train(&mut model, &toy_pairs(4, 8, 1), &cfg).unwrap();
        assert_eq!(report.epochs_run(), 1);
        assert!(report.stopped_early);
    }

    #[test]
    fn deterministic_and_learning() {
        let data = toy_pairs(12, 10, 2);
        let cfg = TrainConfig {
            learning_rate: 5e-3,
            batch_size: 4,
            max_epochs: 15,
            ..Default::default()
        };
        let run = || {
            let mut model = build_model(&small_arch(), 7).unwrap();
            let report = train(&mut model, &data, &cfg).unwrap();
            (model, report)
        };
        let (m1, r1) = run();
        let (m2, r2) = run();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
        assert_eq!(r1.epochs_run(), 15);
        assert!(r1.final_loss() < r1.loss_history[0]);
    }

    #[test]
    fn mixed_sizes_train_in_separate_batches() {
        let mut data = toy_pairs(3, 6, 3);
        data.extend(toy_pairs(3, 9, 4));
        let mut model = build_model(&small_arch(), 1).unwrap();
        let mut seen = Vec::new();
        let cfg = TrainConfig { max_epochs: 2, ..Default::default() };
        let report = train_with_progress(&mut model, &data, &cfg, |e, l| seen.push((e, l))).unwrap();
        assert_eq!(seen.len(), 2);
        assert_eq!(seen[1].1, report.final_loss());
    }

    #[test]
    fn ensemble_seeds() {
        let data = toy_pairs(4, 6, 5);
        let cfg = TrainConfig { max_epochs: 2, ..Default::default() };
        assert_eq!(
            train_ensemble(&small_arch(), &data, &cfg, &[1, 2, 1]).unwrap_err(),
            Error::DuplicateSeed(1)
        );
        let same = train_members(&small_arch(), &data, &cfg, &[3, 3]).unwrap();
        assert_eq!(same[0], same[1]);
        let distinct = train_ensemble(&small_arch(), &data, &cfg, &[3, 4]).unwrap();
        assert_ne!(distinct[0].0.trainable_parameters(), distinct[1].0.trainable_parameters());
    }
}
