use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    batchnorm2d_eval, batchnorm2d_grad, batchnorm2d_train, conv2d, conv2d_grad,
    conv_transpose2d, conv_transpose2d_grad, elu, elu_grad, BatchNormCache, BatchNormParams,
    ConvGrads, ConvParams,
};
use crate::{Error, Result, Tensor4};

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FcDaeArchitecture {
    pub encoder_channels: Vec<usize>,
    pub kernel_size: usize,
    pub input_channels: usize,
}

impl Default for FcDaeArchitecture {
    fn default() -> Self {
        FcDaeArchitecture {
            encoder_channels: vec![1, 4, 8, 16, 32],
            kernel_size: 3,
            input_channels: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Transposed,
}

/// Shape of one layer as derived from the architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Batch norm + ELU follow the convolution.
    pub normalized: bool,
}

impl FcDaeArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size % 2 == 0 {
            return Err(Error::invalid(format!("kernel size {} is not odd", self.kernel_size)));
        }
        if self.encoder_channels.is_empty() {
            return Err(Error::invalid("encoder channel list is empty"));
        }
        if self.input_channels == 0 || self.encoder_channels.contains(&0) {
            return Err(Error::invalid("channel counts must be positive"));
        }
        Ok(())
    }

    /// Layer chain: encoder convolutions, then the mirrored transposed
    /// convolutions ending at `input_channels`.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut chain = vec![self.input_channels];
        chain.extend_from_slice(&self.encoder_channels);
        let mut specs: Vec<LayerSpec> = chain
            .windows(2)
            .map(|w| LayerSpec {
                kind: LayerKind::Conv,
                in_channels: w[0],
                out_channels: w[1],
                normalized: true,
            })
            .collect();
        let decoder: Vec<LayerSpec> = chain
            .windows(2)
            .rev()
            .map(|w| LayerSpec {
                kind: LayerKind::Transposed,
                in_channels: w[1],
                out_channels: w[0],
                normalized: true,
            })
            .collect();
        specs.extend(decoder);
        if let Some(last) = specs.last_mut() {
            last.normalized = false;
        }
        specs
    }

    /// Number of trainable values: kernels, biases, and batch-norm scale and
    /// shift.
    pub fn parameter_count(&self) -> usize {
        let k2 = self.kernel_size * self.kernel_size;
        self.layer_specs()
            .iter()
            .map(|s| {
                s.in_channels * s.out_channels * k2
                    + s.out_channels
                    + if s.normalized { 2 * s.out_channels } else { 0 }
            })
            .sum()
    }

    /// Length of the full state blob: trainable values plus running
    /// batch-norm statistics.
    pub fn state_len(&self) -> usize {
        let running: usize = self
            .layer_specs()
            .iter()
            .filter(|s| s.normalized)
            .map(|s| 2 * s.out_channels)
            .sum();
        self.parameter_count() + running
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub conv: ConvParams,
    pub norm: Option<BatchNormParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcDaeModel {
    arch: FcDaeArchitecture,
    layers: Vec<Layer>,
    seed: u64,
}

/// Saved activations of a train-mode forward pass.
pub struct Tape {
    steps: Vec<TapeStep>,
}

struct TapeStep {
    input: Tensor4,
    norm: Option<(BatchNormCache, Tensor4)>,
}

/// Kernels uniform in `±1/sqrt(fan_in)` with `fan_in = in_channels * k^2`,
/// zero biases, identity batch norm. Deterministic in `seed`.
pub fn build_model(arch: &FcDaeArchitecture, seed: u64) -> Result<FcDaeModel> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = arch.kernel_size;
    let layers = arch
        .layer_specs()
        .into_iter()
        .map(|spec| {
            let bound = 1.0 / ((spec.in_channels * k * k) as f64).sqrt();
            let dims = match spec.kind {
                LayerKind::Conv => [spec.out_channels, spec.in_channels, k, k],
                LayerKind::Transposed => [spec.in_channels, spec.out_channels, k, k],
            };
            let n: usize = dims.iter().product();
            let weight = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            Layer {
                kind: spec.kind,
                conv: ConvParams {
                    weight: Tensor4::from_vec(dims, weight).expect("dims match"),
                    bias: vec![0.0; spec.out_channels],
                },
                norm: spec.normalized.then(|| BatchNormParams::new(spec.out_channels)),
            }
        })
        .collect();
    Ok(FcDaeModel {
        arch: arch.clone(),
        layers,
        seed,
    })
}

impl FcDaeModel {
    pub fn architecture(&self) -> &FcDaeArchitecture {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    fn check_input(&self, batch: &Tensor4) -> Result<()> {
        if batch.channels() != self.arch.input_channels {
            return Err(Error::shape(format!(
                "model expects {} input channel(s), got {}",
                self.arch.input_channels,
                batch.channels()
            )));
        }
        Ok(())
    }

    /// Inference pass using running batch-norm statistics. Pure.
    pub fn forward(&self, batch: &Tensor4) -> Result<Tensor4> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            x = match layer.kind {
                LayerKind::Conv => conv2d(&x, &layer.conv)?,
                LayerKind::Transposed => conv_transpose2d(&x, &layer.conv)?,
            };
            if let Some(norm) = &layer.norm {
                x = elu(&batchnorm2d_eval(&x, norm)?);
            }
        }
        Ok(x)
    }

    /// Training pass with batch statistics; updates running statistics and
    /// records what [`FcDaeModel::backward`] needs.
    pub fn forward_train(&mut self, batch: &Tensor4) -> Result<(Tensor4, Tape)> {
        self.check_input(batch)?;
        let mut steps = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &mut self.layers {
            let z = match layer.kind {
                LayerKind::Conv => conv2d(&x, &layer.conv)?,
                LayerKind::Transposed => conv_transpose2d(&x, &layer.conv)?,
            };
            let input = core::mem::replace(&mut x, z);
            let norm = match &mut layer.norm {
                Some(params) => {
                    let (y, cache) = batchnorm2d_train(&x, params)?;
                    x = elu(&y);
                    Some((cache, y))
                }
                None => None,
            };
            steps.push(TapeStep { input, norm });
        }
        Ok((x, Tape { steps }))
    }

    /// Gradient of `<output, grad_out>` with respect to the trainable
    /// parameters, in [`FcDaeModel::trainable_parameters`] order.
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor4) -> Result<Vec<f64>> {
        if tape.steps.len() != self.layers.len() {
            return Err(Error::shape("tape does not match model depth"));
        }
        let mut per_layer: Vec<(ConvGrads, Option<(Vec<f64>, Vec<f64>)>)> =
            Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (layer, step) in self.layers.iter().zip(&tape.steps).rev() {
            let mut bn = None;
            if let (Some(params), Some((cache, pre_act))) = (&layer.norm, &step.norm) {
                let g_act = elu_grad(&g, pre_act)?;
                let grads = batchnorm2d_grad(&g_act, cache, params)?;
                g = grads.input;
                bn = Some((grads.gamma, grads.beta));
            }
            let conv = match layer.kind {
                LayerKind::Conv => conv2d_grad(&g, &step.input, &layer.conv)?,
                LayerKind::Transposed => conv_transpose2d_grad(&g, &step.input, &layer.conv)?,
            };
            g = conv.input.clone();
            per_layer.push((conv, bn));
        }
        per_layer.reverse();
        let mut flat = Vec::with_capacity(self.arch.parameter_count());
        for (conv, bn) in per_layer {
            flat.extend_from_slice(conv.weight.as_slice());
            flat.extend_from_slice(&conv.bias);
            if let Some((gamma, beta)) = bn {
                flat.extend_from_slice(&gamma);
                flat.extend_from_slice(&beta);
            }
        }
        Ok(flat)
    }

    /// Per layer: kernel, bias, then batch-norm gamma and beta when present.
    pub fn trainable_parameters(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.arch.parameter_count());
        for layer in &self.layers {
            flat.extend_from_slice(layer.conv.weight.as_slice());
            flat.extend_from_slice(&layer.conv.bias);
            if let Some(norm) = &layer.norm {
                flat.extend_from_slice(&norm.gamma);
                flat.extend_from_slice(&norm.beta);
            }
        }
        flat
    }

    pub fn set_trainable_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.arch.parameter_count() {
            return Err(Error::shape(format!(
                "{} parameters given, model has {}",
                flat.len(),
                self.arch.parameter_count()
            )));
        }
        let mut rest = flat;
        for layer in &mut self.layers {
            rest = take_into(rest, layer.conv.weight.as_mut_slice());
            rest = take_into(rest, &mut layer.conv.bias);
            if let Some(norm) = &mut layer.norm {
                rest = take_into(rest, &mut norm.gamma);
                rest = take_into(rest, &mut norm.beta);
            }
        }
        Ok(())
    }

    /// Full state in checkpoint order: per layer kernel, bias, then gamma,
    /// beta, running mean and running variance when the layer is normalized.
    pub fn state_blob(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.arch.state_len());
        for layer in &self.layers {
            flat.extend_from_slice(layer.conv.weight.as_slice());
            flat.extend_from_slice(&layer.conv.bias);
            if let Some(norm) = &layer.norm {
                flat.extend_from_slice(&norm.gamma);
                flat.extend_from_slice(&norm.beta);
                flat.extend_from_slice(&norm.running_mean);
                flat.extend_from_slice(&norm.running_var);
            }
        }
        flat
    }

    /// Inverse of [`FcDaeModel::state_blob`].
    pub fn from_state_blob(arch: &FcDaeArchitecture, seed: u64, blob: &[f64]) -> Result<Self> {
        let mut model = build_model(arch, seed)?;
        if blob.len() != arch.state_len() {
            return Err(Error::shape(format!(
                "state blob has {} values, architecture needs {}",
                blob.len(),
                arch.state_len()
            )));
        }
        let mut rest = blob;
        for layer in &mut model.layers {
            rest = take_into(rest, layer.conv.weight.as_mut_slice());
            rest = take_into(rest, &mut layer.conv.bias);
            if let Some(norm) = &mut layer.norm {
                rest = take_into(rest, &mut norm.gamma);
                rest = take_into(rest, &mut norm.beta);
                rest = take_into(rest, &mut norm.running_mean);
                rest = take_into(rest, &mut norm.running_var);
                if norm.running_var.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::invalid("negative running variance in state blob"));
                }
            }
        }
        Ok(model)
    }
}

fn take_into<'a>(src: &'a [f64], dst: &mut [f64]) -> &'a [f64] {
    let (head, tail) = src.split_at(dst.len());
    dst.copy_from_slice(head);
    tail
}
