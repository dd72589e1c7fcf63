//! Synthetic ground truth and speckle-statistics noisy realizations.
//!
//! Truth maps follow `C2 = 1 + β₀ g1(t1, t2)²`. Noisy maps come from `P`
//! pixels, each the average of `M` independent complex Gaussian speckle
//! modes whose temporal covariance is the `g1` matrix, optionally turned
//! into photon counts by Poisson sampling. With `M` modes the contrast is
//! `β₀ = 1/M`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::c2::{compute_c2, crop_diagonal_tiles, reverse_age, subsample_frames, C2Matrix, PixelSeries};
use crate::linalg::{cholesky, symmetric_eigen};
use crate::{Error, Result};

/// Diagonal loading added to the `g1` covariance before factorization.
pub const PSD_REGULARIZATION: f64 = 1e-10;

/// Parametric form of the field correlation `g1(t1, t2)`. Times are in
/// frames.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum DynamicsSpec {
    /// `exp(-(τ/τc)^γ)`.
    StationaryKww { tau_c: f64, gamma: f64 },
    /// KWW with `τc(t_age) = tau_c0 · (1 + t_age)^aging_exponent`.
    AgingKww { tau_c0: f64, aging_exponent: f64, gamma: f64 },
    /// `(1 - a)·KWW + a·exp(-Γτ)·cos(ωτ)`; the convex mix keeps `|g1| ≤ 1`.
    Oscillatory { tau_c: f64, gamma: f64, amplitude: f64, omega: f64, damping: f64 },
    /// `w1·KWW(τc1, γ1) + w2·KWW(τc2, γ2)` with `w1 + w2 = 1`.
    TwoStep { weight1: f64, tau_c1: f64, gamma1: f64, weight2: f64, tau_c2: f64, gamma2: f64 },
}

fn kww(tau: f64, tau_c: f64, gamma: f64) -> f64 {
    if tau == 0.0 {
        1.0
    } else {
        (-(tau / tau_c).powf(gamma)).exp()
    }
}

fn check_kww(name: &str, tau_c: f64, gamma: f64) -> Result<()> {
    if !(tau_c > 0.0) || !tau_c.is_finite() {
        return Err(Error::invalid(format!("{name}: tau_c must be positive, got {tau_c}")));
    }
    if !(gamma > 0.0 && gamma <= 2.0) {
        return Err(Error::invalid(format!("{name}: gamma must lie in (0, 2], got {gamma}")));
    }
    Ok(())
}

impl DynamicsSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DynamicsSpec::StationaryKww { tau_c, gamma } => check_kww("stationary_kww", tau_c, gamma),
            DynamicsSpec::AgingKww { tau_c0, aging_exponent, gamma } => {
                check_kww("aging_kww", tau_c0, gamma)?;
                if !aging_exponent.is_finite() {
                    return Err(Error::invalid("aging_kww: aging_exponent must be finite"));
                }
                Ok(())
            }
            DynamicsSpec::Oscillatory { tau_c, gamma, amplitude, omega, damping } => {
                check_kww("oscillatory", tau_c, gamma)?;
                if !(0.0..=1.0).contains(&amplitude) {
                    return Err(Error::invalid("oscillatory: amplitude must lie in [0, 1]"));
                }
                if !(omega >= 0.0) || !(damping >= 0.0) || !omega.is_finite() || !damping.is_finite() {
                    return Err(Error::invalid("oscillatory: omega and damping must be non-negative"));
                }
                Ok(())
            }
            DynamicsSpec::TwoStep { weight1, tau_c1, gamma1, weight2, tau_c2, gamma2 } => {
                check_kww("two_step", tau_c1, gamma1)?;
                check_kww("two_step", tau_c2, gamma2)?;
                let ok = (0.0..=1.0).contains(&weight1) && (0.0..=1.0).contains(&weight2);
                if !ok || (weight1 + weight2 - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("two_step: weights must lie in [0, 1] and sum to 1"));
                }
                Ok(())
            }
        }
    }

    /// Short identifier used in manifests and reports.
    pub fn kind(&self) -> &'static str {
        match self {
            DynamicsSpec::StationaryKww { .. } => "stationary_kww",
            DynamicsSpec::AgingKww { .. } => "aging_kww",
            DynamicsSpec::Oscillatory { .. } => "oscillatory",
            DynamicsSpec::TwoStep { .. } => "two_step",
        }
    }

    fn eval(&self, t1: f64, t2: f64) -> f64 {
        let tau = (t1 - t2).abs();
        match *self {
            DynamicsSpec::StationaryKww { tau_c, gamma } => kww(tau, tau_c, gamma),
            DynamicsSpec::AgingKww { tau_c0, aging_exponent, gamma } => {
                let age = 0.5 * (t1 + t2);
                kww(tau, tau_c0 * (1.0 + age).powf(aging_exponent), gamma)
            }
            DynamicsSpec::Oscillatory { tau_c, gamma, amplitude, omega, damping } => {
                (1.0 - amplitude) * kww(tau, tau_c, gamma)
                    + amplitude * (-damping * tau).exp() * (omega * tau).cos()
            }
            DynamicsSpec::TwoStep { weight1, tau_c1, gamma1, weight2, tau_c2, gamma2 } => {
                weight1 * kww(tau, tau_c1, gamma1) + weight2 * kww(tau, tau_c2, gamma2)
            }
        }
    }
}

pub fn g1_value(spec: &DynamicsSpec, t1: f64, t2: f64) -> Result<f64> {
    spec.validate()?;
    if !(t1 >= 0.0) || !(t2 >= 0.0) {
        return Err(Error::invalid("times must be non-negative"));
    }
    Ok(spec.eval(t1, t2))
}

/// `values[t1][t2] = 1 + beta0 · g1(t1, t2)²`.
pub fn generate_truth_c2(spec: &DynamicsSpec, beta0: f64, n_frames: usize, frame_interval_s: f64) -> Result<C2Matrix> {
    spec.validate()?;
    if n_frames < 2 {
        return Err(Error::invalid("truth map needs at least 2 frames"));
    }
    if !(beta0 >= 0.0) || !beta0.is_finite() {
        return Err(Error::invalid(format!("contrast must be non-negative, got {beta0}")));
    }
    Ok(C2Matrix::from_fn(n_frames, |i, j| {
        let g = spec.eval(i as f64, j as f64);
        1.0 + beta0 * g * g
    })
    .with_meta(frame_interval_s, ""))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SpeckleSpec {
    pub n_pixels: usize,
    pub n_modes: usize,
    /// Mean photon count per pixel and frame; `None` disables Poisson
    /// sampling.
    pub mean_counts: Option<f64>,
}

impl Default for SpeckleSpec {
    fn default() -> Self {
        SpeckleSpec {
            n_pixels: 4000,
            n_modes: 1,
            mean_counts: Some(5.0),
        }
    }
}

impl SpeckleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_pixels < 2 {
            return Err(Error::invalid("speckle needs at least 2 pixels"));
        }
        if self.n_modes == 0 {
            return Err(Error::invalid("speckle needs at least 1 mode"));
        }
        if let Some(mu) = self.mean_counts {
            if !(mu > 0.0) || !mu.is_finite() {
                return Err(Error::invalid(format!("mean counts must be positive, got {mu}")));
            }
        }
        Ok(())
    }

    /// `β₀ = 1 / M`.
    pub fn contrast(&self) -> f64 {
        1.0 / self.n_modes as f64
    }
}

/// Lower factor `F` with `F Fᵀ ≈ G + δI`. Falls back to a clipped
/// eigen-decomposition when `G` is not numerically positive definite, which
/// happens for some aging specs.
fn covariance_factor(spec: &DynamicsSpec, n: usize) -> Result<Vec<f64>> {
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] = spec.eval(i as f64, j as f64);
        }
        g[i * n + i] += PSD_REGULARIZATION;
    }
    if let Ok(l) = cholesky(&g, n) {
        return Ok(l);
    }
    let (vals, vecs) = symmetric_eigen(&g, n)?;
    let mut f = vec![0.0; n * n];
    for k in 0..n {
        let s = vals[k].max(0.0).sqrt();
        for i in 0..n {
            f[i * n + k] = vecs[i * n + k] * s;
        }
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization);
    }
    Ok(f)
}

/// Draws a pixel series and its C2. Deterministic in `seed`.
pub fn simulate_noisy_c2(
    spec: &DynamicsSpec,
    speckle: &SpeckleSpec,
    n_frames: usize,
    seed: u64,
) -> Result<(PixelSeries, C2Matrix)> {
    spec.validate()?;
    speckle.validate()?;
    if n_frames < 2 {
        return Err(Error::invalid("simulation needs at least 2 frames"));
    }
    let n = n_frames;
    let factor = covariance_factor(spec, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = speckle.n_modes;
    let mut intensities = vec![0.0; speckle.n_pixels * n];
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for row in intensities.chunks_exact_mut(n) {
        for _ in 0..m {
            for k in 0..n {
                a[k] = StandardNormal.sample(&mut rng);
                b[k] = StandardNormal.sample(&mut rng);
            }
            // E = F (a + i b) / √2 has E[|E_t|²] = G[t][t] ≈ 1.
            for t in 0..n {
                let f = &factor[t * n..(t + 1) * n];
                let re: f64 = f.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() * FRAC_1_SQRT_2;
                let im: f64 = f.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() * FRAC_1_SQRT_2;
                row[t] += (re * re + im * im) / m as f64;
            }
        }
        if let Some(mu) = speckle.mean_counts {
            for v in row.iter_mut() {
                let lambda = mu * *v;
                *v = if lambda > 0.0 {
                    Poisson::new(lambda).map_err(|_| Error::invalid("bad Poisson mean"))?.sample(&mut rng)
                } else {
                    0.0
                };
            }
        }
    }
    let series = PixelSeries::new(speckle.n_pixels, n, intensities)?;
    let c2 = compute_c2(&series)?;
    Ok((series, c2))
}

/// A paired truth map and noisy realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub c2_truth: C2Matrix,
    pub c2_raw: C2Matrix,
    pub series: PixelSeries,
    pub dynamics: DynamicsSpec,
    pub speckle: SpeckleSpec,
}

/// Truth with `β₀ = 1/M` plus one simulated realization.
pub fn generate_sample(
    dynamics: &DynamicsSpec,
    speckle: &SpeckleSpec,
    n_frames: usize,
    frame_interval_s: f64,
    seed: u64,
) -> Result<SyntheticSample> {
    let c2_truth = generate_truth_c2(dynamics, speckle.contrast(), n_frames, frame_interval_s)?;
    let (series, raw) = simulate_noisy_c2(dynamics, speckle, n_frames, seed)?;
    Ok(SyntheticSample {
        c2_truth,
        c2_raw: raw.with_meta(frame_interval_s, ""),
        series: series.with_meta(frame_interval_s, ""),
        dynamics: dynamics.clone(),
        speckle: speckle.clone(),
    })
}

/// Augmentation switches applied identically to raw and truth maps.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Augmentation {
    pub reverse_age: bool,
    /// Extra copies subsampled at each of these frame intervals.
    pub subsample: Vec<usize>,
}

impl Default for Augmentation {
    fn default() -> Self {
        Augmentation {
            reverse_age: true,
            subsample: vec![2],
        }
    }
}

impl Augmentation {
    /// Copies produced per base pair, before cropping.
    pub fn multiplicity(&self) -> usize {
        (1 + usize::from(self.reverse_age)) * (1 + self.subsample.len())
    }

    /// The original pair first, then its reversal, each followed by its
    /// subsampled copies.
    pub fn apply(&self, raw: &C2Matrix, truth: &C2Matrix) -> Result<Vec<(C2Matrix, C2Matrix)>> {
        if raw.n_frames() != truth.n_frames() {
            return Err(Error::shape("raw and truth differ in size"));
        }
        let mut bases = vec![(raw.clone(), truth.clone())];
        if self.reverse_age {
            bases.push((reverse_age(raw), reverse_age(truth)));
        }
        let mut out = Vec::with_capacity(self.multiplicity());
        for (r, t) in bases {
            for &k in &self.subsample {
                out.push((subsample_frames(&r, k)?, subsample_frames(&t, k)?));
            }
            out.insert(out.len() - self.subsample.len(), (r, t));
        }
        Ok(out)
    }
}

/// Crops a pair into aligned diagonal tiles.
pub fn crop_pair(raw: &C2Matrix, truth: &C2Matrix, size: usize, stride: usize) -> Result<Vec<(C2Matrix, C2Matrix)>> {
    let r = crop_diagonal_tiles(raw, size, stride)?;
    let t = crop_diagonal_tiles(truth, size, stride)?;
    Ok(r.into_iter().zip(t).collect())
}

/// Sample counts per split: validation and test get `floor(f · n)`, the
/// remainder goes to training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

pub fn split_counts(n: usize, fractions: [f64; 3]) -> Result<SplitCounts> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions {fractions:?} must lie in [0, 1] and sum to 1"
        )));
    }
    let val = (fractions[1] * n as f64 + 1e-9).floor() as usize;
    let test = (fractions[2] * n as f64 + 1e-9).floor() as usize;
    Ok(SplitCounts {
        train: n - val - test,
        val,
        test,
    })
}
