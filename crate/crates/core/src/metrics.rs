//! Reliability metrics for denoised maps.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::c2::{extract_g2, C2Matrix};
use crate::fit::{fit_g2, KwwParams, ModelKind};
use crate::stats;
use crate::{Error, Result};

/// Two-sided 95% normal quantile.
pub const DEFAULT_Z: f64 = 1.96;
/// Relative contrast shifts beyond this are considered biased.
pub const CONTRAST_BIAS_BAND: f64 = 0.2;
/// Maps scoring below this SSIM against their raw input are unreliable.
pub const SSIM_THRESHOLD: f64 = 0.15;
pub const SSIM_WINDOW: usize = 7;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Observed contrast: 99th minus 1st percentile of the off-diagonal
/// entries, with linearly interpolated percentiles.
pub fn estimate_beta_obs(c2: &C2Matrix) -> Result<f64> {
    if c2.n_frames() < 2 {
        return Err(Error::invalid("contrast needs at least 2 frames"));
    }
    let mut off = c2.off_diagonal();
    off.sort_by(f64::total_cmp);
    Ok(stats::percentile_sorted(&off, 99.0) - stats::percentile_sorted(&off, 1.0))
}

/// `(beta_denoised - beta_raw) / beta_raw`.
pub fn contrast_shift(beta_raw: f64, beta_denoised: f64) -> Result<f64> {
    if !(beta_raw > 0.0) {
        return Err(Error::DegenerateContrast);
    }
    Ok((beta_denoised - beta_raw) / beta_raw)
}

pub fn exceeds_bias_band(delta_beta_rel: f64) -> bool {
    delta_beta_rel.abs() > CONTRAST_BIAS_BAND
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcfTest {
    pub pass: bool,
    /// Row-averaged normalized autocorrelation for lags `0..=max_lag`;
    /// empty when every row had zero variance.
    pub mean_acf: Vec<f64>,
    pub bound: f64,
    pub max_abs_beyond_lag0: f64,
}

/// Whiteness test on the rows of `denoised - raw`. Each row is centered and
/// its autocorrelation normalized by the lag-0 energy; the row average must
/// stay within `±z/√T` at every lag from 1 to `max_lag`.
pub fn residual_acf_test(raw: &C2Matrix, denoised: &C2Matrix, max_lag: usize, z: f64) -> Result<AcfTest> {
    let n = raw.n_frames();
    if denoised.n_frames() != n {
        return Err(Error::shape(format!("raw is {n}x{n}, denoised is {0}x{0}", denoised.n_frames())));
    }
    if max_lag >= n {
        return Err(Error::invalid(format!("max_lag {max_lag} must be below T = {n}")));
    }
    let bound = z / (n as f64).sqrt();
    let mut sum = vec![0.0; max_lag + 1];
    let mut rows = 0usize;
    let mut x = vec![0.0; n];
    for i in 0..n {
        for ((xv, d), r) in x.iter_mut().zip(denoised.row(i)).zip(raw.row(i)) {
            *xv = d - r;
        }
        let m = stats::mean(&x);
        x.iter_mut().for_each(|v| *v -= m);
        let energy: f64 = x.iter().map(|v| v * v).sum();
        if !(energy > 0.0) {
            continue;
        }
        rows += 1;
        for (lag, s) in sum.iter_mut().enumerate() {
            *s += x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / energy;
        }
    }
    if rows == 0 {
        return Ok(AcfTest { pass: true, mean_acf: Vec::new(), bound, max_abs_beyond_lag0: 0.0 });
    }
    let mean_acf: Vec<f64> = sum.iter().map(|s| s / rows as f64).collect();
    let max_abs = mean_acf[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(AcfTest { pass: max_abs <= bound, mean_acf, bound, max_abs_beyond_lag0: max_abs })
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let d2 = (y as f64 - c).powi(2) + (x as f64 - c).powi(2);
            w[y * SSIM_WINDOW + x] = (-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean SSIM over all fully contained 7×7 Gaussian windows, with the
/// dynamic range `L` taken from `raw` (1 if `raw` is flat).
pub fn ssim(raw: &C2Matrix, other: &C2Matrix) -> Result<f64> {
    let (lo, hi) = raw.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    ssim_with_range(raw, other, range)
}

/// [`ssim`] with an explicit dynamic range; symmetric in its two maps.
pub fn ssim_with_range(a: &C2Matrix, b: &C2Matrix, range: f64) -> Result<f64> {
    let n = a.n_frames();
    if b.n_frames() != n {
        return Err(Error::shape(format!("maps are {n}x{n} and {0}x{0}", b.n_frames())));
    }
    if n < SSIM_WINDOW {
        return Err(Error::shape(format!("map of size {n} is smaller than the SSIM window")));
    }
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let win = gaussian_window();
    let (av, bv) = (a.values(), b.values());
    let span = n - SSIM_WINDOW + 1;
    let mut total = 0.0;
    for y0 in 0..span {
        for x0 in 0..span {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for wy in 0..SSIM_WINDOW {
                for wx in 0..SSIM_WINDOW {
                    let w = win[wy * SSIM_WINDOW + wx];
                    let k = (y0 + wy) * n + x0 + wx;
                    let (p, q) = (av[k], bv[k]);
                    ma += w * p;
                    mb += w * q;
                    saa += w * p * p;
                    sbb += w * q * q;
                    sab += w * p * q;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (span * span) as f64)
}

/// `log10(mean(D) / var(D))` for the values `D` on the `tau_star`
/// off-diagonal, with population variance.
pub fn snr(c2: &C2Matrix, tau_star: usize) -> Result<f64> {
    let n = c2.n_frames();
    if tau_star == 0 || tau_star >= n {
        return Err(Error::invalid(format!("tau_star {tau_star} must lie in [1, {n})")));
    }
    snr_of(&c2.diagonal_at(tau_star))
}

/// The SNR statistic on an arbitrary set of values.
pub fn snr_of(values: &[f64]) -> Result<f64> {
    let mean = stats::mean(values);
    let var = stats::variance(values);
    if !(var > 0.0) {
        return Err(Error::DegenerateDiagonal("zero variance".into()));
    }
    if !(mean > 0.0) {
        return Err(Error::DegenerateDiagonal(format!("non-positive mean {mean}")));
    }
    Ok((mean / var).log10())
}

/// Smallest integer lag `τ ≥ 1` at which `β·exp(-2(τ/τc)^γ) ≤ β/e`, i.e.
/// `(τ/τc)^γ ≥ 1/2`.
pub fn find_tau_star(p: &KwwParams) -> Result<usize> {
    p.validate()?;
    let guess = (p.tau_c * 0.5f64.powf(1.0 / p.gamma)).ceil().max(1.0);
    if !guess.is_finite() || guess > 1e15 {
        return Err(Error::invalid("tau_star is out of range"));
    }
    let reached = |t: f64| (t / p.tau_c).powf(p.gamma) >= 0.5;
    let mut tau = guess as usize;
    while tau > 1 && reached((tau - 1) as f64) {
        tau -= 1;
    }
    while !reached(tau as f64) {
        tau += 1;
    }
    Ok(tau)
}

/// KWW fit of the map's g2 followed by [`find_tau_star`], clamped to
/// `[1, T - 2]` so the chosen diagonal keeps at least two entries.
pub fn tau_star_from_map(c2: &C2Matrix) -> Result<usize> {
    let n = c2.n_frames();
    if n < 3 {
        return Err(Error::invalid("tau_star needs at least 3 frames"));
    }
    let fit = fit_g2(&extract_g2(c2)?, ModelKind::Kww, None, None)?;
    Ok(find_tau_star(fit.params.kww())?.clamp(1, n - 2))
}

/// Mean over pixels of the population variance across the maps.
pub fn ensemble_variance(maps: &[C2Matrix]) -> Result<f64> {
    if maps.len() < 2 {
        return Err(Error::TooFewModels(maps.len()));
    }
    let n = maps[0].n_frames();
    if maps.iter().any(|m| m.n_frames() != n) {
        return Err(Error::shape("ensemble maps differ in size"));
    }
    let mut column = vec![0.0; maps.len()];
    let mut total = 0.0;
    for k in 0..n * n {
        for (c, m) in column.iter_mut().zip(maps) {
            *c = m.values()[k];
        }
        total += stats::variance(&column);
    }
    Ok(total / (n * n) as f64)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReliabilityReport {
    pub beta_obs_raw: f64,
    pub beta_obs_denoised: f64,
    pub delta_beta_rel: f64,
    pub acf_pass: bool,
    pub acf_max_abs_beyond_lag0: f64,
    pub acf_bound: f64,
    pub ssim: f64,
    pub snr_raw: f64,
    pub snr_denoised: f64,
    pub tau_star: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MetricsConfig {
    pub z: f64,
    pub max_lag: usize,
    pub ssim_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { z: DEFAULT_Z, max_lag: 20, ssim_threshold: SSIM_THRESHOLD }
    }
}

/// All metrics for one raw/denoised pair. `tau_star` defaults to the one
/// found from the denoised map, falling back to the raw map when that fit
/// fails. `max_lag` is capped at `T - 1`.
pub fn reliability_report(
    raw: &C2Matrix,
    denoised: &C2Matrix,
    config: &MetricsConfig,
    tau_star: Option<usize>,
) -> Result<ReliabilityReport> {
    let n = raw.n_frames();
    if denoised.n_frames() != n {
        return Err(Error::shape(format!("raw is {n}x{n}, denoised is {0}x{0}", denoised.n_frames())));
    }
    let tau_star = match tau_star {
        Some(t) => t,
        None => tau_star_from_map(denoised).or_else(|_| tau_star_from_map(raw))?,
    };
    let beta_obs_raw = estimate_beta_obs(raw)?;
    let beta_obs_denoised = estimate_beta_obs(denoised)?;
    let acf = residual_acf_test(raw, denoised, config.max_lag.min(n - 1), config.z)?;
    Ok(ReliabilityReport {
        beta_obs_raw,
        beta_obs_denoised,
        delta_beta_rel: contrast_shift(beta_obs_raw, beta_obs_denoised)?,
        acf_pass: acf.pass,
        acf_max_abs_beyond_lag0: acf.max_abs_beyond_lag0,
        acf_bound: acf.bound,
        ssim: ssim(raw, denoised)?,
        snr_raw: snr(raw, tau_star)?,
        snr_denoised: snr(denoised, tau_star)?,
        tau_star,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleVarianceReport {
    pub per_sample_variance: Vec<f64>,
    pub mean_variance: f64,
    pub beta_obs: Vec<f64>,
    pub ratio_per_sample: Vec<f64>,
    pub median_ratio: f64,
    pub p10_ratio: f64,
    pub p90_ratio: f64,
}

impl EnsembleVarianceReport {
    /// `samples[s]` holds the k denoised maps of sample `s`; `beta_obs[s]`
    /// is the observed contrast each variance is compared against.
    pub fn new(samples: &[Vec<C2Matrix>], beta_obs: &[f64]) -> Result<Self> {
        if samples.is_empty() || samples.len() != beta_obs.len() {
            return Err(Error::shape("need one contrast per ensemble sample"));
        }
        let per_sample_variance = samples.iter().map(|maps| ensemble_variance(maps)).collect::<Result<Vec<_>>>()?;
        let ratio_per_sample = per_sample_variance
            .iter()
            .zip(beta_obs)
            .map(|(v, b)| if *b > 0.0 { Ok(v / b) } else { Err(Error::DegenerateContrast) })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleVarianceReport {
            mean_variance: stats::mean(&per_sample_variance),
            median_ratio: stats::median(&ratio_per_sample),
            p10_ratio: stats::percentile(&ratio_per_sample, 10.0),
            p90_ratio: stats::percentile(&ratio_per_sample, 90.0),
            per_sample_variance,
            beta_obs: beta_obs.to_vec(),
            ratio_per_sample,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_truth_c2, DynamicsSpec};
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_map(n: usize, seed: u64) -> C2Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n * n).map(|_| rng.random_range(1.0..1.3)).collect();
        C2Matrix::symmetrized(n, v).unwrap()
    }

    #[test]
    fn beta_obs_examples() {
        assert_eq!(estimate_beta_obs(&C2Matrix::from_fn(5, |_, _| 1.3)).unwrap(), 0.0);
        // Off-diagonal entries split evenly between 1.0 and 1.2.
        let two = C2Matrix::from_fn(4, |i, j| if i == j { 9.0 } else if i.min(j) == 0 { 1.0 } else { 1.2 });
        let off = two.off_diagonal();
        assert_eq!(off.iter().filter(|&&v| v == 1.0).count(), off.len() / 2);
        assert_eq!(estimate_beta_obs(&two).unwrap(), 1.2 - 1.0);
        // Lag-1 entries keep most of the contrast and the far corners reach
        // the baseline, so the percentile spread sits just under beta0.
        let truth = generate_truth_c2(&DynamicsSpec::StationaryKww { tau_c: 20.0, gamma: 1.0 }, 0.25, 128, 1.0).unwrap();
        let b = estimate_beta_obs(&truth).unwrap();
        assert!((0.2..=0.25).contains(&b), "{b}");
        // With tau_c far beyond the map every entry sits near 1 + beta0.
        let frozen = generate_truth_c2(&DynamicsSpec::StationaryKww { tau_c: 1e4, gamma: 1.0 }, 0.25, 64, 1.0).unwrap();
        assert!(estimate_beta_obs(&frozen).unwrap() < 0.01);
    }

    #[test]
    fn beta_obs_shift_and_scale() {
        let m = random_map(12, 1);
        let b = estimate_beta_obs(&m).unwrap();
        let shifted = C2Matrix::from_fn(12, |i, j| m.get(i, j) + 5.0);
        let scaled = C2Matrix::from_fn(12, |i, j| m.get(i, j) * 3.0);
        assert!((estimate_beta_obs(&shifted).unwrap() - b).abs() < 1e-12);
        assert!((estimate_beta_obs(&scaled).unwrap() - 3.0 * b).abs() < 1e-12);
    }

    #[test]
    fn contrast_shift_examples() {
        assert_eq!(contrast_shift(0.2, 0.2).unwrap(), 0.0);
        assert!((contrast_shift(0.2, 0.19).unwrap() + 0.05).abs() < 1e-12);
        let d = contrast_shift(0.05, 0.07).unwrap();
        assert!((d - 0.4).abs() < 1e-12 && exceeds_bias_band(d));
        assert!(!exceeds_bias_band(-0.05));
        assert_eq!(contrast_shift(0.0, 0.1), Err(Error::DegenerateContrast));
    }

    #[test]
    fn acf_zero_residual_passes() {
        let m = random_map(10, 2);
        let t = residual_acf_test(&m, &m, 5, DEFAULT_Z).unwrap();
        assert!(t.pass && t.mean_acf.is_empty());
        assert!((t.bound - 1.96 / 10f64.sqrt()).abs() < 1e-15);
        assert!(residual_acf_test(&m, &random_map(9, 1), 3, DEFAULT_Z).is_err());
        assert!(residual_acf_test(&m, &m, 10, DEFAULT_Z).is_err());
    }

    /// The residual rows are what the test inspects, so build a zero "raw"
    /// map and a "denoised" map whose rows are the residual (symmetry is
    /// not needed for this check and is imposed by averaging with zero
    /// contribution, so rows are set directly through from_fn).
    fn residual_pair(rows: impl Fn(usize, usize) -> f64, n: usize) -> (C2Matrix, C2Matrix) {
        let raw = C2Matrix::from_fn(n, |_, _| 0.0);
        let den = C2Matrix::symmetrized(n, (0..n * n).map(|k| rows(k / n, k % n)).collect()).unwrap();
        (raw, den)
    }

    #[test]
    fn acf_white_noise_passes_most_seeds() {
        let n = 400;
        let mut passes = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
            // Symmetrizing keeps entries white along each row.
            let (raw, den) = residual_pair(|i, j| v[i * n + j], n);
            if residual_acf_test(&raw, &den, 20, DEFAULT_Z).unwrap().pass {
                passes += 1;
            }
        }
        assert!(passes >= 90, "{passes} of 100 white-noise seeds passed");
    }

    #[test]
    fn acf_sinusoid_fails() {
        let n = 64;
        let (raw, den) = residual_pair(|i, j| (2.0 * PI * j as f64 / 16.0).sin() + (2.0 * PI * i as f64 / 16.0).sin(), n);
        let t = residual_acf_test(&raw, &den, 20, DEFAULT_Z).unwrap();
        assert!(!t.pass);
        assert!(t.mean_acf[16] > 0.5, "acf at 16 = {}", t.mean_acf[16]);
        assert!(t.mean_acf[8] < -0.5);
    }

    #[test]
    fn ssim_properties() {
        let x = random_map(20, 3);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        let range = 0.3;
        let shifted = C2Matrix::from_fn(20, |i, j| x.get(i, j) + 0.5 * range);
        let s = ssim(&x, &shifted).unwrap();
        assert!(s < 1.0);
        let y = random_map(20, 4);
        let ab = ssim_with_range(&x, &y, range).unwrap();
        let ba = ssim_with_range(&y, &x, range).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&ab));
        assert!(ssim(&x, &random_map(6, 1)).is_err());
        assert!(ssim(&random_map(6, 1), &random_map(6, 2)).is_err());
    }

    #[test]
    fn ssim_golden_luminance_penalty() {
        let x = random_map(20, 3);
        let (lo, hi) = x.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        let shifted = C2Matrix::from_fn(20, |i, j| x.get(i, j) + 0.5 * (hi - lo));
        let s = ssim(&x, &shifted).unwrap();
        // Frozen from a run of this implementation.
        assert!((s - SSIM_SHIFT_GOLDEN).abs() < 1e-12, "{s:.17}");
    }

    const SSIM_SHIFT_GOLDEN: f64 = 0.992_903_818_869_782_3;

    #[test]
    fn snr_examples() {
        assert!((snr_of(&[1.0, 2.0, 3.0]).unwrap() - 3f64.log10()).abs() < 1e-12);
        assert!((snr_of(&[3.0, 1.0, 2.0]).unwrap() - snr_of(&[1.0, 2.0, 3.0]).unwrap()).abs() < 1e-15);
        assert!(matches!(snr_of(&[2.0, 2.0]), Err(Error::DegenerateDiagonal(_))));
        assert!(matches!(snr_of(&[-1.0, -2.0]), Err(Error::DegenerateDiagonal(_))));
        let m = C2Matrix::from_fn(4, |i, j| if j == i + 1 || i == j + 1 { (i.min(j) + 1) as f64 } else { 0.0 });
        assert!((snr(&m, 1).unwrap() - 3f64.log10()).abs() < 1e-12);
        assert!(snr(&m, 0).is_err() && snr(&m, 4).is_err());
    }

    #[test]
    fn tau_star_closed_form() {
        for tau_c in [1.0, 2.0, 7.0, 10.0, 33.0, 50.5] {
            let p = KwwParams { c_inf: 1.0, beta: 0.2, tau_c, gamma: 1.0 };
            assert_eq!(find_tau_star(&p).unwrap(), (tau_c / 2.0f64).ceil() as usize, "tau_c {tau_c}");
        }
        let p = KwwParams { c_inf: 1.0, beta: 0.2, tau_c: 20.0, gamma: 0.5 };
        assert_eq!(find_tau_star(&p).unwrap(), 5);
        let slow = C2Matrix::from_fn(60, |i, j| 1.0 + 0.2 * (-2.0 * i.abs_diff(j) as f64 / 12.0).exp());
        assert_eq!(tau_star_from_map(&slow).unwrap(), 6);
    }

    #[test]
    fn ensemble_variance_examples() {
        let m = random_map(8, 5);
        assert_eq!(ensemble_variance(&[m.clone(), m.clone(), m.clone()]).unwrap(), 0.0);
        let shifted = C2Matrix::from_fn(8, |i, j| m.get(i, j) + 0.3);
        let v = ensemble_variance(&[m.clone(), shifted.clone()]).unwrap();
        assert!((v - 0.09 / 4.0).abs() < 1e-12);
        let v2 = ensemble_variance(&[shifted, m.clone()]).unwrap();
        assert!((v - v2).abs() < 1e-15);
        assert_eq!(ensemble_variance(&[m.clone()]), Err(Error::TooFewModels(1)));
        assert!(ensemble_variance(&[m, random_map(5, 1)]).is_err());
    }

    #[test]
    fn ensemble_report_summaries() {
        let base = random_map(8, 6);
        let samples: Vec<Vec<C2Matrix>> = (1..=10)
            .map(|s| {
                let c = 0.01 * s as f64;
                vec![base.clone(), C2Matrix::from_fn(8, |i, j| base.get(i, j) + c)]
            })
            .collect();
        let betas = vec![0.5; 10];
        let r = EnsembleVarianceReport::new(&samples, &betas).unwrap();
        assert_eq!(r.per_sample_variance.len(), 10);
        for (k, v) in r.per_sample_variance.iter().enumerate() {
            let c = 0.01 * (k + 1) as f64;
            assert!((v - c * c / 4.0).abs() < 1e-12);
            assert!((r.ratio_per_sample[k] - v / 0.5).abs() < 1e-15);
        }
        assert!(r.p10_ratio <= r.median_ratio && r.median_ratio <= r.p90_ratio);
        assert!(EnsembleVarianceReport::new(&samples, &[0.0; 10]).is_err());
    }

    #[test]
    fn report_on_identical_maps() {
        let m = generate_truth_c2(&DynamicsSpec::StationaryKww { tau_c: 9.0, gamma: 1.0 }, 0.2, 40, 1.0).unwrap();
        let r = reliability_report(&m, &m, &MetricsConfig::default(), None).unwrap();
        assert_eq!(r.delta_beta_rel, 0.0);
        assert!((r.ssim - 1.0).abs() < 1e-9);
        assert!(r.acf_pass);
        assert_eq!(r.tau_star, 5);
        assert_eq!(r.snr_raw, r.snr_denoised);
        assert!((r.acf_bound - 1.96 / 40f64.sqrt()).abs() < 1e-15);
    }
}
