//! Two-time correlation maps and the transforms applied to them before and
//! after denoising.
//!
//! A [`C2Matrix`] is indexed by frame pairs `(t1, t2)`; the age axis is
//! `(t1 + t2) / 2` and the lag axis `|t2 - t1|`. Every constructor and
//! transform here yields an exactly symmetric matrix.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::stats;
use crate::{Error, Result};

/// Per-pixel intensity time series for one wavevector region.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelSeries {
    n_pixels: usize,
    n_frames: usize,
    pub frame_interval_s: f64,
    pub q_label: String,
    /// `n_pixels × n_frames`, row-major.
    intensities: Vec<f64>,
}

impl PixelSeries {
    pub fn new(n_pixels: usize, n_frames: usize, intensities: Vec<f64>) -> Result<Self> {
        if intensities.len() != n_pixels * n_frames {
            return Err(Error::shape(format!(
                "{} intensities for {n_pixels} pixels x {n_frames} frames",
                intensities.len()
            )));
        }
        if intensities.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("intensities must be finite and non-negative"));
        }
        Ok(PixelSeries {
            n_pixels,
            n_frames,
            frame_interval_s: 1.0,
            q_label: String::new(),
            intensities,
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.intensities[p * self.n_frames..(p + 1) * self.n_frames]
    }

    pub fn with_meta(mut self, frame_interval_s: f64, q_label: impl Into<String>) -> Self {
        self.frame_interval_s = frame_interval_s;
        self.q_label = q_label.into();
        self
    }
}

/// Square, symmetric two-time correlation map.
#[derive(Debug, Clone, PartialEq)]
pub struct C2Matrix {
    n: usize,
    pub frame_interval_s: f64,
    pub q_label: String,
    values: Vec<f64>,
}

impl C2Matrix {
    /// Wraps row-major values; fails unless they are exactly symmetric.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::shape(format!("{} values for a {n}x{n} map", values.len())));
        }
        for i in 0..n {
            for j in i + 1..n {
                if values[i * n + j].to_bits() != values[j * n + i].to_bits() {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        Ok(C2Matrix {
            n,
            frame_interval_s: 1.0,
            q_label: String::new(),
            values,
        })
    }

    /// Replaces `values` by `(A + A^T) / 2`.
    pub fn symmetrized(n: usize, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::shape(format!("{} values for a {n}x{n} map", values.len())));
        }
        for i in 0..n {
            for j in i + 1..n {
                let avg = 0.5 * (values[i * n + j] + values[j * n + i]);
                values[i * n + j] = avg;
                values[j * n + i] = avg;
            }
        }
        Ok(C2Matrix {
            n,
            frame_interval_s: 1.0,
            q_label: String::new(),
            values,
        })
    }

    /// Builds a map from `f(i, j)` evaluated on the upper triangle.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        C2Matrix {
            n,
            frame_interval_s: 1.0,
            q_label: String::new(),
            values,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn off_diagonal(&self) -> Vec<f64> {
        let n = self.n;
        (0..n * n).filter(|k| k / n != k % n).map(|k| self.values[k]).collect()
    }

    /// Entries `values[i][i + lag]` for every valid `i`.
    pub fn diagonal_at(&self, lag: usize) -> Vec<f64> {
        (0..self.n.saturating_sub(lag)).map(|i| self.get(i, i + lag)).collect()
    }

    pub fn with_meta(mut self, frame_interval_s: f64, q_label: impl Into<String>) -> Self {
        self.frame_interval_s = frame_interval_s;
        self.q_label = q_label.into();
        self
    }

    fn same_meta(&self, other: C2Matrix) -> C2Matrix {
        other.with_meta(self.frame_interval_s, self.q_label.clone())
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// One-time correlation curve indexed by integer frame lag.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct G2Curve {
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    pub n_averaged: Vec<usize>,
}

impl G2Curve {
    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    /// Drops the self-correlation point at lag 0, if present.
    pub fn without_zero_lag(&self) -> G2Curve {
        let keep: Vec<usize> = (0..self.len()).filter(|&k| self.lags[k] != 0).collect();
        G2Curve {
            lags: keep.iter().map(|&k| self.lags[k]).collect(),
            values: keep.iter().map(|&k| self.values[k]).collect(),
            n_averaged: keep.iter().map(|&k| self.n_averaged[k]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StandardizationParams {
    pub mean: f64,
    pub std: f64,
}

/// `C2[t1][t2] = <I(t1) I(t2)> / (<I(t1)> <I(t2)>)` with the average taken
/// over pixels.
pub fn compute_c2(series: &PixelSeries) -> Result<C2Matrix> {
    let (p, t) = (series.n_pixels(), series.n_frames());
    if p < 2 {
        return Err(Error::invalid(format!("need at least 2 pixels, got {p}")));
    }
    // frame-major copy so each product is a contiguous dot
    let mut frames = vec![0.0; p * t];
    for px in 0..p {
        for (f, &v) in series.pixel(px).iter().enumerate() {
            frames[f * p + px] = v;
        }
    }
    let inv_p = 1.0 / p as f64;
    let mut frame_mean = vec![0.0; t];
    for f in 0..t {
        let m = frames[f * p..(f + 1) * p].iter().sum::<f64>() * inv_p;
        if !(m > 0.0) {
            return Err(Error::ZeroMeanFrame { frame: f });
        }
        frame_mean[f] = m;
    }
    let c2 = C2Matrix::from_fn(t, |i, j| {
        let a = &frames[i * p..(i + 1) * p];
        let b = &frames[j * p..(j + 1) * p];
        let prod = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * inv_p;
        prod / (frame_mean[i] * frame_mean[j])
    });
    Ok(c2.with_meta(series.frame_interval_s, series.q_label.clone()))
}

/// Replaces each diagonal entry by the mean of its same-row neighbours
/// `values[i][i-1]` and `values[i][i+1]` (one neighbour at the corners).
pub fn repair_diagonal(c2: &C2Matrix) -> Result<C2Matrix> {
    let n = c2.n_frames();
    if n < 2 {
        return Err(Error::invalid("diagonal repair needs at least 2 frames"));
    }
    let mut values = c2.values().to_vec();
    for i in 0..n {
        let v = if i == 0 {
            c2.get(0, 1)
        } else if i == n - 1 {
            c2.get(n - 1, n - 2)
        } else {
            0.5 * (c2.get(i, i - 1) + c2.get(i, i + 1))
        };
        values[i * n + i] = v;
    }
    Ok(c2.same_meta(C2Matrix::new(n, values)?))
}

/// `g2(tau) = mean_i values[i][i + tau]` for `tau = 0..T`.
pub fn extract_g2(c2: &C2Matrix) -> Result<G2Curve> {
    let n = c2.n_frames();
    if n < 2 {
        return Err(Error::invalid("g2 extraction needs at least 2 frames"));
    }
    let mut curve = G2Curve {
        lags: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        n_averaged: Vec::with_capacity(n),
    };
    for lag in 0..n {
        let d = c2.diagonal_at(lag);
        curve.lags.push(lag);
        curve.values.push(stats::mean(&d));
        curve.n_averaged.push(d.len());
    }
    Ok(curve)
}

/// Shifts and scales to zero mean and unit population standard deviation.
pub fn standardize(c2: &C2Matrix) -> Result<(C2Matrix, StandardizationParams)> {
    let mean = stats::mean(c2.values());
    let std = stats::std_dev(c2.values());
    // A constant map can leave rounding-level spread behind in the mean.
    if !(std > 1e-12 * mean.abs()) || !(std > 0.0) || !std.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let params = StandardizationParams { mean, std };
    Ok((apply_standardization(c2, &params), params))
}

/// Standardizes with externally supplied parameters.
pub fn apply_standardization(c2: &C2Matrix, params: &StandardizationParams) -> C2Matrix {
    let values = c2.values().iter().map(|v| (v - params.mean) / params.std).collect();
    c2.same_meta(C2Matrix {
        n: c2.n_frames(),
        frame_interval_s: 1.0,
        q_label: String::new(),
        values,
    })
}

pub fn destandardize(c2: &C2Matrix, params: &StandardizationParams) -> C2Matrix {
    let values = c2.values().iter().map(|v| v * params.std + params.mean).collect();
    c2.same_meta(C2Matrix {
        n: c2.n_frames(),
        frame_interval_s: 1.0,
        q_label: String::new(),
        values,
    })
}

/// Reverses the age axis: `values'[i][j] = values[T-1-i][T-1-j]`.
pub fn reverse_age(c2: &C2Matrix) -> C2Matrix {
    let n = c2.n_frames();
    c2.same_meta(C2Matrix::from_fn(n, |i, j| c2.get(n - 1 - i, n - 1 - j)))
}

/// Keeps frames `0, k, 2k, ...`; the frame interval grows by `k`.
pub fn subsample_frames(c2: &C2Matrix, k: usize) -> Result<C2Matrix> {
    if k == 0 {
        return Err(Error::invalid("subsample interval must be >= 1"));
    }
    let n = c2.n_frames();
    let m = n.div_ceil(k);
    if m < 2 {
        return Err(Error::invalid(format!(
            "subsampling {n} frames every {k} leaves {m} frame(s)"
        )));
    }
    let out = C2Matrix::from_fn(m, |i, j| c2.get(i * k, j * k));
    Ok(out.with_meta(c2.frame_interval_s * k as f64, c2.q_label.clone()))
}

/// Top-left anchors of the diagonal tiles used by [`crop_diagonal_tiles`].
pub fn tile_anchors(n: usize, size: usize, stride: usize) -> Result<Vec<usize>> {
    if size == 0 || stride == 0 {
        return Err(Error::invalid("tile size and stride must be positive"));
    }
    if size > n {
        return Err(Error::invalid(format!("tile size {size} exceeds map size {n}")));
    }
    let mut anchors: Vec<usize> = (0..).map(|s| s * stride).take_while(|a| a + size <= n).collect();
    let tail = n - size;
    if anchors.last() != Some(&tail) {
        anchors.push(tail);
    }
    Ok(anchors)
}

/// Principal `size × size` submatrices along the diagonal, stepping by
/// `stride`, plus a tail tile flush with the last frame.
pub fn crop_diagonal_tiles(c2: &C2Matrix, size: usize, stride: usize) -> Result<Vec<C2Matrix>> {
    let anchors = tile_anchors(c2.n_frames(), size, stride)?;
    Ok(anchors
        .into_iter()
        .map(|a| c2.same_meta(C2Matrix::from_fn(size, |i, j| c2.get(a + i, a + j))))
        .collect())
}

/// Keeps `round(fraction * P)` distinct pixels chosen uniformly without
/// replacement. The kept pixels stay in their original order.
pub fn bootstrap_pixels(series: &PixelSeries, fraction: f64, seed: u64) -> Result<PixelSeries> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("bootstrap fraction {fraction} not in (0, 1]")));
    }
    let p = series.n_pixels();
    let kept = (fraction * p as f64).round() as usize;
    if kept < 2 {
        return Err(Error::TooFewPixels { kept });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, p, kept).into_vec();
    idx.sort_unstable();
    let mut data = Vec::with_capacity(kept * series.n_frames());
    for &i in &idx {
        data.extend_from_slice(series.pixel(i));
    }
    Ok(PixelSeries::new(kept, series.n_frames(), data)?
        .with_meta(series.frame_interval_s, series.q_label.clone()))
}

/// Lag profile through age index `age`, running perpendicular to the
/// diagonal.
///
/// With `half_window == 0` the slice is
/// `s(tau) = values[age - ceil(tau/2)][age + floor(tau/2)]` for
/// `tau = 0..=2 min(age, T-1-age)`. With a positive half window the lag
/// range is that of the central age and each lag averages the slices of
/// every age in `age-w..=age+w` where that lag is inside the map.
pub fn slice_age(c2: &C2Matrix, age: usize, half_window: usize) -> Result<G2Curve> {
    let n = c2.n_frames();
    if age >= n {
        return Err(Error::invalid(format!("age index {age} outside 0..{n}")));
    }
    let tau_max = 2 * age.min(n - 1 - age);
    let lo = age.saturating_sub(half_window);
    let hi = (age + half_window).min(n - 1);
    let mut curve = G2Curve {
        lags: Vec::with_capacity(tau_max + 1),
        values: Vec::with_capacity(tau_max + 1),
        n_averaged: Vec::with_capacity(tau_max + 1),
    };
    for tau in 0..=tau_max {
        let (back, fwd) = (tau.div_ceil(2), tau / 2);
        let mut sum = 0.0;
        let mut count = 0;
        for a in lo..=hi {
            if a >= back && a + fwd < n {
                sum += c2.get(a - back, a + fwd);
                count += 1;
            }
        }
        curve.lags.push(tau);
        curve.values.push(sum / count as f64);
        curve.n_averaged.push(count);
    }
    Ok(curve)
}
