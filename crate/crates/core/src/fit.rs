//! Least-squares fits of one-time correlation curves.
//!
//! Models, with `τ` in frames:
//!
//! ```text
//! kww:       c_inf + beta · exp(-2 (τ/tau_c)^gamma)
//! composite: kww + amp · exp(-damp · τ) · cos(omega · τ + phase)
//! ```
//!
//! Minimization is Levenberg–Marquardt with Marquardt diagonal scaling,
//! analytic Jacobians and box bounds enforced by projection.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;

use crate::c2::{slice_age, C2Matrix, G2Curve};
use crate::linalg::{cholesky, cholesky_solve, spd_inverse, symmetric_pinv};
use crate::stats;
use crate::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const REL_DECREASE_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;
const MAX_DAMPING: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KwwParams {
    pub c_inf: f64,
    pub beta: f64,
    pub tau_c: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CompositeParams {
    pub kww: KwwParams,
    pub amp: f64,
    pub damp: f64,
    pub omega: f64,
    pub phase: f64,
}

impl KwwParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_c > 0.0) || !(self.beta >= 0.0) || !(self.gamma > 0.0 && self.gamma <= 2.0) || !self.c_inf.is_finite() {
            return Err(Error::invalid(format!("invalid KWW parameters {self:?}")));
        }
        Ok(())
    }

    fn eval(&self, tau: f64) -> f64 {
        self.c_inf + self.beta * decay(tau, self.tau_c, self.gamma)
    }
}

impl CompositeParams {
    pub fn validate(&self) -> Result<()> {
        self.kww.validate()?;
        if !(self.damp >= 0.0) || !(self.omega >= 0.0) || !self.amp.is_finite() || !self.phase.is_finite() {
            return Err(Error::invalid(format!("invalid composite parameters {self:?}")));
        }
        Ok(())
    }

    fn eval(&self, tau: f64) -> f64 {
        self.kww.eval(tau) + self.amp * (-self.damp * tau).exp() * (self.omega * tau + self.phase).cos()
    }
}

/// `exp(-2 (τ/τc)^γ)`, exactly 1 at `τ = 0`.
fn decay(tau: f64, tau_c: f64, gamma: f64) -> f64 {
    if tau == 0.0 {
        1.0
    } else {
        (-2.0 * (tau / tau_c).powf(gamma)).exp()
    }
}

pub fn kww_model(tau: f64, p: &KwwParams) -> Result<f64> {
    p.validate()?;
    if !(tau >= 0.0) {
        return Err(Error::invalid("lag must be non-negative"));
    }
    Ok(p.eval(tau))
}

pub fn composite_model(tau: f64, p: &CompositeParams) -> Result<f64> {
    p.validate()?;
    if !(tau >= 0.0) {
        return Err(Error::invalid("lag must be non-negative"));
    }
    Ok(p.eval(tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ModelKind {
    Kww,
    Composite,
}

impl ModelKind {
    pub fn n_params(self) -> usize {
        match self {
            ModelKind::Kww => 4,
            ModelKind::Composite => 8,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Kww => &["c_inf", "beta", "tau_c", "gamma"],
            ModelKind::Composite => &["c_inf", "beta", "tau_c", "gamma", "amp", "damp", "omega", "phase"],
        }
    }

    pub fn default_bounds(self) -> Bounds {
        let inf = f64::INFINITY;
        let mut lower = vec![-inf, 0.0, 1e-6, 1e-3];
        let mut upper = vec![inf, inf, inf, 2.0];
        if self == ModelKind::Composite {
            lower.extend_from_slice(&[0.0, 0.0, 0.0, -inf]);
            upper.extend_from_slice(&[inf, inf, inf, inf]);
        }
        Bounds { lower, upper }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "model", rename_all = "lowercase"))]
pub enum FitParams {
    Kww(KwwParams),
    Composite(CompositeParams),
}

impl FitParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            FitParams::Kww(_) => ModelKind::Kww,
            FitParams::Composite(_) => ModelKind::Composite,
        }
    }

    pub fn kww(&self) -> &KwwParams {
        match self {
            FitParams::Kww(p) => p,
            FitParams::Composite(p) => &p.kww,
        }
    }

    /// Flat vector in [`ModelKind::param_names`] order.
    pub fn values(&self) -> Vec<f64> {
        let k = self.kww();
        let mut v = vec![k.c_inf, k.beta, k.tau_c, k.gamma];
        if let FitParams::Composite(c) = self {
            v.extend_from_slice(&[c.amp, c.damp, c.omega, c.phase]);
        }
        v
    }

    pub fn from_values(kind: ModelKind, v: &[f64]) -> Result<Self> {
        if v.len() != kind.n_params() {
            return Err(Error::shape(format!("{} values for {} parameters", v.len(), kind.n_params())));
        }
        let kww = KwwParams { c_inf: v[0], beta: v[1], tau_c: v[2], gamma: v[3] };
        Ok(match kind {
            ModelKind::Kww => FitParams::Kww(kww),
            ModelKind::Composite => FitParams::Composite(CompositeParams {
                kww,
                amp: v[4],
                damp: v[5],
                omega: v[6],
                phase: v[7],
            }),
        })
    }

    pub fn eval(&self, tau: f64) -> f64 {
        match self {
            FitParams::Kww(p) => p.eval(tau),
            FitParams::Composite(p) => p.eval(tau),
        }
    }
}

/// Model value and Jacobian row at `τ` for a flat parameter vector.
fn eval_with_jacobian(kind: ModelKind, p: &[f64], tau: f64, jac: &mut [f64]) -> f64 {
    let (c_inf, beta, tau_c, gamma) = (p[0], p[1], p[2], p[3]);
    let (e, u) = if tau == 0.0 {
        (1.0, 0.0)
    } else {
        let u = (tau / tau_c).powf(gamma);
        ((-2.0 * u).exp(), u)
    };
    jac[0] = 1.0;
    jac[1] = e;
    jac[2] = 2.0 * beta * e * gamma * u / tau_c;
    jac[3] = if tau == 0.0 { 0.0 } else { -2.0 * beta * e * u * (tau / tau_c).ln() };
    let mut value = c_inf + beta * e;
    if kind == ModelKind::Composite {
        let (amp, damp, omega, phase) = (p[4], p[5], p[6], p[7]);
        let env = (-damp * tau).exp();
        let arg = omega * tau + phase;
        let (s, c) = arg.sin_cos();
        value += amp * env * c;
        jac[4] = env * c;
        jac[5] = -amp * tau * env * c;
        jac[6] = -amp * env * tau * s;
        jac[7] = -amp * env * s;
    }
    value
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    fn project(&self, p: &mut [f64]) {
        for ((v, lo), hi) in p.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.max(*lo).min(*hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub params: FitParams,
    /// Row-major `n × n`.
    pub covariance: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub r_squared: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// Sum of squared residuals at the optimum.
    pub cost: f64,
}

/// Default starting point: `c_inf` from the last 10% of points, `beta` from
/// the first point, `tau_c` from the 1/e crossing (fallback: a quarter of
/// the lag span), `gamma = 1`.
pub fn initial_kww(taus: &[f64], ys: &[f64]) -> KwwParams {
    let n = taus.len();
    let tail = (n / 10).max(1);
    let c_inf = stats::mean(&ys[n - tail..]);
    let beta = (ys[0] - c_inf).max(1e-6);
    let target = beta / core::f64::consts::E;
    let span = taus[n - 1].max(1.0);
    let tau_c = taus
        .iter()
        .zip(ys)
        .find(|(_, y)| *y - c_inf <= target)
        .map(|(t, _)| t.max(1e-3))
        .unwrap_or(span / 4.0);
    KwwParams { c_inf, beta, tau_c, gamma: 1.0 }
}

/// Composite start: the KWW fit plus the strongest frequency in its
/// residual, found by scanning a periodogram over `(0, π]`.
fn initial_composite(taus: &[f64], ys: &[f64], kww: KwwParams) -> CompositeParams {
    let resid: Vec<f64> = taus.iter().zip(ys).map(|(t, y)| y - kww.eval(*t)).collect();
    let mut best = (0.0, 0.0, 0.0);
    for step in 1..=400 {
        let omega = PI * step as f64 / 400.0;
        let (mut re, mut im) = (0.0, 0.0);
        for (t, r) in taus.iter().zip(&resid) {
            let (s, c) = (omega * t).sin_cos();
            re += r * c;
            im -= r * s;
        }
        let power = re * re + im * im;
        if power > best.0 {
            best = (power, omega, im.atan2(re));
        }
    }
    let amp = 2.0 * best.0.sqrt() / taus.len() as f64;
    CompositeParams {
        kww,
        amp,
        damp: 1.0 / taus[taus.len() - 1].max(1.0),
        omega: best.1,
        phase: best.2,
    }
}

/// Levenberg–Marquardt fit of `curve` with the `τ = 0` point dropped.
pub fn fit_g2(curve: &G2Curve, kind: ModelKind, init: Option<&FitParams>, bounds: Option<&Bounds>) -> Result<FitResult> {
    let curve = curve.without_zero_lag();
    let taus: Vec<f64> = curve.lags.iter().map(|&l| l as f64).collect();
    fit_points(&taus, &curve.values, kind, init, bounds)
}

/// [`fit_g2`] on explicit `(τ, y)` points.
pub fn fit_points(
    taus: &[f64],
    ys: &[f64],
    kind: ModelKind,
    init: Option<&FitParams>,
    bounds: Option<&Bounds>,
) -> Result<FitResult> {
    let np = kind.n_params();
    if taus.len() != ys.len() {
        return Err(Error::shape("lags and values differ in length"));
    }
    if taus.len() < np + 1 {
        return Err(Error::InsufficientPoints { have: taus.len(), need: np + 1 });
    }
    let bounds = bounds.cloned().unwrap_or_else(|| kind.default_bounds());
    if bounds.lower.len() != np || bounds.upper.len() != np {
        return Err(Error::shape("bounds do not match the model"));
    }
    let start = match init {
        Some(p) if p.kind() == kind => *p,
        Some(_) => return Err(Error::invalid("initial parameters are for a different model")),
        None => {
            let kww0 = initial_kww(taus, ys);
            match kind {
                ModelKind::Kww => FitParams::Kww(kww0),
                ModelKind::Composite => {
                    let kww = fit_points(taus, ys, ModelKind::Kww, None, None)
                        .map(|r| *r.params.kww())
                        .unwrap_or(kww0);
                    FitParams::Composite(initial_composite(taus, ys, kww))
                }
            }
        }
    };
    levenberg_marquardt(taus, ys, kind, start.values(), &bounds)
}

struct Linearization {
    cost: f64,
    jtj: Vec<f64>,
    jtr: Vec<f64>,
}

fn linearize(taus: &[f64], ys: &[f64], kind: ModelKind, p: &[f64]) -> Linearization {
    let np = p.len();
    let mut jtj = vec![0.0; np * np];
    let mut jtr = vec![0.0; np];
    let mut row = vec![0.0; np];
    let mut cost = 0.0;
    for (t, y) in taus.iter().zip(ys) {
        let r = eval_with_jacobian(kind, p, *t, &mut row) - y;
        cost += r * r;
        for a in 0..np {
            jtr[a] += row[a] * r;
            for b in 0..np {
                jtj[a * np + b] += row[a] * row[b];
            }
        }
    }
    Linearization { cost, jtj, jtr }
}

fn cost_at(taus: &[f64], ys: &[f64], kind: ModelKind, p: &[f64]) -> f64 {
    let mut row = vec![0.0; p.len()];
    taus.iter()
        .zip(ys)
        .map(|(t, y)| {
            let r = eval_with_jacobian(kind, p, *t, &mut row) - y;
            r * r
        })
        .sum()
}

/// Gradient of the cost with components that point out of the box at an
/// active bound removed.
fn projected_gradient_norm(lin: &Linearization, p: &[f64], bounds: &Bounds) -> f64 {
    lin.jtr
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let g = 2.0 * g;
            let at_lower = p[i] <= bounds.lower[i] && g > 0.0;
            let at_upper = p[i] >= bounds.upper[i] && g < 0.0;
            if at_lower || at_upper {
                0.0
            } else {
                g * g
            }
        })
        .sum::<f64>()
        .sqrt()
}

fn levenberg_marquardt(taus: &[f64], ys: &[f64], kind: ModelKind, mut p: Vec<f64>, bounds: &Bounds) -> Result<FitResult> {
    let np = p.len();
    bounds.project(&mut p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut lin = linearize(taus, ys, kind, &p);
    if !lin.cost.is_finite() {
        return Err(Error::invalid("model is not finite at the starting point"));
    }
    'outer: while iterations < MAX_ITERATIONS {
        iterations += 1;
        let max_diag = (0..np).map(|i| lin.jtj[i * np + i]).fold(0.0f64, f64::max);
        loop {
            let mut a = lin.jtj.clone();
            for i in 0..np {
                a[i * np + i] += lambda * lin.jtj[i * np + i].max(1e-12 * max_diag).max(1e-300);
            }
            let neg_g: Vec<f64> = lin.jtr.iter().map(|g| -g).collect();
            let trial = cholesky(&a, np).ok().map(|l| {
                let step = cholesky_solve(&l, np, &neg_g);
                let mut q: Vec<f64> = p.iter().zip(&step).map(|(x, d)| x + d).collect();
                bounds.project(&mut q);
                q
            });
            if let Some(q) = trial {
                let new_cost = cost_at(taus, ys, kind, &q);
                if new_cost.is_finite() && new_cost < lin.cost {
                    let step_norm = q.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    let decrease = (lin.cost - new_cost) / lin.cost;
                    p = q;
                    lin = linearize(taus, ys, kind, &p);
                    lambda = (lambda / 10.0).max(1e-12);
                    if decrease < REL_DECREASE_TOL || step_norm < STEP_TOL * (1.0 + norm(&p)) {
                        converged = true;
                        break 'outer;
                    }
                    continue 'outer;
                }
                let step_norm = q.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if step_norm < STEP_TOL * (1.0 + norm(&p)) {
                    // No descent left at machine resolution.
                    converged = projected_gradient_norm(&lin, &p, bounds) <= 1e-6 * (1.0 + lin.cost);
                    break 'outer;
                }
            }
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                converged = projected_gradient_norm(&lin, &p, bounds) <= 1e-6 * (1.0 + lin.cost);
                break 'outer;
            }
        }
    }

    let m = taus.len();
    let s2 = lin.cost / (m - np) as f64;
    let unscaled = spd_inverse(&lin.jtj, np).or_else(|_| symmetric_pinv(&lin.jtj, np, 1e-12))?;
    let covariance: Vec<f64> = unscaled.iter().map(|v| v * s2).collect();
    let sigma1 = (0..np).map(|i| covariance[i * np + i].max(0.0).sqrt()).collect();
    let mean_y = stats::mean(ys);
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    let r_squared = if lin.cost <= 1e-20 {
        1.0
    } else if ss_tot > 0.0 {
        1.0 - lin.cost / ss_tot
    } else {
        0.0
    };
    Ok(FitResult {
        params: FitParams::from_values(kind, &p)?,
        covariance,
        sigma1,
        r_squared,
        converged,
        n_iterations: iterations,
        cost: lin.cost,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One fitted slice of a C2 map.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SliceFit {
    pub age_index: usize,
    pub fit: FitResult,
}

/// Default share of ages dropped at each end of the map.
pub const DEFAULT_EDGE_EXCLUSION: f64 = 0.1;

/// Ages kept after dropping `floor(fraction · T)` at each end.
pub fn fit_band(n_frames: usize, edge_exclusion: f64) -> Result<core::ops::Range<usize>> {
    if !(0.0..0.5).contains(&edge_exclusion) {
        return Err(Error::invalid(format!("edge exclusion {edge_exclusion} must lie in [0, 0.5)")));
    }
    let cut = (edge_exclusion * n_frames as f64).floor() as usize;
    Ok(cut..n_frames - cut)
}

/// Fits every age slice in the central band, skipping slices with too few
/// lags. Non-converged fits are kept and flagged.
pub fn fit_slices(c2: &C2Matrix, kind: ModelKind, half_window: usize, edge_exclusion: f64) -> Result<Vec<SliceFit>> {
    let n = c2.n_frames();
    if n < 16 {
        return Err(Error::invalid(format!("slice fitting needs at least 16 frames, got {n}")));
    }
    let band = fit_band(n, edge_exclusion)?;
    let mut out = Vec::new();
    for age in band {
        let curve = slice_age(c2, age, half_window)?.without_zero_lag();
        if curve.len() < kind.n_params() + 1 {
            continue;
        }
        match fit_g2(&curve, kind, None, None) {
            Ok(fit) => out.push(SliceFit { age_index: age, fit }),
            Err(Error::InsufficientPoints { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyBand);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const TRUE: KwwParams = KwwParams { c_inf: 1.0, beta: 0.2, tau_c: 50.0, gamma: 0.8 };

    fn curve_from(mut f: impl FnMut(f64) -> f64, n: usize) -> G2Curve {
        G2Curve {
            lags: (0..=n).collect(),
            values: (0..=n).map(|t| f(t as f64)).collect(),
            n_averaged: vec![1; n + 1],
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn model_examples() {
        assert_eq!(kww_model(0.0, &TRUE).unwrap(), 1.2);
        let p = KwwParams { gamma: 1.0, ..TRUE };
        assert!((kww_model(50.0, &p).unwrap() - (1.0 + 0.2 * (-2.0f64).exp())).abs() < 1e-15);
        assert!((kww_model(1e6, &TRUE).unwrap() - 1.0).abs() < 1e-12);
        let c = CompositeParams { kww: TRUE, amp: 0.0, damp: 0.3, omega: 1.0, phase: 0.2 };
        assert_eq!(composite_model(7.0, &c).unwrap(), kww_model(7.0, &TRUE).unwrap());
        let c = CompositeParams { amp: 0.1, damp: 0.0, omega: PI, phase: 0.0, ..c };
        assert_eq!(composite_model(0.0, &c).unwrap(), 1.3);
        assert!((composite_model(1.0, &c).unwrap() - (kww_model(1.0, &TRUE).unwrap() - 0.1)).abs() < 1e-15);
        assert!(kww_model(1.0, &KwwParams { tau_c: 0.0, ..TRUE }).is_err());
        assert!(kww_model(-1.0, &TRUE).is_err());
    }

    #[test]
    fn kww_is_monotone() {
        let mut last = f64::INFINITY;
        for i in 0..500 {
            let v = kww_model(i as f64 * 0.7, &TRUE).unwrap();
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = [1.0, 0.2, 13.0, 0.9, 0.05, 0.03, 0.4, 0.3];
        let mut jac = [0.0; 8];
        let mut scratch = [0.0; 8];
        for tau in [0.0, 1.0, 7.5, 40.0] {
            eval_with_jacobian(ModelKind::Composite, &p, tau, &mut jac);
            for k in 0..8 {
                let h = 1e-6 * p[k].abs().max(1.0);
                let (mut up, mut dn) = (p, p);
                up[k] += h;
                dn[k] -= h;
                let fd = (eval_with_jacobian(ModelKind::Composite, &up, tau, &mut scratch)
                    - eval_with_jacobian(ModelKind::Composite, &dn, tau, &mut scratch))
                    / (2.0 * h);
                assert!((fd - jac[k]).abs() < 1e-7 * (1.0 + jac[k].abs()), "param {k} tau {tau}");
            }
        }
    }

    #[test]
    fn noise_free_self_fit() {
        let curve = curve_from(|t| TRUE.eval(t), 200);
        let fit = fit_g2(&curve, ModelKind::Kww, None, None).unwrap();
        assert!(fit.converged);
        let got = fit.params.kww();
        assert!(rel(got.c_inf, 1.0) < 1e-6);
        assert!(rel(got.beta, 0.2) < 1e-6);
        assert!(rel(got.tau_c, 50.0) < 1e-6);
        assert!(rel(got.gamma, 0.8) < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_fit_within_tolerance_and_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let curve = curve_from(|t| TRUE.eval(t) + noise.sample(&mut rng), 200);
        let fit = fit_g2(&curve, ModelKind::Kww, None, None).unwrap();
        assert!(fit.converged);
        let got = fit.params.values();
        let truth = [1.0, 0.2, 50.0, 0.8];
        for k in 0..4 {
            assert!(rel(got[k], truth[k]) < 0.05, "param {k}: {} vs {}", got[k], truth[k]);
            assert!((got[k] - truth[k]).abs() < 3.0 * fit.sigma1[k], "param {k} outside 3 sigma");
        }
        for i in 0..4 {
            assert!(fit.covariance[i * 4 + i] >= 0.0);
            for j in 0..4 {
                assert!((fit.covariance[i * 4 + j] - fit.covariance[j * 4 + i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn first_order_optimality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.005).unwrap();
        let curve = curve_from(|t| TRUE.eval(t) + noise.sample(&mut rng), 120);
        let fit = fit_g2(&curve, ModelKind::Kww, None, None).unwrap();
        let c = curve.without_zero_lag();
        let taus: Vec<f64> = c.lags.iter().map(|&l| l as f64).collect();
        let lin = linearize(&taus, &c.values, ModelKind::Kww, &fit.params.values());
        let g = 2.0 * norm(&lin.jtr);
        assert!(g <= 1e-6 * (1.0 + fit.cost), "gradient norm {g}");
    }

    #[test]
    fn random_draws_recovered() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = KwwParams {
                c_inf: rng.random_range(0.9..1.1),
                beta: rng.random_range(0.05..0.5),
                tau_c: rng.random_range(5.0..60.0),
                gamma: rng.random_range(0.5..1.8),
            };
            let fit = fit_g2(&curve_from(|t| p.eval(t), 200), ModelKind::Kww, None, None).unwrap();
            let got = fit.params.values();
            for (g, t) in got.iter().zip([p.c_inf, p.beta, p.tau_c, p.gamma]) {
                assert!(rel(*g, t) < 1e-6, "{p:?} -> {got:?}");
            }
        }
    }

    #[test]
    fn constant_curve_is_degenerate_but_handled() {
        let fit = fit_g2(&curve_from(|_| 1.1, 50), ModelKind::Kww, None, None).unwrap();
        assert!(fit.params.kww().beta <= 1e-6);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn too_few_points() {
        let err = fit_g2(&curve_from(|t| TRUE.eval(t), 4), ModelKind::Kww, None, None).unwrap_err();
        assert_eq!(err, Error::InsufficientPoints { have: 4, need: 5 });
    }

    #[test]
    fn composite_recovers_oscillation() {
        let truth = CompositeParams { kww: KwwParams { c_inf: 1.0, beta: 0.15, tau_c: 20.0, gamma: 1.0 }, amp: 0.04, damp: 0.02, omega: 0.35, phase: 0.0 };
        let curve = curve_from(|t| truth.eval(t), 150);
        let fit = fit_g2(&curve, ModelKind::Composite, None, None).unwrap();
        assert!(fit.r_squared > 1.0 - 1e-9, "r2 {}", fit.r_squared);
        let FitParams::Composite(got) = fit.params else { panic!() };
        assert!(rel(got.omega, 0.35) < 1e-4);
        assert!(rel(got.amp, 0.04) < 1e-3);
    }

    #[test]
    fn stationary_slices_are_flat() {
        let tau_c = 8.0;
        let c2 = C2Matrix::from_fn(64, |i, j| 1.0 + 0.2 * (-2.0 * i.abs_diff(j) as f64 / tau_c).exp());
        let slices = fit_slices(&c2, ModelKind::Kww, 0, DEFAULT_EDGE_EXCLUSION).unwrap();
        for s in &slices {
            assert!(rel(s.fit.params.kww().tau_c, tau_c) < 0.02, "age {}", s.age_index);
        }
        assert_eq!(slices.first().unwrap().age_index, 6);
        assert_eq!(slices.last().unwrap().age_index, 57);
        let narrow = fit_slices(&c2, ModelKind::Kww, 0, 0.2).unwrap();
        assert_eq!(narrow.len(), 64 - 2 * 12);
        assert!(fit_slices(&C2Matrix::from_fn(8, |_, _| 1.0), ModelKind::Kww, 0, 0.1).is_err());
        assert_eq!(fit_band(100, 0.1).unwrap(), 10..90);
    }
}
