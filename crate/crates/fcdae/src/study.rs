//! Drivers behind the `train`, `eval`, `fit`, `bootstrap-study` and
//! `ensemble` commands. Each returns its report and writes its artifacts
//! atomically; nothing here depends on wall-clock time unless the caller
//! asks for a `generated_at` stamp.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use fcdae_core::c2::{bootstrap_pixels, compute_c2, extract_g2, repair_diagonal, C2Matrix, G2Curve};
use fcdae_core::fit::{fit_g2, FitResult, ModelKind, SliceFit};
use fcdae_core::metrics::{
    estimate_beta_obs, exceeds_bias_band, reliability_report, tau_star_from_map, EnsembleVarianceReport,
    MetricsConfig, ReliabilityReport,
};
use fcdae_core::model::{build_model, denoise, train_ensemble, train_with_progress, FcDaeModel, TrainReport};
use fcdae_core::synth::{generate_truth_c2, simulate_noisy_c2};
use serde::Serialize;

use crate::checkpoint::{save_checkpoint, TrainingMeta};
use crate::config::RunConfig;
use crate::dataset::{load_pairs, training_pairs};
use crate::error::{Error, Result};
use crate::formats::{write_atomic, write_c2};
use crate::manifest::{Manifest, Split};
use crate::svg::{line_chart, Series, Style};

pub fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::format("json", e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::format("csv", e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::format("csv", e.to_string()))
}

pub fn training_meta(report: &TrainReport) -> TrainingMeta {
    TrainingMeta { epochs: report.epochs_run(), final_loss: report.loss_history.last().copied() }
}

/// Trains a fresh model (seeded by the master seed) on the manifest's
/// training crops.
pub fn train_from_manifest(
    cfg: &RunConfig,
    manifest: &Manifest,
    progress: impl FnMut(usize, f64),
) -> Result<(FcDaeModel, TrainReport)> {
    let data = training_pairs(manifest, cfg.dataset.crop_size, cfg.dataset.crop_stride, None)?;
    let mut model = build_model(&cfg.architecture, cfg.seed)?;
    let report = train_with_progress(&mut model, &data, &cfg.train, progress)?;
    Ok((model, report))
}

pub fn loss_history_csv(report: &TrainReport) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Row {
        epoch: usize,
        loss: f64,
    }
    let rows: Vec<Row> = report.loss_history.iter().enumerate().map(|(k, &loss)| Row { epoch: k + 1, loss }).collect();
    csv_bytes(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub report: ReliabilityReport,
    /// `ssim >= ssim_threshold`.
    pub ssim_reliable: bool,
    /// `|delta_beta_rel|` outside the contrast bias band.
    pub contrast_bias: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
}

pub fn evaluate(raw: &C2Matrix, denoised: &C2Matrix, cfg: &MetricsConfig) -> Result<EvalReport> {
    let report = reliability_report(raw, denoised, cfg, None)?;
    Ok(EvalReport {
        ssim_reliable: report.ssim >= cfg.ssim_threshold,
        contrast_bias: exceeds_bias_band(report.delta_beta_rel),
        report,
        generated_at: None,
    })
}

/// Trace table: `age_index`, each parameter, each `sigma_<parameter>`,
/// `r_squared`, `converged`.
pub fn trace_csv(kind: ModelKind, fits: &[SliceFit]) -> Result<Vec<u8>> {
    let names = kind.param_names();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["age_index".to_string()];
    header.extend(names.iter().map(|n| n.to_string()));
    header.extend(names.iter().map(|n| format!("sigma_{n}")));
    header.extend(["r_squared".to_string(), "converged".to_string()]);
    let err = |e: csv::Error| Error::format("trace", e.to_string());
    w.write_record(&header).map_err(err)?;
    for s in fits {
        let mut row = vec![s.age_index.to_string()];
        row.extend(s.fit.params.values().iter().map(|v| v.to_string()));
        row.extend(s.fit.sigma1.iter().map(|v| v.to_string()));
        row.extend([s.fit.r_squared.to_string(), s.fit.converged.to_string()]);
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::format("trace", e.to_string()))
}

/// τc trace with its ±1σ band.
pub fn trace_svg(fits: &[SliceFit]) -> String {
    let pick = |f: &dyn Fn(&SliceFit) -> f64| fits.iter().map(|s| (s.age_index as f64, f(s))).collect::<Vec<_>>();
    let tau = |s: &SliceFit| s.fit.params.kww().tau_c;
    let sig = |s: &SliceFit| s.fit.sigma1.get(2).copied().unwrap_or(f64::NAN);
    let series = [
        Series { label: "tau_c".into(), points: pick(&|s| tau(s)), style: Style::Line, color: "black" },
        Series { label: "+1 sigma".into(), points: pick(&|s| tau(s) + sig(s)), style: Style::Dashed, color: "gray" },
        Series { label: "-1 sigma".into(), points: pick(&|s| tau(s) - sig(s)), style: Style::Dashed, color: "gray" },
    ];
    line_chart("relaxation time vs age", "age index", "tau_c (frames)", &series, false)
}

/// Parameter values keyed by name, for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub model: ModelKind,
    pub params: BTreeMap<String, f64>,
    pub sigma: BTreeMap<String, f64>,
    pub r_squared: f64,
    pub converged: bool,
}

impl FitSummary {
    pub fn new(fit: &FitResult) -> Self {
        let kind = fit.params.kind();
        let names = kind.param_names();
        FitSummary {
            model: kind,
            params: names.iter().map(|n| n.to_string()).zip(fit.params.values()).collect(),
            sigma: names.iter().map(|n| n.to_string()).zip(fit.sigma1.iter().copied()).collect(),
            r_squared: fit.r_squared,
            converged: fit.converged,
        }
    }

    /// Oscillation amplitude of a composite fit.
    pub fn amplitude(&self) -> Option<f64> {
        self.params.get("amp").copied()
    }
}

fn fit_curve(c2: &C2Matrix, kind: ModelKind) -> Result<(G2Curve, Option<FitSummary>)> {
    let g2 = extract_g2(c2)?.without_zero_lag();
    let fit = match fit_g2(&g2, kind, None, None) {
        Ok(f) => Some(FitSummary::new(&f)),
        Err(fcdae_core::Error::InsufficientPoints { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok((g2, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRecord {
    pub label: String,
    pub fraction: f64,
    pub n_pixels: usize,
    pub metrics: ReliabilityReport,
    pub fit_raw: Option<FitSummary>,
    pub fit_denoised: Option<FitSummary>,
    /// Paths relative to the study directory.
    pub raw_path: String,
    pub denoised_path: String,
    pub overlay_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub scenario: String,
    pub n_frames: usize,
    pub seed: u64,
    /// Shared SNR diagonal, found on the nominal denoised map.
    pub tau_star: usize,
    pub truth_path: String,
    pub records: Vec<StudyRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
}

#[derive(Serialize)]
struct StudyRow<'a> {
    label: &'a str,
    fraction: f64,
    n_pixels: usize,
    tau_star: usize,
    snr_raw: f64,
    snr_denoised: f64,
    beta_obs_raw: f64,
    beta_obs_denoised: f64,
    delta_beta_rel: f64,
    ssim: f64,
    acf_pass: bool,
    r_squared_raw: Option<f64>,
    r_squared_denoised: Option<f64>,
    amp_raw: Option<f64>,
    amp_denoised: Option<f64>,
    raw_path: &'a str,
    denoised_path: &'a str,
    overlay_path: &'a str,
}

fn fraction_label(f: f64) -> String {
    if f == 1.0 {
        "nominal".into()
    } else {
        format!("{}%", (f * 100.0 * 100.0).round() / 100.0)
    }
}

fn overlay(title: &str, raw: &G2Curve, den: &G2Curve, truth: &G2Curve) -> String {
    let pts = |g: &G2Curve| g.lags.iter().zip(&g.values).map(|(&l, &v)| (l as f64, v)).collect::<Vec<_>>();
    let series = [
        Series { label: "raw".into(), points: pts(raw), style: Style::Points, color: "#888888" },
        Series { label: "denoised".into(), points: pts(den), style: Style::Line, color: "#c0392b" },
        Series { label: "truth".into(), points: pts(truth), style: Style::Dashed, color: "black" },
    ];
    line_chart(title, "lag (frames)", "g2", &series, true)
}

/// Simulates the bootstrap scenario once, then for each pixel fraction
/// recomputes C2 from a random pixel subset, denoises it, and records
/// metrics and g2 fits. Writes maps under `c2/`, overlays under `overlays/`
/// and `report.json`/`report.csv` into `out`.
pub fn run_bootstrap(cfg: &RunConfig, model: &FcDaeModel, out: &Path, timestamps: bool) -> Result<StudyReport> {
    let b = &cfg.bootstrap;
    let (series, _) = simulate_noisy_c2(&b.dynamics, &b.speckle, b.n_frames, cfg.seed)?;
    let series = series.with_meta(b.frame_interval_s, cfg.dataset.q_label.clone());
    let truth = generate_truth_c2(&b.dynamics, b.speckle.contrast(), b.n_frames, b.frame_interval_s)?;
    let truth_g2 = extract_g2(&truth)?.without_zero_lag();
    write_c2(&out.join("c2/truth.c2f"), &truth, "bootstrap truth")?;

    let mut maps = Vec::with_capacity(b.fractions.len());
    for (k, &f) in b.fractions.iter().enumerate() {
        let sub = bootstrap_pixels(&series, f, cfg.seed.wrapping_add(1 + k as u64))?;
        let raw = repair_diagonal(&compute_c2(&sub)?)?;
        let den = denoise(model, &raw)?;
        maps.push((f, sub.n_pixels(), raw, den));
    }
    let nominal = maps
        .iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::config("[bootstrap] fractions is empty"))?;
    let tau_star = tau_star_from_map(&nominal.3).or_else(|_| tau_star_from_map(&nominal.2))?;

    let mut records = Vec::with_capacity(maps.len());
    for (f, n_pixels, raw, den) in maps {
        let label = fraction_label(f);
        let stem = format!("frac_{:04}", (f * 1000.0).round() as u64);
        let raw_path = format!("c2/{stem}.raw.c2f");
        let denoised_path = format!("c2/{stem}.denoised.c2f");
        let overlay_path = format!("overlays/{stem}.svg");
        write_c2(&out.join(&raw_path), &raw, &format!("bootstrap fraction={f} pixels={n_pixels}"))?;
        write_c2(&out.join(&denoised_path), &den, &format!("bootstrap fraction={f} denoised"))?;
        let metrics = reliability_report(&raw, &den, &cfg.eval, Some(tau_star))?;
        let (raw_g2, fit_raw) = fit_curve(&raw, b.model)?;
        let (den_g2, fit_denoised) = fit_curve(&den, b.model)?;
        write_atomic(&out.join(&overlay_path), overlay(&format!("g2, {label}"), &raw_g2, &den_g2, &truth_g2).as_bytes())?;
        records.push(StudyRecord { label, fraction: f, n_pixels, metrics, fit_raw, fit_denoised, raw_path, denoised_path, overlay_path });
    }
    let report = StudyReport {
        scenario: crate::dataset::spec_summary(&b.dynamics, &b.speckle),
        n_frames: b.n_frames,
        seed: cfg.seed,
        tau_star,
        truth_path: "c2/truth.c2f".into(),
        records,
        generated_at: timestamps.then(unix_time),
    };
    write_json(&out.join("report.json"), &report)?;
    let rows: Vec<StudyRow> = report
        .records
        .iter()
        .map(|r| StudyRow {
            label: &r.label,
            fraction: r.fraction,
            n_pixels: r.n_pixels,
            tau_star: r.metrics.tau_star,
            snr_raw: r.metrics.snr_raw,
            snr_denoised: r.metrics.snr_denoised,
            beta_obs_raw: r.metrics.beta_obs_raw,
            beta_obs_denoised: r.metrics.beta_obs_denoised,
            delta_beta_rel: r.metrics.delta_beta_rel,
            ssim: r.metrics.ssim,
            acf_pass: r.metrics.acf_pass,
            r_squared_raw: r.fit_raw.as_ref().map(|f| f.r_squared),
            r_squared_denoised: r.fit_denoised.as_ref().map(|f| f.r_squared),
            amp_raw: r.fit_raw.as_ref().and_then(FitSummary::amplitude),
            amp_denoised: r.fit_denoised.as_ref().and_then(FitSummary::amplitude),
            raw_path: &r.raw_path,
            denoised_path: &r.denoised_path,
            overlay_path: &r.overlay_path,
        })
        .collect();
    write_atomic(&out.join("report.csv"), &csv_bytes(&rows)?)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStudy {
    pub seeds: Vec<u64>,
    pub sample_ids: Vec<String>,
    pub final_losses: Vec<f64>,
    #[serde(flatten)]
    pub report: EnsembleVarianceReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
}

/// Trains one model per seed on the manifest's training crops, denoises
/// every validation sample (test samples if there is no validation split)
/// with each member, and compares the per-sample ensemble variance with
/// the raw map's observed contrast. Member checkpoints go to `members/`,
/// the report to `report.json`.
pub fn run_ensemble(cfg: &RunConfig, manifest: &Manifest, seeds: &[u64], out: &Path, timestamps: bool) -> Result<EnsembleStudy> {
    if seeds.len() < 2 {
        return Err(fcdae_core::Error::TooFewModels(seeds.len()).into());
    }
    let mut train_cfg = cfg.train.clone();
    if let Some(e) = cfg.ensemble.max_epochs {
        train_cfg.max_epochs = e;
    }
    let data = training_pairs(manifest, cfg.dataset.crop_size, cfg.dataset.crop_stride, cfg.ensemble.max_train_crops)?;
    let held_out = match load_pairs(manifest, Split::Val)? {
        v if v.is_empty() => load_pairs(manifest, Split::Test)?,
        v => v,
    };
    if held_out.is_empty() {
        return Err(Error::config("manifest has no validation or test samples"));
    }
    let members = train_ensemble(&cfg.architecture, &data, &train_cfg, seeds)?;
    for ((model, report), seed) in members.iter().zip(seeds) {
        save_checkpoint(&out.join(format!("members/seed_{seed}.fcda")), model, &training_meta(report))?;
    }
    let mut samples = Vec::with_capacity(held_out.len());
    let mut beta_obs = Vec::with_capacity(held_out.len());
    for pair in &held_out {
        samples.push(members.iter().map(|(m, _)| denoise(m, &pair.raw)).collect::<fcdae_core::Result<Vec<_>>>()?);
        beta_obs.push(estimate_beta_obs(&pair.raw)?);
    }
    let study = EnsembleStudy {
        seeds: seeds.to_vec(),
        sample_ids: held_out.iter().map(|p| p.sample_id.clone()).collect(),
        final_losses: members.iter().map(|(_, r)| r.final_loss()).collect(),
        report: EnsembleVarianceReport::new(&samples, &beta_obs)?,
        generated_at: timestamps.then(unix_time),
    };
    write_json(&out.join("report.json"), &study)?;
    Ok(study)
}
