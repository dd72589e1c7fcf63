//! Synthetic dataset generation and loading.
//!
//! Each base sample gets its own simulation seed, drawn in order from a
//! ChaCha8 stream keyed by the master seed. Splits are assigned over a
//! seeded permutation with validation and test receiving `floor(f · n)`
//! samples. Raw and truth maps are both diagonal-repaired before they are
//! written, so the network is never asked to invent the lag-0 value.
//! Training samples are expanded by the configured augmentations; the
//! held-out splits keep one full map per sample. Cropping happens when
//! training pairs are loaded.

use std::collections::BTreeMap;

use fcdae_core::c2::{repair_diagonal, C2Matrix};
use fcdae_core::model::TrainingPair;
use fcdae_core::synth::{crop_pair, generate_sample, split_counts, DynamicsSpec, SpeckleSpec, SplitCounts};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{DatasetConfig, RunConfig};
use crate::error::{Error, Result};
use crate::formats::{read_c2, write_c2, write_pxs};
use crate::manifest::{Manifest, Record, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub base: SplitCounts,
    /// Manifest records per split, in [`Split::ALL`] order.
    pub records: [usize; 3],
    pub train_crops: usize,
}

/// One line describing the dynamics and speckle of a sample, e.g.
/// `stationary_kww gamma=1.0 tau_c=20.0; P=4000 M=1 mu=5`.
pub fn spec_summary(dynamics: &DynamicsSpec, speckle: &SpeckleSpec) -> String {
    let mut s = dynamics.kind().to_string();
    if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(dynamics) {
        for (k, v) in map.iter().filter(|(k, _)| *k != "kind") {
            s.push_str(&format!(" {k}={v}"));
        }
    }
    let mu = speckle.mean_counts.map_or_else(|| "off".to_string(), |m| m.to_string());
    s.push_str(&format!("; P={} M={} mu={mu}", speckle.n_pixels, speckle.n_modes));
    s
}

/// Simulation seed of every base sample.
pub fn sample_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..n).map(|_| rng.next_u64()).collect()
}

/// Split of every base sample.
pub fn assign_splits(master: u64, n: usize, fractions: [f64; 3]) -> Result<Vec<Split>> {
    let counts = split_counts(n, fractions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut splits = vec![Split::Train; n];
    for (rank, &i) in order.iter().enumerate() {
        if rank < counts.val {
            splits[i] = Split::Val;
        } else if rank < counts.val + counts.test {
            splits[i] = Split::Test;
        }
    }
    Ok(splits)
}

/// Number of tiles a training map of size `n` contributes.
pub fn crops_per_map(n: usize, size: usize, stride: usize) -> Result<usize> {
    if n <= size {
        return Ok(1);
    }
    Ok(fcdae_core::c2::tile_anchors(n, size, stride)?.len())
}

/// Augmented variants in the order [`fcdae_core::synth::Augmentation::apply`]
/// produces them.
fn variant_names(d: &DatasetConfig) -> Vec<String> {
    let mut bases = vec![String::new()];
    if d.augmentation.reverse_age {
        bases.push("rev".into());
    }
    let mut names = Vec::new();
    for b in bases {
        names.push(b.clone());
        for k in &d.augmentation.subsample {
            names.push(if b.is_empty() { format!("sub{k}") } else { format!("{b}.sub{k}") });
        }
    }
    names
}

pub fn build_dataset(cfg: &RunConfig) -> Result<DatasetSummary> {
    cfg.validate()?;
    let d = &cfg.dataset;
    let dir = cfg.dataset_dir();
    let seeds = sample_seeds(cfg.seed, d.n_samples);
    let splits = assign_splits(cfg.seed, d.n_samples, d.splits)?;
    let names = variant_names(d);
    let mut records = Vec::new();
    let mut train_crops = 0;
    for i in 0..d.n_samples {
        let dynamics = &d.dynamics[i % d.dynamics.len()];
        let speckle = &d.speckle[(i / d.dynamics.len()) % d.speckle.len()];
        let sample = generate_sample(dynamics, speckle, d.n_frames, d.frame_interval_s, seeds[i])?;
        let raw = repair_diagonal(&sample.c2_raw)?.with_meta(d.frame_interval_s, d.q_label.clone());
        let truth = repair_diagonal(&sample.c2_truth)?.with_meta(d.frame_interval_s, d.q_label.clone());
        let id = format!("s{i:04}");
        let spec = spec_summary(dynamics, speckle);
        if d.write_pixel_series {
            let series = sample.series.with_meta(d.frame_interval_s, d.q_label.clone());
            write_pxs(&dir.join(format!("data/{id}.pxs")), &series, &format!("synth seed={}", seeds[i]))?;
        }
        let variants = if splits[i] == Split::Train {
            names.iter().cloned().zip(d.augmentation.apply(&raw, &truth)?).collect()
        } else {
            vec![(String::new(), (raw, truth))]
        };
        for (name, (r, t)) in variants {
            let vid = if name.is_empty() { id.clone() } else { format!("{id}.{name}") };
            let raw_rel = format!("data/{vid}.raw.c2f");
            let truth_rel = format!("data/{vid}.truth.c2f");
            let provenance = format!("synth sample={vid} seed={} {}", seeds[i], spec);
            write_c2(&dir.join(&raw_rel), &r, &format!("{provenance} role=raw"))?;
            write_c2(&dir.join(&truth_rel), &t, &format!("{provenance} role=truth"))?;
            if splits[i] == Split::Train {
                train_crops += crops_per_map(r.n_frames(), d.crop_size, d.crop_stride)?;
            }
            records.push(Record {
                sample_id: vid,
                split: splits[i],
                raw_path: raw_rel,
                truth_path: truth_rel,
                n_frames: r.n_frames(),
                spec: spec.clone(),
                seed: seeds[i],
            });
        }
    }
    let manifest = Manifest { dir: dir.clone(), records };
    manifest.write(&cfg.manifest_path())?;
    Ok(DatasetSummary {
        base: split_counts(d.n_samples, d.splits)?,
        records: Split::ALL.map(|s| manifest.count(s)),
        train_crops,
    })
}

/// A held-out (raw, truth) pair read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedPair {
    pub sample_id: String,
    pub raw: C2Matrix,
    pub truth: C2Matrix,
}

pub fn load_pairs(manifest: &Manifest, split: Split) -> Result<Vec<LoadedPair>> {
    manifest
        .split(split)
        .map(|r| {
            let raw = read_c2(&manifest.resolve(&r.raw_path))?;
            let truth = read_c2(&manifest.resolve(&r.truth_path))?;
            if raw.n_frames() != truth.n_frames() || raw.n_frames() != r.n_frames {
                return Err(Error::Shape(format!("{}: raw, truth and manifest T disagree", r.sample_id)));
            }
            Ok(LoadedPair { sample_id: r.sample_id.clone(), raw, truth })
        })
        .collect()
}

/// Standardized training crops from the train split, in manifest order.
/// Maps no larger than `crop_size` are used whole.
pub fn training_pairs(manifest: &Manifest, crop_size: usize, crop_stride: usize, limit: Option<usize>) -> Result<Vec<TrainingPair>> {
    let mut out = Vec::new();
    for pair in load_pairs(manifest, Split::Train)? {
        let crops = if pair.raw.n_frames() <= crop_size {
            vec![(pair.raw, pair.truth)]
        } else {
            crop_pair(&pair.raw, &pair.truth, crop_size, crop_stride)?
        };
        for (r, t) in crops {
            if limit.is_some_and(|l| out.len() >= l) {
                return Ok(out);
            }
            out.push(TrainingPair::from_maps(&r, &t)?);
        }
    }
    if out.is_empty() {
        return Err(Error::config("manifest has no training samples"));
    }
    Ok(out)
}

/// Per-split record counts keyed by name, for reporting.
pub fn split_table(summary: &DatasetSummary) -> BTreeMap<&'static str, usize> {
    Split::ALL.iter().zip(summary.records).map(|(s, n)| (s.as_str(), n)).collect()
}
