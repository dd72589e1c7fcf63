//! `FCDA` checkpoint files.
//!
//! Layout: `b"FCDA"`, `u32` version, `u32` header length, a UTF-8 header of
//! `key: value` lines, then the model state as little-endian `f64`. The
//! header carries `encoder_channels`, `kernel_size`, `input_channels`,
//! `seed`, `epochs` and `final_loss`.
//!
//! State order follows the forward pass. For each layer: the kernel
//! weights row-major, then the bias, then (normalized layers only) γ, β,
//! running mean and running variance. Conv kernels are stored
//! `(out, in, kh, kw)`; transposed-conv kernels keep their native
//! `(in, out, kh, kw)` layout.

use std::path::Path;

use fcdae_core::model::{FcDaeArchitecture, FcDaeModel};

use crate::error::{Error, Result};
use crate::formats::{push_f64s, read_bytes, write_atomic, Reader};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FCDA";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training metadata stored next to the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingMeta {
    pub epochs: usize,
    /// `None` for a model that was never trained.
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: FcDaeModel,
    pub meta: TrainingMeta,
}

fn header_text(model: &FcDaeModel, meta: &TrainingMeta) -> String {
    let arch = model.architecture();
    let channels: Vec<String> = arch.encoder_channels.iter().map(|c| c.to_string()).collect();
    let loss = meta.final_loss.map_or_else(|| "none".to_string(), |l| format!("{l:?}"));
    format!(
        "encoder_channels: {}\nkernel_size: {}\ninput_channels: {}\nseed: {}\nepochs: {}\nfinal_loss: {loss}\n",
        channels.join(","),
        arch.kernel_size,
        arch.input_channels,
        model.seed(),
        meta.epochs,
    )
}

pub fn checkpoint_to_bytes(model: &FcDaeModel, meta: &TrainingMeta) -> Vec<u8> {
    let header = header_text(model, meta);
    let blob = model.state_blob();
    let mut out = Vec::with_capacity(12 + header.len() + blob.len() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    push_f64s(&mut out, &blob);
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    decode(bytes, "<buffer>")
}

pub fn save_checkpoint(path: &Path, model: &FcDaeModel, meta: &TrainingMeta) -> Result<()> {
    write_atomic(path, &checkpoint_to_bytes(model, meta))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode(&read_bytes(path)?, &path.display().to_string())
}

struct Header {
    arch: FcDaeArchitecture,
    seed: u64,
    meta: TrainingMeta,
}

fn parse_header(text: &str, origin: &str) -> Result<Header> {
    let mut channels = None;
    let mut kernel = None;
    let mut input = None;
    let mut seed = None;
    let mut epochs = None;
    let mut loss = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| Error::format(origin, format!("header line {line:?} is not `key: value`")))?;
        let value = value.trim();
        let bad = |what: &str| Error::format(origin, format!("header: bad {what} {value:?}"));
        match key.trim() {
            "encoder_channels" => {
                channels = Some(
                    value
                        .split(',')
                        .map(|c| c.trim().parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| bad("encoder_channels"))?,
                )
            }
            "kernel_size" => kernel = Some(value.parse::<usize>().map_err(|_| bad("kernel_size"))?),
            "input_channels" => input = Some(value.parse::<usize>().map_err(|_| bad("input_channels"))?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad("seed"))?),
            "epochs" => epochs = Some(value.parse::<usize>().map_err(|_| bad("epochs"))?),
            "final_loss" => {
                loss = Some(match value {
                    "none" => None,
                    v => Some(v.parse::<f64>().map_err(|_| bad("final_loss"))?),
                })
            }
            other => return Err(Error::format(origin, format!("header: unknown key {other:?}"))),
        }
    }
    let missing = |k: &str| Error::format(origin, format!("header: missing {k}"));
    Ok(Header {
        arch: FcDaeArchitecture {
            encoder_channels: channels.ok_or_else(|| missing("encoder_channels"))?,
            kernel_size: kernel.ok_or_else(|| missing("kernel_size"))?,
            input_channels: input.ok_or_else(|| missing("input_channels"))?,
        },
        seed: seed.ok_or_else(|| missing("seed"))?,
        meta: TrainingMeta {
            epochs: epochs.ok_or_else(|| missing("epochs"))?,
            final_loss: loss.ok_or_else(|| missing("final_loss"))?,
        },
    })
}

fn decode(bytes: &[u8], origin: &str) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes, origin);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { origin: origin.to_string(), found: version, expected: CHECKPOINT_VERSION });
    }
    let header_len = r.u32("header length")? as usize;
    let header = std::str::from_utf8(r.take(header_len, "header")?)
        .map_err(|_| Error::format(origin, "header is not UTF-8"))?;
    let h = parse_header(header, origin)?;
    h.arch.validate().map_err(|e| Error::format(origin, format!("header architecture: {e}")))?;
    let expected = h.arch.state_len();
    if r.remaining() < expected * 8 {
        return Err(Error::Truncated {
            origin: origin.to_string(),
            what: format!("parameter blob holds {} bytes, architecture needs {expected} values", r.remaining()),
        });
    }
    let blob = r.f64s(expected, "parameter blob")?;
    r.finish()?;
    let model = FcDaeModel::from_state_blob(&h.arch, h.seed, &blob)
        .map_err(|e| Error::format(origin, format!("parameter blob: {e}")))?;
    Ok(Checkpoint { model, meta: h.meta })
}
