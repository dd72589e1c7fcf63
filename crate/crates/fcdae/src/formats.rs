//! Binary map and pixel-series files plus their text sidecars.
//!
//! `C2F1`: magic, `u32` T, then T² little-endian `f64` row-major.
//! `PXS1`: magic, `u32` P, `u32` T, then P·T little-endian `f64`, one
//! pixel's time series after another. Either file may have a
//! `<file>.meta` sidecar of `key: value` lines carrying
//! `frame_interval_s`, `q_label` and `provenance`.
//!
//! Every write goes to a temporary file in the target directory that is
//! then renamed over the destination, so readers never see partial files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fcdae_core::c2::{C2Matrix, PixelSeries};

use crate::error::{Error, Result};

pub const C2_MAGIC: &[u8; 4] = b"C2F1";
pub const PXS_MAGIC: &[u8; 4] = b"PXS1";

/// Writes `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(Error::io(dir))?;
    tmp.write_all(bytes).map_err(Error::io(path))?;
    tmp.as_file().sync_all().map_err(Error::io(path))?;
    tmp.persist(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(Error::io(path))
}

/// Small cursor over a byte buffer that reports truncation against the
/// named origin.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], origin: &'a str) -> Self {
        Reader { bytes, pos: 0, origin }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                origin: self.origin.to_string(),
                what: format!("{what} needs {n} bytes, {} left", self.remaining()),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let found = self.take(4, "magic")?;
        if found != expected {
            return Err(Error::BadMagic {
                origin: self.origin.to_string(),
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let n = count.checked_mul(8).ok_or_else(|| Error::format(self.origin, format!("{what}: size overflow")))?;
        let raw = self.take(n, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn finish(&self) -> Result<()> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(Error::format(self.origin, format!("{n} trailing bytes"))),
        }
    }
}

pub(crate) fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn dim_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Shape(format!("{what} {n} does not fit the u32 header field")))
}

pub fn c2_to_bytes(c2: &C2Matrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + c2.values().len() * 8);
    out.extend_from_slice(C2_MAGIC);
    out.extend_from_slice(&dim_u32(c2.n_frames(), "T")?.to_le_bytes());
    push_f64s(&mut out, c2.values());
    Ok(out)
}

pub fn c2_from_bytes(bytes: &[u8]) -> Result<C2Matrix> {
    decode_c2(bytes, "<buffer>")
}

fn decode_c2(bytes: &[u8], origin: &str) -> Result<C2Matrix> {
    let mut r = Reader::new(bytes, origin);
    r.magic(C2_MAGIC)?;
    let n = r.u32("T")? as usize;
    let values = r.f64s(n * n, "map values")?;
    r.finish()?;
    Ok(C2Matrix::new(n, values)?)
}

pub fn pxs_to_bytes(series: &PixelSeries) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + series.intensities().len() * 8);
    out.extend_from_slice(PXS_MAGIC);
    out.extend_from_slice(&dim_u32(series.n_pixels(), "P")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(series.n_frames(), "T")?.to_le_bytes());
    push_f64s(&mut out, series.intensities());
    Ok(out)
}

pub fn pxs_from_bytes(bytes: &[u8]) -> Result<PixelSeries> {
    decode_pxs(bytes, "<buffer>")
}

fn decode_pxs(bytes: &[u8], origin: &str) -> Result<PixelSeries> {
    let mut r = Reader::new(bytes, origin);
    r.magic(PXS_MAGIC)?;
    let p = r.u32("P")? as usize;
    let t = r.u32("T")? as usize;
    let values = r.f64s(p * t, "intensities")?;
    r.finish()?;
    Ok(PixelSeries::new(p, t, values)?)
}

/// Contents of a `.meta` sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct Meta {
    pub frame_interval_s: f64,
    pub q_label: String,
    pub provenance: String,
}

impl Meta {
    pub fn to_text(&self) -> String {
        format!(
            "frame_interval_s: {}\nq_label: {}\nprovenance: {}\n",
            self.frame_interval_s,
            one_line(&self.q_label),
            one_line(&self.provenance)
        )
    }

    pub fn parse(text: &str, origin: &str) -> Result<Meta> {
        let mut meta = Meta { frame_interval_s: 1.0, q_label: String::new(), provenance: String::new() };
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| Error::format(origin, format!("line {}: expected `key: value`", k + 1)))?;
            let value = value.trim();
            match key.trim() {
                "frame_interval_s" => {
                    meta.frame_interval_s = value
                        .parse()
                        .map_err(|_| Error::format(origin, format!("line {}: bad frame_interval_s {value:?}", k + 1)))?
                }
                "q_label" => meta.q_label = value.to_string(),
                "provenance" => meta.provenance = value.to_string(),
                other => return Err(Error::format(origin, format!("line {}: unknown key {other:?}", k + 1))),
            }
        }
        Ok(meta)
    }
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".meta");
    PathBuf::from(name)
}

pub fn read_meta(path: &Path) -> Result<Option<Meta>> {
    let mp = meta_path(path);
    if !mp.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&mp).map_err(Error::io(&mp))?;
    Meta::parse(&text, &mp.display().to_string()).map(Some)
}

/// Writes the map and its sidecar.
pub fn write_c2(path: &Path, c2: &C2Matrix, provenance: &str) -> Result<()> {
    write_atomic(path, &c2_to_bytes(c2)?)?;
    let meta = Meta {
        frame_interval_s: c2.frame_interval_s,
        q_label: c2.q_label.clone(),
        provenance: provenance.to_string(),
    };
    write_atomic(&meta_path(path), meta.to_text().as_bytes())
}

/// Reads a map, applying its sidecar when one exists.
pub fn read_c2(path: &Path) -> Result<C2Matrix> {
    let c2 = decode_c2(&read_bytes(path)?, &path.display().to_string())?;
    Ok(match read_meta(path)? {
        Some(m) => c2.with_meta(m.frame_interval_s, m.q_label),
        None => c2,
    })
}

pub fn write_pxs(path: &Path, series: &PixelSeries, provenance: &str) -> Result<()> {
    write_atomic(path, &pxs_to_bytes(series)?)?;
    let meta = Meta {
        frame_interval_s: series.frame_interval_s,
        q_label: series.q_label.clone(),
        provenance: provenance.to_string(),
    };
    write_atomic(&meta_path(path), meta.to_text().as_bytes())
}

pub fn read_pxs(path: &Path) -> Result<PixelSeries> {
    let s = decode_pxs(&read_bytes(path)?, &path.display().to_string())?;
    Ok(match read_meta(path)? {
        Some(m) => s.with_meta(m.frame_interval_s, m.q_label),
        None => s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c2_layout_is_magic_size_then_values() {
        let c2 = C2Matrix::new(2, vec![1.0, 2.0, 2.0, 3.0]).unwrap();
        let b = c2_to_bytes(&c2).unwrap();
        assert_eq!(&b[..4], b"C2F1");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..16], &1.0f64.to_le_bytes());
        assert_eq!(&b[32..40], &3.0f64.to_le_bytes());
        assert_eq!(b.len(), 8 + 4 * 8);
    }

    #[test]
    fn pxs_layout_is_magic_p_t_then_values() {
        let s = PixelSeries::new(2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let b = pxs_to_bytes(&s).unwrap();
        assert_eq!(&b[..4], b"PXS1");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..12], &3u32.to_le_bytes());
        assert_eq!(&b[12 + 5 * 8..], &5.0f64.to_le_bytes());
        assert_eq!(pxs_from_bytes(&b).unwrap(), s);
    }

    #[test]
    fn decoding_rejects_damage() {
        let c2 = C2Matrix::new(2, vec![1.0, 2.0, 2.0, 3.0]).unwrap();
        let good = c2_to_bytes(&c2).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(c2_from_bytes(&bad), Err(Error::BadMagic { .. })));
        assert!(matches!(c2_from_bytes(&good[..good.len() - 1]), Err(Error::Truncated { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(c2_from_bytes(&long), Err(Error::Format { .. })));
        let mut asym = good;
        asym[16..24].copy_from_slice(&2.5f64.to_le_bytes());
        let err = c2_from_bytes(&asym).unwrap_err();
        assert_eq!(err.code(), "E_SHAPE");
    }

    #[test]
    fn meta_round_trip_and_strictness() {
        let m = Meta { frame_interval_s: 0.0125, q_label: "q=0.003".into(), provenance: "synth s0001".into() };
        assert_eq!(Meta::parse(&m.to_text(), "x").unwrap(), m);
        assert!(Meta::parse("colour: red\n", "x").is_err());
        assert!(Meta::parse("frame_interval_s: fast\n", "x").is_err());
    }
}
