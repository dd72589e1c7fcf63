//! Dataset manifest: a tab-separated table with the header
//! `sample_id split raw_path truth_path T spec seed`. Paths are relative to
//! the manifest's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{read_bytes, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Split> {
        Split::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown split {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub sample_id: String,
    pub split: Split,
    pub raw_path: String,
    pub truth_path: String,
    #[serde(rename = "T")]
    pub n_frames: usize,
    pub spec: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory the record paths are relative to.
    pub dir: PathBuf,
    pub records: Vec<Record>,
}

impl Manifest {
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn to_tsv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
        for r in &self.records {
            if [&r.sample_id, &r.raw_path, &r.truth_path, &r.spec].iter().any(|f| f.contains(['\t', '\n'])) {
                return Err(Error::config(format!("manifest field of {} contains a tab or newline", r.sample_id)));
            }
            w.serialize(r).map_err(|e| Error::format("manifest", e.to_string()))?;
        }
        if self.records.is_empty() {
            w.write_record(["sample_id", "split", "raw_path", "truth_path", "T", "spec", "seed"])
                .map_err(|e| Error::format("manifest", e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::format("manifest", e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_tsv()?)
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let origin = path.display().to_string();
        let bytes = read_bytes(path)?;
        let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(bytes.as_slice());
        let header = r.headers().map_err(|e| Error::format(&origin, e.to_string()))?;
        if header != vec!["sample_id", "split", "raw_path", "truth_path", "T", "spec", "seed"] {
            return Err(Error::format(&origin, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
        }
        let records = r
            .deserialize()
            .collect::<Result<Vec<Record>, _>>()
            .map_err(|e| Error::format(&origin, e.to_string()))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { dir, records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, split: Split) -> Record {
        Record {
            sample_id: id.into(),
            split,
            raw_path: format!("data/{id}.raw.c2f"),
            truth_path: format!("data/{id}.truth.c2f"),
            n_frames: 64,
            spec: "stationary_kww gamma=1 tau_c=20; P=4000 M=1 mu=5".into(),
            seed: 17,
        }
    }

    #[test]
    fn tsv_has_header_and_tab_separated_rows() {
        let m = Manifest { dir: PathBuf::new(), records: vec![rec("s0000", Split::Train), rec("s0001", Split::Test)] };
        let text = String::from_utf8(m.to_tsv().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "sample_id\tsplit\traw_path\ttruth_path\tT\tspec\tseed");
        assert_eq!(
            lines[2],
            "s0001\ttest\tdata/s0001.raw.c2f\tdata/s0001.truth.c2f\t64\tstationary_kww gamma=1 tau_c=20; P=4000 M=1 mu=5\t17"
        );
    }

    #[test]
    fn read_back_and_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.tsv");
        let m = Manifest { dir: dir.path().to_path_buf(), records: vec![rec("s0000", Split::Val)] };
        m.write(&path).unwrap();
        let back = Manifest::read(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.resolve("data/x.c2f"), dir.path().join("data/x.c2f"));
        assert_eq!(back.count(Split::Val), 1);
    }

    #[test]
    fn wrong_header_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        std::fs::write(&path, "id\tsplit\n").unwrap();
        assert_eq!(Manifest::read(&path).unwrap_err().code(), "E_FORMAT");
    }
}
