//! On-disk dataset manifests.
//!
//! Text format, one entry per line after a two-line header:
//!
//! ```text
//! # usimdal dataset manifest schema=1
//! id,split,lr_path,hr_path,seed,source
//! 0,train,lr/000000.udt,hr/000000.udt,1234,sim:spectrum
//! ```
//!
//! Paths are relative to the manifest's directory; an empty `hr_path` means
//! the label is not available.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::image::LabeledPair;
use super::io::{load_image, write_atomic};
use crate::error::{Error, Result};
use crate::rng;

pub const SCHEMA_VERSION: u32 = 1;
const HEADER: &str = "id,split,lr_path,hr_path,seed,source";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Pool,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Pool => "pool",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "pool" => Ok(Split::Pool),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: u64,
    pub split: Split,
    pub lr: PathBuf,
    pub hr: Option<PathBuf>,
    pub seed: u64,
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative entry paths resolve against.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self {
            schema_version: SCHEMA_VERSION,
            entries,
            root: root.into(),
        };
        m.check_unique()?;
        Ok(m)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id) {
                return Err(Error::InvalidArgument(format!("duplicate manifest id {}", e.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    /// Loads every entry as a labeled pair; unlabeled entries are an error.
    pub fn load_pairs(&self) -> Result<Vec<LabeledPair>> {
        self.entries
            .iter()
            .map(|e| {
                let hr = e.hr.as_ref().ok_or(Error::MissingLabel(e.id))?;
                let load = || LabeledPair::new(load_image(&self.resolve(&e.lr))?, load_image(&self.resolve(hr))?);
                load().map_err(|err| Error::Sample { id: e.id, source: Box::new(err) })
            })
            .collect()
    }

    /// Entries tagged with `split`, as a manifest sharing this root.
    pub fn filter(&self, split: Split) -> Self {
        Self {
            schema_version: self.schema_version,
            entries: self.entries.iter().filter(|e| e.split == split).cloned().collect(),
            root: self.root.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# usimdal dataset manifest schema={}\n{HEADER}\n", self.schema_version);
        for e in &self.entries {
            let hr = e.hr.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.id,
                e.split,
                e.lr.display(),
                hr,
                e.seed,
                e.source
            ));
        }
        s
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let bad = |line: usize, why: &str| Error::InvalidArgument(format!("manifest line {line}: {why}"));
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| bad(1, "empty manifest"))?;
        let schema_version = first
            .strip_prefix("# usimdal dataset manifest schema=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(1, "missing schema header"))?;
        if schema_version != SCHEMA_VERSION {
            return Err(bad(1, &format!("unsupported schema {schema_version}")));
        }
        match lines.next() {
            Some((_, h)) if h.trim() == HEADER => {}
            _ => return Err(bad(2, "missing column header")),
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.splitn(6, ',').collect();
            if f.len() != 6 {
                return Err(bad(i + 1, "expected 6 fields"));
            }
            entries.push(ManifestEntry {
                id: f[0].parse().map_err(|_| bad(i + 1, "bad id"))?,
                split: f[1].parse()?,
                lr: PathBuf::from(f[2]),
                hr: (!f[3].is_empty()).then(|| PathBuf::from(f[3])),
                seed: f[4].parse().map_err(|_| bad(i + 1, "bad seed"))?,
                source: f[5].to_string(),
            });
        }
        let m = Self {
            schema_version,
            entries,
            root: root.into(),
        };
        m.check_unique()?;
        Ok(m)
    }

    /// Atomically writes the manifest; entry paths stay relative to `root`.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    /// Reads a manifest; its root becomes the file's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }
}

/// Seeded, disjoint and exhaustive partition of `manifest` by `ratios`.
///
/// Each output manifest carries its split tag and keeps the input's entry
/// order. Counts are assigned by rounding cumulative ratio boundaries.
pub fn split_manifest(
    manifest: &DatasetManifest,
    ratios: &[(Split, f64)],
    seed: u64,
) -> Result<Vec<DatasetManifest>> {
    let total: f64 = ratios.iter().map(|r| r.1).sum();
    if ratios.is_empty() || (total - 1.0).abs() > 1e-9 || ratios.iter().any(|r| r.1 < 0.0) {
        return Err(Error::InvalidArgument(format!("split ratios must be nonnegative and sum to 1, got {total}")));
    }
    let n = manifest.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed));
    let mut out = Vec::with_capacity(ratios.len());
    let mut cum = 0.0;
    let mut start = 0usize;
    for (k, &(split, ratio)) in ratios.iter().enumerate() {
        cum += ratio;
        let end = if k + 1 == ratios.len() { n } else { ((cum * n as f64).round() as usize).min(n) };
        if ratio > 0.0 && end <= start {
            return Err(Error::InvalidArgument(format!(
                "split {split} with ratio {ratio} would be empty for {n} entries"
            )));
        }
        let mut picked: Vec<usize> = order[start..end.max(start)].to_vec();
        picked.sort_unstable();
        let entries = picked
            .into_iter()
            .map(|i| ManifestEntry {
                split,
                ..manifest.entries[i].clone()
            })
            .collect();
        out.push(DatasetManifest {
            schema_version: manifest.schema_version,
            entries,
            root: manifest.root.clone(),
        });
        start = end.max(start);
    }
    Ok(out)
}
