use std::collections::HashSet;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::data::{load_image, DatasetManifest, ImageTensor, Split};
use crate::error::{Error, Result};
use crate::model::{forward, NetworkParams};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolEntry {
    pub id: u64,
    /// Relative to the pool root.
    pub lr: PathBuf,
    pub hr: Option<PathBuf>,
}

/// The unlabeled pool: LR inputs with optional held-back HR labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolManifest {
    pub domain: String,
    pub root: PathBuf,
    pub entries: Vec<PoolEntry>,
}

impl PoolManifest {
    pub fn new(domain: impl Into<String>, root: impl Into<PathBuf>, entries: Vec<PoolEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("pool is empty".into()));
        }
        let mut seen = HashSet::new();
        if let Some(e) = entries.iter().find(|e| !seen.insert(e.id)) {
            return Err(Error::InvalidArgument(format!("duplicate pool id {}", e.id)));
        }
        Ok(Self {
            domain: domain.into(),
            root: root.into(),
            entries,
        })
    }

    /// The `split` entries of a dataset manifest, tagged with `domain`.
    pub fn from_dataset(m: &DatasetManifest, split: Split, domain: impl Into<String>) -> Result<Self> {
        let entries = m
            .entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| PoolEntry { id: e.id, lr: e.lr.clone(), hr: e.hr.clone() })
            .collect();
        Self::new(domain, m.root.clone(), entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.id).collect()
    }

    /// SHA-256 of the domain tag and the `id,lr,hr` lines, as hex.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.domain.as_bytes());
        h.update(b"\n");
        for e in &self.entries {
            let hr = e.hr.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            h.update(format!("{},{},{}\n", e.id, e.lr.display(), hr).as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn load(&self, id: u64, rel: &std::path::Path) -> Result<ImageTensor> {
        load_image(&self.root.join(rel)).map_err(|e| Error::Sample { id, source: Box::new(e) })
    }

    pub fn load_lr(&self, index: usize) -> Result<ImageTensor> {
        let e = &self.entries[index];
        self.load(e.id, &e.lr)
    }

    /// Queries the labeling oracle for entry `index`.
    pub fn load_hr(&self, index: usize) -> Result<ImageTensor> {
        let e = &self.entries[index];
        let hr = e.hr.as_ref().ok_or(Error::MissingLabel(e.id))?;
        self.load(e.id, hr)
    }
}

/// Mean predicted variance of one pool sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredSample {
    pub id: u64,
    pub score: f64,
}

/// Scores already loaded inputs, in order.
pub fn score_images<'a>(
    params: &NetworkParams,
    inputs: impl IntoIterator<Item = (u64, &'a ImageTensor)>,
) -> Result<Vec<ScoredSample>> {
    inputs
        .into_iter()
        .map(|(id, x)| {
            let out = forward(params, x).map_err(|e| Error::Sample { id, source: Box::new(e) })?;
            Ok(ScoredSample { id, score: out.mean_variance(0) })
        })
        .collect()
}

/// Loads every LR input and scores it by the pixel mean of the predicted
/// variance. Output order matches the manifest.
pub fn score_pool(params: &NetworkParams, pool: &PoolManifest) -> Result<Vec<ScoredSample>> {
    let mut out = Vec::with_capacity(pool.len());
    for i in 0..pool.len() {
        let x = pool.load_lr(i)?;
        out.extend(score_images(params, [(pool.entries[i].id, &x)])?);
    }
    Ok(out)
}
