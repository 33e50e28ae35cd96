use std::fmt;
use std::str::FromStr;

use rand::seq::index;

use super::pool::{PoolManifest, ScoredSample};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyKind {
    UncertaintyTopK,
    Random,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::UncertaintyTopK => "uncertainty_topk",
            StrategyKind::Random => "random",
        })
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uncertainty_topk" => Ok(StrategyKind::UncertaintyTopK),
            "random" => Ok(StrategyKind::Random),
            _ => Err(Error::InvalidArgument(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AcquisitionStrategy {
    pub kind: StrategyKind,
    pub k: usize,
    /// Used by the random kind only.
    pub seed: Option<u64>,
}

/// The budgeted subset chosen for labeling.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    pub strategy: AcquisitionStrategy,
    pub pool_hash: String,
    /// Selected ids in selection order, with scores when the strategy has them.
    pub selected: Vec<(u64, Option<f64>)>,
}

fn check_budget(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("budget {k} outside 1..={n}")));
    }
    Ok(())
}

/// The `k` highest scores, ties broken by ascending id; ordered by
/// descending score, then id.
pub fn top_k(scores: &[ScoredSample], k: usize, pool_hash: &str) -> Result<SelectionResult> {
    check_budget(k, scores.len())?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    Ok(SelectionResult {
        strategy: AcquisitionStrategy { kind: StrategyKind::UncertaintyTopK, k, seed: None },
        pool_hash: pool_hash.to_string(),
        selected: sorted[..k].iter().map(|s| (s.id, Some(s.score))).collect(),
    })
}

/// Uniform sample of `k` ids without replacement.
pub fn select_random(pool: &PoolManifest, k: usize, seed: u64) -> Result<SelectionResult> {
    check_budget(k, pool.len())?;
    let picks = index::sample(&mut rng::stream(seed), pool.len(), k);
    Ok(SelectionResult {
        strategy: AcquisitionStrategy { kind: StrategyKind::Random, k, seed: Some(seed) },
        pool_hash: pool.content_hash(),
        selected: picks.into_iter().map(|i| (pool.entries[i].id, None)).collect(),
    })
}

impl SelectionResult {
    pub fn ids(&self) -> Vec<u64> {
        self.selected.iter().map(|s| s.0).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# usimdal selection schema=1\n");
        s.push_str(&format!("strategy={}\n", self.strategy.kind));
        s.push_str(&format!("k={}\n", self.strategy.k));
        if let Some(seed) = self.strategy.seed {
            s.push_str(&format!("seed={seed}\n"));
        }
        s.push_str(&format!("pool_hash={}\n", self.pool_hash));
        s.push_str("id,score\n");
        for (id, score) in &self.selected {
            match score {
                Some(v) => s.push_str(&format!("{id},{v:e}\n")),
                None => s.push_str(&format!("{id},\n")),
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidArgument(format!("selection file: {m}"));
        let mut kind = None;
        let mut k = None;
        let mut seed = None;
        let mut hash = None;
        let mut selected = Vec::new();
        let mut in_rows = false;
        for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            if in_rows {
                let (id, score) = line.split_once(',').ok_or_else(|| bad(format!("bad row {line:?}")))?;
                let id = id.parse().map_err(|_| bad(format!("bad id {id:?}")))?;
                let score = if score.is_empty() {
                    None
                } else {
                    Some(score.parse().map_err(|_| bad(format!("bad score {score:?}")))?)
                };
                selected.push((id, score));
            } else if line == "id,score" {
                in_rows = true;
            } else {
                let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("bad line {line:?}")))?;
                match key {
                    "strategy" => kind = Some(value.parse()?),
                    "k" => k = Some(value.parse().map_err(|_| bad(format!("bad k {value:?}")))?),
                    "seed" => seed = Some(value.parse().map_err(|_| bad(format!("bad seed {value:?}")))?),
                    "pool_hash" => hash = Some(value.to_string()),
                    _ => return Err(bad(format!("unknown key {key:?}"))),
                }
            }
        }
        let k: usize = k.ok_or_else(|| bad("missing k".into()))?;
        if selected.len() != k {
            return Err(bad(format!("k={k} but {} rows", selected.len())));
        }
        Ok(Self {
            strategy: AcquisitionStrategy { kind: kind.ok_or_else(|| bad("missing strategy".into()))?, k, seed },
            pool_hash: hash.ok_or_else(|| bad("missing pool_hash".into()))?,
            selected,
        })
    }
}
