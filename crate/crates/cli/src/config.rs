//! Flat `key=value` experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use usimdal::active::{Arm, PipelineConfig};
use usimdal::data::DomainKind;
use usimdal::model::{ArchDescriptor, TrainConfig};
use usimdal::{Error, Result};

/// Parsed `key=value` lines; `#` starts a comment line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlatConfig {
    values: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key=value", n + 1)))?;
            if values.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::InvalidArgument(format!("config line {}: duplicate key {}", n + 1, k.trim())));
            }
        }
        Ok(Self { values })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {v:?}"))),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {s:?}"))))
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Where the synthetic labeled set comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum SimSource {
    Manifest(PathBuf),
    Generate { count: usize, size: usize, seed: u64, mix: [f64; 3] },
}

/// Where the target-domain pool and test split come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainSource {
    Manifest(PathBuf),
    Generate { kind: DomainKind, count: usize, size: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub sim: SimSource,
    pub domain: DomainSource,
    pub arms: Vec<Arm>,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub rounds: usize,
    pub arch: ArchDescriptor,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub scratch: TrainConfig,
    pub save_checkpoints: bool,
}

const KNOWN_KEYS: &[&str] = &[
    "dataset.name",
    "sim.manifest",
    "sim.count",
    "sim.size",
    "sim.seed",
    "sim.mix",
    "domain.manifest",
    "domain.kind",
    "domain.count",
    "domain.size",
    "domain.seed",
    "experiment.arms",
    "experiment.budgets",
    "experiment.seeds",
    "experiment.rounds",
    "experiment.save_checkpoints",
    "model.width",
    "model.body_layers",
    "model.skip",
];
const TRAIN_KEYS: &[&str] = &["epochs", "batch", "lr", "var_floor"];

fn train_block(c: &FlatConfig, prefix: &str, default: TrainConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        epochs: c.get(&format!("{prefix}.epochs"), default.epochs)?,
        batch_size: c.get(&format!("{prefix}.batch"), default.batch_size)?,
        lr: c.get(&format!("{prefix}.lr"), default.lr)?,
        var_floor: c.get(&format!("{prefix}.var_floor"), default.var_floor)?,
        ..default
    })
}

impl ExperimentConfig {
    pub fn pretrain_default() -> TrainConfig {
        TrainConfig { epochs: 10, ..TrainConfig::pretrain_default() }
    }

    pub fn finetune_default() -> TrainConfig {
        TrainConfig { epochs: 20, ..TrainConfig::finetune_default() }
    }

    pub fn scratch_default() -> TrainConfig {
        TrainConfig { epochs: 20, ..TrainConfig::pretrain_default() }
    }

    /// Reads a config; relative paths resolve against `base`.
    pub fn from_flat(c: &FlatConfig, base: &Path) -> Result<Self> {
        for key in c.keys() {
            let train_key = ["pretrain", "finetune", "scratch"]
                .iter()
                .any(|p| key.strip_prefix(p).and_then(|r| r.strip_prefix('.')).is_some_and(|r| TRAIN_KEYS.contains(&r)));
            if !train_key && !KNOWN_KEYS.contains(&key) {
                return Err(Error::InvalidArgument(format!("unknown config key {key}")));
            }
        }
        let sim = match c.get_str("sim.manifest") {
            Some(p) => SimSource::Manifest(base.join(p)),
            None => {
                let mix: Vec<f64> = c.get_list("sim.mix", vec![1.0 / 3.0; 3])?;
                let mix: [f64; 3] =
                    mix.try_into().map_err(|_| Error::InvalidArgument("sim.mix needs three weights".into()))?;
                SimSource::Generate {
                    count: c.get("sim.count", 2000)?,
                    size: c.get("sim.size", 64)?,
                    seed: c.get("sim.seed", 1)?,
                    mix,
                }
            }
        };
        let domain = match c.get_str("domain.manifest") {
            Some(p) => DomainSource::Manifest(base.join(p)),
            None => DomainSource::Generate {
                kind: c.get("domain.kind", DomainKind::Mosaics)?,
                count: c.get("domain.count", 500)?,
                size: c.get("domain.size", 64)?,
                seed: c.get("domain.seed", 3)?,
            },
        };
        let default_name = match &domain {
            DomainSource::Generate { kind, .. } => kind.to_string(),
            DomainSource::Manifest(p) => {
                p.parent().and_then(|d| d.file_name()).map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
            }
        };
        let cfg = Self {
            dataset: c.get("dataset.name", default_name)?,
            sim,
            domain,
            arms: c.get_list("experiment.arms", Arm::ALL.to_vec())?,
            budgets: c.get_list("experiment.budgets", vec![25, 50, 100, 200])?,
            seeds: c.get_list("experiment.seeds", vec![0, 1, 2, 3, 4])?,
            rounds: c.get("experiment.rounds", 1)?,
            arch: ArchDescriptor {
                width: c.get("model.width", 32)?,
                body_layers: c.get("model.body_layers", 4)?,
                skip: c.get("model.skip", false)?,
                ..ArchDescriptor::default()
            },
            pretrain: train_block(c, "pretrain", Self::pretrain_default())?,
            finetune: train_block(c, "finetune", Self::finetune_default())?,
            scratch: train_block(c, "scratch", Self::scratch_default())?,
            save_checkpoints: c.get("experiment.save_checkpoints", true)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_flat(&FlatConfig::parse(&text)?, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::InvalidArgument("at least one arm is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.budgets.is_empty() || self.budgets[0] == 0 {
            return Err(Error::InvalidArgument("budgets must be positive".into()));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("budgets must be strictly ascending".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::InvalidArgument("seeds must be distinct".into()));
        }
        if self.rounds == 0 || self.rounds > self.budgets[0] {
            return Err(Error::InvalidArgument(format!("rounds {} outside 1..={}", self.rounds, self.budgets[0])));
        }
        if let SimSource::Generate { count, .. } = self.sim {
            if count == 0 {
                return Err(Error::InvalidArgument("sim.count must be positive".into()));
            }
        }
        self.arch.validate()?;
        self.pretrain.validate()?;
        self.scratch.validate()?;
        TrainConfig { epochs: self.finetune.epochs.max(1), ..self.finetune.clone() }.validate()?;
        Ok(())
    }

    /// Checks budgets against the loaded pool size.
    pub fn check_pool(&self, pool_len: usize) -> Result<()> {
        match self.budgets.last() {
            Some(&k) if k > pool_len => {
                Err(Error::InvalidArgument(format!("budget {k} exceeds pool size {pool_len}")))
            }
            _ => Ok(()),
        }
    }

    pub fn pipeline(&self, budget: usize, seed: u64) -> PipelineConfig {
        PipelineConfig {
            budget,
            seed,
            rounds: self.rounds,
            arch: ArchDescriptor { var_floor: self.pretrain.var_floor, ..self.arch },
            pretrain: self.pretrain.clone(),
            finetune: self.finetune.clone(),
            scratch: self.scratch.clone(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_flat(&FlatConfig::default(), Path::new(".")).expect("defaults are valid")
    }
}
