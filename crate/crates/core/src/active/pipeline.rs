use std::fmt;
use std::str::FromStr;

use super::pool::{score_images, PoolManifest};
use super::select::{select_random, top_k, SelectionResult};
use crate::data::{ImageTensor, LabeledPair};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::model::{finetune, forward, train, ArchDescriptor, NetworkParams, TrainConfig};
use crate::rng;

/// Experimental arms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    /// Trained from scratch on a random budget-sized subset.
    Random,
    /// Pretrained on synthetic data only.
    Sim,
    /// Pretrained, then fine-tuned on a random subset.
    SimRandom,
    /// Pretrained, then fine-tuned on the most uncertain subset.
    UsimDal,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Random, Arm::Sim, Arm::SimRandom, Arm::UsimDal];

    pub fn needs_pretraining(self) -> bool {
        self != Arm::Random
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Random => "Random",
            Arm::Sim => "SIM",
            Arm::SimRandom => "SIM+Random",
            Arm::UsimDal => "USIM-DAL",
        })
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "random" => Ok(Arm::Random),
            "sim" => Ok(Arm::Sim),
            "sim+random" | "sim-random" => Ok(Arm::SimRandom),
            "usim-dal" | "usimdal" => Ok(Arm::UsimDal),
            _ => Err(Error::InvalidArgument(format!("unknown arm {s:?}"))),
        }
    }
}

/// A pool held in memory, with its labels where the oracle has them.
pub struct LoadedPool {
    pub manifest: PoolManifest,
    pub lr: Vec<ImageTensor>,
    pub hr: Vec<Option<ImageTensor>>,
}

impl LoadedPool {
    pub fn load(manifest: PoolManifest) -> Result<Self> {
        let mut lr = Vec::with_capacity(manifest.len());
        let mut hr = Vec::with_capacity(manifest.len());
        for i in 0..manifest.len() {
            lr.push(manifest.load_lr(i)?);
            hr.push(match manifest.entries[i].hr {
                Some(_) => Some(manifest.load_hr(i)?),
                None => None,
            });
        }
        Ok(Self { manifest, lr, hr })
    }

    fn index_of(&self, id: u64) -> Result<usize> {
        self.manifest
            .entries
            .iter()
            .position(|e| e.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("id {id} is not in the pool")))
    }

    /// Asks the labeling oracle for the selected ids.
    pub fn label(&self, ids: &[u64]) -> Result<Vec<LabeledPair>> {
        ids.iter()
            .map(|&id| {
                let i = self.index_of(id)?;
                let hr = self.hr[i].clone().ok_or(Error::MissingLabel(id))?;
                LabeledPair::new(self.lr[i].clone(), hr)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub budget: usize,
    pub seed: u64,
    /// Score/select/fine-tune rounds for the uncertainty arm; the budget is
    /// split evenly across rounds.
    pub rounds: usize,
    pub arch: ArchDescriptor,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    /// Training schedule for the from-scratch arm.
    pub scratch: TrainConfig,
}

impl PipelineConfig {
    pub fn validate(&self, pool_len: usize) -> Result<()> {
        if self.budget == 0 || self.budget > pool_len {
            return Err(Error::InvalidArgument(format!("budget {} outside 1..={pool_len}", self.budget)));
        }
        if self.rounds == 0 || self.rounds > self.budget {
            return Err(Error::InvalidArgument(format!("rounds {} outside 1..={}", self.rounds, self.budget)));
        }
        self.pretrain.validate()?;
        self.scratch.validate()?;
        Ok(())
    }

    /// Seed of the random subset; shared by the two random arms.
    pub fn selection_seed(&self) -> u64 {
        rng::mix(self.seed, self.budget as u64)
    }
}

/// Per-round record of the uncertainty arm.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub selection: SelectionResult,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug)]
pub struct ArmOutcome {
    pub arm: Arm,
    pub budget: usize,
    pub seed: u64,
    pub rounds: Vec<RoundRecord>,
    pub metrics: MetricReport,
    pub params: NetworkParams,
}

/// Metrics of `params` on a labeled test set, predictions clamped to [0, 1].
pub fn evaluate(params: &NetworkParams, test: &[LabeledPair]) -> Result<MetricReport> {
    let preds = test
        .iter()
        .map(|p| forward(params, &p.lr)?.mean_image(0))
        .collect::<Result<Vec<_>>>()?;
    MetricReport::average(preds.iter().zip(test.iter().map(|p| &p.hr)))
}

/// Pretrains on the synthetic set.
pub fn pretrain(sim: &[LabeledPair], cfg: &PipelineConfig) -> Result<NetworkParams> {
    let tc = TrainConfig { seed: rng::mix(cfg.seed, 1), ..cfg.pretrain.clone() };
    Ok(train(sim, &tc, None, cfg.arch)?.params)
}

fn round_sizes(budget: usize, rounds: usize) -> Vec<usize> {
    (0..rounds).map(|r| budget / rounds + usize::from(r < budget % rounds)).collect()
}

/// Runs one arm from an optional pretrained state (required by every arm
/// except Random) and evaluates it on `test`.
pub fn run_arm(
    arm: Arm,
    cfg: &PipelineConfig,
    pretrained: Option<&NetworkParams>,
    pool: &LoadedPool,
    test: &[LabeledPair],
) -> Result<ArmOutcome> {
    cfg.validate(pool.manifest.len())?;
    let need = || pretrained.ok_or_else(|| Error::InvalidArgument(format!("arm {arm} needs pretrained parameters")));
    let ft = |params: &NetworkParams, subset: &[LabeledPair], round: u64| {
        let tc = TrainConfig { seed: rng::mix(cfg.seed, 100 + round), ..cfg.finetune.clone() };
        finetune(params, subset, &tc)
    };
    let mut rounds = Vec::new();
    let params = match arm {
        Arm::Sim => need()?.clone(),
        Arm::Random => {
            let sel = select_random(&pool.manifest, cfg.budget, cfg.selection_seed())?;
            let subset = pool.label(&sel.ids())?;
            let tc = TrainConfig { seed: rng::mix(cfg.seed, 2), ..cfg.scratch.clone() };
            let rep = train(&subset, &tc, None, cfg.arch)?;
            rounds.push(RoundRecord { selection: sel, initial_loss: rep.initial_loss, final_loss: rep.final_loss });
            rep.params
        }
        Arm::SimRandom => {
            let sel = select_random(&pool.manifest, cfg.budget, cfg.selection_seed())?;
            let subset = pool.label(&sel.ids())?;
            let rep = ft(need()?, &subset, 0)?;
            rounds.push(RoundRecord { selection: sel, initial_loss: rep.initial_loss, final_loss: rep.final_loss });
            rep.params
        }
        Arm::UsimDal => {
            let hash = pool.manifest.content_hash();
            let mut params = need()?.clone();
            let mut labeled: Vec<u64> = Vec::new();
            for (r, k) in round_sizes(cfg.budget, cfg.rounds).into_iter().enumerate() {
                let remaining = pool
                    .manifest
                    .entries
                    .iter()
                    .zip(&pool.lr)
                    .filter(|(e, _)| !labeled.contains(&e.id))
                    .map(|(e, x)| (e.id, x));
                let scores = score_images(&params, remaining)?;
                let sel = top_k(&scores, k, &hash)?;
                labeled.extend(sel.ids());
                let subset = pool.label(&labeled)?;
                let rep = ft(&params, &subset, r as u64)?;
                params = rep.params;
                rounds.push(RoundRecord { selection: sel, initial_loss: rep.initial_loss, final_loss: rep.final_loss });
            }
            params
        }
    };
    let metrics = evaluate(&params, test)?;
    Ok(ArmOutcome { arm, budget: cfg.budget, seed: cfg.seed, rounds, metrics, params })
}

/// Outcomes of a set of arms sharing one pretrained state.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub dataset: String,
    pub outcomes: Vec<ArmOutcome>,
}

/// Pretrains once if any arm needs it, then runs each arm.
pub fn run_pipeline(
    arms: &[Arm],
    cfg: &PipelineConfig,
    sim: &[LabeledPair],
    pool: &LoadedPool,
    test: &[LabeledPair],
) -> Result<RunReport> {
    if arms.is_empty() {
        return Err(Error::InvalidArgument("no arms to run".into()));
    }
    let pretrained = match arms.iter().any(|a| a.needs_pretraining()) {
        true => Some(pretrain(sim, cfg)?),
        false => None,
    };
    let outcomes = arms
        .iter()
        .map(|&arm| run_arm(arm, cfg, pretrained.as_ref(), pool, test))
        .collect::<Result<_>>()?;
    Ok(RunReport { dataset: pool.manifest.domain.clone(), outcomes })
}

impl RunReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("# usimdal run report\ndataset={}\n", self.dataset);
        for o in &self.outcomes {
            s.push_str(&format!("\n[arm={} budget={} seed={}]\n", o.arm, o.budget, o.seed));
            for (i, r) in o.rounds.iter().enumerate() {
                let ids: Vec<String> = r.selection.ids().iter().map(u64::to_string).collect();
                s.push_str(&format!("round{i}.strategy={}\n", r.selection.strategy.kind));
                s.push_str(&format!("round{i}.selected={}\n", ids.join(",")));
                s.push_str(&format!("round{i}.train_loss={:.6},{:.6}\n", r.initial_loss, r.final_loss));
            }
            let m = o.metrics;
            s.push_str(&format!("mse={:.8}\nmae={:.8}\npsnr={:.6}\nssim={:.6}\n", m.mse, m.mae, m.psnr, m.ssim));
        }
        s
    }
}
