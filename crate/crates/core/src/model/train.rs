use std::path::PathBuf;

use rand::seq::SliceRandom;

use super::checkpoint::save_checkpoint;
use super::loss::{nll_graph, nll_loss};
use super::network::{forward_batch, forward_graph, ArchDescriptor, NetworkParams, DEFAULT_VAR_FLOOR};
use crate::data::{ImageTensor, LabeledPair};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, backward, AdamConfig, OptimizerState, Tape, Tensor};
use crate::rng;

const EVAL_BATCH: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub var_floor: f64,
    /// Rewritten after every epoch when set.
    pub checkpoint: Option<PathBuf>,
}

impl TrainConfig {
    pub fn pretrain_default() -> Self {
        Self {
            epochs: 5,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
            var_floor: DEFAULT_VAR_FLOOR,
            checkpoint: None,
        }
    }

    pub fn finetune_default() -> Self {
        Self {
            lr: 1e-4,
            ..Self::pretrain_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        self.validate_allowing_zero_epochs()
    }

    fn validate_allowing_zero_epochs(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.var_floor > 0.0 && self.var_floor.is_finite()) {
            return Err(Error::InvalidArgument(format!("variance floor must be positive, got {}", self.var_floor)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub params: NetworkParams,
    /// Training-set loss before the first update.
    pub initial_loss: f64,
    /// Training-set loss after the last update.
    pub final_loss: f64,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

fn stack(pairs: &[&LabeledPair]) -> Result<(Tensor, Tensor)> {
    let lr: Vec<&ImageTensor> = pairs.iter().map(|p| &p.lr).collect();
    let hr: Vec<&ImageTensor> = pairs.iter().map(|p| &p.hr).collect();
    Ok((ImageTensor::batch(&lr)?, ImageTensor::batch(&hr)?))
}

/// One optimizer update on a batch. `trainable[i]` selects which tensors (in
/// layout order) receive updates; the others are held fixed. Returns the
/// loss before the update.
pub fn train_step(
    params: &mut NetworkParams,
    state: &mut OptimizerState,
    lr_batch: &Tensor,
    hr_batch: &Tensor,
    trainable: &[bool],
) -> Result<f64> {
    let arch = *params.arch();
    let current: Vec<Tensor> = params.ordered().into_iter().cloned().collect();
    if trainable.len() != current.len() {
        return Err(Error::Shape(format!("{} trainable flags for {} tensors", trainable.len(), current.len())));
    }
    let mut tape = Tape::new();
    let nodes: Vec<_> = current
        .iter()
        .zip(trainable)
        .map(|(t, &on)| if on { tape.param(t.clone()) } else { tape.constant(t.clone()) })
        .collect();
    let x = tape.constant(lr_batch.clone());
    let y = tape.constant(hr_batch.clone());
    let heads = forward_graph(&mut tape, &arch, &nodes, x)?;
    let loss_node = nll_graph(&mut tape, heads, y)?;
    let loss = tape.value(loss_node).values()[0] as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let mut grads = backward(&tape, loss_node)?;
    let grads: Vec<Tensor> = nodes
        .iter()
        .zip(&current)
        .map(|(&id, t)| grads.take(id).unwrap_or_else(|| Tensor::zeros(t.dims())))
        .collect();
    let mut updated = current;
    adam_step(&mut updated, &grads, state)?;
    params.set_ordered(updated)?;
    Ok(loss)
}

/// Mean loss over a dataset, evaluated in fixed-size batches.
pub fn dataset_loss(params: &NetworkParams, pairs: &[LabeledPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut acc = 0.0;
    for chunk in pairs.chunks(EVAL_BATCH) {
        let refs: Vec<&LabeledPair> = chunk.iter().collect();
        let (x, y) = stack(&refs)?;
        acc += nll_loss(&forward_batch(params, &x)?, &y)? * chunk.len() as f64;
    }
    Ok(acc / pairs.len() as f64)
}

fn run(mut params: NetworkParams, pairs: &[LabeledPair], cfg: &TrainConfig) -> Result<TrainReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    params.set_var_floor(cfg.var_floor)?;
    let initial_loss = dataset_loss(&params, pairs)?;
    let all = vec![true; params.arch().layout().len()];
    let snapshot: Vec<Tensor> = params.ordered().into_iter().cloned().collect();
    let mut state = OptimizerState::new(AdamConfig::with_lr(cfg.lr), &snapshot);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(rng::mix(cfg.seed, epoch as u64)));
        let mut total = 0.0;
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&LabeledPair> = idx.iter().map(|&i| &pairs[i]).collect();
            let (x, y) = stack(&batch)?;
            let loss = match train_step(&mut params, &mut state, &x, &y, &all) {
                Ok(l) => l,
                Err(Error::NonFinite(_)) => {
                    return Err(Error::Divergence { epoch, step, loss: f64::NAN });
                }
                Err(e) => return Err(e),
            };
            total += loss * batch.len() as f64;
        }
        epoch_losses.push(total / pairs.len() as f64);
        if let Some(path) = &cfg.checkpoint {
            save_checkpoint(&params, path)?;
        }
    }
    let final_loss = dataset_loss(&params, pairs)?;
    Ok(TrainReport {
        params,
        initial_loss,
        final_loss,
        epoch_losses,
    })
}

/// Trains from `init`, or from a fresh seeded initialization of `arch`.
pub fn train(
    pairs: &[LabeledPair],
    cfg: &TrainConfig,
    init: Option<NetworkParams>,
    arch: ArchDescriptor,
) -> Result<TrainReport> {
    cfg.validate()?;
    let params = match init {
        Some(p) => p,
        None => NetworkParams::init(ArchDescriptor { var_floor: cfg.var_floor, ..arch }, rng::mix(cfg.seed, u64::MAX))?,
    };
    run(params, pairs, cfg)
}

/// Continues training from pretrained parameters. Zero epochs returns them
/// unchanged.
pub fn finetune(pretrained: &NetworkParams, pairs: &[LabeledPair], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate_allowing_zero_epochs()?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("fine-tuning subset is empty".into()));
    }
    if cfg.epochs == 0 {
        let loss = dataset_loss(pretrained, pairs)?;
        return Ok(TrainReport {
            params: pretrained.clone(),
            initial_loss: loss,
            final_loss: loss,
            epoch_losses: Vec::new(),
        });
    }
    run(pretrained.clone(), pairs, cfg)
}
