//! Subcommand implementations. Each returns the text to print on success.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use usimdal::active::{score_pool, select_random, top_k, PoolManifest, ScoredSample, SelectionResult};
use usimdal::data::{
    make_domain_corpus, make_pool_from_dir, save_image, split_manifest, write_atomic, DatasetManifest, DomainKind,
    ImageTensor, Split,
};
use usimdal::metrics::{error_map, uncertainty_diagnostics};
use usimdal::model::{finetune, forward, load_checkpoint, save_checkpoint, train, ArchDescriptor, TrainConfig};
use usimdal::simgen::{gen_dataset, GeneratorConfig};
use usimdal::{Error, Result};

use crate::config::ExperimentConfig;
use crate::experiment::{run_experiment, summary_table, ExperimentOptions};

#[derive(Parser, Debug)]
#[command(name = "usimdal", version, about = "Uncertainty-driven active learning for super-resolution")]
pub struct Cli {
    /// Seed for generation, training and random selection
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Experiment configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Keep finished experiment cells and run only the missing ones
    #[arg(long, global = true)]
    pub resume: bool,
    /// Number of seeds to run concurrently
    #[arg(long, global = true, default_value_t = 1)]
    pub parallel: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic labeled dataset
    Gen(GenArgs),
    /// Build a target-domain corpus (procedural or from a PNG directory)
    Corpus(CorpusArgs),
    /// Train a network on a labeled manifest
    Pretrain(TrainArgs),
    /// Score pool entries by mean predicted variance
    Score(ScoreArgs),
    /// Choose a budgeted subset from scores or at random
    Select(SelectArgs),
    /// Fine-tune a checkpoint on a labeled selection
    Finetune(FinetuneArgs),
    /// Evaluate a checkpoint on a labeled split
    Eval(EvalArgs),
    /// Write uncertainty and error panels plus diagnostics
    Diagnose(EvalArgs),
    /// Run a full multi-arm sweep from a config file
    Experiment,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Spectrum, WMM and combined weights
    #[arg(long, default_value = "0.3333333333333333,0.3333333333333333,0.3333333333333334")]
    pub mix: String,
}

#[derive(Args, Debug)]
pub struct CorpusArgs {
    #[arg(long, default_value = "mosaics")]
    pub kind: String,
    #[arg(long, default_value_t = 500)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Ingest PNG files from this directory instead of rendering
    #[arg(long)]
    pub from_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Labeled manifest
    #[arg(long)]
    pub data: PathBuf,
    /// Split to train on (all entries when omitted)
    #[arg(long)]
    pub split: Option<String>,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Add a nearest-upsampled input skip to the mean head
    #[arg(long)]
    pub skip: bool,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Manifest holding the pool
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value = "pool")]
    pub split: String,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long)]
    pub k: usize,
    /// Scores file written by `score`
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Uniform random selection from this manifest's pool
    #[arg(long)]
    pub random: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub selection: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
}

/// Process exit code for an error: 2 argument, 3 IO, 4 numerical.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        3
    } else if e.is_numerical() || matches!(e, Error::Undefined(_)) {
        4
    } else {
        2
    }
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn train_config(base: TrainConfig, flags: &TrainFlags, seed: Option<u64>) -> TrainConfig {
    TrainConfig {
        epochs: flags.epochs.unwrap_or(base.epochs),
        batch_size: flags.batch.unwrap_or(base.batch_size),
        lr: flags.lr.unwrap_or(base.lr),
        seed: seed.unwrap_or(base.seed),
        ..base
    }
}

fn split_of(m: &DatasetManifest, split: &str) -> Result<DatasetManifest> {
    let s: Split = split.parse()?;
    let sub = m.filter(s);
    if sub.is_empty() {
        return Err(Error::InvalidArgument(format!("manifest has no {s} entries")));
    }
    Ok(sub)
}

pub fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<String> {
    let mix: Vec<f64> = a
        .mix
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad mix weight {s:?}"))))
        .collect::<Result<_>>()?;
    let mix: [f64; 3] = mix.try_into().map_err(|_| Error::InvalidArgument("--mix needs three weights".into()))?;
    let cfg = GeneratorConfig::new(mix, (a.size, a.size), cli.seed.unwrap_or(0))?;
    let m = gen_dataset(&cfg, a.count, &out_path(cli, "sim_data"))?;
    Ok(format!("generated {} pairs", m.len()))
}

pub fn cmd_corpus(cli: &Cli, a: &CorpusArgs) -> Result<String> {
    let out = out_path(cli, "domain_data");
    let seed = cli.seed.unwrap_or(0);
    let m = match &a.from_dir {
        Some(dir) => {
            let all = make_pool_from_dir(dir, &out)?;
            let parts = split_manifest(&all, &[(Split::Pool, 0.8), (Split::Test, 0.2)], seed)?;
            let mut entries: Vec<_> = parts.into_iter().flat_map(|p| p.entries).collect();
            entries.sort_by_key(|e| e.id);
            let m = DatasetManifest::new(&out, entries)?;
            m.write(&out.join("manifest.csv"))?;
            m
        }
        None => make_domain_corpus(a.kind.parse::<DomainKind>()?, a.count, a.size, seed, &out)?,
    };
    Ok(format!(
        "wrote {} entries ({} pool, {} test)",
        m.len(),
        m.filter(Split::Pool).len(),
        m.filter(Split::Test).len()
    ))
}

pub fn cmd_pretrain(cli: &Cli, a: &TrainArgs) -> Result<String> {
    let m = DatasetManifest::read(&a.data)?;
    let m = match &a.split {
        Some(s) => split_of(&m, s)?,
        None => m,
    };
    let pairs = m.load_pairs()?;
    let out = out_path(cli, "pretrained.udc");
    let mut tc = train_config(ExperimentConfig::pretrain_default(), &a.train, cli.seed);
    tc.checkpoint = Some(out.clone());
    let arch = ArchDescriptor { skip: a.skip, ..ArchDescriptor::default() };
    let rep = train(&pairs, &tc, None, arch)?;
    save_checkpoint(&rep.params, &out)?;
    Ok(format!(
        "trained on {} pairs: loss {:.6} -> {:.6}; wrote {}",
        pairs.len(),
        rep.initial_loss,
        rep.final_loss,
        out.display()
    ))
}

pub const SCORES_HEADER: &str = "id,score";

pub fn cmd_score(cli: &Cli, a: &ScoreArgs) -> Result<String> {
    let params = load_checkpoint(&a.checkpoint)?;
    let m = DatasetManifest::read(&a.pool)?;
    let split: Split = a.split.parse()?;
    let pool = PoolManifest::from_dataset(&m, split, split.to_string())?;
    let scores = score_pool(&params, &pool)?;
    let mut text = format!("# usimdal scores pool_hash={}\n{SCORES_HEADER}\n", pool.content_hash());
    for s in &scores {
        text.push_str(&format!("{},{:e}\n", s.id, s.score));
    }
    let out = out_path(cli, "scores.csv");
    write_atomic(&out, text.as_bytes())?;
    Ok(format!("scored {} samples; wrote {}", scores.len(), out.display()))
}

fn read_scores(path: &Path) -> Result<(String, Vec<ScoredSample>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let bad = |m: &str| Error::Corrupt { path: path.into(), reason: m.into() };
    let mut lines = text.lines();
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("# usimdal scores pool_hash="))
        .ok_or_else(|| bad("missing scores header"))?
        .to_string();
    if lines.next() != Some(SCORES_HEADER) {
        return Err(bad("missing column header"));
    }
    let scores = lines
        .map(|l| {
            let (id, s) = l.split_once(',').ok_or_else(|| bad("bad row"))?;
            Ok(ScoredSample {
                id: id.parse().map_err(|_| bad("bad id"))?,
                score: s.parse().map_err(|_| bad("bad score"))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((hash, scores))
}

pub fn cmd_select(cli: &Cli, a: &SelectArgs) -> Result<String> {
    let sel = match (&a.scores, &a.random) {
        (Some(p), None) => {
            let (hash, scores) = read_scores(p)?;
            top_k(&scores, a.k, &hash)?
        }
        (None, Some(p)) => {
            let m = DatasetManifest::read(p)?;
            let pool = PoolManifest::from_dataset(&m, Split::Pool, Split::Pool.to_string())?;
            select_random(&pool, a.k, cli.seed.unwrap_or(0))?
        }
        _ => return Err(Error::InvalidArgument("pass exactly one of --scores or --random".into())),
    };
    let out = out_path(cli, "selection.txt");
    write_atomic(&out, sel.to_text().as_bytes())?;
    Ok(format!("selected {} samples; wrote {}", sel.selected.len(), out.display()))
}

pub fn cmd_finetune(cli: &Cli, a: &FinetuneArgs) -> Result<String> {
    let params = load_checkpoint(&a.checkpoint)?;
    let text = std::fs::read_to_string(&a.selection).map_err(|e| Error::Io { path: a.selection.clone(), source: e })?;
    let sel = SelectionResult::parse(&text)?;
    let m = DatasetManifest::read(&a.pool)?;
    let pool = PoolManifest::from_dataset(&m, Split::Pool, Split::Pool.to_string())?;
    if pool.content_hash() != sel.pool_hash {
        return Err(Error::InvalidArgument("selection was made on a different pool".into()));
    }
    let ids = sel.ids();
    let chosen = DatasetManifest {
        entries: ids
            .iter()
            .map(|id| m.entries.iter().find(|e| e.id == *id).cloned().ok_or(Error::MissingLabel(*id)))
            .collect::<Result<_>>()?,
        ..m
    };
    let pairs = chosen.load_pairs()?;
    let out = out_path(cli, "finetuned.udc");
    let mut tc = train_config(ExperimentConfig::finetune_default(), &a.train, cli.seed);
    tc.checkpoint = Some(out.clone());
    let rep = finetune(&params, &pairs, &tc)?;
    save_checkpoint(&rep.params, &out)?;
    Ok(format!(
        "fine-tuned on {} pairs: loss {:.6} -> {:.6}; wrote {}",
        pairs.len(),
        rep.initial_loss,
        rep.final_loss,
        out.display()
    ))
}

pub fn cmd_eval(_cli: &Cli, a: &EvalArgs) -> Result<String> {
    let params = load_checkpoint(&a.checkpoint)?;
    let pairs = split_of(&DatasetManifest::read(&a.data)?, &a.split)?.load_pairs()?;
    let m = usimdal::active::evaluate(&params, &pairs)?;
    Ok(format!("mse,mae,psnr,ssim\n{:.8},{:.8},{:.6},{:.6}", m.mse, m.mae, m.psnr, m.ssim))
}

/// Scales a non-negative map by its maximum; returns the scale used.
fn normalized(h: usize, w: usize, values: &[f32]) -> Result<(ImageTensor, f32)> {
    let max = values.iter().copied().fold(0.0f32, f32::max);
    let scale = if max > 0.0 { max } else { 1.0 };
    Ok((ImageTensor::from_clamped(h, w, 1, values.iter().map(|v| v / scale).collect())?, scale))
}

fn side_by_side(parts: &[ImageTensor]) -> Result<ImageTensor> {
    let h = parts[0].height();
    let w: usize = parts.iter().map(ImageTensor::width).sum();
    let mut data = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for p in parts {
            for x in 0..p.width() {
                data.extend((0..3).map(|c| p.get(y, x, c)));
            }
        }
    }
    ImageTensor::new(h, w, 3, data)
}

pub fn cmd_diagnose(cli: &Cli, a: &EvalArgs) -> Result<String> {
    let params = load_checkpoint(&a.checkpoint)?;
    let m = split_of(&DatasetManifest::read(&a.data)?, &a.split)?;
    let pairs = m.load_pairs()?;
    let out = out_path(cli, "diagnostics");
    let diag = uncertainty_diagnostics(&params, &pairs)?;
    for (e, pair) in m.entries.iter().zip(&pairs) {
        let pred = forward(&params, &pair.lr)?;
        let mean = pred.mean_image(0)?;
        let (h, w) = (mean.height(), mean.width());
        let (var, var_scale) = normalized(h, w, pred.variance_map(0))?;
        let err = error_map(&mean, &pair.hr)?;
        let (err, err_scale) = normalized(h, w, err.data())?;
        let lr = ImageTensor::from_nchw(&pair.lr.to_nchw().upsample_nearest(h / pair.lr.height())?, 0)?;
        let panel = side_by_side(&[lr.to_rgb(), pair.hr.to_rgb(), mean, var.to_rgb(), err.to_rgb()])?;
        save_image(&out.join(format!("panel_{:06}.png", e.id)), &panel, false)?;
        let side = format!(
            "panels=lr,hr,mean,variance,error\nvariance_scale={var_scale:e}\nerror_scale={err_scale:e}\nmean_variance={:e}\n",
            pred.mean_variance(0)
        );
        write_atomic(&out.join(format!("panel_{:06}.txt", e.id)), side.as_bytes())?;
    }
    write_atomic(&out.join("diagnostics.txt"), diag.to_text().as_bytes())?;
    let rho = diag.rank_correlation.map(|r| format!("{r:.4}")).unwrap_or_else(|| "undefined".into());
    Ok(format!("wrote {} panels; spearman={rho}", pairs.len()))
}

pub fn cmd_experiment(cli: &Cli) -> Result<String> {
    let path = cli.config.as_ref().ok_or_else(|| Error::InvalidArgument("experiment needs --config".into()))?;
    let cfg = ExperimentConfig::read(path)?;
    if cli.parallel == 0 {
        return Err(Error::InvalidArgument("--parallel must be at least 1".into()));
    }
    let opts = ExperimentOptions { out: out_path(cli, "experiment_out"), resume: cli.resume, parallel: cli.parallel };
    let summary = run_experiment(&cfg, &opts)?;
    Ok(summary_table(&summary))
}

pub fn dispatch(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(cli, a),
        Command::Corpus(a) => cmd_corpus(cli, a),
        Command::Pretrain(a) => cmd_pretrain(cli, a),
        Command::Score(a) => cmd_score(cli, a),
        Command::Select(a) => cmd_select(cli, a),
        Command::Finetune(a) => cmd_finetune(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Diagnose(a) => cmd_diagnose(cli, a),
        Command::Experiment => cmd_experiment(cli),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
