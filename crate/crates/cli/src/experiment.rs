//! Multi-arm, multi-budget, multi-seed sweeps with a CSV results table.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use usimdal::active::{run_arm, Arm, ArmOutcome, LoadedPool, PoolManifest, RunReport};
use usimdal::data::{make_domain_corpus, write_atomic, DatasetManifest, LabeledPair, Split};
use usimdal::metrics::{pboost, MetricReport};
use usimdal::model::{load_checkpoint, save_checkpoint, train, NetworkParams, TrainConfig};
use usimdal::simgen::{gen_pairs, GeneratorConfig};
use usimdal::{rng, Error, Result};

use crate::config::{DomainSource, ExperimentConfig, SimSource};

pub const RESULTS_HEADER: &str = "dataset,arm,budget,seed,mse,mae,psnr,ssim";

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub arm: Arm,
    pub budget: usize,
    pub seed: u64,
    pub metrics: MetricReport,
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{:.8},{:.8},{:.6},{:.6}",
            self.dataset, self.arm, self.budget, self.seed, m.mse, m.mae, m.psnr, m.ssim
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return None;
        }
        Some(Self {
            dataset: f[0].to_string(),
            arm: f[1].parse().ok()?,
            budget: f[2].parse().ok()?,
            seed: f[3].parse().ok()?,
            metrics: MetricReport {
                mse: f[4].parse().ok()?,
                mae: f[5].parse().ok()?,
                psnr: f[6].parse().ok()?,
                ssim: f[7].parse().ok()?,
            },
        })
    }

    fn key(&self) -> (Arm, usize, u64) {
        (self.arm, self.budget, self.seed)
    }
}

/// Rows of a results file; a truncated or malformed line ends the table.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_HEADER) {
        return Err(Error::Corrupt { path: path.into(), reason: "missing results header".into() });
    }
    Ok(lines.map_while(ResultRow::parse).collect())
}

/// Seed mean and sample standard deviation of one (arm, budget) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub arm: Arm,
    pub budget: usize,
    pub n: usize,
    pub mean: MetricReport,
    pub std: MetricReport,
    /// Present on the uncertainty arm when all three PSNR inputs exist.
    pub pboost: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

pub fn summarize(rows: &[ResultRow], arms: &[Arm], budgets: &[usize]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &budget in budgets {
        let mut cells = Vec::new();
        for &arm in arms {
            let sel: Vec<&ResultRow> = rows.iter().filter(|r| r.arm == arm && r.budget == budget).collect();
            if sel.is_empty() {
                continue;
            }
            let stat = |f: fn(&MetricReport) -> f64| mean_std(&sel.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
            let (mse, mse_s) = stat(|m| m.mse);
            let (mae, mae_s) = stat(|m| m.mae);
            let (psnr, psnr_s) = stat(|m| m.psnr);
            let (ssim, ssim_s) = stat(|m| m.ssim);
            cells.push(SummaryRow {
                dataset: sel[0].dataset.clone(),
                arm,
                budget,
                n: sel.len(),
                mean: MetricReport { mse, mae, psnr, ssim },
                std: MetricReport { mse: mse_s, mae: mae_s, psnr: psnr_s, ssim: ssim_s },
                pboost: None,
            });
        }
        let psnr_of = |a: Arm| cells.iter().find(|c| c.arm == a).map(|c| c.mean.psnr);
        if let (Some(u), Some(r), Some(s)) = (psnr_of(Arm::UsimDal), psnr_of(Arm::SimRandom), psnr_of(Arm::Sim)) {
            let b = pboost(u, r, s).ok();
            if let Some(c) = cells.iter_mut().find(|c| c.arm == Arm::UsimDal) {
                c.pboost = b;
            }
        }
        out.extend(cells);
    }
    out
}

pub const SUMMARY_HEADER: &str =
    "dataset,arm,budget,n,mse_mean,mse_std,mae_mean,mae_std,psnr_mean,psnr_std,ssim_mean,ssim_std,pboost";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let pb = r.pboost.map(|p| format!("{p:.2}")).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{:.8},{:.8},{:.8},{:.8},{:.6},{:.6},{:.6},{:.6},{pb}\n",
            r.dataset, r.arm, r.budget, r.n, r.mean.mse, r.std.mse, r.mean.mae, r.std.mae, r.mean.psnr, r.std.psnr,
            r.mean.ssim, r.std.ssim
        ));
    }
    s
}

/// Human-readable table; SSIM and MSE are unscaled (not multiplied by 100).
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<12} {:>6} {:>3} {:>20} {:>18} {:>18} {:>18} {:>9}\n",
        "arm", "budget", "n", "psnr (dB)", "ssim", "mse", "mae", "pboost %"
    );
    for r in rows {
        let pb = r.pboost.map(|p| format!("{p:.2}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:<12} {:>6} {:>3} {:>11.3} ± {:>6.3} {:>9.4} ± {:>6.4} {:>9.5} ± {:>6.5} {:>9.5} ± {:>6.5} {:>9}\n",
            r.arm.to_string(),
            r.budget,
            r.n,
            r.mean.psnr,
            r.std.psnr,
            r.mean.ssim,
            r.std.ssim,
            r.mean.mse,
            r.std.mse,
            r.mean.mae,
            r.std.mae,
            pb
        ));
    }
    s
}

#[derive(Clone, Debug)]
pub struct ExperimentOptions {
    pub out: PathBuf,
    pub resume: bool,
    /// Seeds run concurrently, at least 1.
    pub parallel: usize,
}

pub fn arm_slug(arm: Arm) -> &'static str {
    match arm {
        Arm::Random => "random",
        Arm::Sim => "sim",
        Arm::SimRandom => "sim_random",
        Arm::UsimDal => "usim_dal",
    }
}

/// Inputs shared by every cell of a sweep.
pub struct ExperimentData {
    pub sim: Vec<LabeledPair>,
    pub pool: LoadedPool,
    pub test: Vec<LabeledPair>,
}

pub fn load_data(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentData> {
    let sim = match &cfg.sim {
        SimSource::Manifest(p) => DatasetManifest::read(p)?.load_pairs()?,
        SimSource::Generate { count, size, seed, mix } => {
            let g = GeneratorConfig::new(*mix, (*size, *size), *seed)?;
            gen_pairs(&g, *count)?.into_iter().map(|(_, _, p)| p).collect()
        }
    };
    let domain = match &cfg.domain {
        DomainSource::Manifest(p) => DatasetManifest::read(p)?,
        DomainSource::Generate { kind, count, size, seed } => {
            let dir = out.join("data").join("domain");
            let manifest = dir.join("manifest.csv");
            if manifest.exists() {
                DatasetManifest::read(&manifest)?
            } else {
                make_domain_corpus(*kind, *count, *size, *seed, &dir)?
            }
        }
    };
    let pool = LoadedPool::load(PoolManifest::from_dataset(&domain, Split::Pool, cfg.dataset.clone())?)?;
    let test = domain.filter(Split::Test).load_pairs()?;
    if test.is_empty() {
        return Err(Error::InvalidArgument("domain manifest has no test split".into()));
    }
    cfg.check_pool(pool.manifest.len())?;
    Ok(ExperimentData { sim, pool, test })
}

struct SeedRun<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a ExperimentData,
    out: &'a Path,
    seed: u64,
    resume: bool,
    done: HashSet<(Arm, usize, u64)>,
}

impl SeedRun<'_> {
    fn ckpt_dir(&self) -> PathBuf {
        self.out.join("checkpoints").join(format!("seed{}", self.seed))
    }

    fn pretrained(&self) -> Result<NetworkParams> {
        let path = self.ckpt_dir().join("pretrained.udc");
        if self.resume && path.exists() {
            return load_checkpoint(&path);
        }
        let pc = self.cfg.pipeline(self.cfg.budgets[0], self.seed);
        let tc = TrainConfig { seed: rng::mix(self.seed, 1), ..pc.pretrain.clone() };
        let params = train(&self.data.sim, &tc, None, pc.arch)?.params;
        if self.cfg.save_checkpoints {
            save_checkpoint(&params, &path)?;
        }
        Ok(params)
    }

    fn record(&self, o: &ArmOutcome) -> Result<()> {
        for (i, r) in o.rounds.iter().enumerate() {
            let name = format!("seed{}_k{}_{}_r{i}.txt", self.seed, o.budget, arm_slug(o.arm));
            write_atomic(&self.out.join("selections").join(name), r.selection.to_text().as_bytes())?;
        }
        if self.cfg.save_checkpoints && o.arm != Arm::Sim {
            let name = format!("{}_k{}.udc", arm_slug(o.arm), o.budget);
            save_checkpoint(&o.params, &self.ckpt_dir().join(name))?;
        }
        Ok(())
    }

    /// Runs every pending cell of this seed, handing rows to `emit` as they
    /// complete.
    fn run(&self, emit: &mut dyn FnMut(ResultRow) -> Result<()>) -> Result<()> {
        let pending: Vec<(Arm, usize)> = self
            .cfg
            .budgets
            .iter()
            .flat_map(|&b| self.cfg.arms.iter().map(move |&a| (a, b)))
            .filter(|&(a, b)| !self.done.contains(&(a, b, self.seed)))
            .collect();
        if pending.is_empty() {
            return Ok(());
        }
        let pretrained = match pending.iter().any(|(a, _)| a.needs_pretraining()) {
            true => Some(self.pretrained()?),
            false => None,
        };
        let mut outcomes = Vec::new();
        let mut sim_metrics = None;
        for (arm, budget) in pending {
            let pc = self.cfg.pipeline(budget, self.seed);
            let metrics = match (arm, sim_metrics) {
                (Arm::Sim, Some(m)) => m,
                _ => {
                    let o = run_arm(arm, &pc, pretrained.as_ref(), &self.data.pool, &self.data.test)?;
                    self.record(&o)?;
                    if arm == Arm::Sim {
                        sim_metrics = Some(o.metrics);
                    }
                    let m = o.metrics;
                    outcomes.push(o);
                    m
                }
            };
            emit(ResultRow { dataset: self.cfg.dataset.clone(), arm, budget, seed: self.seed, metrics })?;
        }
        let report = RunReport { dataset: self.cfg.dataset.clone(), outcomes };
        write_atomic(&self.out.join("reports").join(format!("seed{}.txt", self.seed)), report.to_text().as_bytes())
    }
}

fn append_row(path: &Path, row: &ResultRow) -> Result<()> {
    let mut f = OpenOptions::new().append(true).open(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    writeln!(f, "{}", row.to_csv()).map_err(|e| Error::Io { path: path.into(), source: e })
}

/// Runs the sweep, appending one CSV row per finished cell, then writes the
/// seed-mean summary. With `resume`, completed cells are kept and skipped.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &ExperimentOptions) -> Result<Vec<SummaryRow>> {
    cfg.validate()?;
    std::fs::create_dir_all(&opts.out).map_err(|e| Error::Io { path: opts.out.clone(), source: e })?;
    let data = load_data(cfg, &opts.out)?;
    let results = opts.out.join("results.csv");
    let mut done_rows = Vec::new();
    if opts.resume && results.exists() {
        done_rows = read_results(&results)?;
    }
    // rewrite so a torn trailing line from an interrupted run is dropped
    let mut text = format!("{RESULTS_HEADER}\n");
    for r in &done_rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    write_atomic(&results, text.as_bytes())?;
    let done: HashSet<_> = done_rows.iter().map(ResultRow::key).collect();

    let runs: Vec<SeedRun> = cfg
        .seeds
        .iter()
        .map(|&seed| SeedRun { cfg, data: &data, out: &opts.out, seed, resume: opts.resume, done: done.clone() })
        .collect();
    if opts.parallel <= 1 {
        for run in &runs {
            run.run(&mut |row| append_row(&results, &row))?;
        }
    } else {
        for group in runs.chunks(opts.parallel) {
            let outputs: Vec<(Vec<ResultRow>, Result<()>)> = std::thread::scope(|s| {
                let handles: Vec<_> = group
                    .iter()
                    .map(|run| {
                        s.spawn(move || {
                            let mut rows = Vec::new();
                            let r = run.run(&mut |row| {
                                rows.push(row);
                                Ok(())
                            });
                            (rows, r)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("seed worker panicked")).collect()
            });
            // rows are written in seed order regardless of completion order
            let mut first_err = None;
            for (rows, r) in outputs {
                for row in &rows {
                    append_row(&results, row)?;
                }
                if let (Err(e), None) = (r, &first_err) {
                    first_err = Some(e);
                }
            }
            if let Some(e) = first_err {
                return Err(e);
            }
        }
    }

    let rows = read_results(&results)?;
    let summary = summarize(&rows, &cfg.arms, &cfg.budgets);
    write_atomic(&opts.out.join("summary.csv"), summary_csv(&summary).as_bytes())?;
    write_atomic(&opts.out.join("summary.txt"), summary_table(&summary).as_bytes())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(arm: Arm, budget: usize, seed: u64, psnr: f64) -> ResultRow {
        ResultRow {
            dataset: "d".into(),
            arm,
            budget,
            seed,
            metrics: MetricReport { mse: 0.01, mae: 0.05, psnr, ssim: 0.8 },
        }
    }

    #[test]
    fn csv_round_trip() {
        let r = row(Arm::SimRandom, 25, 3, 24.5);
        assert_eq!(ResultRow::parse(&r.to_csv()).unwrap(), r);
        assert!(ResultRow::parse("d,SIM,25,0,0.1").is_none());
    }

    #[test]
    fn summary_means_and_pboost() {
        let rows = vec![
            row(Arm::Sim, 10, 0, 24.0),
            row(Arm::Sim, 10, 1, 24.0),
            row(Arm::SimRandom, 10, 0, 25.0),
            row(Arm::SimRandom, 10, 1, 25.0),
            row(Arm::UsimDal, 10, 0, 25.5),
            row(Arm::UsimDal, 10, 1, 25.3),
        ];
        let s = summarize(&rows, &Arm::ALL, &[10]);
        assert_eq!(s.len(), 3);
        let u = s.iter().find(|r| r.arm == Arm::UsimDal).unwrap();
        assert!((u.mean.psnr - 25.4).abs() < 1e-12);
        assert!((u.std.psnr - (0.02f64).sqrt()).abs() < 1e-9);
        assert!((u.pboost.unwrap() - 40.0).abs() < 1e-9);
        assert!(s.iter().filter(|r| r.arm != Arm::UsimDal).all(|r| r.pboost.is_none()));
        let text = summary_csv(&s);
        assert!(text.starts_with(SUMMARY_HEADER));
        assert!(text.lines().nth(3).unwrap().ends_with(",40.00"));
    }
}
