//! The work behind each subcommand. Every file goes under the configured
//! output directory and is recorded in the manifest.
//!
//! ```text
//! buffer/{mode}-{i}.ftdt         teacher trajectory
//! buffer/{mode}-{i}-loss.csv     epoch,train_loss
//! buffer/summary.json
//! distill/{mode}.ftds            synthetic set
//! distill/{mode}-loss.csv        iteration,loss,step_size,start_epoch
//! eval/{mode}.json, eval/{mode}.csv
//! diagnose/{mode}-ledger.csv     trajectory,segment,eps_start,eps_end,delta,init_error,residual,relative_residual
//! diagnose/{mode}-ledger.json
//! diagnose/{mode}-curve.csv      trajectory,epoch,chained,reanchored,teacher
//! diagnose/{mode}-ablation.csv   trajectory,start_epoch,steps,accuracy
//! diagnose/{mode}-sharpness.csv  trajectory,epoch,rho,sharpness,lambda_max,residual,converged
//! diagnose/{mode}-summary.json
//! nas/ranking-{real,proxy}.csv   index,family,width,depth,norm,activation,pooling,accuracy,diverged,rank
//! nas/correlation.json
//! report.json
//! ```
//! Every CSV starts with a `# config_hash=<hex>` line.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ftd_core::buffer::{train_teacher, TeacherMode, TeacherTrajectory};
use ftd_core::data::{make_toy, RealDataset, Split, SyntheticDataset};
use ftd_core::distill::distill as run_distill;
use ftd_core::evaldiag::{
    aggregate, error_decomposition, evaluate_seed, init_discrepancy_ablation, loss_difference_curve,
    mean_std, non_decreasing_steps, EvalReport,
};
use ftd_core::models::{ArchSpec, InputShape, Network};
use ftd_core::nas::{candidate_seed, rank_with, spearman_topk, train_candidate, RankingResult};
use ftd_core::rng;
use ftd_core::sharpness::{report as sharpness_report, NetworkLoss, PowerIteration};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::codec::{self, SyntheticCheckpoint};
use crate::config::{hash_hex, RunConfig, Source};
use crate::csvio::{self, Table};
use crate::error::{Error, Result};
use crate::idx;
use crate::manifest::Manifest;

pub fn trajectory_file(mode: TeacherMode, index: usize) -> String {
    format!("buffer/{mode}-{index:02}.ftdt")
}

pub fn synthetic_file(mode: TeacherMode) -> String {
    format!("distill/{mode}.ftds")
}

/// One command invocation: configuration, output directory and manifest.
pub struct Run {
    pub cfg: RunConfig,
    pub hash: u64,
    command: &'static str,
    manifest: Manifest,
    pool: rayon::ThreadPool,
}

impl Run {
    pub fn new(cfg: RunConfig, command: &'static str) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Format(format!("thread pool: {e}")))?;
        let manifest = Manifest::load(&cfg.output_dir)?;
        Ok(Self { hash: cfg.hash(), cfg, command, manifest, pool })
    }

    pub fn out(&self) -> &Path {
        &self.cfg.output_dir
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.out().join(relative)
    }

    fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<()> {
        codec::write(&self.path(relative), bytes)?;
        self.manifest.record(relative, self.command, self.hash, bytes);
        Ok(())
    }

    fn write_json(&mut self, relative: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(relative, text.as_bytes())
    }

    fn write_table(&mut self, relative: &str, table: &Table) -> Result<()> {
        self.write(relative, &table.to_bytes()?)
    }

    fn table(&self, header: &[&str]) -> Table {
        Table::new(self.hash, header)
    }

    /// Records the resolved configuration and saves the manifest.
    pub fn finish(mut self) -> Result<()> {
        let config = self.cfg.to_json();
        self.write_json(&format!("config/{}.json", hash_hex(self.hash)), &config)?;
        self.manifest.save(self.out())
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<RealDataset> {
    let d = &cfg.dataset;
    match d.source {
        Source::Toy(kind) => Ok(make_toy(&cfg.toy_spec(kind))?),
        Source::Idx => {
            let p = |o: &Option<PathBuf>| o.clone().unwrap_or_default();
            let (ti, tl, vi, vl) = (p(&d.train_images), p(&d.train_labels), p(&d.test_images), p(&d.test_labels));
            idx::load_idx_dataset((&ti, &tl), (&vi, &vl), d.classes)
        }
        Source::Csv => {
            let shape = InputShape::new(d.shape[0], d.shape[1], d.shape[2]);
            let train = csvio::read_split(d.train_csv.as_deref().unwrap_or(Path::new("")), shape.dim())?;
            let test = csvio::read_split(d.test_csv.as_deref().unwrap_or(Path::new("")), shape.dim())?;
            Ok(RealDataset::from_raw(train, test, d.classes, shape)?)
        }
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

fn arch_json(a: &ArchSpec) -> Value {
    json!({
        "id": a.id(),
        "family": a.family.as_str(),
        "width": a.width,
        "depth": a.depth,
        "norm": a.norm.as_str(),
        "activation": a.activation.as_str(),
        "pooling": a.pooling.as_str(),
    })
}

fn eval_json(r: &EvalReport) -> Value {
    json!({
        "arch": r.arch,
        "iterations": r.iterations,
        "accuracies": r.accuracies.iter().map(|(s, a)| json!({"seed": s, "accuracy": a})).collect::<Vec<_>>(),
        "diverged": r.diverged,
        "mean": r.mean,
        "std": r.std,
    })
}

pub fn buffer(run: &mut Run) -> Result<()> {
    let cfg = run.cfg.clone();
    let real = load_dataset(&cfg)?;
    let arch = cfg.arch(real.shape, real.classes);
    Network::build(arch)?;
    let jobs: Vec<(TeacherMode, usize)> =
        cfg.buffer.mode.modes().into_iter().flat_map(|m| (0..cfg.buffer.count).map(move |i| (m, i))).collect();
    let hash = run.hash;
    let trained: Vec<Result<TeacherTrajectory>> = run.pool.install(|| {
        jobs.par_iter()
            .map(|&(mode, i)| {
                let mut t = train_teacher(&real, &arch, &cfg.teacher(i), mode, cfg.buffer.expert_epochs)?;
                t.config_hash = hash;
                Ok(t)
            })
            .collect()
    });
    let mut summary = Vec::new();
    for (&(mode, i), traj) in jobs.iter().zip(trained) {
        let traj = traj?;
        let file = trajectory_file(mode, i);
        run.write(&file, &codec::encode_trajectory(&traj)?)?;
        let mut table = run.table(&["epoch", "train_loss"]);
        for (e, l) in traj.train_loss.iter().enumerate() {
            table.push(vec![(e + 1).to_string(), f(*l)]);
        }
        run.write_table(&format!("buffer/{mode}-{i:02}-loss.csv"), &table)?;
        let last = traj.train_loss.last().copied().unwrap_or(f64::NAN);
        println!("buffer {file}: final train loss {last:.4}, {} degenerate steps", traj.degenerate_steps);
        summary.push(json!({
            "file": file,
            "mode": mode.as_str(),
            "index": i,
            "seed": cfg.teacher(i).seed,
            "final_train_loss": last,
            "degenerate_steps": traj.degenerate_steps,
        }));
    }
    run.write_json(
        "buffer/summary.json",
        &json!({"config_hash": hash_hex(hash), "arch": arch_json(&arch), "teachers": summary}),
    )
}

/// Loads the `buffer.count` trajectories of `mode`; they must share one
/// configuration hash and architecture.
pub fn load_pool(run: &Run, mode: TeacherMode) -> Result<(Vec<TeacherTrajectory>, u64)> {
    let mut pool = Vec::with_capacity(run.cfg.buffer.count);
    for i in 0..run.cfg.buffer.count {
        pool.push(codec::load_trajectory(&run.path(&trajectory_file(mode, i)))?);
    }
    let first = &pool[0];
    for (i, t) in pool.iter().enumerate().skip(1) {
        if t.config_hash != first.config_hash {
            return Err(Error::Mismatch(format!(
                "{} has config hash {}, {} has {}",
                trajectory_file(mode, i),
                hash_hex(t.config_hash),
                trajectory_file(mode, 0),
                hash_hex(first.config_hash)
            )));
        }
        if t.arch != first.arch || t.expert_epochs != first.expert_epochs {
            return Err(Error::Mismatch(format!("{} was recorded for a different network", trajectory_file(mode, i))));
        }
    }
    let hash = first.config_hash;
    Ok((pool, hash))
}

fn check_arch(expected: &ArchSpec, found: &ArchSpec, what: &str) -> Result<()> {
    if expected != found {
        return Err(Error::Mismatch(format!("{what} uses {}, the configuration describes {}", found.id(), expected.id())));
    }
    Ok(())
}

pub fn distill(run: &mut Run) -> Result<()> {
    let cfg = run.cfg.clone();
    let real = load_dataset(&cfg)?;
    let arch = cfg.arch(real.shape, real.classes);
    let modes = cfg.distill.teacher.modes();
    let mut pools = Vec::new();
    for &mode in &modes {
        let (pool, teacher_hash) = load_pool(run, mode)?;
        check_arch(&arch, &pool[0].arch, &trajectory_file(mode, 0))?;
        pools.push((pool, teacher_hash));
    }
    let net = Network::build(arch)?;
    let dcfg = cfg.distillation();
    let outcomes: Vec<Result<_>> = run.pool.install(|| {
        pools
            .par_iter()
            .map(|(pool, _)| {
                let mut syn = SyntheticDataset::init(
                    &real,
                    cfg.distill.ipc,
                    cfg.synthetic_seed(),
                    cfg.distill.init,
                    cfg.initial_step_size(),
                    cfg.distill.ema_decay,
                )?;
                let log = run_distill(&net, &mut syn, pool, &dcfg)?;
                Ok((syn, log))
            })
            .collect()
    });
    for ((mode, (_, teacher_hash)), outcome) in modes.iter().zip(&pools).zip(outcomes) {
        let (syn, log) = outcome?;
        let ck = SyntheticCheckpoint { syn, config_hash: run.hash, teacher_hash: *teacher_hash };
        run.write(&synthetic_file(*mode), &codec::encode_synthetic(&ck)?)?;
        let mut table = run.table(&["iteration", "loss", "step_size", "start_epoch"]);
        for s in &log {
            table.push(vec![s.iteration.to_string(), f(s.loss), f(s.step_size), s.start_epoch.to_string()]);
        }
        run.write_table(&format!("distill/{mode}-loss.csv"), &table)?;
        if let (Some(a), Some(b)) = (log.first(), log.last()) {
            println!("distill {mode}: loss {:.4} -> {:.4}, step size {:.5}", a.loss, b.loss, ck.syn.step_size);
        }
    }
    Ok(())
}

fn load_checkpoint(run: &Run, mode: TeacherMode, real: &RealDataset) -> Result<SyntheticCheckpoint> {
    let ck = codec::load_synthetic(&run.path(&synthetic_file(mode)))?;
    if ck.syn.shape != real.shape || ck.syn.classes != real.classes {
        return Err(Error::Mismatch(format!(
            "{} holds {} classes of {:?}, the dataset has {} of {:?}",
            synthetic_file(mode),
            ck.syn.classes,
            ck.syn.shape,
            real.classes,
            real.shape
        )));
    }
    Ok(ck)
}

/// Trains one network per seed on `pixels` in parallel and aggregates.
fn evaluate_parallel(
    run: &Run,
    net: &Network,
    pixels: &[f64],
    labels: &[usize],
    step_size: f64,
    test: &Split,
) -> Result<EvalReport> {
    let seeds = run.cfg.eval_seeds();
    let iterations = run.cfg.eval.iterations;
    let results = run.pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| (s, evaluate_seed(net, pixels, labels, step_size, test, s, iterations)))
            .collect()
    });
    Ok(aggregate(net.spec().id(), iterations, results)?)
}

pub fn eval(run: &mut Run) -> Result<()> {
    let cfg = run.cfg.clone();
    let real = load_dataset(&cfg)?;
    let net = Network::build(cfg.arch(real.shape, real.classes))?;
    for mode in cfg.distill.teacher.modes() {
        let ck = load_checkpoint(run, mode, &real)?;
        let syn = &ck.syn;
        let report = evaluate_parallel(run, &net, syn.eval_pixels(cfg.eval.use_ema), &syn.labels, syn.step_size, &real.test)?;
        let mut table = run.table(&["arm", "seed", "accuracy", "diverged"]);
        let mut add_rows = |arm: &str, r: &EvalReport| {
            for (s, a) in &r.accuracies {
                table.push(vec![arm.into(), s.to_string(), f(*a), "false".into()]);
            }
            for s in &r.diverged {
                table.push(vec![arm.into(), s.to_string(), String::new(), "true".into()]);
            }
        };
        add_rows("distilled", &report);
        let mut doc = Map::new();
        doc.insert("config_hash".into(), json!(hash_hex(run.hash)));
        doc.insert("synthetic_hash".into(), json!(hash_hex(ck.config_hash)));
        doc.insert("mode".into(), json!(mode.as_str()));
        doc.insert("use_ema".into(), json!(cfg.eval.use_ema));
        doc.insert("step_size".into(), json!(syn.step_size));
        doc.insert("distilled".into(), eval_json(&report));
        let mut line = format!("eval {mode}: distilled {:.4} ± {:.4}", report.mean, report.std);
        if cfg.eval.baselines {
            let eta = cfg.initial_step_size();
            let init = SyntheticDataset::init(&real, syn.ipc, cfg.synthetic_seed(), cfg.distill.init, eta, 0.0)?;
            let before = evaluate_parallel(run, &net, &init.pixels, &init.labels, eta, &real.test)?;
            let subset = real.random_subset(syn.ipc, rng::derive_seed(cfg.seed, "eval-real-subset"))?;
            let random = evaluate_parallel(run, &net, &subset.pixels, &subset.labels, eta, &real.test)?;
            add_rows("synthetic_init", &before);
            add_rows("real_subset", &random);
            line += &format!(", init {:.4}, real subset {:.4}", before.mean, random.mean);
            doc.insert("synthetic_init".into(), eval_json(&before));
            doc.insert("real_subset".into(), eval_json(&random));
        }
        run.write_json(&format!("eval/{mode}.json"), &Value::Object(doc))?;
        run.write_table(&format!("eval/{mode}.csv"), &table)?;
        println!("{line}");
    }
    Ok(())
}

pub fn diagnose(run: &mut Run) -> Result<()> {
    let cfg = run.cfg.clone();
    let real = load_dataset(&cfg)?;
    let arch = cfg.arch(real.shape, real.classes);
    let net = Network::build(arch)?;
    let n = cfg.distill.syn_steps;
    let power = PowerIteration {
        iters: cfg.diagnose.power_iters,
        tol: cfg.diagnose.power_tol,
        seed: rng::derive_seed(cfg.seed, "power-iteration"),
    };
    for mode in cfg.distill.teacher.modes() {
        let (pool, teacher_hash) = load_pool(run, mode)?;
        check_arch(&arch, &pool[0].arch, &trajectory_file(mode, 0))?;
        let ck = load_checkpoint(run, mode, &real)?;
        if ck.teacher_hash != teacher_hash {
            return Err(Error::Mismatch(format!(
                "{} was distilled from trajectories with hash {}, buffer files have {}",
                synthetic_file(mode),
                hash_hex(ck.teacher_hash),
                hash_hex(teacher_hash)
            )));
        }
        let syn = &ck.syn;
        let pixels = syn.eval_pixels(cfg.eval.use_ema);
        let m = pool[0].expert_epochs;
        let interval = cfg.diagnose.interval.unwrap_or(m);
        let starts = cfg.ablation_starts();

        let per_traj: Vec<Result<_>> = run.pool.install(|| {
            pool.par_iter()
                .map(|traj| {
                    let ledger = error_decomposition(&net, pixels, &syn.labels, syn.step_size, traj, n, m)?;
                    let curve = loss_difference_curve(&net, pixels, &syn.labels, syn.step_size, traj, &real.test, n, m, interval)?;
                    let ablation = init_discrepancy_ablation(&net, pixels, &syn.labels, syn.step_size, traj, &starts, &real.test, n, m)?;
                    let obj = NetworkLoss::new(&net, real.train.batch());
                    let epochs: Vec<usize> =
                        if cfg.diagnose.all_epochs { (0..traj.snapshots.len()).collect() } else { vec![traj.epochs()] };
                    let sharp = epochs
                        .iter()
                        .map(|&e| sharpness_report(&obj, &traj.snapshots[e], cfg.diagnose.rho, &power, 0, e))
                        .collect::<ftd_core::Result<Vec<_>>>()?;
                    Ok((ledger, curve, ablation, sharp))
                })
                .collect()
        });

        let mut ledger_t = run.table(&[
            "trajectory", "segment", "eps_start", "eps_end", "delta", "init_error", "residual", "relative_residual",
        ]);
        let mut curve_t = run.table(&["trajectory", "epoch", "chained", "reanchored", "teacher"]);
        let mut ablation_t = run.table(&["trajectory", "start_epoch", "steps", "accuracy"]);
        let mut sharp_t = run.table(&["trajectory", "epoch", "rho", "sharpness", "lambda_max", "residual", "converged"]);
        let mut ledger_json = Vec::new();
        let (mut max_residual, mut chained, mut reanchored, mut lambdas, mut monotone) =
            (0.0f64, Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (j, result) in per_traj.into_iter().enumerate() {
            let (ledger, curve, ablation, sharp) = result?;
            for s in &ledger.segments {
                ledger_t.push(vec![
                    j.to_string(),
                    s.segment.to_string(),
                    f(s.eps_start),
                    f(s.eps_end),
                    f(s.delta),
                    f(s.init_error),
                    f(s.residual),
                    f(s.relative_residual()),
                ]);
            }
            max_residual = max_residual.max(ledger.max_relative_residual());
            ledger_json.push(json!({
                "trajectory": j,
                "first_segment_exact": ledger.first_segment_exact,
                "max_relative_residual": ledger.max_relative_residual(),
                "segments": ledger.segments.iter().map(|s| json!({
                    "segment": s.segment,
                    "eps_start": s.eps_start,
                    "eps_end": s.eps_end,
                    "delta": s.delta,
                    "init_error": s.init_error,
                    "residual": s.residual,
                    "relative_residual": s.relative_residual(),
                })).collect::<Vec<_>>(),
            }));
            for p in &curve {
                curve_t.push(vec![j.to_string(), p.epoch.to_string(), f(p.chained), f(p.reanchored), f(p.teacher)]);
            }
            if let Some(p) = curve.last() {
                chained.push(p.chained);
                reanchored.push(p.reanchored);
            }
            for r in &ablation {
                ablation_t.push(vec![j.to_string(), r.start_epoch.to_string(), r.steps.to_string(), f(r.accuracy)]);
            }
            let accs: Vec<f64> = ablation.iter().map(|r| r.accuracy).collect();
            monotone.push(json!({"non_decreasing": non_decreasing_steps(&accs), "steps": accs.len().saturating_sub(1)}));
            for r in &sharp {
                sharp_t.push(vec![
                    j.to_string(),
                    r.epoch.to_string(),
                    f(r.rho),
                    f(r.sharpness),
                    f(r.lambda_max),
                    f(r.residual),
                    r.converged.to_string(),
                ]);
            }
            if let Some(r) = sharp.last() {
                lambdas.push(r.lambda_max);
            }
        }
        run.write_table(&format!("diagnose/{mode}-ledger.csv"), &ledger_t)?;
        run.write_json(
            &format!("diagnose/{mode}-ledger.json"),
            &json!({"config_hash": hash_hex(run.hash), "mode": mode.as_str(), "trajectories": ledger_json}),
        )?;
        run.write_table(&format!("diagnose/{mode}-curve.csv"), &curve_t)?;
        run.write_table(&format!("diagnose/{mode}-ablation.csv"), &ablation_t)?;
        run.write_table(&format!("diagnose/{mode}-sharpness.csv"), &sharp_t)?;
        let (chained_mean, _) = mean_std(&chained);
        let (reanchored_mean, _) = mean_std(&reanchored);
        let (lambda_mean, lambda_std) = mean_std(&lambdas);
        run.write_json(
            &format!("diagnose/{mode}-summary.json"),
            &json!({
                "config_hash": hash_hex(run.hash),
                "mode": mode.as_str(),
                "max_relative_residual": max_residual,
                "final_chained_mean": chained_mean,
                "final_reanchored_mean": reanchored_mean,
                "endpoint_lambda_max_mean": lambda_mean,
                "endpoint_lambda_max_std": lambda_std,
                "ablation": monotone,
            }),
        )?;
        println!(
            "diagnose {mode}: max residual {max_residual:.2e}, final chained {chained_mean:.4}, re-anchored {reanchored_mean:.4}, endpoint λmax {lambda_mean:.4}"
        );
    }
    Ok(())
}

fn ranking_table(run: &Run, r: &RankingResult) -> Table {
    let mut t = run.table(&["index", "family", "width", "depth", "norm", "activation", "pooling", "accuracy", "diverged", "rank"]);
    for (i, a) in r.archs.iter().enumerate() {
        t.push(vec![
            i.to_string(),
            a.family.to_string(),
            a.width.to_string(),
            a.depth.to_string(),
            a.norm.to_string(),
            a.activation.to_string(),
            a.pooling.to_string(),
            f(r.accuracy[i]),
            r.diverged[i].to_string(),
            f(r.ranks[i]),
        ]);
    }
    t
}

pub fn nas(run: &mut Run) -> Result<()> {
    let cfg = run.cfg.clone();
    let started = Instant::now();
    let real = load_dataset(&cfg)?;
    let ck = load_checkpoint(run, cfg.nas.proxy, &real)?;
    let proxy = Split::new(ck.syn.eval_pixels(cfg.eval.use_ema).to_vec(), ck.syn.labels.clone());
    let archs = cfg.search_space().enumerate(real.shape, real.classes);
    for a in &archs {
        a.validate()?;
    }
    let training = [cfg.candidate_training(false), cfg.candidate_training(true)];
    let repeats = cfg.nas.repeats;
    let seed = cfg.nas_seed();
    let sets = [("real", &real.train), ("proxy", &proxy)];
    let jobs: Vec<(usize, usize, usize)> = (0..sets.len())
        .flat_map(|d| (0..archs.len()).flat_map(move |i| (0..repeats).map(move |r| (d, i, r))))
        .collect();
    let results: Vec<ftd_core::Result<f64>> = run.pool.install(|| {
        jobs.par_iter()
            .map(|&(d, i, r)| train_candidate(&archs[i], sets[d].1, &real.test, &training[d], candidate_seed(seed, &archs[i], r)))
            .collect()
    });
    let per_set = archs.len() * repeats;
    let rank = |d: usize| rank_with(sets[d].0, &archs, repeats, |i, r| results[d * per_set + i * repeats + r].clone());
    let (real_rank, proxy_rank) = (rank(0)?, rank(1)?);
    run.write_table("nas/ranking-real.csv", &ranking_table(run, &real_rank))?;
    run.write_table("nas/ranking-proxy.csv", &ranking_table(run, &proxy_rank))?;
    let mut correlation = Map::new();
    for &k in &cfg.nas.topk {
        if k <= archs.len() {
            correlation.insert(k.to_string(), json!(spearman_topk(&proxy_rank, &real_rank, k)?));
        }
    }
    let all = if archs.len() >= 2 { Some(spearman_topk(&proxy_rank, &proxy_rank, archs.len())?) } else { None };
    run.write_json(
        "nas/correlation.json",
        &json!({
            "config_hash": hash_hex(run.hash),
            "candidates": archs.len(),
            "repeats": repeats,
            "proxy": cfg.nas.proxy.as_str(),
            "correlation": correlation,
            "proxy_self": all,
        }),
    )?;
    println!("nas: {} candidates, top-k correlation {}", archs.len(), Value::Object(correlation));
    eprintln!("nas wall clock: {:.1} min", started.elapsed().as_secs_f64() / 60.0);
    Ok(())
}

fn read_json(path: &Path) -> Result<Option<Value>> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Collects the JSON summaries already present into `report.json`.
pub fn report(run: &mut Run) -> Result<()> {
    let mut eval = Map::new();
    let mut diag = Map::new();
    for mode in [TeacherMode::Sgd, TeacherMode::Ftd] {
        if let Some(v) = read_json(&run.path(&format!("eval/{mode}.json")))? {
            let pick = |arm: &str| v.get(arm).map(|r| json!({"mean": r["mean"], "std": r["std"]}));
            eval.insert(
                mode.to_string(),
                json!({
                    "distilled": pick("distilled"),
                    "synthetic_init": pick("synthetic_init"),
                    "real_subset": pick("real_subset"),
                }),
            );
        }
        if let Some(v) = read_json(&run.path(&format!("diagnose/{mode}-summary.json")))? {
            diag.insert(mode.to_string(), v);
        }
    }
    let nas = read_json(&run.path("nas/correlation.json"))?;
    for (mode, v) in &eval {
        println!("eval {mode}: {}", v["distilled"]);
    }
    for (mode, v) in &diag {
        println!(
            "diagnose {mode}: residual {}, chained {}, λmax {}",
            v["max_relative_residual"], v["final_chained_mean"], v["endpoint_lambda_max_mean"]
        );
    }
    if let Some(n) = &nas {
        println!("nas: {}", n["correlation"]);
    }
    let doc = json!({"config_hash": hash_hex(run.hash), "eval": eval, "diagnose": diag, "nas": nas});
    run.write_json("report.json", &doc)
}
