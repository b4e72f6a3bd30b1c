//! Command implementations behind the `boxseq` binary. Every command reads a
//! resolved [`RunConfig`], writes its outputs under one directory and archives
//! the config there as `config.toml`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use boxseq::checkpoint::{Checkpoint, CheckpointKind};
use boxseq::config::RunConfig;
use boxseq::data::{generate_dataset, load_tracklets, mix_seed, save_tracklets, SampleMode, Tracklet};
use boxseq::eval::{aggregate, bucket_of, evaluate, save_report, OpeReport};
use boxseq::losses::LossBreakdown;
use boxseq::network::{Components, Network};
use boxseq::plot::{self, Series};
use boxseq::tracker::{load_predictions, save_predictions, track_dataset, BoxPredictor, TrackPrediction};
use boxseq::train::{sample_index, EpochLog, Trainer};
use boxseq::{Error, Result};
use log::info;

pub const TRAIN_LOG: &str = "train_log.txt";
pub const BEST_CHECKPOINT: &str = "best.json";
pub const LAST_CHECKPOINT: &str = "last.json";
pub const PREDICTIONS: &str = "predictions.txt";
const TRAIN_LOG_MAGIC: &str = "boxseq-trainlog 1";

/// Seed salts, so that every consumer of the run seed draws its own stream.
mod salt {
    pub const TRAIN: u64 = 1;
    pub const VAL: u64 = 2;
    pub const TEST: u64 = 3;
    pub const SPARSE: u64 = 4;
    pub const INIT: u64 = 10;
    pub const TRAINER: u64 = 11;
    pub const TRACK: u64 = 20;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Split::Train => salt::TRAIN,
            Split::Val => salt::VAL,
            Split::Test => salt::TEST,
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.name())
    }
}

/// Resolved inputs shared by all commands.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub workers: usize,
}

impl Context {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>, workers: usize) -> Self {
        Context {
            config,
            out: out.into(),
            workers: workers.max(1),
        }
    }

    /// Loads the config file, applies overrides, then the `--seed` flag.
    pub fn load(
        config_path: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
        out: impl Into<PathBuf>,
        workers: usize,
    ) -> Result<Self> {
        let mut config = RunConfig::load(config_path, overrides)?;
        if let Some(s) = seed {
            config.seed = s;
        }
        Ok(Self::new(config, out, workers))
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", self.workers)))
    }

    /// Tracklets of a split: the configured file when set, the synthetic
    /// generator otherwise.
    pub fn split(&self, split: Split) -> Result<Vec<Tracklet>> {
        let d = &self.config.data;
        let (path, count) = match split {
            Split::Train => (&d.train_path, d.train_count),
            Split::Val => (&d.val_path, d.val_count),
            Split::Test => (&d.test_path, d.test_count),
        };
        match path {
            Some(p) => load_tracklets(p),
            None => generate_split(&self.config, split, count),
        }
    }

    /// Held-out suite whose first frames carry few target points.
    pub fn sparse_suite(&self) -> Result<Vec<Tracklet>> {
        let mut spec = self.config.data.synthetic.clone();
        spec.first_frame_points = Some(self.config.ablate.sparse_points);
        generate_dataset(&spec, self.config.data.test_count, mix_seed(self.config.seed, salt::SPARSE), "sparse")
    }
}

fn generate_split(cfg: &RunConfig, split: Split, count: usize) -> Result<Vec<Tracklet>> {
    generate_dataset(&cfg.data.synthetic, count, mix_seed(cfg.seed, split.salt()), split.name())
}

/// Counts of first-frame target points per evaluation bucket.
#[derive(Clone, Debug, PartialEq)]
pub struct GenSummary {
    pub splits: Vec<(String, PathBuf, usize)>,
    pub histogram: Vec<(String, usize)>,
}

impl fmt::Display for GenSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, path, n) in &self.splits {
            writeln!(f, "{name}: {n} tracklets -> {}", path.display())?;
        }
        writeln!(f, "first-frame target points:")?;
        for (label, n) in &self.histogram {
            writeln!(f, "  {label:>8}  {n}")?;
        }
        Ok(())
    }
}

pub fn first_frame_histogram(tracklets: &[Tracklet], edges: &[usize]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<usize, (String, usize)> = BTreeMap::new();
    for t in tracklets {
        if let Some((k, label)) = bucket_of(t.first_frame_points(), edges) {
            counts.entry(k).or_insert((label, 0)).1 += 1;
        }
    }
    counts.into_values().collect()
}

/// Writes `train.txt`, `val.txt` and `test.txt` from the synthetic generator.
pub fn cmd_gen_data(ctx: &Context) -> Result<GenSummary> {
    let cfg = &ctx.config;
    cfg.archive(&ctx.out)?;
    let mut splits = Vec::new();
    let mut all = Vec::new();
    for split in Split::ALL {
        let count = match split {
            Split::Train => cfg.data.train_count,
            Split::Val => cfg.data.val_count,
            Split::Test => cfg.data.test_count,
        };
        let data = generate_split(cfg, split, count)?;
        let path = ctx.out.join(split.file_name());
        save_tracklets(&path, &data)?;
        info!("wrote {} tracklets to {}", data.len(), path.display());
        splits.push((split.name().to_string(), path, data.len()));
        all.extend(data);
    }
    Ok(GenSummary {
        histogram: first_frame_histogram(&all, &cfg.eval.buckets),
        splits,
    })
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub lr: f64,
    pub train: LossBreakdown,
    pub val: Option<f64>,
}

fn write_log_row<W: Write>(out: &mut W, log: &EpochLog) -> std::io::Result<()> {
    let t = &log.train;
    let val = log.val.map_or_else(|| "-".to_string(), |v| v.total.to_string());
    writeln!(
        out,
        "{} {} {} {} {} {} {} {}",
        log.epoch, log.lr, t.total, t.mask, t.coarse, t.history, t.current, val
    )
}

pub fn read_train_log(path: &Path) -> Result<Vec<LogRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            record: "train log".into(),
            message,
        };
        if i == 0 {
            if line.trim() != TRAIN_LOG_MAGIC {
                return Err(parse_err(format!("expected header `{TRAIN_LOG_MAGIC}`")));
            }
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 8 {
            return Err(parse_err(format!("expected 8 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(format!("`{s}`: {e}")));
        rows.push(LogRow {
            epoch: f[0].parse().map_err(|e| parse_err(format!("`{}`: {e}", f[0])))?,
            lr: num(f[1])?,
            train: LossBreakdown {
                total: num(f[2])?,
                mask: num(f[3])?,
                coarse: num(f[4])?,
                history: num(f[5])?,
                current: num(f[6])?,
            },
            val: if f[7] == "-" { None } else { Some(num(f[7])?) },
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub logs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
    pub last: PathBuf,
    pub best: PathBuf,
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.logs {
            write!(f, "epoch {:>3}  lr {:.2e}  loss {:.5}", l.epoch, l.lr, l.train.total)?;
            if let Some(v) = &l.val {
                write!(f, "  val {:.5}", v.total)?;
            }
            writeln!(f, "  ({:.1}s)", l.seconds)?;
        }
        if let (Some(e), Some(m)) = (self.best_epoch, self.best_metric) {
            writeln!(f, "best epoch {e} (metric {m:.5}) -> {}", self.best.display())?;
        }
        writeln!(f, "last -> {}", self.last.display())
    }
}

fn require_trainable(data: &[Tracklet], what: &str) -> Result<()> {
    if sample_index(data).is_empty() {
        return Err(Error::Config(format!("{what} has no tracklet with two or more frames")));
    }
    Ok(())
}

/// Trains in memory and returns the trainer with the epoch logs. Nothing is
/// written to disk.
pub fn train_model(cfg: &RunConfig, train: &[Tracklet], val: &[Tracklet], resume: Option<&Checkpoint>) -> Result<(Trainer, Vec<EpochLog>)> {
    let mut trainer = start_trainer(cfg, train, resume)?;
    let mut logs = Vec::new();
    while trainer.epoch < cfg.train.epochs {
        logs.push(epoch_with_val(&mut trainer, train, val)?);
    }
    Ok((trainer, logs))
}

fn start_trainer(cfg: &RunConfig, train: &[Tracklet], resume: Option<&Checkpoint>) -> Result<Trainer> {
    require_trainable(train, "training data")?;
    let sample = cfg.sample_config(SampleMode::Train);
    let seed = mix_seed(cfg.seed, salt::TRAINER);
    match resume {
        Some(ck) => {
            ck.check_config(&cfg.model)?;
            Trainer::resume(ck, cfg.train.clone(), cfg.loss.clone(), &sample, seed)
        }
        None => {
            let net = Network::new(cfg.model.clone(), mix_seed(cfg.seed, salt::INIT))?;
            Trainer::new(net, cfg.train.clone(), cfg.loss.clone(), &sample, seed)
        }
    }
}

fn epoch_with_val(trainer: &mut Trainer, train: &[Tracklet], val: &[Tracklet]) -> Result<EpochLog> {
    let mut log = trainer.run_epoch(train)?;
    if !sample_index(val).is_empty() {
        log.val = Some(trainer.evaluate_loss(val)?);
    }
    info!("epoch {} loss {:.5} ({:.1}s)", log.epoch, log.train.total, log.seconds);
    Ok(log)
}

/// Trains on the train split, selecting the best checkpoint by validation
/// loss (training loss without a validation split). With `resume`, the epoch
/// counter, optimizer state and log continue from that checkpoint.
pub fn cmd_train(ctx: &Context, resume: Option<&Path>) -> Result<TrainSummary> {
    let cfg = &ctx.config;
    let train = ctx.split(Split::Train)?;
    let val = ctx.split(Split::Val)?;
    let resume_ck = resume.map(Checkpoint::load).transpose()?;
    let pool = ctx.pool()?;
    let mut trainer = pool.install(|| start_trainer(cfg, &train, resume_ck.as_ref()))?;
    cfg.archive(&ctx.out)?;

    let log_path = ctx.out.join(TRAIN_LOG);
    let best_path = ctx.out.join(BEST_CHECKPOINT);
    let last_path = ctx.out.join(LAST_CHECKPOINT);
    let mut best_metric = None;
    let mut best_epoch = None;
    let mut log_file = if resume_ck.is_some() && log_path.exists() {
        // Keep the rows up to the resumed epoch.
        let start = trainer.epoch;
        let kept: Vec<String> = BufReader::new(File::open(&log_path).map_err(|e| Error::io(&log_path, e))?)
            .lines()
            .map_while(std::result::Result::ok)
            .filter(|l| {
                l.starts_with("boxseq") || l.starts_with('#') || l.split_whitespace().next().and_then(|e| e.parse::<usize>().ok()).is_some_and(|e| e <= start)
            })
            .collect();
        std::fs::write(&log_path, kept.join("\n") + "\n").map_err(|e| Error::io(&log_path, e))?;
        if best_path.exists() {
            let best = Checkpoint::load(&best_path)?;
            best_metric = best.metric;
            best_epoch = Some(best.epoch);
        }
        OpenOptions::new().append(true).open(&log_path).map_err(|e| Error::io(&log_path, e))?
    } else {
        let mut f = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        writeln!(f, "{TRAIN_LOG_MAGIC}\n# epoch lr total mask coarse history current val_total")
            .map_err(|e| Error::io(&log_path, e))?;
        f
    };

    let mut logs = Vec::new();
    while trainer.epoch < cfg.train.epochs {
        let log = pool.install(|| epoch_with_val(&mut trainer, &train, &val))?;
        write_log_row(&mut log_file, &log).map_err(|e| Error::io(&log_path, e))?;
        let metric = log.val.as_ref().unwrap_or(&log.train).total;
        if best_metric.is_none_or(|b| metric < b) {
            best_metric = Some(metric);
            best_epoch = Some(log.epoch);
            trainer.checkpoint(Some(metric)).save(&best_path)?;
        }
        trainer.checkpoint(Some(metric)).save(&last_path)?;
        logs.push(log);
    }
    log_file.flush().map_err(|e| Error::io(&log_path, e))?;
    if !last_path.exists() {
        trainer.checkpoint(None).save(&last_path)?;
    }
    let rows = read_train_log(&log_path)?;
    if !rows.is_empty() {
        let tr: Vec<f64> = rows.iter().map(|r| r.train.total).collect();
        let va: Vec<f64> = rows.iter().filter_map(|r| r.val).collect();
        plot::loss_plot(&ctx.out.join("loss.svg"), &tr, (va.len() == tr.len()).then_some(&va[..]))?;
    }
    Ok(TrainSummary {
        logs,
        best_epoch,
        best_metric,
        last: last_path,
        best: best_path,
    })
}

#[derive(Clone, Debug)]
pub struct TrackSummary {
    pub predictions: PathBuf,
    pub tracklets: usize,
    pub frames: usize,
    pub frames_per_second: f64,
}

impl fmt::Display for TrackSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "tracked {} tracklets ({} frames, {:.1} frames/s) -> {}",
            self.tracklets,
            self.frames,
            self.frames_per_second,
            self.predictions.display()
        )
    }
}

/// Loads a checkpoint that must match the configured model.
pub fn load_predictor(cfg: &RunConfig, path: &Path) -> Result<Box<dyn BoxPredictor>> {
    let ck = Checkpoint::load(path)?;
    match ck.kind {
        CheckpointKind::Network => ck.check_config(&cfg.model)?,
        CheckpointKind::EchoHistory => {
            if (ck.model.n_frames, ck.model.points_per_frame) != (cfg.model.n_frames, cfg.model.points_per_frame) {
                return Err(Error::Checkpoint("echo checkpoint window differs from the configured model".into()));
            }
        }
    }
    Ok(Box::new(ck.into_predictor()?))
}

/// Tracks every tracklet of `data` (test split by default).
pub fn track_with(ctx: &Context, predictor: &dyn BoxPredictor, data: &[Tracklet]) -> Result<Vec<TrackPrediction>> {
    let cfg = ctx.config.sample_config(SampleMode::Test);
    track_dataset(predictor, data, &cfg, mix_seed(ctx.config.seed, salt::TRACK), ctx.workers)
}

pub fn cmd_track(ctx: &Context, checkpoint: &Path, data: Option<&Path>) -> Result<TrackSummary> {
    let predictor = load_predictor(&ctx.config, checkpoint)?;
    let tracklets = match data {
        Some(p) => load_tracklets(p)?,
        None => ctx.split(Split::Test)?,
    };
    ctx.config.archive(&ctx.out)?;
    let start = Instant::now();
    let preds = track_with(ctx, predictor.as_ref(), &tracklets)?;
    let secs = start.elapsed().as_secs_f64();
    let path = ctx.out.join(PREDICTIONS);
    save_predictions(&path, &preds)?;
    let frames: usize = tracklets.iter().map(Tracklet::len).sum();
    Ok(TrackSummary {
        predictions: path,
        tracklets: preds.len(),
        frames,
        frames_per_second: frames as f64 / secs.max(1e-9),
    })
}

/// Scores predictions and writes `report.txt`, `curves.txt` and the plots.
pub fn cmd_eval(ctx: &Context, predictions: &Path, data: Option<&Path>) -> Result<OpeReport> {
    let preds = load_predictions(predictions)?;
    let tracklets = match data {
        Some(p) => load_tracklets(p)?,
        None => ctx.split(Split::Test)?,
    };
    let report = aggregate(&evaluate(&preds, &tracklets, &ctx.config.eval)?, &ctx.config.eval)?;
    ctx.config.archive(&ctx.out)?;
    save_report(&ctx.out, &report)?;
    write_report_plots(&ctx.out, &[("overall".to_string(), &report)])?;
    Ok(report)
}

fn write_report_plots(dir: &Path, reports: &[(String, &OpeReport)]) -> Result<()> {
    let curves = |f: &dyn Fn(&OpeReport) -> (&Vec<f64>, &Vec<f64>)| -> Vec<Series> {
        reports
            .iter()
            .map(|(label, r)| {
                let (x, y) = f(r);
                Series {
                    label: label.clone(),
                    points: x.iter().zip(y).map(|(&a, &b)| (a, 100.0 * b)).collect(),
                }
            })
            .collect()
    };
    plot::success_plot(&dir.join("success.svg"), &curves(&|r| (&r.success_thresholds, &r.success_curve)))?;
    plot::precision_plot(&dir.join("precision.svg"), &curves(&|r| (&r.precision_thresholds, &r.precision_curve)))?;
    if let [(_, r)] = reports {
        let bars: Vec<(String, f64, f64)> = r.buckets.iter().map(|b| (b.name.clone(), b.success, b.precision)).collect();
        if !bars.is_empty() {
            plot::bucket_plot(&dir.join("buckets.svg"), &bars)?;
        }
    }
    Ok(())
}

/// Which table a variant belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Study {
    Components,
    Window,
    Constraints,
}

impl Study {
    pub fn title(self) -> &'static str {
        match self {
            Study::Components => "Components",
            Study::Window => "Sequence length",
            Study::Constraints => "Constraints length",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub study: Study,
    pub label: String,
    pub standard: (f64, f64),
    pub sparse: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub sparse_label: String,
}

impl AblationTable {
    pub fn row(&self, study: Study, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.study == study && r.label == label)
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut study = None;
        for r in &self.rows {
            if study != Some(r.study) {
                if study.is_some() {
                    writeln!(f)?;
                }
                study = Some(r.study);
                writeln!(f, "### {}\n", r.study.title())?;
                writeln!(f, "| Variant | Standard Success | Standard Precision | {0} Success | {0} Precision |", self.sparse_label)?;
                writeln!(f, "|---|---|---|---|---|")?;
            }
            writeln!(
                f,
                "| {} | {:.2} | {:.2} | {:.2} | {:.2} |",
                r.label, r.standard.0, r.standard.1, r.sparse.0, r.sparse.1
            )?;
        }
        Ok(())
    }
}

type VariantKey = (String, usize, Option<usize>);

/// Trains every configured variant on the train split and scores it on the
/// test split and the sparse suite. Identical variants are trained once.
pub fn run_ablation(ctx: &Context) -> Result<AblationTable> {
    let cfg = &ctx.config;
    let train = ctx.split(Split::Train)?;
    let val = ctx.split(Split::Val)?;
    let test = ctx.split(Split::Test)?;
    let sparse = ctx.sparse_suite()?;
    let base_label = cfg.model.components.label();
    let mut plan: Vec<(Study, String, VariantKey)> = Vec::new();
    for c in &cfg.ablate.components {
        plan.push((Study::Components, c.clone(), (c.clone(), cfg.model.n_frames, cfg.loss.history_constraints)));
    }
    for &n in &cfg.ablate.windows {
        plan.push((Study::Window, format!("1+{}", n - 1), (base_label.clone(), n, cfg.loss.history_constraints)));
    }
    for &k in &cfg.ablate.constraints {
        plan.push((Study::Constraints, format!("1+{k}"), (base_label.clone(), cfg.model.n_frames, Some(k))));
    }
    let mut scored: BTreeMap<VariantKey, ((f64, f64), (f64, f64))> = BTreeMap::new();
    let pool = ctx.pool()?;
    let mut rows = Vec::new();
    for (study, label, key) in plan {
        if !scored.contains_key(&key) {
            let mut v = cfg.clone();
            v.model.components = Components::from_label(&key.0)?;
            v.model.n_frames = key.1;
            v.loss.history_constraints = key.2;
            v.validate()?;
            info!("ablation variant {} N={} constraints={:?}", key.0, key.1, key.2);
            let (trainer, _) = pool.install(|| train_model(&v, &train, &val, None))?;
            let vctx = Context::new(v, &ctx.out, ctx.workers);
            let score = |data: &[Tracklet]| -> Result<(f64, f64)> {
                let preds = track_with(&vctx, &trainer.net, data)?;
                let r = aggregate(&evaluate(&preds, data, &cfg.eval)?, &cfg.eval)?;
                Ok((r.overall.success, r.overall.precision))
            };
            let s = (score(&test)?, score(&sparse)?);
            scored.insert(key.clone(), s);
        }
        let (standard, sparse) = scored[&key];
        rows.push(AblationRow {
            study,
            label,
            standard,
            sparse,
        });
    }
    let [lo, hi] = cfg.ablate.sparse_points;
    Ok(AblationTable {
        rows,
        sparse_label: format!("Sparse {lo}-{hi}"),
    })
}

pub fn cmd_ablate(ctx: &Context) -> Result<AblationTable> {
    let table = run_ablation(ctx)?;
    ctx.config.archive(&ctx.out)?;
    let path = ctx.out.join("ablation.md");
    std::fs::write(&path, table.to_string()).map_err(|e| Error::io(&path, e))?;
    Ok(table)
}

/// Re-plots finished runs. Each input directory contributes its curves
/// (`curves.txt`) and loss log (`train_log.txt`) when present.
pub fn cmd_plot(ctx: &Context, inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut success = Vec::new();
    let mut precision = Vec::new();
    let mut losses = Vec::new();
    let mut buckets = Vec::new();
    for dir in inputs {
        let label = dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        let curves = dir.join("curves.txt");
        if curves.exists() {
            let (s, p) = boxseq::eval::load_curves(&curves)?;
            success.push(Series { label: label.clone(), points: s.iter().map(|&(x, y)| (x, 100.0 * y)).collect() });
            precision.push(Series { label: label.clone(), points: p.iter().map(|&(x, y)| (x, 100.0 * y)).collect() });
        }
        let report = dir.join("report.txt");
        if report.exists() {
            for (scope, g) in boxseq::eval::load_report_groups(&report)? {
                if scope == "bucket" {
                    buckets.push((format!("{label} {}", g.name), g.success, g.precision));
                }
            }
        }
        let log = dir.join(TRAIN_LOG);
        if log.exists() {
            let rows = read_train_log(&log)?;
            losses.push(Series { label, points: rows.iter().map(|r| (r.epoch as f64, r.train.total)).collect() });
        }
    }
    let mut written = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let p = ctx.out.join(name);
        f(&p)?;
        written.push(p);
        Ok(())
    };
    if !success.is_empty() {
        emit("success.svg", &|p| plot::success_plot(p, &success))?;
        emit("precision.svg", &|p| plot::precision_plot(p, &precision))?;
    }
    if !buckets.is_empty() {
        emit("buckets.svg", &|p| plot::bucket_plot(p, &buckets))?;
    }
    if !losses.is_empty() {
        emit("loss.svg", &|p| plot::line_chart(p, "Loss", "epoch", "loss", &losses))?;
    }
    if written.is_empty() {
        return Err(Error::Config("no curves.txt, report.txt or train_log.txt found in the inputs".into()));
    }
    Ok(written)
}

/// Writes a JSON checkpoint of the parameter-free echo model for the
/// configured window.
pub fn write_echo_checkpoint(cfg: &RunConfig, path: &Path) -> Result<()> {
    Checkpoint::echo_history(cfg.model.clone()).save(path)
}

/// Opens a buffered writer, creating parent directories.
pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}
