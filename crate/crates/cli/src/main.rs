//! `hitrank`: generate corpora, extract features, train, evaluate and tabulate.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hitrank::data::{read_manifest, synth_longtail, write_manifest, SynthParams};
use hitrank::experiment::{
    fold_plan, load_dataset, render, resolve_cache_dir, row_context, select, ExperimentConfig,
    ReportFormat, SubsetView, CACHE_DIR_ENV,
};
use hitrank::features::{
    cache_path, log_mel_segment, read_wav, write_feature_cache, EnergySelector, FeatureCacheEntry,
    MelSpectrogram, SegmentStrategy,
};
use hitrank::metrics::{MetricReport, RankMetrics, RankedEval};
use hitrank::model::{read_model, write_model, FeatureSource, Standardizer};
use hitrank::Error;

#[derive(Parser)]
#[command(name = "hitrank", version, about = "Pairwise ranking models for hit song prediction")]
struct Cli {
    /// Feature cache directory.
    #[arg(long, global = true, env = CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic long-tail manifest and its feature cache.
    Gen(GenArgs),
    /// Turn the audio files of a manifest into cached log-mel features.
    Features(FeaturesArgs),
    /// Select and train one row on one fold, then save the model.
    Train(TrainArgs),
    /// Score a saved model on the test fold it was trained for.
    Eval(EvalArgs),
    /// Run every row over all folds and print the result table.
    Table(TableArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 15_000)]
    n: usize,
    #[arg(long, default_value_t = 1_500)]
    artists: usize,
    #[arg(long, default_value_t = 8)]
    latent_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML file with generator parameters.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Manifest to write (JSON Lines).
    #[arg(long)]
    out: PathBuf,
    /// Cache tag the features are stored under.
    #[arg(long, default_value = "mid30")]
    segment: SegmentStrategy,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "mid30")]
    segment: SegmentStrategy,
    /// Recompute entries that already exist.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Row name from the config.
    #[arg(long)]
    row: String,
    #[arg(long, default_value_t = 0)]
    fold: usize,
    /// Model file; fused rows write one file per component (`.0`, `.1`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long)]
    row: String,
    #[arg(long, default_value_t = 0)]
    fold: usize,
    /// One model file, or several whose scores are averaged.
    #[arg(long, required = true, num_args = 1..)]
    model: Vec<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-fold metric reports (JSON).
    #[arg(long)]
    reports_dir: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let is_config = e.chain().any(|c| {
            matches!(c.downcast_ref::<Error>(), Some(Error::Config(_)))
                || c.downcast_ref::<toml::de::Error>().is_some()
        });
        if is_config {
            Failure::Config(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let cache = cli.cache_dir.as_deref();
    match cli.command {
        Command::Gen(a) => gen(a, cache),
        Command::Features(a) => features(a, cache),
        Command::Train(a) => train_cmd(a, cache),
        Command::Eval(a) => eval_cmd(a, cache),
        Command::Table(a) => table(a, cache),
    }
}

fn load_config(args: &ExperimentArgs, cache: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))
        .map_err(Failure::Config)?;
    let mut cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| Failure::Config(anyhow::Error::from(e).context(args.config.display().to_string())))?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(p) = args.pairs {
        cfg.train.pairs = p;
    }
    if let Some(lr) = args.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let (hitrank::experiment::DatasetSpec::Manifest { cache_dir, .. }, Some(dir)) = (&mut cfg.dataset, cache) {
        if cache_dir.is_none() {
            *cache_dir = Some(dir.to_path_buf());
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn gen(a: GenArgs, cache: Option<&Path>) -> Result<(), Failure> {
    let params: SynthParams = match &a.params {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| Failure::Config(e.into()))?
        }
        None => SynthParams::default(),
    };
    let dir = resolve_cache_dir(cache)?;
    let corpus = synth_longtail(a.n, a.artists, a.latent_dim, a.seed, &params)?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut records = corpus.records;
    for (r, mel) in records.iter_mut().zip(corpus.mels) {
        let path = cache_path(&dir, &r.id, a.segment);
        write_feature_cache(
            &path,
            &FeatureCacheEntry {
                song_id: r.id.clone(),
                strategy: a.segment.tag().into(),
                mel: MelSpectrogram::from_tensor(mel)?,
            },
        )?;
        r.feature_path = Some(path.display().to_string());
    }
    let mut out = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    write_manifest(&records, &mut out)?;
    out.flush().context("writing manifest")?;
    log::info!("wrote {} songs to {}", records.len(), a.out.display());
    Ok(())
}

fn features(a: FeaturesArgs, cache: Option<&Path>) -> Result<(), Failure> {
    let dir = resolve_cache_dir(cache)?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let file = File::open(&a.manifest).with_context(|| format!("opening {}", a.manifest.display()))?;
    let records = read_manifest(BufReader::new(file))?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let (mut done, mut skipped) = (0usize, 0usize);
    for r in &records {
        let out = cache_path(&dir, &r.id, a.segment);
        if out.exists() && !a.overwrite {
            skipped += 1;
            continue;
        }
        let Some(src) = &r.feature_path else {
            log::warn!("song {} has no audio path", r.id);
            skipped += 1;
            continue;
        };
        let src = base.join(src);
        let clip = read_wav(&src).with_context(|| format!("reading {}", src.display()))?;
        let mel = log_mel_segment(&clip, a.segment, &EnergySelector)
            .with_context(|| format!("song {}", r.id))?;
        write_feature_cache(
            &out,
            &FeatureCacheEntry {
                song_id: r.id.clone(),
                strategy: a.segment.tag().into(),
                mel,
            },
        )?;
        done += 1;
    }
    eprintln!("{done} songs extracted, {skipped} skipped");
    Ok(())
}

fn find_row<'c>(cfg: &'c ExperimentConfig, name: &str) -> Result<&'c hitrank::experiment::RowSpec, Failure> {
    cfg.rows
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| Failure::Config(anyhow::anyhow!("no row named {name:?}")))
}

fn train_cmd(a: TrainArgs, cache: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(&a.experiment, cache)?;
    let row = find_row(&cfg, &a.row)?;
    let data = load_dataset::<f64>(&cfg)?;
    let corpus = data.corpus(row.segment)?;
    let plan = fold_plan(&cfg, corpus.len())?;
    if a.fold >= plan.len() {
        return Err(Failure::Config(anyhow::anyhow!("fold {} out of range", a.fold)));
    }
    let split = plan.iteration(a.fold);
    let ctx = row_context(&cfg, row, corpus)?;
    let train_view = SubsetView::new(corpus, &split.train);
    let validation = SubsetView::new(corpus, &split.validation);
    let seed = hitrank::experiment::derive_seed(&[cfg.seed, a.fold as u64]);
    let selected = select(&ctx, seed, &train_view, &validation)?;
    let standardizer = Standardizer::fit(&train_view.hit_scores())?;
    let paths: Vec<PathBuf> = if selected.raters.len() == 1 {
        vec![a.out.clone()]
    } else {
        (0..selected.raters.len())
            .map(|k| PathBuf::from(format!("{}.{k}", a.out.display())))
            .collect()
    };
    for (rater, path) in selected.raters.iter().zip(&paths) {
        let out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        write_model(rater, standardizer, out)?;
        println!("{}", path.display());
    }
    eprintln!(
        "selected m={} w={} mu={} (validation {:.4})",
        selected.cell.margin, selected.cell.w, selected.cell.mu, selected.validation_score
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs, cache: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(&a.experiment, cache)?;
    let row = find_row(&cfg, &a.row)?;
    let data = load_dataset::<f64>(&cfg)?;
    let corpus = data.corpus(row.segment)?;
    let plan = fold_plan(&cfg, corpus.len())?;
    if a.fold >= plan.len() {
        return Err(Failure::Config(anyhow::anyhow!("fold {} out of range", a.fold)));
    }
    let split = plan.iteration(a.fold);
    let test = SubsetView::new(corpus, &split.test);
    let idx: Vec<usize> = (0..test.len()).collect();
    let mut fused = vec![0.0; test.len()];
    // the model file does not record m and w
    let mut cell = (f64::NAN, f64::NAN, 0.0);
    for path in &a.model {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let (rater, _) = read_model::<f64, _>(BufReader::new(file))?;
        cell.2 = rater.mu();
        for (f, p) in fused.iter_mut().zip(rater.predict(&test, &idx, 256)?) {
            *f += p / a.model.len() as f64;
        }
    }
    let truth = test.hit_scores();
    let m = RankMetrics::compute(&RankedEval::top_decile(&truth, &fused)?, cfg.ndcg_mode);
    let report = MetricReport {
        model: row.variant.to_string(),
        fold: a.fold,
        sampler: row.sampler.map_or_else(|| "-".into(), |s| s.to_string()),
        features: row.features.to_string(),
        margin: cell.0,
        w: cell.1,
        mu: cell.2,
        ndcg: m.ndcg,
        kendall: m.kendall,
        spearman: m.spearman,
    };
    println!("{}", serde_json::to_string_pretty(&report).context("encoding report")?);
    Ok(())
}

fn table(a: TableArgs, cache: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(&a.experiment, cache)?;
    let data = load_dataset::<f64>(&cfg)?;
    let out = hitrank::experiment::run(&cfg, &data)?;
    if let Some(dir) = &a.reports_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (row, report) in &out.folds {
            let path = dir.join(format!("{row}.fold{}.json", report.fold));
            let text = serde_json::to_string_pretty(report).context("encoding report")?;
            fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        }
    }
    let text = render(&out.rows, a.format)?;
    match &a.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    if out.rows.iter().any(|r| r.failed.is_some()) {
        return Err(Failure::Runtime(anyhow::anyhow!("one or more rows failed")));
    }
    Ok(())
}
