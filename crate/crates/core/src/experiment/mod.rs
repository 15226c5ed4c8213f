//! Cross-validated experiments: dataset loading, per-fold grid selection on
//! the validation fold, test evaluation, and table rows.
//!
//! Selection only ever receives [`SubsetView`]s over the training and
//! validation folds. The test view is built after a model has been chosen.

mod config;
mod report;

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{
    Architecture, Cell, DatasetSpec, ExperimentConfig, FeatureSet, GridSpec, ModelSpec, RowSpec,
    SelectionMetric, TrainSpec, Variant,
};
pub use report::{read_csv, render, ReportFormat, ReportRow, REPORT_SCHEMA};

use crate::data::{read_manifest, select_top, synth_longtail, tenfold_split, validate_corpus, Corpus, FoldSplit, SplitPlan};
use crate::error::{Error, Result};
use crate::features::{cache_path, read_feature_cache, SegmentStrategy};
use crate::metrics::{kendall_tau, ndcg_with, spearman_rho, MetricReport, NdcgMode, RankMetrics, RankedEval};
use crate::model::{
    train, FeatureSource, HybridConfig, HybridRater, LossWeights, Objective, PairSource, RaterConfig,
    Standardizer, TrainConfig,
};
use crate::sampling::{ab_partition, ab_sample, artist_sample, fuse_scores, naive_sample, PairBatch, SampleOptions, SamplerKind};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Environment variable naming the feature cache directory.
pub const CACHE_DIR_ENV: &str = "HITRANK_CACHE_DIR";

const PREDICT_BATCH: usize = 256;

/// Songs of one fold subset, addressed by local index.
///
/// Every feature, tag or label read is recorded by global index.
pub struct SubsetView<'a, T> {
    corpus: &'a Corpus<T>,
    indices: &'a [usize],
    reads: RefCell<Vec<bool>>,
}

impl<'a, T: Scalar> SubsetView<'a, T> {
    pub fn new(corpus: &'a Corpus<T>, indices: &'a [usize]) -> Self {
        Self {
            corpus,
            indices,
            reads: RefCell::new(vec![false; indices.len()]),
        }
    }

    fn touch(&self, i: usize) -> usize {
        self.reads.borrow_mut()[i] = true;
        self.indices[i]
    }

    pub fn hit_scores(&self) -> Vec<f64> {
        (0..self.indices.len())
            .map(|i| self.corpus.hit_scores()[self.touch(i)])
            .collect()
    }

    pub fn artists(&self) -> Vec<&'a str> {
        let corpus = self.corpus;
        (0..self.indices.len())
            .map(|i| corpus.artists()[self.touch(i)].as_str())
            .collect()
    }

    /// Global indices read so far.
    pub fn reads(&self) -> Vec<usize> {
        self.reads
            .borrow()
            .iter()
            .zip(self.indices)
            .filter(|(r, _)| **r)
            .map(|(_, &g)| g)
            .collect()
    }
}

impl<T: Scalar> FeatureSource<T> for SubsetView<'_, T> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn mel(&self, i: usize) -> &Tensor<T> {
        self.corpus.mel(self.touch(i))
    }

    fn tags(&self, i: usize) -> Option<&[T]> {
        self.corpus.tags(self.touch(i))
    }
}

/// One corpus per segment strategy in use.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    corpora: Vec<Corpus<T>>,
    by_segment: BTreeMap<SegmentStrategy, usize>,
}

impl<T: Scalar> Dataset<T> {
    /// The same corpus for every strategy.
    pub fn single(corpus: Corpus<T>) -> Self {
        let by_segment = [SegmentStrategy::Mid30, SegmentStrategy::Highlight]
            .into_iter()
            .map(|s| (s, 0))
            .collect();
        Self {
            corpora: vec![corpus],
            by_segment,
        }
    }

    pub fn corpus(&self, segment: SegmentStrategy) -> Result<&Corpus<T>> {
        self.by_segment
            .get(&segment)
            .map(|&i| &self.corpora[i])
            .ok_or_else(|| Error::Config(format!("no features for segment strategy {}", segment.tag())))
    }

    /// Song count, identical across strategies.
    pub fn len(&self) -> usize {
        self.corpora.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Resolves the feature cache directory: explicit value first, then [`CACHE_DIR_ENV`].
pub fn resolve_cache_dir(explicit: Option<&Path>) -> Result<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| Error::Config(format!("no feature cache directory (set {CACHE_DIR_ENV})")))
}

/// Builds the dataset a config describes. Synthetic corpora are generated
/// from the config seed; manifests are read, checked, cut to the top songs
/// and paired with cached features for every segment strategy the rows use.
pub fn load_dataset<T: Scalar>(config: &ExperimentConfig) -> Result<Dataset<T>> {
    match &config.dataset {
        DatasetSpec::Synthetic {
            n,
            n_artists,
            latent_dim,
            params,
        } => {
            let synth = synth_longtail(*n, *n_artists, *latent_dim, config.seed, params)?;
            let order = select_top(&synth.records, *n);
            let records: Vec<_> = order.iter().map(|&i| synth.records[i].clone()).collect();
            let mels = order.iter().map(|&i| synth.mels[i].cast()).collect();
            Ok(Dataset::single(Corpus::new(&records, mels)?))
        }
        DatasetSpec::Manifest { path, cache_dir, top_k } => {
            let records = read_manifest(BufReader::new(File::open(path)?))?;
            validate_corpus(&records)?;
            let keep = select_top(&records, *top_k);
            let records: Vec<_> = keep.iter().map(|&i| records[i].clone()).collect();
            let dir = resolve_cache_dir(cache_dir.as_deref())?;
            let mut corpora = Vec::new();
            let mut by_segment = BTreeMap::new();
            for seg in config.rows.iter().map(|r| r.segment) {
                if by_segment.contains_key(&seg) {
                    continue;
                }
                let mels = records
                    .iter()
                    .map(|r| {
                        let entry = read_feature_cache(cache_path(&dir, &r.id, seg))?;
                        if entry.song_id != r.id || entry.strategy != seg.tag() {
                            return Err(Error::Format {
                                what: "feature cache",
                                detail: format!("entry for {} holds {}/{}", r.id, entry.song_id, entry.strategy),
                            });
                        }
                        Ok(entry.mel.into_tensor().cast())
                    })
                    .collect::<Result<Vec<_>>>()?;
                by_segment.insert(seg, corpora.len());
                corpora.push(Corpus::new(&records, mels)?);
            }
            Ok(Dataset { corpora, by_segment })
        }
    }
}

/// Deterministic seed derivation (SplitMix64 finaliser over the parts).
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x9E37_79B9_7F4A_7C15, |acc, &p| {
        let mut z = acc ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(acc << 6);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

fn sampler_code(s: Option<SamplerKind>) -> u64 {
    match s {
        None => 0,
        Some(SamplerKind::Naive) => 1,
        Some(SamplerKind::Ab) => 2,
        Some(SamplerKind::Artist) => 3,
        Some(SamplerKind::AbArtist) => 4,
    }
}

/// Everything that stays fixed while one row is evaluated.
pub struct RowContext<'c> {
    pub row: &'c RowSpec,
    pub config: &'c ExperimentConfig,
    pub rater: RaterConfig,
}

/// The chosen grid cell and the model(s) trained with it.
pub struct Selected<T> {
    pub cell: Cell,
    pub validation_score: f64,
    /// One rater, or two whose scores are averaged for the fused sampler.
    pub raters: Vec<HybridRater<T>>,
}

impl<T: Scalar> Selected<T> {
    pub fn predict<S: FeatureSource<T> + ?Sized>(&self, source: &S) -> Result<Vec<f64>> {
        predict_fused(&self.raters, source)
    }
}

fn predict_fused<T: Scalar, S: FeatureSource<T> + ?Sized>(raters: &[HybridRater<T>], source: &S) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..source.len()).collect();
    let mut fused: Option<Vec<f64>> = None;
    for r in raters {
        let p: Vec<f64> = r
            .predict(source, &idx, PREDICT_BATCH)?
            .into_iter()
            .map(Scalar::to_f64_lossless)
            .collect();
        fused = Some(match fused {
            None => p,
            Some(prev) => fuse_scores(&prev, &p)?,
        });
    }
    fused.ok_or(Error::Empty("rater list"))
}

fn score(metric: SelectionMetric, mode: NdcgMode, truth: &[f64], predicted: &[f64]) -> Result<f64> {
    let eval = RankedEval::top_decile(truth, predicted)?;
    let v = match metric {
        SelectionMetric::Ndcg => Some(ndcg_with(&eval, mode)),
        SelectionMetric::Kendall => kendall_tau(&eval),
        SelectionMetric::Spearman => spearman_rho(&eval),
    };
    Ok(v.unwrap_or(f64::NEG_INFINITY))
}

fn sample_pairs(
    kind: SamplerKind,
    hit: &[f64],
    artists: &[&str],
    count: usize,
    seed: u64,
    opts: SampleOptions,
) -> Result<PairBatch> {
    match kind {
        SamplerKind::Naive => naive_sample(hit, count, seed, opts),
        SamplerKind::Ab => ab_sample(&ab_partition(hit)?, hit, count, seed, opts),
        SamplerKind::Artist => artist_sample(artists, hit, count, seed, opts),
        SamplerKind::AbArtist => Err(Error::Config("the fused sampler trains one model per component".into())),
    }
}

/// Trains one rater for `cell` on the training view.
fn fit<T: Scalar>(
    ctx: &RowContext<'_>,
    cell: Cell,
    sampler: Option<SamplerKind>,
    train_view: &SubsetView<'_, T>,
    seed: u64,
) -> Result<HybridRater<T>> {
    let cfg = ctx.config;
    let hybrid = match ctx.row.features {
        FeatureSet::Audio => HybridConfig::audio_only(ctx.rater.clone()),
        FeatureSet::AudioTag => HybridConfig::with_tags(ctx.rater.clone(), cell.mu),
    };
    let mut rater = HybridRater::new(hybrid, seed)?;
    let hit = train_view.hit_scores();
    let standardizer = Standardizer::fit(&hit)?;
    let targets: Vec<T> = hit.iter().map(|&v| T::from_f64_lossy(standardizer.transform(v))).collect();
    let tc = TrainConfig {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        sgd: cfg.train.sgd(),
        seed: derive_seed(&[seed, 1]),
    };
    let opts = SampleOptions {
        exclude_ties: cfg.train.exclude_ties,
    };
    match sampler {
        None => train(&mut rater, train_view, &targets, Objective::Rating, None, &tc)?,
        Some(kind) => {
            let artists = train_view.artists();
            let weights = LossWeights::new(cell.margin, cell.w)?;
            let pair_seed = derive_seed(&[seed, 2]);
            if cfg.train.resample_pairs {
                let hit = hit.clone();
                let count = cfg.train.pairs;
                let source = PairSource::PerEpoch(Box::new(move |epoch| {
                    sample_pairs(kind, &hit, &artists, count, derive_seed(&[pair_seed, epoch as u64]), opts)
                }));
                train(&mut rater, train_view, &targets, Objective::Multi(weights), Some(source), &tc)?
            } else {
                let batch = sample_pairs(kind, &hit, &artists, cfg.train.pairs, pair_seed, opts)?;
                train(
                    &mut rater,
                    train_view,
                    &targets,
                    Objective::Multi(weights),
                    Some(PairSource::Fixed(&batch)),
                    &tc,
                )?
            }
        }
    };
    Ok(rater)
}

/// Grid search on one fold. Sees only the training and validation views.
pub fn select<T: Scalar>(
    ctx: &RowContext<'_>,
    fold_seed: u64,
    train_view: &SubsetView<'_, T>,
    validation: &SubsetView<'_, T>,
) -> Result<Selected<T>> {
    let components: Vec<Option<SamplerKind>> = match ctx.row.sampler {
        None => vec![None],
        Some(SamplerKind::AbArtist) => vec![Some(SamplerKind::Ab), Some(SamplerKind::Artist)],
        Some(k) => vec![Some(k)],
    };
    let truth = validation.hit_scores();
    let mut best: Option<Selected<T>> = None;
    for cell in ctx.row.cells(&ctx.config.grid) {
        let raters = components
            .iter()
            .map(|&c| fit(ctx, cell, c, train_view, derive_seed(&[fold_seed, sampler_code(c)])))
            .collect::<Result<Vec<_>>>()?;
        let pred = predict_fused(&raters, validation)?;
        let s = score(ctx.config.selection, ctx.config.ndcg_mode, &truth, &pred)?;
        log::debug!("row {} cell {cell:?}: validation {s:.4}", ctx.row.name);
        if best.as_ref().is_none_or(|b| s > b.validation_score) {
            best = Some(Selected {
                cell,
                validation_score: s,
                raters,
            });
        }
    }
    best.ok_or(Error::Empty("hyper-parameter grid"))
}

/// Result of one row on one fold.
pub struct FoldOutcome {
    pub report: MetricReport,
    /// Global indices read while selecting, for auditing.
    pub selection_reads: Vec<usize>,
}

/// Selects on the training/validation folds, then evaluates on the test fold.
pub fn run_fold<T: Scalar>(
    ctx: &RowContext<'_>,
    corpus: &Corpus<T>,
    fold: usize,
    split: &FoldSplit,
) -> Result<FoldOutcome> {
    let fold_seed = derive_seed(&[ctx.config.seed, fold as u64]);
    let (selected, selection_reads) = {
        let train_view = SubsetView::new(corpus, &split.train);
        let validation = SubsetView::new(corpus, &split.validation);
        let selected = select(ctx, fold_seed, &train_view, &validation)?;
        let mut reads = train_view.reads();
        reads.extend(validation.reads());
        (selected, reads)
    };
    let test = SubsetView::new(corpus, &split.test);
    let pred = selected.predict(&test)?;
    let truth = test.hit_scores();
    let m = RankMetrics::compute(&RankedEval::top_decile(&truth, &pred)?, ctx.config.ndcg_mode);
    Ok(FoldOutcome {
        report: MetricReport {
            model: ctx.row.variant.to_string(),
            fold,
            sampler: ctx.row.sampler.map_or_else(|| "-".to_string(), |s| s.to_string()),
            features: ctx.row.features.to_string(),
            margin: selected.cell.margin,
            w: selected.cell.w,
            mu: selected.cell.mu,
            ndcg: m.ndcg,
            kendall: m.kendall,
            spearman: m.spearman,
        },
        selection_reads,
    })
}

/// The fold plan `run` uses for `config` over `n` songs.
pub fn fold_plan(config: &ExperimentConfig, n: usize) -> Result<SplitPlan> {
    tenfold_split(n, derive_seed(&[config.seed, 0x5EED]))
}

/// Builds the fixed context for `row` on `corpus`.
pub fn row_context<'c, T: Scalar>(
    config: &'c ExperimentConfig,
    row: &'c RowSpec,
    corpus: &Corpus<T>,
) -> Result<RowContext<'c>> {
    if row.features == FeatureSet::AudioTag && !corpus.has_tags() {
        return Err(Error::Config(format!("row {} needs tags, the dataset has none", row.name)));
    }
    let (bins, frames) = corpus.feature_shape().ok_or(Error::Empty("dataset"))?;
    Ok(RowContext {
        row,
        config,
        rater: config.model.rater(bins, frames)?,
    })
}

/// Rows plus the per-fold reports behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub rows: Vec<ReportRow>,
    pub folds: Vec<(String, MetricReport)>,
}

/// Runs every row over all ten folds. A row whose training fails is marked
/// failed and the run moves on.
pub fn run<T: Scalar>(config: &ExperimentConfig, data: &Dataset<T>) -> Result<RunOutput> {
    config.validate()?;
    let plan = fold_plan(config, data.len())?;
    let mut rows: Vec<(&RowSpec, ReportRow)> = Vec::with_capacity(config.rows.len());
    let mut folds = Vec::new();
    for row in &config.rows {
        let corpus = data.corpus(row.segment)?;
        let ctx = row_context(config, row, corpus)?;
        let mut reports = Vec::with_capacity(plan.len());
        let mut failure = None;
        for t in 0..plan.len() {
            match run_fold(&ctx, corpus, t, &plan.iteration(t)) {
                Ok(out) => {
                    log::info!(
                        "row {} fold {t}: kendall {:?} (m={}, w={}, mu={})",
                        row.name,
                        out.report.kendall,
                        out.report.margin,
                        out.report.w,
                        out.report.mu
                    );
                    reports.push(out.report);
                }
                Err(e) => {
                    log::warn!("row {} failed on fold {t}: {e}", row.name);
                    failure = Some(format!("fold {t}: {e}"));
                    break;
                }
            }
        }
        let summary = ReportRow::summarize(row, &reports, failure);
        folds.extend(reports.into_iter().map(|r| (row.name.clone(), r)));
        rows.push((row, summary));
    }
    rows.sort_by_key(|(spec, _)| spec.table_key());
    Ok(RunOutput {
        rows: rows.into_iter().map(|(_, r)| r).collect(),
        folds,
    })
}
