//! Song records, hit scores, top-k selection, fold plans and in-memory corpora.
//!
//! Day indexing: the release date is day 0 and the hit score is the share on
//! day [`HIT_DAY`], so a usable series has at least `HIT_DAY + 1` entries.

mod synth;

use std::collections::HashMap;
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::model::{FeatureSource, TAG_DIM};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use synth::{synth_longtail, PlantedTruth, SynthCorpus, SynthParams};

pub const HIT_DAY: usize = 60;
pub const TOP_K: usize = 15_000;
pub const N_FOLDS: usize = 10;
/// Slack allowed on the per-day share total.
pub const SHARE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongRecord {
    pub id: String,
    pub artist_id: String,
    pub release_date: NaiveDate,
    /// Daily market share from the release day on.
    pub playcounts: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<f64>>,
    /// Audio file or feature cache entry for this song.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_path: Option<String>,
}

impl SongRecord {
    /// Checks the per-record invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidRecord {
            id: self.id.clone(),
            reason,
        };
        if let Some((d, v)) = self
            .playcounts
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(bad(format!("share {v} on day {d} is outside [0, 1]")));
        }
        if let Some(tags) = &self.tags {
            if tags.len() != TAG_DIM {
                return Err(bad(format!("{} tags, expected {TAG_DIM}", tags.len())));
            }
            if tags.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(bad("tag outside [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Share on day 60 after release.
pub fn hit_score(record: &SongRecord) -> Result<f64> {
    record
        .playcounts
        .get(HIT_DAY)
        .copied()
        .ok_or_else(|| Error::SeriesTooShort {
            id: record.id.clone(),
            len: record.playcounts.len(),
            needed: HIT_DAY + 1,
        })
}

/// Checks every record and that no calendar day's shares sum above one.
pub fn validate_corpus(records: &[SongRecord]) -> Result<()> {
    let mut totals: HashMap<NaiveDate, f64> = HashMap::new();
    for r in records {
        r.validate()?;
        for (d, v) in r.playcounts.iter().enumerate() {
            let day = r.release_date + chrono::Days::new(d as u64);
            *totals.entry(day).or_default() += v;
        }
    }
    if let Some((day, total)) = totals.iter().find(|(_, t)| **t > 1.0 + SHARE_TOLERANCE) {
        return Err(Error::InvalidRecord {
            id: format!("corpus@{day}"),
            reason: format!("shares sum to {total}"),
        });
    }
    Ok(())
}

/// Indices of the `k` records with the highest hit score, best first.
///
/// Equal scores keep ascending id order. Records with short series are
/// skipped with a logged reason; fewer than `k` eligible records is a warning,
/// not an error.
pub fn select_top(records: &[SongRecord], k: usize) -> Vec<usize> {
    let mut eligible: Vec<(usize, f64)> = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        match hit_score(r) {
            Ok(s) => eligible.push((i, s)),
            Err(e) => log::info!("excluding song: {e}"),
        }
    }
    if eligible.len() < k {
        log::warn!("only {} eligible songs, wanted {k}", eligible.len());
    }
    eligible.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| records[a.0].id.cmp(&records[b.0].id))
    });
    eligible.truncate(k);
    eligible.into_iter().map(|(i, _)| i).collect()
}

/// One cross-validation iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Ten shuffled folds over `0..n`. Iteration `t` tests on fold `t`, validates
/// on fold `t + 1 (mod 10)` and trains on the rest.
///
/// When `n` is not a multiple of ten the first `n % 10` folds get one extra song.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    seed: u64,
    folds: Vec<Vec<usize>>,
}

impl SplitPlan {
    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn iteration(&self, t: usize) -> FoldSplit {
        let k = self.folds.len();
        let t = t % k;
        let v = (t + 1) % k;
        let train = (0..k)
            .filter(|&f| f != t && f != v)
            .flat_map(|f| self.folds[f].iter().copied())
            .collect();
        FoldSplit {
            train,
            validation: self.folds[v].clone(),
            test: self.folds[t].clone(),
        }
    }
}

pub fn tenfold_split(n: usize, seed: u64) -> Result<SplitPlan> {
    if n < N_FOLDS {
        return Err(Error::TooFewSongs {
            needed: N_FOLDS,
            got: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / N_FOLDS, n % N_FOLDS);
    let mut folds = Vec::with_capacity(N_FOLDS);
    let mut rest = order.as_slice();
    for f in 0..N_FOLDS {
        let (head, tail) = rest.split_at(base + usize::from(f < extra));
        folds.push(head.to_vec());
        rest = tail;
    }
    Ok(SplitPlan { seed, folds })
}

pub fn write_manifest<W: Write>(records: &[SongRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_manifest<R: BufRead>(input: R) -> Result<Vec<SongRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: SongRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            what: "manifest",
            detail: format!("line {}: {e}", n + 1),
        })?;
        r.validate()?;
        out.push(r);
    }
    Ok(out)
}

/// Songs with their features, hit scores and artists, ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus<T> {
    ids: Vec<String>,
    artists: Vec<String>,
    hit_scores: Vec<f64>,
    mels: Vec<Tensor<T>>,
    tags: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Corpus<T> {
    /// Builds a corpus from `records` (already selected) and their mel matrices.
    pub fn new(records: &[SongRecord], mels: Vec<Tensor<T>>) -> Result<Self> {
        if records.len() != mels.len() {
            return Err(shape_err(
                "corpus",
                format!("{} records, {} feature matrices", records.len(), mels.len()),
            ));
        }
        if let Some(first) = mels.first() {
            if let Some(m) = mels.iter().find(|m| m.shape() != first.shape()) {
                return Err(shape_err(
                    "corpus",
                    format!("mixed feature shapes {:?} and {:?}", first.shape(), m.shape()),
                ));
            }
        }
        let hit_scores = records.iter().map(hit_score).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ids: records.iter().map(|r| r.id.clone()).collect(),
            artists: records.iter().map(|r| r.artist_id.clone()).collect(),
            hit_scores,
            mels,
            tags: records
                .iter()
                .map(|r| r.tags.as_ref().map(|t| t.iter().map(|&v| T::from_f64_lossy(v)).collect()))
                .collect(),
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn artists(&self) -> &[String] {
        &self.artists
    }

    pub fn hit_scores(&self) -> &[f64] {
        &self.hit_scores
    }

    pub fn has_tags(&self) -> bool {
        !self.tags.is_empty() && self.tags.iter().all(Option::is_some)
    }

    /// `(bins, frames)` of the feature matrices.
    pub fn feature_shape(&self) -> Option<(usize, usize)> {
        self.mels.first().map(|m| (m.shape()[0], m.shape()[1]))
    }

    /// Copy of the songs at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            artists: indices.iter().map(|&i| self.artists[i].clone()).collect(),
            hit_scores: indices.iter().map(|&i| self.hit_scores[i]).collect(),
            mels: indices.iter().map(|&i| self.mels[i].clone()).collect(),
            tags: indices.iter().map(|&i| self.tags[i].clone()).collect(),
        }
    }
}

impl<T: Scalar> FeatureSource<T> for Corpus<T> {
    fn len(&self) -> usize {
        self.ids.len()
    }

    fn mel(&self, i: usize) -> &Tensor<T> {
        &self.mels[i]
    }

    fn tags(&self, i: usize) -> Option<&[T]> {
        self.tags[i].as_deref()
    }
}
