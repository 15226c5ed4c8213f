//! Pair construction for Siamese training and fusion of per-sampler scores.
//!
//! Every sampler draws unordered pairs `{i, j}` (stored as `i < j`) uniformly
//! from its qualifying population, without repeating a pair inside one batch.
//! Songs may appear in many pairs. Orientation carries no information: the
//! ranking loss orients each pair from the hit scores.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::Hash;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplerKind {
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "ab")]
    Ab,
    #[serde(rename = "artist")]
    Artist,
    /// Two models (A/B and artist) whose scores are averaged.
    #[serde(rename = "ab+artist")]
    AbArtist,
}

impl SamplerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::Naive => "naive",
            SamplerKind::Ab => "ab",
            SamplerKind::Artist => "artist",
            SamplerKind::AbArtist => "ab+artist",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Self::Naive),
            "ab" => Ok(Self::Ab),
            "artist" => Ok(Self::Artist),
            "ab+artist" => Ok(Self::AbArtist),
            other => Err(Error::Config(format!("unknown sampler {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleOptions {
    /// Drop pairs whose hit scores are exactly equal.
    pub exclude_ties: bool,
}

/// Sampled pairs with the hit scores of both members.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    sampler: SamplerKind,
    seed: u64,
    pairs: Vec<(usize, usize)>,
    scores: Vec<(f64, f64)>,
}

impl PairBatch {
    /// Builds a batch from explicit pairs, checking the batch invariants.
    pub fn from_pairs(
        sampler: SamplerKind,
        seed: u64,
        pairs: Vec<(usize, usize)>,
        hit_scores: &[f64],
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        let mut norm = Vec::with_capacity(pairs.len());
        for (i, j) in pairs {
            if i == j {
                return Err(Error::Format {
                    what: "pair batch",
                    detail: format!("self pair ({i}, {i})"),
                });
            }
            let p = (i.min(j), i.max(j));
            if p.1 >= hit_scores.len() {
                return Err(shape_err("pair batch", format!("index {} out of range", p.1)));
            }
            if !seen.insert(p) {
                return Err(Error::Format {
                    what: "pair batch",
                    detail: format!("duplicate pair {p:?}"),
                });
            }
            norm.push(p);
        }
        let scores = norm.iter().map(|&(i, j)| (hit_scores[i], hit_scores[j])).collect();
        Ok(Self {
            sampler,
            seed,
            pairs: norm,
            scores,
        })
    }

    pub fn sampler(&self) -> SamplerKind {
        self.sampler
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn scores(&self) -> &[(f64, f64)] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// A set of qualifying unordered pairs that can be drawn from uniformly.
trait Population {
    /// Number of qualifying pairs, ties included.
    fn size(&self) -> u64;
    /// Qualifying pairs whose two scores are equal.
    fn tied(&self, scores: &[f64]) -> u64;
    fn draw(&self, rng: &mut ChaCha8Rng) -> (usize, usize);
    fn enumerate(&self) -> Vec<(usize, usize)>;
}

fn choose2(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// Pairs of equal scores among `members`.
fn tied_within(members: impl Iterator<Item = usize>, scores: &[f64]) -> u64 {
    let mut counts: HashMap<u64, u64> = HashMap::new();
    for i in members {
        *counts.entry(scores[i].to_bits()).or_default() += 1;
    }
    counts.values().map(|&k| choose2(k)).sum()
}

struct AllPairs {
    n: usize,
}

impl Population for AllPairs {
    fn size(&self) -> u64 {
        choose2(self.n as u64)
    }
    fn tied(&self, scores: &[f64]) -> u64 {
        tied_within(0..self.n, scores)
    }
    fn draw(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        let i = rng.random_range(0..self.n);
        let mut j = rng.random_range(0..self.n - 1);
        if j >= i {
            j += 1;
        }
        (i, j)
    }
    fn enumerate(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .collect()
    }
}

struct TouchingA<'a> {
    partition: &'a AbPartition,
    in_a: Vec<bool>,
}

impl Population for TouchingA<'_> {
    fn size(&self) -> u64 {
        let a = self.partition.a.len() as u64;
        let n = self.in_a.len() as u64;
        a * (n - 1) - choose2(a)
    }
    fn tied(&self, scores: &[f64]) -> u64 {
        // equal scores sit on the same side of the threshold, so only A–A ties exist
        tied_within(self.partition.a.iter().copied(), scores)
    }
    fn draw(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        // x uniform in A, y uniform over the rest; A–A pairs are reachable from
        // both ends, so they are kept with probability 1/2
        let n = self.in_a.len();
        loop {
            let x = self.partition.a[rng.random_range(0..self.partition.a.len())];
            let mut y = rng.random_range(0..n - 1);
            if y >= x {
                y += 1;
            }
            if !self.in_a[y] || rng.random_bool(0.5) {
                return (x, y);
            }
        }
    }
    fn enumerate(&self) -> Vec<(usize, usize)> {
        let n = self.in_a.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.in_a[i] || self.in_a[j])
            .collect()
    }
}

struct SameArtist {
    groups: Vec<Vec<usize>>,
    weights: Option<WeightedIndex<u64>>,
}

impl SameArtist {
    fn new<A: Eq + Hash>(artists: &[A]) -> Self {
        let mut index: HashMap<&A, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (song, a) in artists.iter().enumerate() {
            let g = *index.entry(a).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(song);
        }
        groups.retain(|g| g.len() >= 2);
        let weights = WeightedIndex::new(groups.iter().map(|g| choose2(g.len() as u64))).ok();
        Self { groups, weights }
    }
}

impl Population for SameArtist {
    fn size(&self) -> u64 {
        self.groups.iter().map(|g| choose2(g.len() as u64)).sum()
    }
    fn tied(&self, scores: &[f64]) -> u64 {
        self.groups
            .iter()
            .map(|g| tied_within(g.iter().copied(), scores))
            .sum()
    }
    fn draw(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        let w = self.weights.as_ref().expect("non-empty population");
        let g = &self.groups[w.sample(rng)];
        let i = rng.random_range(0..g.len());
        let mut j = rng.random_range(0..g.len() - 1);
        if j >= i {
            j += 1;
        }
        (g[i], g[j])
    }
    fn enumerate(&self) -> Vec<(usize, usize)> {
        self.groups
            .iter()
            .flat_map(|g| {
                g.iter()
                    .enumerate()
                    .flat_map(move |(a, &i)| g[a + 1..].iter().map(move |&j| (i.min(j), i.max(j))))
            })
            .collect()
    }
}

fn sample_from(
    pop: &dyn Population,
    kind: SamplerKind,
    scores: &[f64],
    count: usize,
    seed: u64,
    opts: SampleOptions,
) -> Result<PairBatch> {
    let tied = if opts.exclude_ties { pop.tied(scores) } else { 0 };
    let available = pop.size() - tied;
    if count as u64 > available {
        return Err(Error::TooManyPairs {
            requested: count,
            max: available as usize,
        });
    }
    let keep = |&(i, j): &(usize, usize)| !opts.exclude_ties || scores[i] != scores[j];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = if (count as u64) * 2 > available {
        // dense request: shuffle the full population instead of rejecting duplicates
        let mut all: Vec<(usize, usize)> = pop.enumerate().into_iter().filter(keep).collect();
        let (head, _) = all.partial_shuffle(&mut rng, count);
        head.to_vec()
    } else {
        let mut seen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let (i, j) = pop.draw(&mut rng);
            let p = (i.min(j), i.max(j));
            if keep(&p) && seen.insert(p) {
                out.push(p);
            }
        }
        out
    };
    PairBatch::from_pairs(kind, seed, pairs, scores)
}

/// `count` distinct pairs drawn uniformly from all `n(n−1)/2` pairs.
pub fn naive_sample(hit_scores: &[f64], count: usize, seed: u64, opts: SampleOptions) -> Result<PairBatch> {
    if hit_scores.len() < 2 {
        return Err(Error::TooFewSongs {
            needed: 2,
            got: hit_scores.len(),
        });
    }
    sample_from(&AllPairs { n: hit_scores.len() }, SamplerKind::Naive, hit_scores, count, seed, opts)
}

/// Training songs split at the mean hit score.
#[derive(Debug, Clone, PartialEq)]
pub struct AbPartition {
    pub threshold: f64,
    /// Scores strictly above the mean.
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

pub fn ab_partition(hit_scores: &[f64]) -> Result<AbPartition> {
    if hit_scores.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let threshold = hit_scores.iter().sum::<f64>() / hit_scores.len() as f64;
    let (a, b) = (0..hit_scores.len()).partition(|&i| hit_scores[i] > threshold);
    Ok(AbPartition { threshold, a, b })
}

/// Pairs with at least one member in group A, uniform over all such pairs.
pub fn ab_sample(
    partition: &AbPartition,
    hit_scores: &[f64],
    count: usize,
    seed: u64,
    opts: SampleOptions,
) -> Result<PairBatch> {
    let n = partition.a.len() + partition.b.len();
    if n != hit_scores.len() {
        return Err(shape_err(
            "ab_sample",
            format!("partition covers {n} songs, {} scores given", hit_scores.len()),
        ));
    }
    if partition.a.is_empty() {
        return Err(Error::NoQualifyingPairs("group A is empty"));
    }
    if n < 2 {
        return Err(Error::NoQualifyingPairs("fewer than two songs"));
    }
    let mut in_a = vec![false; n];
    for &i in &partition.a {
        in_a[i] = true;
    }
    let pop = TouchingA { partition, in_a };
    sample_from(&pop, SamplerKind::Ab, hit_scores, count, seed, opts)
}

/// Pairs of songs by the same artist, uniform over all such pairs.
pub fn artist_sample<A: Eq + Hash>(
    artists: &[A],
    hit_scores: &[f64],
    count: usize,
    seed: u64,
    opts: SampleOptions,
) -> Result<PairBatch> {
    if artists.len() != hit_scores.len() {
        return Err(shape_err("artist_sample", "artists and scores differ in length"));
    }
    let pop = SameArtist::new(artists);
    if pop.groups.is_empty() {
        return Err(Error::NoQualifyingPairs("no artist has two songs"));
    }
    sample_from(&pop, SamplerKind::Artist, hit_scores, count, seed, opts)
}

/// Elementwise mean of two aligned score vectors.
pub fn fuse_scores(scores_ab: &[f64], scores_artist: &[f64]) -> Result<Vec<f64>> {
    if scores_ab.len() != scores_artist.len() {
        return Err(shape_err(
            "fuse_scores",
            format!("{} vs {}", scores_ab.len(), scores_artist.len()),
        ));
    }
    Ok(scores_ab
        .iter()
        .zip(scores_artist)
        .map(|(a, b)| (a + b) / 2.0)
        .collect())
}

const PAIRS_HEADER: &str = "# hitrank pairs v1";

/// Text export: a header line, a `# sampler=… seed=… pairs=…` line, then one
/// `i,j` line per pair.
pub fn write_pairs<W: Write>(batch: &PairBatch, mut out: W) -> Result<()> {
    writeln!(out, "{PAIRS_HEADER}")?;
    writeln!(
        out,
        "# sampler={} seed={} pairs={}",
        batch.sampler,
        batch.seed,
        batch.len()
    )?;
    for (i, j) in &batch.pairs {
        writeln!(out, "{i},{j}")?;
    }
    Ok(())
}

pub fn read_pairs<R: BufRead>(input: R, hit_scores: &[f64]) -> Result<PairBatch> {
    let bad = |detail: String| Error::Format {
        what: "pair file",
        detail,
    };
    let mut lines = input.lines();
    if lines.next().transpose()?.as_deref() != Some(PAIRS_HEADER) {
        return Err(bad("missing header".into()));
    }
    let meta = lines.next().transpose()?.ok_or_else(|| bad("missing metadata".into()))?;
    let mut sampler = None;
    let mut seed = None;
    let mut declared = None;
    for field in meta.trim_start_matches('#').split_whitespace() {
        match field.split_once('=') {
            Some(("sampler", v)) => sampler = Some(v.parse::<SamplerKind>()?),
            Some(("seed", v)) => seed = v.parse::<u64>().ok(),
            Some(("pairs", v)) => declared = v.parse::<usize>().ok(),
            _ => return Err(bad(format!("unknown field {field:?}"))),
        }
    }
    let (Some(sampler), Some(seed), Some(declared)) = (sampler, seed, declared) else {
        return Err(bad("incomplete metadata".into()));
    };
    let mut pairs = Vec::with_capacity(declared);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (i, j) = line
            .split_once(',')
            .ok_or_else(|| bad(format!("bad line {line:?}")))?;
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(format!("{line:?}: {e}")));
        pairs.push((parse(i)?, parse(j)?));
    }
    if pairs.len() != declared {
        return Err(bad(format!("header declares {declared} pairs, found {}", pairs.len())));
    }
    PairBatch::from_pairs(sampler, seed, pairs, hit_scores)
}
