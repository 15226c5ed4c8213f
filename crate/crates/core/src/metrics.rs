//! Ranking quality on the top fraction of a test set.
//!
//! Every metric is computed inside `S`, the `ceil(fraction · n)` songs with
//! the highest *true* hit score. Within `S`:
//!
//! * nDCG uses linear gain (`rel = true score`) and the `1 / log2(k + 1)`
//!   discount, normalised by the ideal ordering of `S`;
//! * Kendall's τ is the tie-corrected τ-b;
//! * Spearman's ρ is the Pearson correlation of mid-ranks.
//!
//! τ and ρ return `None` when either ranking has no variance.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_FRACTION: f64 = 0.10;

/// Aligned true/predicted scores plus the evaluated fraction.
#[derive(Debug, Clone, Copy)]
pub struct RankedEval<'a, T> {
    truth: &'a [T],
    predicted: &'a [T],
    fraction: f64,
}

impl<'a, T: Scalar> RankedEval<'a, T> {
    pub fn new(truth: &'a [T], predicted: &'a [T], fraction: f64) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(shape_err(
                "ranked eval",
                format!("{} true vs {} predicted scores", truth.len(), predicted.len()),
            ));
        }
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::OutOfRange {
                name: "fraction",
                value: fraction,
                range: "(0, 1]",
            });
        }
        if truth.iter().chain(predicted).any(|v| !v.is_finite()) {
            return Err(Error::Format {
                what: "ranked eval",
                detail: "non-finite score".into(),
            });
        }
        let e = Self {
            truth,
            predicted,
            fraction,
        };
        if e.subset_len() < 2 {
            return Err(Error::TooFewSongs {
                needed: 2,
                got: e.subset_len(),
            });
        }
        Ok(e)
    }

    pub fn top_decile(truth: &'a [T], predicted: &'a [T]) -> Result<Self> {
        Self::new(truth, predicted, DEFAULT_FRACTION)
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn truth(&self) -> &'a [T] {
        self.truth
    }

    pub fn predicted(&self) -> &'a [T] {
        self.predicted
    }

    /// `ceil(fraction · n)`, robust to the representation error of the fraction.
    pub fn subset_len(&self) -> usize {
        let k = (self.fraction * self.truth.len() as f64 - 1e-9).ceil() as usize;
        k.clamp(1, self.truth.len())
    }
}

fn desc<T: Scalar>(a: T, b: T) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Indices of the top songs by true score, best first; ties keep input order.
pub fn top_fraction_subset<T: Scalar>(eval: &RankedEval<'_, T>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..eval.len()).collect();
    idx.sort_by(|&a, &b| desc(eval.truth[a], eval.truth[b]));
    idx.truncate(eval.subset_len());
    idx
}

fn gather<T: Scalar>(values: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| values[i]).collect()
}

/// Where the nDCG ranking is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NdcgMode {
    /// Rank the true-top subset by prediction.
    #[default]
    WithinSubset,
    /// Rank the whole test set by prediction and cut at `|S|`.
    TruncatedFull,
}

/// `Σ_k rel_k / log2(k + 1)` over `rel` in the given order, `k` from 1.
pub fn dcg<T: Scalar>(rel_in_rank_order: &[T]) -> T {
    rel_in_rank_order
        .iter()
        .enumerate()
        .map(|(k, &r)| r / T::from_count(k + 2).log2())
        .sum()
}

pub fn ndcg<T: Scalar>(eval: &RankedEval<'_, T>) -> T {
    ndcg_with(eval, NdcgMode::WithinSubset)
}

/// All-zero relevance is defined as a perfect score of 1.
pub fn ndcg_with<T: Scalar>(eval: &RankedEval<'_, T>, mode: NdcgMode) -> T {
    let subset = top_fraction_subset(eval);
    let ideal = dcg(&gather(eval.truth, &subset));
    let mut ranked = match mode {
        NdcgMode::WithinSubset => subset,
        NdcgMode::TruncatedFull => (0..eval.len()).collect(),
    };
    ranked.sort_by(|&a, &b| desc(eval.predicted[a], eval.predicted[b]));
    ranked.truncate(eval.subset_len());
    let actual = dcg(&gather(eval.truth, &ranked));
    if ideal <= T::zero() {
        T::one()
    } else {
        actual / ideal
    }
}

pub fn kendall_tau<T: Scalar>(eval: &RankedEval<'_, T>) -> Option<T> {
    let s = top_fraction_subset(eval);
    kendall_tau_b(&gather(eval.truth, &s), &gather(eval.predicted, &s))
}

pub fn spearman_rho<T: Scalar>(eval: &RankedEval<'_, T>) -> Option<T> {
    let s = top_fraction_subset(eval);
    spearman(&gather(eval.truth, &s), &gather(eval.predicted, &s))
}

fn tie_pairs<T: Scalar>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` ascending and returns the number of inversions removed.
fn merge_count<T: Scalar>(v: &mut [T], buf: &mut Vec<T>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Tie-corrected Kendall τ-b in `O(n log n)` (Knight's merge-sort method).
pub fn kendall_tau_b<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as u64;
    if n < 2 {
        return None;
    }
    let mut pairs: Vec<(T, T)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
    });
    let n0 = n * (n - 1) / 2;
    let xs: Vec<T> = pairs.iter().map(|p| p.0).collect();
    let x_ties = tie_pairs(&xs);
    let mut joint = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    joint += run * (run - 1) / 2;

    let mut ys: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let swaps = merge_count(&mut ys, &mut buf);
    let y_ties = tie_pairs(&ys);

    let denom_x = n0 - x_ties;
    let denom_y = n0 - y_ties;
    if denom_x == 0 || denom_y == 0 {
        return None;
    }
    // concordant − discordant
    let s = n0 as i128 - x_ties as i128 - y_ties as i128 + joint as i128 - 2 * swaps as i128;
    let denom = (T::from_u64(denom_x)? * T::from_u64(denom_y)?).sqrt();
    Some(T::from_i128(s)? / denom)
}

/// 1-based ranks with ties assigned the mean of the positions they span.
pub fn mid_ranks<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end + 1 < idx.len() && v[idx[end + 1]] == v[idx[start]] {
            end += 1;
        }
        let r = T::from_count(start + end + 2) / T::lit(2.0);
        for &i in &idx[start..=end] {
            ranks[i] = r;
        }
        start = end + 1;
    }
    ranks
}

pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let n = T::from_count(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one()))
}

pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    pearson(&mid_ranks(x), &mid_ranks(y))
}

/// nDCG, τ and ρ for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub ndcg: f64,
    pub kendall: Option<f64>,
    pub spearman: Option<f64>,
}

impl RankMetrics {
    pub fn compute(eval: &RankedEval<'_, f64>, mode: NdcgMode) -> Self {
        Self {
            ndcg: ndcg_with(eval, mode),
            kendall: kendall_tau(eval),
            spearman: spearman_rho(eval),
        }
    }
}

/// One serialized evaluation of one model on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub fold: usize,
    pub sampler: String,
    pub features: String,
    pub margin: f64,
    pub w: f64,
    pub mu: f64,
    pub ndcg: f64,
    pub kendall: Option<f64>,
    pub spearman: Option<f64>,
}
