//! Rating, ranking and combined objectives on plain score vectors.
//!
//! The graph versions used for training live on [`crate::tensor::Graph`]
//! (`mse`, `pair_hinge`); these are the reference definitions and the ones
//! used for reporting.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Margin and rating/ranking mix for the multi-objective loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub margin: f64,
    pub w: f64,
}

impl LossWeights {
    pub fn new(margin: f64, w: f64) -> Result<Self> {
        let lw = Self { margin, w };
        lw.validate()?;
        Ok(lw)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::OutOfRange {
                name: "margin",
                value: self.margin,
                range: "(0, inf)",
            });
        }
        check_unit("w", self.w)
    }
}

pub(crate) fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: v,
            range: "[0, 1]",
        })
    }
}

/// `(1/N) Σ (y_n − f_n)²`
pub fn loss_rate<T: Scalar>(scores: &[T], targets: &[T]) -> Result<T> {
    if scores.len() != targets.len() {
        return Err(shape_err(
            "loss_rate",
            format!("{} scores vs {} targets", scores.len(), targets.len()),
        ));
    }
    if scores.is_empty() {
        return Err(Error::Empty("rating batch"));
    }
    let sum: T = scores
        .iter()
        .zip(targets)
        .map(|(&f, &y)| (y - f) * (y - f))
        .sum();
    Ok(sum / T::from_count(scores.len()))
}

/// `+1` when `y_i ≥ y_j` (ties included), `−1` otherwise.
#[inline]
pub fn delta<T: Scalar>(y_i: T, y_j: T) -> T {
    if y_i >= y_j {
        T::one()
    } else {
        -T::one()
    }
}

/// `(1/P) Σ max(0, m − δ(y_i, y_j)·(f_i − f_j))`
pub fn loss_rank<T: Scalar>(
    targets_i: &[T],
    targets_j: &[T],
    scores_i: &[T],
    scores_j: &[T],
    margin: T,
) -> Result<T> {
    let p = targets_i.len();
    if targets_j.len() != p || scores_i.len() != p || scores_j.len() != p {
        return Err(shape_err("loss_rank", "pair vectors differ in length"));
    }
    if p == 0 {
        return Err(Error::Empty("pair set"));
    }
    if !(margin > T::zero()) {
        return Err(Error::OutOfRange {
            name: "margin",
            value: margin.to_f64_lossless(),
            range: "(0, inf)",
        });
    }
    let sum: T = (0..p)
        .map(|k| {
            let h = margin - delta(targets_i[k], targets_j[k]) * (scores_i[k] - scores_j[k]);
            h.max(T::zero())
        })
        .sum();
    Ok(sum / T::from_count(p))
}

/// `(1 − w)·rate + w·rank`
pub fn loss_multi<T: Scalar>(rate_loss: T, rank_loss: T, w: T) -> Result<T> {
    check_unit("w", w.to_f64_lossless())?;
    Ok((T::one() - w) * rate_loss + w * rank_loss)
}
