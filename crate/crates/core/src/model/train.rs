//! Minibatch training for the rating-only and the Siamese objectives.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureSource, HybridRater, LossWeights};
use crate::error::{shape_err, Error, Result};
use crate::sampling::PairBatch;
use crate::scalar::Scalar;
use crate::tensor::{Graph, Sgd, SgdConfig, Var};

/// Zero-mean, unit-variance transform fitted on a training fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("standardizer input"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Ok(Self { mean, std })
    }

    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    pub fn transform(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            sgd: SgdConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Squared error per song.
    Rating,
    /// `(1 − w)·rate + w·rank` over both legs of each pair.
    Multi(LossWeights),
}

/// Where a Siamese run gets its pairs from.
pub enum PairSource<'a> {
    /// One batch for the whole run.
    Fixed(&'a PairBatch),
    /// A fresh batch per epoch, given the epoch index.
    PerEpoch(Box<dyn FnMut(usize) -> Result<PairBatch> + 'a>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean minibatch loss per epoch.
    pub loss_trace: Vec<f64>,
    pub steps: usize,
}

/// Both legs of a pair scored through one rater.
///
/// There is a single parameter set behind [`Siamese::left`] and
/// [`Siamese::right`]; the legs are views, never copies.
pub struct Siamese<'r, T> {
    shared: &'r HybridRater<T>,
}

impl<'r, T: Scalar> Siamese<'r, T> {
    pub fn new(rater: &'r HybridRater<T>) -> Self {
        Self { shared: rater }
    }

    pub fn left(&self) -> &'r HybridRater<T> {
        self.shared
    }

    pub fn right(&self) -> &'r HybridRater<T> {
        self.shared
    }

    /// Scores `[left legs; right legs]` in one pass and returns
    /// `(left scores, right scores, all scores)`.
    pub fn score_pairs<S: FeatureSource<T> + ?Sized>(
        &self,
        g: &mut Graph<T>,
        source: &S,
        pairs: &[(usize, usize)],
    ) -> Result<(Var, Var, Var)> {
        let p = pairs.len();
        let idx: Vec<usize> = pairs.iter().map(|p| p.0).chain(pairs.iter().map(|p| p.1)).collect();
        let (m, t) = self.shared.batch_inputs(g, source, &idx)?;
        let all = self.shared.forward(g, m, t)?;
        let left = g.rows(all, 0, p)?;
        let right = g.rows(all, p, 2 * p)?;
        Ok((left, right, all))
    }

    /// Multi-objective loss for one minibatch of pairs. The rating term is the
    /// squared error over all `2P` pair members.
    pub fn pair_loss<S: FeatureSource<T> + ?Sized>(
        &self,
        g: &mut Graph<T>,
        source: &S,
        targets: &[T],
        pairs: &[(usize, usize)],
        weights: LossWeights,
    ) -> Result<Var> {
        weights.validate()?;
        let (left, right, all) = self.score_pairs(g, source, pairs)?;
        let w = T::lit(weights.w);
        let rate = if weights.w < 1.0 {
            let y: Vec<T> = pairs
                .iter()
                .map(|p| targets[p.0])
                .chain(pairs.iter().map(|p| targets[p.1]))
                .collect();
            Some(g.mse(all, &y)?)
        } else {
            None
        };
        let rank = if weights.w > 0.0 {
            let signs: Vec<T> = pairs
                .iter()
                .map(|p| super::delta(targets[p.0], targets[p.1]))
                .collect();
            Some(g.pair_hinge(left, right, &signs, T::lit(weights.margin))?)
        } else {
            None
        };
        match (rate, rank) {
            (Some(r), None) => Ok(r),
            (None, Some(k)) => Ok(k),
            (Some(r), Some(k)) => {
                let r = g.scale(r, T::one() - w);
                let k = g.scale(k, w);
                g.add(r, k)
            }
            (None, None) => unreachable!("w is in [0, 1]"),
        }
    }
}

/// Squared-error loss over a minibatch of songs.
pub fn rating_loss<T: Scalar, S: FeatureSource<T> + ?Sized>(
    g: &mut Graph<T>,
    rater: &HybridRater<T>,
    source: &S,
    targets: &[T],
    songs: &[usize],
) -> Result<Var> {
    let (m, t) = rater.batch_inputs(g, source, songs)?;
    let scores = rater.forward(g, m, t)?;
    let y: Vec<T> = songs.iter().map(|&i| targets[i]).collect();
    g.mse(scores, &y)
}

/// Trains `rater` in place. `targets` are indexed like `source`.
///
/// Gradients are reset before every step. Any non-finite loss or parameter
/// aborts with [`Error::Divergence`].
pub fn train<T: Scalar, S: FeatureSource<T> + ?Sized>(
    rater: &mut HybridRater<T>,
    source: &S,
    targets: &[T],
    objective: Objective,
    mut pairs: Option<PairSource<'_>>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if source.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if targets.len() != source.len() {
        return Err(shape_err(
            "train",
            format!("{} targets for {} songs", targets.len(), source.len()),
        ));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Sgd::new(config.sgd, rater.params())?;
    let mut trace = Vec::with_capacity(config.epochs);
    let mut steps = 0;

    let fixed_pairs: Option<Vec<(usize, usize)>> = match (&objective, &pairs) {
        (Objective::Multi(_), Some(PairSource::Fixed(b))) => Some(b.pairs().to_vec()),
        (Objective::Multi(_), None) => {
            return Err(Error::Config("the Siamese objective needs a pair source".into()))
        }
        _ => None,
    };

    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        match objective {
            Objective::Rating => {
                let mut order: Vec<usize> = (0..source.len()).collect();
                order.shuffle(&mut rng);
                for chunk in order.chunks(config.batch_size) {
                    let mut g = Graph::new();
                    let loss = rating_loss(&mut g, rater, source, targets, chunk)?;
                    epoch_loss += step(&mut g, loss, rater, &mut opt, steps)?;
                    batches += 1;
                    steps += 1;
                }
            }
            Objective::Multi(weights) => {
                let mut order = match (&fixed_pairs, pairs.as_mut()) {
                    (Some(p), _) => p.clone(),
                    (None, Some(PairSource::PerEpoch(f))) => f(epoch)?.pairs().to_vec(),
                    _ => unreachable!("checked above"),
                };
                if order.is_empty() {
                    return Err(Error::Empty("pair set"));
                }
                order.shuffle(&mut rng);
                for chunk in order.chunks(config.batch_size) {
                    let mut g = Graph::new();
                    let loss = Siamese::new(rater).pair_loss(&mut g, source, targets, chunk, weights)?;
                    epoch_loss += step(&mut g, loss, rater, &mut opt, steps)?;
                    batches += 1;
                    steps += 1;
                }
            }
        }
        trace.push(epoch_loss / batches as f64);
    }
    Ok(TrainReport {
        loss_trace: trace,
        steps,
    })
}

fn step<T: Scalar>(
    g: &mut Graph<T>,
    loss: Var,
    rater: &mut HybridRater<T>,
    opt: &mut Sgd<T>,
    step: usize,
) -> Result<f64> {
    let value = g.value(loss).data()[0].to_f64_lossless();
    if !value.is_finite() {
        return Err(Error::Divergence { step, loss: value });
    }
    let params = rater.params_mut();
    params.zero_grad();
    g.backward(loss, params)?;
    opt.step(params);
    if !params.all_finite() {
        return Err(Error::Divergence {
            step,
            loss: f64::NAN,
        });
    }
    Ok(value)
}
