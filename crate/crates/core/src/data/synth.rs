//! Synthetic long-tail corpus with planted ground truth.
//!
//! Each song gets a latent vector (artist offset plus individual variation).
//! Its hit score is `exp(tilt · softplus(sharpness · a·u − offset)) − 1` for a
//! fixed unit vector `a`, rescaled into market shares. Features render the
//! latents as smooth spectral bumps with additive noise; tags are a squashed
//! random projection of the latents with their own noise.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Corpus, SongRecord, HIT_DAY};
use crate::error::{Error, Result};
use crate::model::TAG_DIM;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub bins: usize,
    pub frames: usize,
    /// Share of latent variance explained by the artist offset.
    pub artist_weight: f64,
    /// Scale of the latent signal in features and tags; 0 leaves pure noise.
    pub signal: f64,
    pub feature_noise: f64,
    pub tag_noise: f64,
    /// Latents enter the features through `softplus` instead of linearly.
    pub rectify: bool,
    pub sharpness: f64,
    pub offset: f64,
    pub tilt: f64,
    /// Sum of all day-60 shares.
    pub total_share: f64,
    /// Series length, at least `HIT_DAY + 1`.
    pub days: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            bins: 16,
            frames: 16,
            artist_weight: 0.3,
            signal: 1.0,
            feature_noise: 2.0,
            tag_noise: 2.0,
            rectify: true,
            sharpness: 2.3,
            offset: 2.0,
            tilt: 1.0,
            total_share: 0.25,
            days: HIT_DAY + 1,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("synthetic corpus: {what}")))
            }
        };
        check(self.bins >= 1 && self.frames >= 1, "empty feature matrix")?;
        check((0.0..=1.0).contains(&self.artist_weight), "artist_weight outside [0, 1]")?;
        check(self.signal >= 0.0 && self.signal.is_finite(), "signal must be non-negative")?;
        check(self.feature_noise >= 0.0 && self.tag_noise >= 0.0, "negative noise")?;
        check(self.sharpness > 0.0 && self.tilt > 0.0, "sharpness and tilt must be positive")?;
        check(self.total_share > 0.0 && self.total_share <= 1.0 / 3.0, "total_share outside (0, 1/3]")?;
        check(self.days > HIT_DAY, "series shorter than the hit day")
    }
}

/// What the generator planted.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTruth {
    /// Unit vector of the linear score map.
    pub direction: Vec<f64>,
    pub latents: Vec<Vec<f64>>,
    /// `direction · latent`, monotone in the hit score.
    pub linear_scores: Vec<f64>,
}

impl PlantedTruth {
    /// Scores from the true latent map.
    pub fn oracle_scores(&self) -> &[f64] {
        &self.linear_scores
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub records: Vec<SongRecord>,
    /// `[bins, frames]` feature matrix per record.
    pub mels: Vec<Tensor<f64>>,
    pub truth: PlantedTruth,
}

impl SynthCorpus {
    pub fn corpus<T: Scalar>(&self) -> Result<Corpus<T>> {
        Corpus::new(&self.records, self.mels.iter().map(Tensor::cast).collect())
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Smooth spectral template per latent dimension: a frequency bump with a
/// slow temporal modulation.
fn templates(bins: usize, frames: usize, latent_dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let width = (bins as f64 / (2.0 * latent_dim as f64)).max(0.75);
    (0..latent_dim)
        .map(|k| {
            let centre = (k as f64 + 0.5) * bins as f64 / latent_dim as f64 - 0.5;
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let rate = (k % 3 + 1) as f64 * std::f64::consts::TAU / frames as f64;
            let mut t = Vec::with_capacity(bins * frames);
            for b in 0..bins {
                let f = (-0.5 * ((b as f64 - centre) / width).powi(2)).exp();
                for s in 0..frames {
                    t.push(f * (1.0 + 0.5 * (rate * s as f64 + phase).sin()));
                }
            }
            t
        })
        .collect()
}

/// Generates `n` songs by `n_artists` artists with `latent_dim`-dimensional latents.
pub fn synth_longtail(
    n: usize,
    n_artists: usize,
    latent_dim: usize,
    seed: u64,
    params: &SynthParams,
) -> Result<SynthCorpus> {
    if n < 100 {
        return Err(Error::TooFewSongs { needed: 100, got: n });
    }
    if n_artists == 0 || latent_dim == 0 {
        return Err(Error::Config("need at least one artist and one latent dimension".into()));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut direction: Vec<f64> = (0..latent_dim).map(|_| normal(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);
    let templates = templates(params.bins, params.frames, latent_dim, &mut rng);
    let projection: Vec<Vec<f64>> = (0..TAG_DIM)
        .map(|_| (0..latent_dim).map(|_| normal(&mut rng) / (latent_dim as f64).sqrt()).collect())
        .collect();
    let artist_offsets: Vec<Vec<f64>> = (0..n_artists)
        .map(|_| (0..latent_dim).map(|_| normal(&mut rng)).collect())
        .collect();

    let (wa, wi) = (params.artist_weight.sqrt(), (1.0 - params.artist_weight).sqrt());
    let mut artists = Vec::with_capacity(n);
    let mut latents = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.random_range(0..n_artists);
        let u: Vec<f64> = artist_offsets[a]
            .iter()
            .map(|o| wa * o + wi * normal(&mut rng))
            .collect();
        artists.push(a);
        latents.push(u);
    }
    let linear_scores: Vec<f64> = latents
        .iter()
        .map(|u| u.iter().zip(&direction).map(|(x, a)| x * a).sum())
        .collect();
    let raw: Vec<f64> = linear_scores
        .iter()
        .map(|z| (params.tilt * softplus(params.sharpness * z - params.offset)).exp_m1())
        .collect();
    let total: f64 = raw.iter().sum();

    let epoch = NaiveDate::from_ymd_opt(2016, 1, 1).expect("valid date");
    let mut records = Vec::with_capacity(n);
    let mut mels = Vec::with_capacity(n);
    for i in 0..n {
        let share = params.total_share * raw[i] / total;
        // early spike decaying towards the day-60 level, at most 3x that level
        let spike = 2.0 * rng.random::<f64>();
        let tau = 2.0 + 10.0 * rng.random::<f64>();
        let shape = |d: usize| 1.0 + spike * (-(d as f64) / tau).exp();
        let level = share / shape(HIT_DAY);
        let mut playcounts: Vec<f64> = (0..params.days).map(|d| level * shape(d)).collect();
        playcounts[HIT_DAY] = share;

        let u = &latents[i];
        let mut mel = vec![0.0; params.bins * params.frames];
        for (k, t) in templates.iter().enumerate() {
            let amp = params.signal * if params.rectify { softplus(u[k]) } else { u[k] };
            for (m, v) in mel.iter_mut().zip(t) {
                *m += amp * v;
            }
        }
        for m in &mut mel {
            *m += params.feature_noise * normal(&mut rng);
        }
        let tags = projection
            .iter()
            .map(|p| {
                let s: f64 = p.iter().zip(u).map(|(w, x)| w * x).sum();
                sigmoid(params.signal * s + params.tag_noise * normal(&mut rng))
            })
            .collect();

        records.push(SongRecord {
            id: format!("song-{i:06}"),
            artist_id: format!("artist-{:05}", artists[i]),
            release_date: epoch + chrono::Days::new(rng.random_range(0..730)),
            playcounts,
            tags: Some(tags),
            feature_path: None,
        });
        mels.push(Tensor::new(vec![params.bins, params.frames], mel)?);
    }
    Ok(SynthCorpus {
        records,
        mels,
        truth: PlantedTruth {
            direction,
            latents,
            linear_scores,
        },
    })
}
