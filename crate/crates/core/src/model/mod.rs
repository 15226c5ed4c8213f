//! The convolutional rater, the tag branch, their weighted fusion, and the
//! objectives they are trained with.

mod checkpoint;
mod loss;
mod train;

pub use checkpoint::{read_model, write_model, ModelHeader, MODEL_MAGIC};
pub use loss::{delta, loss_multi, loss_rank, loss_rate, LossWeights};
pub use train::{
    rating_loss, train, Objective, PairSource, Siamese, Standardizer, TrainConfig, TrainReport,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::features::MelSpectrogram;
use crate::scalar::Scalar;
use crate::tensor::{conv_out_extent, glorot_uniform, Graph, ParamId, ParamSet, Tensor, Var};

use loss::check_unit;

pub const TAG_DIM: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub filters: usize,
    /// `[height (mel bins), width (frames)]`
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    /// Non-overlapping max-pool window.
    pub pool: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

/// Two convolution + pool blocks followed by three dense layers.
///
/// The dense layers play the role of fully-convolutional layers: on a
/// flattened feature map a dense layer is the same map as a 1×1 convolution
/// spanning the whole map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterConfig {
    pub input_bins: usize,
    pub input_frames: usize,
    pub conv: [ConvLayer; 2],
    /// Widths of the three dense layers; the last must be 1.
    pub dense: [usize; 3],
    #[serde(default)]
    pub activation: Activation,
}

impl Default for RaterConfig {
    /// Sized for 128 × 321 log-mel input (30 s at 22 050 Hz).
    fn default() -> Self {
        Self {
            input_bins: 128,
            input_frames: 321,
            conv: [
                ConvLayer {
                    filters: 32,
                    kernel: [128, 4],
                    stride: [1, 1],
                    pool: [1, 4],
                },
                ConvLayer {
                    filters: 32,
                    kernel: [1, 4],
                    stride: [1, 1],
                    pool: [1, 4],
                },
            ],
            dense: [64, 32, 1],
            activation: Activation::Relu,
        }
    }
}

impl RaterConfig {
    /// A narrow variant of the default layout for small synthetic inputs.
    pub fn compact(input_bins: usize, input_frames: usize) -> Self {
        Self {
            input_bins,
            input_frames,
            conv: [
                ConvLayer {
                    filters: 8,
                    kernel: [input_bins, 3],
                    stride: [1, 1],
                    pool: [1, 2],
                },
                ConvLayer {
                    filters: 8,
                    kernel: [1, 3],
                    stride: [1, 1],
                    pool: [1, 2],
                },
            ],
            dense: [16, 8, 1],
            activation: Activation::Relu,
        }
    }

    /// `(channels, height, width)` after each conv+pool block.
    pub fn block_shapes(&self) -> Result<[(usize, usize, usize); 2]> {
        let mut shape = (1, self.input_bins, self.input_frames);
        let mut out = [(0, 0, 0); 2];
        for (k, layer) in self.conv.iter().enumerate() {
            let fit = |input: usize, win: usize, stride: usize| {
                conv_out_extent(input, win, stride).ok_or_else(|| {
                    shape_err(
                        "rater config",
                        format!("block {k}: window {win} (stride {stride}) does not fit extent {input}"),
                    )
                })
            };
            if layer.filters == 0 {
                return Err(shape_err("rater config", format!("block {k} has no filters")));
            }
            let h = fit(shape.1, layer.kernel[0], layer.stride[0])?;
            let w = fit(shape.2, layer.kernel[1], layer.stride[1])?;
            let h = fit(h, layer.pool[0], layer.pool[0])?;
            let w = fit(w, layer.pool[1], layer.pool[1])?;
            shape = (layer.filters, h, w);
            out[k] = shape;
        }
        Ok(out)
    }

    pub fn flat_dim(&self) -> Result<usize> {
        let (c, h, w) = self.block_shapes()?[1];
        Ok(c * h * w)
    }

    pub fn validate(&self) -> Result<()> {
        self.block_shapes()?;
        if self.dense[2] != 1 {
            return Err(shape_err("rater config", "last dense width must be 1"));
        }
        if self.dense.contains(&0) {
            return Err(shape_err("rater config", "zero dense width"));
        }
        Ok(())
    }
}

/// Dense network over precomputed tag activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagBranchConfig {
    pub input: usize,
    pub hidden: Vec<usize>,
}

impl Default for TagBranchConfig {
    fn default() -> Self {
        Self {
            input: TAG_DIM,
            hidden: vec![100, 100, 30],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub rater: RaterConfig,
    pub tag_branch: Option<TagBranchConfig>,
    /// Weight of the tag branch in the fused score.
    pub mu: f64,
}

impl HybridConfig {
    pub fn audio_only(rater: RaterConfig) -> Self {
        Self {
            rater,
            tag_branch: None,
            mu: 0.0,
        }
    }

    pub fn with_tags(rater: RaterConfig, mu: f64) -> Self {
        Self {
            rater,
            tag_branch: Some(TagBranchConfig::default()),
            mu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rater.validate()?;
        check_unit("mu", self.mu)?;
        if self.mu > 0.0 && self.tag_branch.is_none() {
            return Err(Error::Config("mu > 0 requires a tag branch".into()));
        }
        if let Some(t) = &self.tag_branch {
            if t.input == 0 || t.hidden.contains(&0) {
                return Err(shape_err("tag branch config", "zero width"));
            }
        }
        Ok(())
    }
}

/// Per-song inputs a rater reads while training or scoring.
pub trait FeatureSource<T> {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[bins, frames]` log-mel matrix of song `i`.
    fn mel(&self, i: usize) -> &Tensor<T>;

    fn tags(&self, i: usize) -> Option<&[T]>;
}

/// Tag activations read lazily, so a rater that ignores tags never touches them.
pub trait TagInput<T> {
    fn read(&self) -> &[T];
}

impl<T> TagInput<T> for [T] {
    fn read(&self) -> &[T] {
        self
    }
}

impl<T> TagInput<T> for Vec<T> {
    fn read(&self) -> &[T] {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AudioIds {
    conv: [(ParamId, ParamId); 2],
    dense: [(ParamId, ParamId); 3],
}

/// Audio rater `f_Θ`, optional tag branch `f_Φ`, fused as
/// `(1 − μ)·f_Θ(x) + μ·f_Φ(tags)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridRater<T> {
    config: HybridConfig,
    params: ParamSet<T>,
    audio: AudioIds,
    tag: Vec<(ParamId, ParamId)>,
}

impl<T: Scalar> HybridRater<T> {
    pub fn new(config: HybridConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let rc = &config.rater;

        let mut in_ch = 1;
        let mut conv = Vec::with_capacity(2);
        for (k, layer) in rc.conv.iter().enumerate() {
            let [kh, kw] = layer.kernel;
            let fan_in = in_ch * kh * kw;
            let fan_out = layer.filters * kh * kw;
            let shape = vec![layer.filters, in_ch, kh, kw];
            let kid = params.insert(format!("audio.conv{k}.kernel"), glorot_uniform(shape, fan_in, fan_out, &mut rng));
            let bid = params.insert(format!("audio.conv{k}.bias"), Tensor::zeros(vec![layer.filters]));
            conv.push((kid, bid));
            in_ch = layer.filters;
        }
        let dense = Self::dense_stack(&mut params, "audio.dense", rc.flat_dim()?, &rc.dense, &mut rng);

        let tag = match &config.tag_branch {
            Some(t) => {
                let mut widths = t.hidden.clone();
                widths.push(1);
                Self::dense_stack(&mut params, "tag.dense", t.input, &widths, &mut rng)
            }
            None => Vec::new(),
        };

        Ok(Self {
            audio: AudioIds {
                conv: [conv[0], conv[1]],
                dense: [dense[0], dense[1], dense[2]],
            },
            tag,
            config,
            params,
        })
    }

    fn dense_stack(
        params: &mut ParamSet<T>,
        prefix: &str,
        input: usize,
        widths: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Vec<(ParamId, ParamId)> {
        let mut fan_in = input;
        widths
            .iter()
            .enumerate()
            .map(|(k, &out)| {
                let w = params.insert(format!("{prefix}{k}.weight"), glorot_uniform(vec![fan_in, out], fan_in, out, rng));
                let b = params.insert(format!("{prefix}{k}.bias"), Tensor::zeros(vec![out]));
                fan_in = out;
                (w, b)
            })
            .collect()
    }

    pub fn config(&self) -> &HybridConfig {
        &self.config
    }

    pub fn mu(&self) -> f64 {
        self.config.mu
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    /// Whether scoring reads tag activations at all.
    pub fn uses_tags(&self) -> bool {
        self.config.mu > 0.0
    }

    /// Replaces the parameters with a loaded set of identical layout.
    pub fn load_params(&mut self, params: &ParamSet<T>) -> Result<()> {
        self.params.load_values(params)
    }

    fn activate(&self, g: &mut Graph<T>, x: Var) -> Var {
        match self.config.rater.activation {
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
        }
    }

    /// `f_Θ` on a `[batch, 1, bins, frames]` input; returns `[batch, 1]`.
    pub fn audio_forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let rc = &self.config.rater;
        let batch = g.value(x).shape()[0];
        let mut h = x;
        for (layer, &(kid, bid)) in rc.conv.iter().zip(&self.audio.conv) {
            let k = g.param(&self.params, kid);
            let b = g.param(&self.params, bid);
            h = g.conv2d(h, k, b, (layer.stride[0], layer.stride[1]))?;
            h = self.activate(g, h);
            h = g.max_pool2d(h, (layer.pool[0], layer.pool[1]), (layer.pool[0], layer.pool[1]))?;
        }
        h = g.reshape(h, vec![batch, rc.flat_dim()?])?;
        for (k, &(wid, bid)) in self.audio.dense.iter().enumerate() {
            let w = g.param(&self.params, wid);
            let b = g.param(&self.params, bid);
            h = g.dense(h, w, b)?;
            if k + 1 < self.audio.dense.len() {
                h = self.activate(g, h);
            }
        }
        Ok(h)
    }

    /// `f_Φ` on a `[batch, tag_dim]` input; returns `[batch, 1]`.
    pub fn tag_forward(&self, g: &mut Graph<T>, tags: Var) -> Result<Var> {
        if self.tag.is_empty() {
            return Err(Error::Config("rater has no tag branch".into()));
        }
        let mut h = tags;
        for (k, &(wid, bid)) in self.tag.iter().enumerate() {
            let w = g.param(&self.params, wid);
            let b = g.param(&self.params, bid);
            h = g.dense(h, w, b)?;
            if k + 1 < self.tag.len() {
                h = self.activate(g, h);
            }
        }
        Ok(h)
    }

    /// Fused score `[batch, 1]`. `tags` is only consulted when μ > 0.
    pub fn forward(&self, g: &mut Graph<T>, mels: Var, tags: Option<Var>) -> Result<Var> {
        let mu = self.config.mu;
        if mu == 0.0 {
            return self.audio_forward(g, mels);
        }
        let tags = tags.ok_or(Error::MissingTags { mu })?;
        let t = self.tag_forward(g, tags)?;
        if mu == 1.0 {
            return Ok(t);
        }
        let a = self.audio_forward(g, mels)?;
        let a = g.scale(a, T::one() - T::lit(mu));
        let t = g.scale(t, T::lit(mu));
        g.add(a, t)
    }

    /// Stacks the inputs of `indices` into graph leaves.
    pub fn batch_inputs<S: FeatureSource<T> + ?Sized>(
        &self,
        g: &mut Graph<T>,
        source: &S,
        indices: &[usize],
    ) -> Result<(Var, Option<Var>)> {
        if indices.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let rc = &self.config.rater;
        let per = rc.input_bins * rc.input_frames;
        let mut mel = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            let m = source.mel(i);
            if m.shape() != [rc.input_bins, rc.input_frames] {
                return Err(shape_err(
                    "rater input",
                    format!(
                        "song {i}: expected {}x{}, got {:?}",
                        rc.input_bins,
                        rc.input_frames,
                        m.shape()
                    ),
                ));
            }
            mel.extend_from_slice(m.data());
        }
        let mels = g.input(Tensor::new(
            vec![indices.len(), 1, rc.input_bins, rc.input_frames],
            mel,
        )?);
        let tags = if self.uses_tags() {
            let dim = self.config.tag_branch.as_ref().map_or(TAG_DIM, |t| t.input);
            let mut data = Vec::with_capacity(indices.len() * dim);
            for &i in indices {
                let t = source.tags(i).ok_or(Error::MissingTags { mu: self.mu() })?;
                if t.len() != dim {
                    return Err(shape_err("tag input", format!("song {i}: {} != {dim}", t.len())));
                }
                data.extend_from_slice(t);
            }
            Some(g.input(Tensor::new(vec![indices.len(), dim], data)?))
        } else {
            None
        };
        Ok((mels, tags))
    }

    /// Scores for `indices`, evaluated in chunks of `batch`.
    pub fn predict<S: FeatureSource<T> + ?Sized>(
        &self,
        source: &S,
        indices: &[usize],
        batch: usize,
    ) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(indices.len());
        for chunk in indices.chunks(batch.max(1)) {
            let mut g = Graph::new();
            let (m, t) = self.batch_inputs(&mut g, source, chunk)?;
            let s = self.forward(&mut g, m, t)?;
            out.extend_from_slice(g.value(s).data());
        }
        Ok(out)
    }

    /// Score of a single song.
    pub fn rate(&self, mel: &MelSpectrogram, tags: Option<&dyn TagInput<T>>) -> Result<T> {
        let rc = &self.config.rater;
        if mel.bins() != rc.input_bins || mel.frames() != rc.input_frames {
            return Err(shape_err(
                "rate",
                format!(
                    "expected {}x{}, got {}x{}",
                    rc.input_bins,
                    rc.input_frames,
                    mel.bins(),
                    mel.frames()
                ),
            ));
        }
        let mut g = Graph::new();
        let x = g.input(mel.values().cast::<T>().reshape(vec![1, 1, rc.input_bins, rc.input_frames])?);
        let t = if self.uses_tags() {
            let tags = tags.ok_or(Error::MissingTags { mu: self.mu() })?.read();
            Some(g.input(Tensor::new(vec![1, tags.len()], tags.to_vec())?))
        } else {
            None
        };
        let s = self.forward(&mut g, x, t)?;
        Ok(g.value(s).data()[0])
    }
}
