//! Independent oracles and helpers shared by the integration tests.
#![allow(dead_code)]

use hitrank::tensor::{Graph, ParamId, ParamSet, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn uniform_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

// ---------------------------------------------------------------- gradcheck

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Default, Clone)]
pub struct GradCheck {
    pub checked: usize,
    /// Coordinates whose ±step interval straddles a kink.
    pub kinks: usize,
    pub max_rel_err: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheck {
    pub fn merge(&mut self, other: GradCheck) {
        self.checked += other.checked;
        self.kinks += other.kinks;
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err < GRAD_TOL
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

fn loss_value(params: &ParamSet<f64>, f: &dyn Fn(&mut Graph<f64>, &ParamSet<f64>) -> Var) -> f64 {
    let mut g = Graph::new();
    let l = f(&mut g, params);
    g.value(l).data()[0]
}

/// Compares backprop against central differences on every coordinate of
/// `params`, or on `sample` random coordinates when given.
pub fn gradcheck(
    params: &mut ParamSet<f64>,
    f: &dyn Fn(&mut Graph<f64>, &ParamSet<f64>) -> Var,
    sample: Option<(usize, &mut ChaCha8Rng)>,
) -> GradCheck {
    params.zero_grad();
    let mut g = Graph::new();
    let l = f(&mut g, params);
    g.backward(l, params).unwrap();
    let ids: Vec<ParamId> = params.ids().collect();
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| params.grad(id).data().to_vec()).collect();

    let coords: Vec<(usize, usize)> = match sample {
        None => ids
            .iter()
            .enumerate()
            .flat_map(|(p, &id)| (0..params.value(id).len()).map(move |k| (p, k)))
            .collect(),
        Some((count, rng)) => {
            let sizes: Vec<usize> = ids.iter().map(|&id| params.value(id).len()).collect();
            let total: usize = sizes.iter().sum();
            (0..count)
                .map(|_| {
                    let mut r = rng.random_range(0..total);
                    let mut p = 0;
                    while r >= sizes[p] {
                        r -= sizes[p];
                        p += 1;
                    }
                    (p, r)
                })
                .collect()
        }
    };

    let f0 = loss_value(params, f);
    let mut out = GradCheck::default();
    for (p, k) in coords {
        let id = ids[p];
        let orig = params.value(id).data()[k];
        params.value_mut(id).data_mut()[k] = orig + FD_STEP;
        let fp = loss_value(params, f);
        params.value_mut(id).data_mut()[k] = orig - FD_STEP;
        let fm = loss_value(params, f);
        params.value_mut(id).data_mut()[k] = orig;

        let right = (fp - f0) / FD_STEP;
        let left = (f0 - fm) / FD_STEP;
        if (right - left).abs() > 1e-3 * right.abs().max(left.abs()).max(1.0) {
            out.kinks += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * FD_STEP);
        let a = analytic[p][k];
        let e = rel_err(a, numeric);
        out.checked += 1;
        if e > out.max_rel_err {
            out.max_rel_err = e;
            out.worst = Some((params.name(id).to_string(), k, a, numeric));
        }
    }
    out
}

/// Contracts a tensor-valued output with fixed random weights so every
/// output coordinate feeds the scalar loss.
pub fn contract(g: &mut Graph<f64>, out: Var, weights: &Tensor<f64>) -> Var {
    let w = g.input(weights.clone());
    let p = g.mul(out, w).unwrap();
    g.sum(p)
}

// ---------------------------------------------------------------- op oracles

/// Valid cross-correlation by direct summation.
pub fn naive_conv2d(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, stride: (usize, usize)) -> Tensor<f64> {
    let (bs, ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let oh = (h - kh) / stride.0 + 1;
    let ow = (w - kw) / stride.1 + 1;
    let xi = |n: usize, c: usize, i: usize, j: usize| x.data()[((n * ci + c) * h + i) * w + j];
    let ki = |o: usize, c: usize, i: usize, j: usize| k.data()[((o * ci + c) * kh + i) * kw + j];
    let mut out = Vec::with_capacity(bs * co * oh * ow);
    for n in 0..bs {
        for o in 0..co {
            for i in 0..oh {
                for j in 0..ow {
                    let mut s = b.data()[o];
                    for c in 0..ci {
                        for a in 0..kh {
                            for d in 0..kw {
                                s += xi(n, c, i * stride.0 + a, j * stride.1 + d) * ki(o, c, a, d);
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
    }
    Tensor::new(vec![bs, co, oh, ow], out).unwrap()
}

pub fn naive_dense(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (bs, din, dout) = (x.shape()[0], x.shape()[1], w.shape()[1]);
    let mut out = Vec::with_capacity(bs * dout);
    for n in 0..bs {
        for o in 0..dout {
            let s: f64 = (0..din).map(|i| x.data()[n * din + i] * w.data()[i * dout + o]).sum();
            out.push(s + b.data()[o]);
        }
    }
    Tensor::new(vec![bs, dout], out).unwrap()
}

pub fn naive_max_pool(x: &Tensor<f64>, win: (usize, usize), stride: (usize, usize)) -> Tensor<f64> {
    let (bs, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let oh = (h - win.0) / stride.0 + 1;
    let ow = (w - win.1) / stride.1 + 1;
    let mut out = Vec::new();
    for n in 0..bs {
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut m = f64::NEG_INFINITY;
                    for a in 0..win.0 {
                        for d in 0..win.1 {
                            m = m.max(x.data()[((n * c + ch) * h + i * stride.0 + a) * w + j * stride.1 + d]);
                        }
                    }
                    out.push(m);
                }
            }
        }
    }
    Tensor::new(vec![bs, c, oh, ow], out).unwrap()
}

// ---------------------------------------------------------------- metric oracles

/// τ-b by counting all pairs.
pub fn kendall_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).signum() * f64::from(x[i] != x[j]);
            let dy = (y[i] - y[j]).signum() * f64::from(y[i] != y[j]);
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            if dx * dy > 0.0 {
                conc += 1;
            } else if dx * dy < 0.0 {
                disc += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - tx) * (n0 - ty)) as f64).sqrt();
    (denom > 0.0).then(|| (conc - disc) as f64 / denom)
}

/// Average ranks from 1 by counting smaller and equal values.
pub fn mid_rank_oracle(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count() as f64;
            let eq = v.iter().filter(|&&b| b == a).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let (rx, ry) = (mid_rank_oracle(x), mid_rank_oracle(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

/// Indices of the `ceil(fraction · n)` largest true scores.
pub fn top_subset_oracle(truth: &[f64], fraction: f64) -> Vec<usize> {
    let k = ((fraction * truth.len() as f64) - 1e-9).ceil() as usize;
    let mut idx: Vec<usize> = (0..truth.len()).collect();
    idx.sort_by(|&a, &b| truth[b].total_cmp(&truth[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// nDCG inside the true top subset, linear gain, log2 discount.
pub fn ndcg_oracle(truth: &[f64], predicted: &[f64], fraction: f64) -> f64 {
    let s = top_subset_oracle(truth, fraction);
    let dcg = |order: &[usize]| -> f64 {
        order
            .iter()
            .enumerate()
            .map(|(r, &i)| truth[i] / ((r + 2) as f64).log2())
            .sum()
    };
    let mut by_pred = s.clone();
    by_pred.sort_by(|&a, &b| predicted[b].total_cmp(&predicted[a]));
    dcg(&by_pred) / dcg(&s)
}

pub fn gather(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

// ---------------------------------------------------------------- statistics

/// Pearson chi-square statistic of observed counts against expected counts.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .filter(|(_, e)| **e > 0.0)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum()
}

pub fn chi_square_critical(df: usize, alpha: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - alpha)
}

// ---------------------------------------------------------------- audio

pub fn sine(freq: f64, seconds: f64, sample_rate: u32, amp: f64) -> Vec<f64> {
    let n = (seconds * sample_rate as f64).round() as usize;
    (0..n)
        .map(|i| amp * (std::f64::consts::TAU * freq * i as f64 / sample_rate as f64).sin())
        .collect()
}

/// `|Σ_n x[n] w[n] e^{−2πikn/N}|` for one bin.
pub fn dft_bin(frame: &[f64], window: &[f64], k: usize) -> f64 {
    let n = frame.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (t, (x, w)) in frame.iter().zip(window).enumerate() {
        let ph = std::f64::consts::TAU * k as f64 * t as f64 / n;
        re += x * w * ph.cos();
        im -= x * w * ph.sin();
    }
    (re * re + im * im).sqrt()
}

pub mod grad;

/// In-memory feature source for model tests.
pub struct Songs {
    pub mels: Vec<Tensor<f64>>,
    pub tags: Vec<Vec<f64>>,
}

impl Songs {
    pub fn random(n: usize, bins: usize, frames: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            mels: (0..n).map(|_| randn(&[bins, frames], rng)).collect(),
            tags: (0..n).map(|_| uniform_vec(hitrank::model::TAG_DIM, rng)).collect(),
        }
    }
}

impl hitrank::model::FeatureSource<f64> for Songs {
    fn len(&self) -> usize {
        self.mels.len()
    }

    fn mel(&self, i: usize) -> &Tensor<f64> {
        &self.mels[i]
    }

    fn tags(&self, i: usize) -> Option<&[f64]> {
        Some(&self.tags[i])
    }
}

pub mod rank;
pub mod sampler;
pub mod audio;
pub mod model;
pub mod protocol;
