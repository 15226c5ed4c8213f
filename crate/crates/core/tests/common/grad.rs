//! Gradient checks per layer type and for the full rater, on random instances.

use hitrank::model::{HybridConfig, HybridRater, LossWeights, RaterConfig, Siamese};
use hitrank::tensor::{Graph, ParamSet};
use rand::Rng;

use super::{contract, gradcheck, randn, rng, GradCheck, Songs};

pub const INSTANCES: u64 = 20;

pub const LAYERS: &[&str] = &[
    "dense", "conv2d", "conv2d-strided", "max_pool2d", "relu", "tanh", "rows", "reshape", "add", "mul", "scale",
    "mse", "pair_hinge",
];

/// One random instance of `layer`, inputs and weights all treated as parameters.
pub fn check_layer(layer: &str, seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let mut p = ParamSet::new();
    let b = r.random_range(1..4usize);
    match layer {
        "dense" => {
            let (i, o) = (r.random_range(1..6usize), r.random_range(1..5usize));
            let x = p.insert("x", randn(&[b, i], &mut r));
            let w = p.insert("w", randn(&[i, o], &mut r));
            let bias = p.insert("b", randn(&[o], &mut r));
            let c = randn(&[b, o], &mut r);
            gradcheck(
                &mut p,
                &|g, ps| {
                    let (x, w, bias) = (g.param(ps, x), g.param(ps, w), g.param(ps, bias));
                    let y = g.dense(x, w, bias).unwrap();
                    contract(g, y, &c)
                },
                None,
            )
        }
        "conv2d" | "conv2d-strided" => {
            let stride = if layer == "conv2d" {
                (1, 1)
            } else {
                (r.random_range(1..3usize), r.random_range(2..4usize))
            };
            let (ci, co) = (r.random_range(1..3usize), r.random_range(1..4usize));
            let (kh, kw) = (r.random_range(1..4usize), r.random_range(1..4usize));
            let (h, w) = (kh + r.random_range(0..4usize), kw + r.random_range(0..5usize));
            let oh = (h - kh) / stride.0 + 1;
            let ow = (w - kw) / stride.1 + 1;
            let x = p.insert("x", randn(&[b, ci, h, w], &mut r));
            let k = p.insert("k", randn(&[co, ci, kh, kw], &mut r));
            let bias = p.insert("b", randn(&[co], &mut r));
            let c = randn(&[b, co, oh, ow], &mut r);
            gradcheck(
                &mut p,
                &|g, ps| {
                    let (x, k, bias) = (g.param(ps, x), g.param(ps, k), g.param(ps, bias));
                    let y = g.conv2d(x, k, bias, stride).unwrap();
                    contract(g, y, &c)
                },
                None,
            )
        }
        "max_pool2d" => {
            let c = r.random_range(1..3usize);
            let win = (r.random_range(1..3usize), r.random_range(1..4usize));
            let stride = (r.random_range(1..=win.0), r.random_range(1..=win.1));
            let (h, w) = (win.0 + r.random_range(0..4usize), win.1 + r.random_range(0..5usize));
            let oh = (h - win.0) / stride.0 + 1;
            let ow = (w - win.1) / stride.1 + 1;
            let x = p.insert("x", randn(&[b, c, h, w], &mut r));
            let cw = randn(&[b, c, oh, ow], &mut r);
            gradcheck(
                &mut p,
                &|g, ps| {
                    let x = g.param(ps, x);
                    let y = g.max_pool2d(x, win, stride).unwrap();
                    contract(g, y, &cw)
                },
                None,
            )
        }
        "relu" | "tanh" | "scale" => {
            let x = p.insert("x", randn(&[b, 5], &mut r));
            let c = randn(&[b, 5], &mut r);
            let s: f64 = r.random_range(-2.0..2.0);
            gradcheck(
                &mut p,
                &|g, ps| {
                    let x = g.param(ps, x);
                    let y = match layer {
                        "relu" => g.relu(x),
                        "tanh" => g.tanh(x),
                        _ => g.scale(x, s),
                    };
                    contract(g, y, &c)
                },
                None,
            )
        }
        "rows" => {
            let n = r.random_range(2..6usize);
            let start = r.random_range(0..n - 1);
            let end = r.random_range(start + 1..=n);
            let x = p.insert("x", randn(&[n, 3], &mut r));
            let c = randn(&[end - start, 3], &mut r);
            gradcheck(
                &mut p,
                &|g, ps| {
                    let x = g.param(ps, x);
                    let y = g.rows(x, start, end).unwrap();
                    contract(g, y, &c)
                },
                None,
            )
        }
        "reshape" => {
            let x = p.insert("x", randn(&[b, 2, 3], &mut r));
            let c = randn(&[b, 6], &mut r);
            gradcheck(
                &mut p,
                &|g, ps| {
                    let x = g.param(ps, x);
                    let y = g.reshape(x, vec![b, 6]).unwrap();
                    contract(g, y, &c)
                },
                None,
            )
        }
        "add" | "mul" => {
            let x = p.insert("x", randn(&[b, 4], &mut r));
            let y = p.insert("y", randn(&[b, 4], &mut r));
            let c = randn(&[b, 4], &mut r);
            gradcheck(
                &mut p,
                &|g, ps| {
                    let (x, y) = (g.param(ps, x), g.param(ps, y));
                    let z = if layer == "add" { g.add(x, y).unwrap() } else { g.mul(x, y).unwrap() };
                    contract(g, z, &c)
                },
                None,
            )
        }
        "mse" => {
            let n = r.random_range(1..8usize);
            let x = p.insert("x", randn(&[n, 1], &mut r));
            let t: Vec<f64> = randn(&[n], &mut r).into_data();
            gradcheck(
                &mut p,
                &|g, ps| {
                    let x = g.param(ps, x);
                    g.mse(x, &t).unwrap()
                },
                None,
            )
        }
        "pair_hinge" => {
            let n = r.random_range(1..8usize);
            let left = p.insert("l", randn(&[n, 1], &mut r));
            let right = p.insert("r", randn(&[n, 1], &mut r));
            let signs: Vec<f64> = (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let margin: f64 = r.random_range(0.1..2.0);
            gradcheck(
                &mut p,
                &|g, ps| {
                    let (l, rr) = (g.param(ps, left), g.param(ps, right));
                    g.pair_hinge(l, rr, &signs, margin).unwrap()
                },
                None,
            )
        }
        other => panic!("unknown layer {other}"),
    }
}

/// Siamese multi-objective loss through the compact CNN plus the tag branch,
/// checked on `coords` sampled parameter coordinates.
pub fn check_composite(seed: u64, coords: usize) -> GradCheck {
    let mut r = rng(seed);
    let (bins, frames) = (6, 12);
    let mu = r.random_range(0.2..0.8);
    let mut config = HybridConfig::with_tags(RaterConfig::compact(bins, frames), mu);
    if r.random::<bool>() {
        config.rater.activation = hitrank::model::Activation::Tanh;
    }
    let template: HybridRater<f64> = HybridRater::new(config, seed).unwrap();
    let songs = Songs::random(6, bins, frames, &mut r);
    let targets: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
    let pairs = [(0, 1), (2, 3), (4, 5), (1, 4), (0, 5)];
    let weights = LossWeights::new(r.random_range(0.5..2.0), r.random_range(0.1..0.9)).unwrap();
    let mut params = template.params().clone();
    let f = |g: &mut Graph<f64>, ps: &ParamSet<f64>| {
        let mut rater = template.clone();
        rater.load_params(ps).unwrap();
        Siamese::new(&rater).pair_loss(g, &songs, &targets, &pairs, weights).unwrap()
    };
    gradcheck(&mut params, &f, Some((coords, &mut r)))
}

pub fn all_layers() -> GradCheck {
    let mut total = GradCheck::default();
    for layer in LAYERS {
        for s in 0..INSTANCES {
            total.merge(check_layer(layer, s));
        }
    }
    total
}

pub fn composite() -> GradCheck {
    let mut total = GradCheck::default();
    for s in 0..INSTANCES {
        total.merge(check_composite(1000 + s, 60));
    }
    total
}

