//! Loss identities and the μ = 0 reduction.

use hitrank::model::{
    delta, loss_multi, loss_rank, loss_rate, FeatureSource, HybridConfig, HybridRater, LossWeights, RaterConfig,
    Siamese,
};
use hitrank::tensor::{Graph, Tensor};
use rand::Rng;

use super::{rng, Songs};

pub const INSTANCES: u64 = 50;

/// Scores and targets for `pairs` from one Siamese pass.
fn siamese_scores(rater: &HybridRater<f64>, songs: &Songs, pairs: &[(usize, usize)]) -> (Vec<f64>, Vec<f64>) {
    let mut g = Graph::new();
    let (l, r, _) = Siamese::new(rater).score_pairs(&mut g, songs, pairs).unwrap();
    (g.value(l).data().to_vec(), g.value(r).data().to_vec())
}

fn pair_loss(rater: &HybridRater<f64>, songs: &Songs, y: &[f64], pairs: &[(usize, usize)], m: f64, w: f64) -> f64 {
    let mut g = Graph::new();
    let l = Siamese::new(rater)
        .pair_loss(&mut g, songs, y, pairs, LossWeights::new(m, w).unwrap())
        .unwrap();
    g.value(l).data()[0]
}

pub fn check_multi_endpoints() -> Result<(), String> {
    for s in 0..INSTANCES {
        let mut r = rng(s);
        let rate: f64 = r.random_range(0.0..10.0);
        let rank: f64 = r.random_range(0.0..10.0);
        if loss_multi(rate, rank, 0.0).unwrap().to_bits() != rate.to_bits() {
            return Err(format!("scalar w=0, instance {s}"));
        }
        if loss_multi(rate, rank, 1.0).unwrap().to_bits() != rank.to_bits() {
            return Err(format!("scalar w=1, instance {s}"));
        }

        let (bins, frames) = (4, 12);
        let rater: HybridRater<f64> =
            HybridRater::new(HybridConfig::with_tags(RaterConfig::compact(bins, frames), 0.4), s).unwrap();
        let songs = Songs::random(8, bins, frames, &mut r);
        let y: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
        let pairs = [(0, 1), (2, 3), (4, 5), (6, 7), (1, 6)];
        let m = r.random_range(0.1..2.0);
        let (fl, fr) = siamese_scores(&rater, &songs, &pairs);
        let (yl, yr): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(i, j)| (y[i], y[j])).unzip();
        let all_f: Vec<f64> = fl.iter().chain(&fr).copied().collect();
        let all_y: Vec<f64> = yl.iter().chain(&yr).copied().collect();

        let rate = loss_rate(&all_f, &all_y).unwrap();
        let rank = loss_rank(&yl, &yr, &fl, &fr, m).unwrap();
        let w0 = pair_loss(&rater, &songs, &y, &pairs, m, 0.0);
        let w1 = pair_loss(&rater, &songs, &y, &pairs, m, 1.0);
        if w0.to_bits() != rate.to_bits() {
            return Err(format!("graph w=0 {w0} vs loss_rate {rate}, instance {s}"));
        }
        if w1.to_bits() != rank.to_bits() {
            return Err(format!("graph w=1 {w1} vs loss_rank {rank}, instance {s}"));
        }
    }
    Ok(())
}

struct PoisonedTags<'a>(&'a Songs);

impl FeatureSource<f64> for PoisonedTags<'_> {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn mel(&self, i: usize) -> &Tensor<f64> {
        self.0.mel(i)
    }

    fn tags(&self, _: usize) -> Option<&[f64]> {
        panic!("tags read with mu = 0")
    }
}

pub fn check_mu_zero() -> Result<(), String> {
    for s in 0..INSTANCES {
        let mut r = rng(500 + s);
        let (bins, frames) = (5, 12);
        let rc = RaterConfig::compact(bins, frames);
        let audio: HybridRater<f64> = HybridRater::new(HybridConfig::audio_only(rc.clone()), s).unwrap();
        let hybrid: HybridRater<f64> = HybridRater::new(HybridConfig::with_tags(rc, 0.0), s).unwrap();
        let songs = Songs::random(7, bins, frames, &mut r);
        let idx: Vec<usize> = (0..7).collect();
        let a = audio.predict(&songs, &idx, 3).unwrap();
        let h = hybrid.predict(&PoisonedTags(&songs), &idx, 3).unwrap();
        if a.iter().zip(&h).any(|(x, y)| x.to_bits() != y.to_bits()) {
            return Err(format!("instance {s}: {a:?} vs {h:?}"));
        }
    }
    Ok(())
}

/// The hinge vanishes exactly when every pair is separated by at least `m`
/// in the direction of its label.
pub fn check_hinge_zero() -> Result<(), String> {
    for s in 0..INSTANCES * 20 {
        let mut r = rng(9000 + s);
        let p = r.random_range(1..6usize);
        let m: f64 = r.random_range(0.1..1.5);
        let yi: Vec<f64> = (0..p).map(|_| f64::from(r.random_range(0..4u8))).collect();
        let yj: Vec<f64> = (0..p).map(|_| f64::from(r.random_range(0..4u8))).collect();
        let fi: Vec<f64> = (0..p).map(|_| r.random_range(-2.0..2.0)).collect();
        let mut fj: Vec<f64> = (0..p).map(|_| r.random_range(-2.0..2.0)).collect();
        if s % 3 == 0 {
            // place some pairs exactly on the margin
            for k in 0..p {
                fj[k] = fi[k] - delta(yi[k], yj[k]) * m;
            }
        }
        let separated = (0..p).all(|k| delta(yi[k], yj[k]) * (fi[k] - fj[k]) >= m);
        let loss = loss_rank(&yi, &yj, &fi, &fj, m).unwrap();

        let mut g = Graph::new();
        let l = g.input(Tensor::new(vec![p, 1], fi.clone()).unwrap());
        let rr = g.input(Tensor::new(vec![p, 1], fj.clone()).unwrap());
        let signs: Vec<f64> = (0..p).map(|k| delta(yi[k], yj[k])).collect();
        let h = g.pair_hinge(l, rr, &signs, m).unwrap();
        let graph_loss = g.value(h).data()[0];
        if separated != (loss == 0.0) || separated != (graph_loss == 0.0) {
            return Err(format!("instance {s}: separated={separated}, loss={loss}, graph={graph_loss}"));
        }
    }
    Ok(())
}

pub fn check_all() -> Result<(), String> {
    check_multi_endpoints()?;
    check_mu_zero()?;
    check_hinge_zero()
}
