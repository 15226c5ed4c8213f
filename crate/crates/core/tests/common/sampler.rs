//! Sampler invariants and uniformity over large draws.

use std::collections::{HashMap, HashSet};

use hitrank::sampling::{ab_partition, ab_sample, artist_sample, naive_sample, PairBatch, SampleOptions, SamplerKind};
use rand::Rng;

use super::{chi_square, chi_square_critical, rng};

pub const PAIRS: usize = 10_000;
pub const SEEDS: u64 = 10;
pub const ALPHA: f64 = 0.01;

/// Long-tailed distinct hit scores and a artist assignment.
pub struct Population {
    pub hit: Vec<f64>,
    pub artists: Vec<u32>,
}

impl Population {
    pub fn new(n: usize, n_artists: u32, seed: u64) -> Self {
        let mut r = rng(seed);
        let hit = (0..n)
            .map(|i| (3.0 * r.random::<f64>()).exp().powi(2) + i as f64 * 1e-9)
            .collect();
        let artists = (0..n).map(|_| r.random_range(0..n_artists)).collect();
        Self { hit, artists }
    }

    pub fn qualifies(&self, kind: SamplerKind, i: usize, j: usize) -> bool {
        let mean = self.hit.iter().sum::<f64>() / self.hit.len() as f64;
        match kind {
            SamplerKind::Naive => true,
            SamplerKind::Ab => self.hit[i] > mean || self.hit[j] > mean,
            SamplerKind::Artist => self.artists[i] == self.artists[j],
            SamplerKind::AbArtist => unreachable!(),
        }
    }

    pub fn sample(&self, kind: SamplerKind, count: usize, seed: u64) -> hitrank::Result<PairBatch> {
        let opts = SampleOptions::default();
        match kind {
            SamplerKind::Naive => naive_sample(&self.hit, count, seed, opts),
            SamplerKind::Ab => ab_sample(&ab_partition(&self.hit)?, &self.hit, count, seed, opts),
            SamplerKind::Artist => artist_sample(&self.artists, &self.hit, count, seed, opts),
            SamplerKind::AbArtist => unreachable!(),
        }
    }

    /// Number of qualifying pairs containing each song, by enumeration.
    pub fn degrees(&self, kind: SamplerKind) -> (Vec<f64>, f64) {
        let n = self.hit.len();
        let mut deg = vec![0.0; n];
        let mut q = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                if self.qualifies(kind, i, j) {
                    deg[i] += 1.0;
                    deg[j] += 1.0;
                    q += 1.0;
                }
            }
        }
        (deg, q)
    }
}

pub const KINDS: [SamplerKind; 3] = [SamplerKind::Naive, SamplerKind::Ab, SamplerKind::Artist];

pub fn population(kind: SamplerKind) -> Population {
    match kind {
        SamplerKind::Artist => Population::new(2000, 100, 7),
        _ => Population::new(400, 40, 7),
    }
}

/// Invariants and an incidence chi-square for one sampler and seed.
pub fn check_draw(pop: &Population, kind: SamplerKind, seed: u64, degrees: &(Vec<f64>, f64)) -> Result<(), String> {
    let batch = pop.sample(kind, PAIRS, seed).map_err(|e| e.to_string())?;
    if batch.len() != PAIRS {
        return Err(format!("{kind} seed {seed}: {} pairs", batch.len()));
    }
    let mut seen = HashSet::new();
    for &(i, j) in batch.pairs() {
        if i == j || !seen.insert((i.min(j), i.max(j))) {
            return Err(format!("{kind} seed {seed}: duplicate or self pair ({i}, {j})"));
        }
        if !pop.qualifies(kind, i, j) {
            return Err(format!("{kind} seed {seed}: pair ({i}, {j}) does not qualify"));
        }
    }
    let again = pop.sample(kind, PAIRS, seed).map_err(|e| e.to_string())?;
    if again != batch {
        return Err(format!("{kind} seed {seed}: not reproducible"));
    }

    let (deg, q) = degrees;
    let mut observed = vec![0.0; deg.len()];
    for &(i, j) in batch.pairs() {
        observed[i] += 1.0;
        observed[j] += 1.0;
    }
    let expected: Vec<f64> = deg.iter().map(|d| PAIRS as f64 * d / q).collect();
    let cells = deg.iter().filter(|d| **d > 0.0).count();
    let stat = chi_square(&observed, &expected);
    let crit = chi_square_critical(cells - 1, ALPHA);
    if stat > crit {
        return Err(format!("{kind} seed {seed}: incidence chi-square {stat:.1} > {crit:.1}"));
    }
    Ok(())
}

/// Pair-level chi-square on a small population: many seeds, a few pairs each.
pub fn check_pair_uniformity(kind: SamplerKind) -> Result<(), String> {
    let pop = match kind {
        SamplerKind::Artist => Population::new(40, 6, 3),
        _ => Population::new(14, 3, 3),
    };
    let mut counts: HashMap<(usize, usize), f64> = HashMap::new();
    let per = 3;
    let draws = 20_000u64;
    for s in 0..draws {
        let b = pop.sample(kind, per, 0xC0FFEE + s).map_err(|e| e.to_string())?;
        for &p in b.pairs() {
            *counts.entry(p).or_default() += 1.0;
        }
    }
    let n = pop.hit.len();
    let (mut obs, mut exp) = (Vec::new(), Vec::new());
    let q = pop.degrees(kind).1;
    for i in 0..n {
        for j in i + 1..n {
            let c = counts.get(&(i, j)).copied().unwrap_or(0.0);
            if pop.qualifies(kind, i, j) {
                obs.push(c);
                exp.push(per as f64 * draws as f64 / q);
            } else if c > 0.0 {
                return Err(format!("{kind}: non-qualifying pair ({i}, {j}) drawn"));
            }
        }
    }
    let stat = chi_square(&obs, &exp);
    let crit = chi_square_critical(obs.len() - 1, ALPHA);
    if stat > crit {
        return Err(format!("{kind}: pair chi-square {stat:.1} > {crit:.1} over {} pairs", obs.len()));
    }
    Ok(())
}

/// All invariants over `SEEDS` seeds per sampler.
pub fn check_all() -> Result<(), String> {
    for kind in KINDS {
        let pop = population(kind);
        let degrees = pop.degrees(kind);
        for seed in 0..SEEDS {
            check_draw(&pop, kind, seed, &degrees)?;
        }
        let (a, b) = (pop.sample(kind, 50, 1).unwrap(), pop.sample(kind, 50, 2).unwrap());
        if a.pairs() == b.pairs() {
            return Err(format!("{kind}: seeds 1 and 2 agree"));
        }
        check_pair_uniformity(kind)?;
    }
    Ok(())
}
