//! Metric implementations against the O(n²) and direct-formula oracles.

use hitrank::metrics::{kendall_tau, kendall_tau_b, ndcg, spearman, spearman_rho, RankedEval};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{gather, kendall_oracle, ndcg_oracle, rng, spearman_oracle, top_subset_oracle};

pub const N: usize = 150;
pub const INSTANCES: u64 = 100;
pub const TOL: f64 = 1e-9;

/// Continuous scores, or small integers when `ties`.
pub fn scores(n: usize, ties: bool, r: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if ties {
                f64::from(r.random_range(0..6u8))
            } else {
                r.random::<f64>().powi(3) * 100.0
            }
        })
        .collect()
}

fn close(a: Option<f64>, b: Option<f64>, what: &str) -> Result<f64, String> {
    match (a, b) {
        (Some(x), Some(y)) if (x - y).abs() <= TOL => Ok((x - y).abs()),
        (None, None) => Ok(0.0),
        _ => Err(format!("{what}: {a:?} vs oracle {b:?}")),
    }
}

/// Largest deviation from the oracles over all instances.
pub fn check_oracles() -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for s in 0..INSTANCES {
        let mut r = rng(s);
        let ties = s % 2 == 1;
        let truth = scores(N, false, &mut r);
        let pred = scores(N, ties, &mut r);
        let y = scores(N, ties, &mut r);

        worst = worst.max(close(kendall_tau_b(&y, &pred), kendall_oracle(&y, &pred), "tau-b")?);
        worst = worst.max(close(spearman(&y, &pred), spearman_oracle(&y, &pred), "spearman")?);

        let eval = RankedEval::top_decile(&truth, &pred).map_err(|e| e.to_string())?;
        let sub = top_subset_oracle(&truth, 0.1);
        let (st, sp) = (gather(&truth, &sub), gather(&pred, &sub));
        worst = worst.max(close(kendall_tau(&eval), kendall_oracle(&st, &sp), "kendall@10%")?);
        worst = worst.max(close(spearman_rho(&eval), spearman_oracle(&st, &sp), "spearman@10%")?);
        if !ties {
            worst = worst.max(close(Some(ndcg(&eval)), Some(ndcg_oracle(&truth, &pred, 0.1)), "ndcg@10%")?);
        }
    }
    Ok(worst)
}

/// Joint permutation leaves τ and ρ unchanged; negating one side flips the sign.
pub fn check_symmetries() -> Result<(), String> {
    for s in 0..INSTANCES {
        let mut r = rng(10_000 + s);
        let ties = s % 2 == 0;
        let x = scores(N, ties, &mut r);
        let y = scores(N, ties, &mut r);
        let mut perm: Vec<usize> = (0..N).collect();
        perm.shuffle(&mut r);
        let (px, py) = (gather(&x, &perm), gather(&y, &perm));
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        for (name, f) in [
            ("tau", kendall_tau_b::<f64> as fn(&[f64], &[f64]) -> Option<f64>),
            ("rho", spearman::<f64>),
        ] {
            let base = f(&x, &y).ok_or(format!("{name} undefined"))?;
            close(f(&px, &py), Some(base), &format!("{name} permutation"))?;
            close(f(&y, &x), Some(base), &format!("{name} swap"))?;
            close(f(&x, &neg), Some(-base), &format!("{name} negation"))?;
        }
    }
    Ok(())
}
