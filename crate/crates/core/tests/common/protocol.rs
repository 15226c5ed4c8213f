//! Cross-validation plan and the test-fold isolation audit.

use hitrank::data::{Corpus, SongRecord};
use hitrank::experiment::{
    derive_seed, fold_plan, load_dataset, row_context, select, ExperimentConfig, SubsetView,
};
use hitrank::features::SegmentStrategy;
use hitrank::tensor::Tensor;

/// Small synthetic experiment with a two-cell grid.
pub fn small_config(n: usize, rows: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
seed = 4
[dataset]
kind = "synthetic"
n = {n}
n_artists = {a}
latent_dim = 4
[dataset.params]
bins = 6
frames = 12
[train]
epochs = 1
batch_size = 16
pairs = 300
learning_rate = 0.002
[grid]
margin = [0.5, 1.0]
w = [0.9]
mu = [0.5]
{rows}
"#,
        a = n / 8
    ))
    .unwrap()
}

pub const SIAMESE_TAG_ROW: &str = r#"
[[rows]]
name = "j"
variant = "siamese"
sampler = "ab+artist"
features = "audio+tag"
"#;

/// Every song lands in exactly one test fold and the three roles of each
/// iteration are disjoint and exhaustive.
pub fn check_plan(n: usize, seed: u64) -> Result<(), String> {
    let plan = hitrank::data::tenfold_split(n, seed).map_err(|e| e.to_string())?;
    let mut tested = vec![0usize; n];
    for t in 0..plan.len() {
        let it = plan.iteration(t);
        let mut seen = vec![0u8; n];
        for &i in it.train.iter().chain(&it.validation).chain(&it.test) {
            seen[i] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(format!("iteration {t} does not partition the songs"));
        }
        for &i in &it.test {
            tested[i] += 1;
        }
    }
    if tested.iter().any(|&c| c != 1) {
        return Err("some song is not tested exactly once".into());
    }
    let sizes: Vec<usize> = plan.folds().iter().map(Vec::len).collect();
    if sizes.iter().max().unwrap() - sizes.iter().min().unwrap() > 1 {
        return Err(format!("unbalanced folds {sizes:?}"));
    }
    Ok(())
}

/// Replaces labels and features of `poison` songs with garbage.
fn poisoned(records: &[SongRecord], mels: &[Tensor<f64>], poison: &[usize]) -> Corpus<f64> {
    let mut records = records.to_vec();
    let mut mels = mels.to_vec();
    for &i in poison {
        records[i].playcounts[hitrank::data::HIT_DAY] = 0.987;
        records[i].tags = records[i].tags.as_ref().map(|t| vec![0.5; t.len()]);
        mels[i] = mels[i].map(|_| f64::NAN);
    }
    Corpus::new(&records, mels).unwrap()
}

/// Model selection on one fold: it reads no test song, and poisoning the
/// test fold leaves the selected cell, score and weights unchanged.
pub fn check_isolation(folds: &[usize]) -> Result<(), String> {
    let config = small_config(400, SIAMESE_TAG_ROW);
    let hitrank::experiment::DatasetSpec::Synthetic { n, n_artists, latent_dim, params } = &config.dataset else {
        unreachable!()
    };
    let synth = hitrank::data::synth_longtail(*n, *n_artists, *latent_dim, config.seed, params).unwrap();
    let order = hitrank::data::select_top(&synth.records, *n);
    let records: Vec<SongRecord> = order.iter().map(|&i| synth.records[i].clone()).collect();
    let mels: Vec<Tensor<f64>> = order.iter().map(|&i| synth.mels[i].clone()).collect();
    let clean = Corpus::new(&records, mels.clone()).unwrap();
    let loaded = load_dataset::<f64>(&config).map_err(|e| e.to_string())?;
    if loaded.corpus(SegmentStrategy::Mid30).unwrap().ids() != clean.ids() {
        return Err("loader and generator disagree".into());
    }
    let plan = fold_plan(&config, clean.ids().len()).unwrap();
    let row = &config.rows[0];
    for &t in folds {
        let split = plan.iteration(t);
        let bad = poisoned(&records, &mels, &split.test);
        let ctx = row_context(&config, row, &clean).unwrap();
        let seed = derive_seed(&[config.seed, t as u64]);
        let run = |corpus: &Corpus<f64>| {
            let tr = SubsetView::new(corpus, &split.train);
            let va = SubsetView::new(corpus, &split.validation);
            let sel = select(&ctx, seed, &tr, &va).unwrap();
            let mut reads = tr.reads();
            reads.extend(va.reads());
            (sel, reads)
        };
        let (a, reads) = run(&clean);
        let (b, _) = run(&bad);
        if let Some(i) = reads.iter().find(|i| split.test.contains(i)) {
            return Err(format!("fold {t}: selection read test song {i}"));
        }
        if a.cell != b.cell
            || a.validation_score.to_bits() != b.validation_score.to_bits()
            || a.raters != b.raters
        {
            return Err(format!("fold {t}: selection changed when the test fold was poisoned"));
        }
    }
    Ok(())
}
