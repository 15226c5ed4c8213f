//! Feature-pipeline checks against direct DFT evaluation.

use hitrank::features::{
    hamming_window, log_mel_segment, stft_magnitude, AudioClip, EnergySelector, SegmentStrategy, HOP_SIZE, N_MELS,
    SAMPLE_RATE, WINDOW_SIZE,
};
use rand::Rng;

use super::{dft_bin, rng, sine};

pub fn thirty_seconds(samples: Vec<f64>) -> AudioClip {
    AudioClip::new(samples, SAMPLE_RATE).unwrap()
}

/// `(bins, frames)` of the log-mel for 30 s of audio.
pub fn shape_of_thirty_seconds() -> (usize, usize) {
    let clip = thirty_seconds(sine(440.0, 30.0, SAMPLE_RATE, 0.5));
    let m = log_mel_segment(&clip, SegmentStrategy::Mid30, &EnergySelector).unwrap();
    (m.bins(), m.frames())
}

/// Per-frame spectral argmax of a sine against a bin-by-bin DFT of the same
/// windowed frame. Returns the argmax bin.
pub fn sine_argmax_matches_dft(freq: f64, frames: &[usize]) -> Result<usize, String> {
    let samples = sine(freq, 1.0, SAMPLE_RATE, 0.8);
    let clip = AudioClip::new(samples.clone(), SAMPLE_RATE).unwrap();
    let mag = stft_magnitude(&clip).unwrap();
    let bins = WINDOW_SIZE / 2 + 1;
    let window = hamming_window(WINDOW_SIZE);
    let expected = (freq * WINDOW_SIZE as f64 / f64::from(SAMPLE_RATE)).round() as usize;
    let mut found = None;
    for &f in frames {
        if f >= mag.shape()[0] {
            return Err(format!("frame {f} beyond {} frames", mag.shape()[0]));
        }
        let frame = &samples[f * HOP_SIZE..f * HOP_SIZE + WINDOW_SIZE];
        let oracle: Vec<f64> = (0..bins).map(|k| dft_bin(frame, &window, k)).collect();
        let row = &mag.data()[f * bins..(f + 1) * bins];
        let am = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        let (got, want) = (am(row), am(&oracle));
        if got != want {
            return Err(format!("frame {f}: argmax {got} vs oracle {want}"));
        }
        if got.abs_diff(expected) > 1 {
            return Err(format!("frame {f}: argmax {got} far from {expected}"));
        }
        for k in want.saturating_sub(3)..=(want + 3).min(bins - 1) {
            if (row[k] - oracle[k]).abs() > 1e-8 * oracle[want] {
                return Err(format!("frame {f} bin {k}: {} vs {}", row[k], oracle[k]));
            }
        }
        found = Some(got);
    }
    found.ok_or_else(|| "no frames".into())
}

/// Largest deviation of `logmel(g·x) − logmel(x)` from `2 ln g`.
pub fn gain_shift_error(gains: &[f64]) -> f64 {
    let mut r = rng(21);
    let noise: Vec<f64> = (0..30 * SAMPLE_RATE as usize).map(|_| r.random_range(-0.5..0.5)).collect();
    let base = log_mel_segment(&thirty_seconds(noise.clone()), SegmentStrategy::Mid30, &EnergySelector).unwrap();
    let mut worst: f64 = 0.0;
    for &g in gains {
        let scaled: Vec<f64> = noise.iter().map(|v| v * g).collect();
        let m = log_mel_segment(&thirty_seconds(scaled), SegmentStrategy::Mid30, &EnergySelector).unwrap();
        for (a, b) in m.values().data().iter().zip(base.values().data()) {
            worst = worst.max((a - b - 2.0 * g.ln()).abs());
        }
    }
    assert_eq!(base.bins(), N_MELS);
    worst
}
