use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioClip, HOP_SIZE, WINDOW_SIZE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Periodic Hamming window (the DFT-even variant used for spectral analysis).
pub fn hamming_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of complete frames; no end padding.
pub fn frame_count(len: usize) -> Option<usize> {
    if len < WINDOW_SIZE {
        None
    } else {
        Some((len - WINDOW_SIZE) / HOP_SIZE + 1)
    }
}

/// Magnitude (not power) spectrum `[frames, WINDOW_SIZE / 2 + 1]`.
pub fn stft_magnitude(clip: &AudioClip) -> Result<Tensor<f64>> {
    let samples = clip.samples();
    let frames = frame_count(samples.len()).ok_or(Error::ClipTooShort {
        needed: WINDOW_SIZE,
        got: samples.len(),
    })?;
    let bins = WINDOW_SIZE / 2 + 1;
    let window = hamming_window(WINDOW_SIZE);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(WINDOW_SIZE);
    let mut buf = vec![Complex::new(0.0, 0.0); WINDOW_SIZE];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let start = f * HOP_SIZE;
        for ((b, &s), &w) in buf.iter_mut().zip(&samples[start..start + WINDOW_SIZE]).zip(&window) {
            *b = Complex::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    Tensor::new(vec![frames, bins], out)
}
