//! Slaney-style mel scale and triangular filterbank.

use super::LOG_EPS;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < MIN_LOG_HZ {
        hz / F_SP
    } else {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < MIN_LOG_MEL {
        mel * F_SP
    } else {
        MIN_LOG_HZ * (log_step() * (mel - MIN_LOG_MEL)).exp()
    }
}

/// `[n_mels, n_fft / 2 + 1]` triangular filters with area normalisation.
pub fn mel_filterbank(n_fft: usize, sample_rate: u32, n_mels: usize, fmin: f64, fmax: f64) -> Tensor<f64> {
    let bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut w = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (right - left);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let rise = (f - left) / (center - left);
            let fall = (right - f) / (right - center);
            w[m * bins + k] = rise.min(fall).max(0.0) * norm;
        }
    }
    Tensor::new(vec![n_mels, bins], w).expect("shape")
}

/// Log-compressed mel energies laid out as `[n_mels, frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    values: Tensor<f64>,
}

impl MelSpectrogram {
    pub fn from_tensor(values: Tensor<f64>) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(shape_err("mel spectrogram", format!("{:?}", values.shape())));
        }
        Ok(Self { values })
    }

    pub fn bins(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn values(&self) -> &Tensor<f64> {
        &self.values
    }

    pub fn into_tensor(self) -> Tensor<f64> {
        self.values
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values.data()[bin * self.frames() + frame]
    }

    /// Bin with the largest value in one frame (first on ties).
    pub fn argmax_bin(&self, frame: usize) -> usize {
        (0..self.bins()).fold(0, |best, b| {
            if self.get(b, frame) > self.get(best, frame) {
                b
            } else {
                best
            }
        })
    }
}

/// Applies `bank` to squared magnitudes and takes `ln(x + 1e-10)`.
pub fn mel_project(mag: &Tensor<f64>, bank: &Tensor<f64>) -> Result<MelSpectrogram> {
    let (ms, bs) = (mag.shape(), bank.shape());
    if ms.len() != 2 || bs.len() != 2 || ms[1] != bs[1] {
        return Err(shape_err(
            "mel_project",
            format!("magnitudes {ms:?} vs filterbank {bs:?}"),
        ));
    }
    let (frames, bins, n_mels) = (ms[0], ms[1], bs[0]);
    let power: Vec<f64> = mag.data().iter().map(|v| v * v).collect();
    let mut out = vec![0.0; n_mels * frames];
    for m in 0..n_mels {
        let row = &bank.data()[m * bins..(m + 1) * bins];
        // support of the triangle, skipped zeros dominate otherwise
        let first = row.iter().position(|&v| v > 0.0).unwrap_or(bins);
        let last = row.iter().rposition(|&v| v > 0.0).map_or(0, |p| p + 1);
        for t in 0..frames {
            let p = &power[t * bins..(t + 1) * bins];
            let e: f64 = (first..last).map(|k| row[k] * p[k]).sum();
            out[m * frames + t] = (e + LOG_EPS).ln();
        }
    }
    MelSpectrogram::from_tensor(Tensor::new(vec![n_mels, frames], out)?)
}
