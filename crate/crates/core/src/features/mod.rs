//! Audio front end: STFT, mel projection, 30-second segment selection and the
//! on-disk feature cache.

mod cache;
mod mel;
mod segment;
mod stft;
mod wav;

pub use cache::{cache_path, read_feature_cache, write_feature_cache, FeatureCacheEntry, FEATURE_MAGIC};
pub use mel::{hz_to_mel, mel_filterbank, mel_project, mel_to_hz, MelSpectrogram};
pub use segment::{
    select_segment, select_segment_with, EnergySelector, SegmentSelector, SegmentStrategy,
};
pub use stft::{frame_count, hamming_window, stft_magnitude};
pub use wav::read_wav;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 22_050;
pub const WINDOW_SIZE: usize = 4096;
/// Half-overlapping frames.
pub const HOP_SIZE: usize = WINDOW_SIZE / 2;
pub const N_MELS: usize = 128;
pub const SEGMENT_SECONDS: usize = 30;
pub const SEGMENT_SAMPLES: usize = SEGMENT_SECONDS * SAMPLE_RATE as usize;
/// Added before the natural log so silence maps to a finite floor.
pub const LOG_EPS: f64 = 1e-10;

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::OutOfRange {
                name: "sample_rate",
                value: 0.0,
                range: "(0, inf)",
            });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Segment → STFT → 128-bin log-mel, the full per-song pipeline.
pub fn log_mel_segment(
    clip: &AudioClip,
    strategy: SegmentStrategy,
    selector: &dyn SegmentSelector,
) -> Result<MelSpectrogram> {
    if clip.sample_rate() != SAMPLE_RATE {
        return Err(Error::SampleRateMismatch {
            expected: SAMPLE_RATE,
            got: clip.sample_rate(),
        });
    }
    let segment = select_segment_with(clip, strategy, selector)?;
    let mag = stft_magnitude(&segment)?;
    let bank = mel_filterbank(WINDOW_SIZE, SAMPLE_RATE, N_MELS, 0.0, SAMPLE_RATE as f64 / 2.0);
    mel_project(&mag, &bank)
}
