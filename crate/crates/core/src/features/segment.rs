//! Choosing the 30-second excerpt a song is represented by.

use serde::{Deserialize, Serialize};

use super::{AudioClip, SEGMENT_SECONDS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentStrategy {
    /// Centre-aligned window.
    Mid30,
    /// Delegates to a [`SegmentSelector`].
    Highlight,
}

impl SegmentStrategy {
    pub fn tag(self) -> &'static str {
        match self {
            SegmentStrategy::Mid30 => "mid30",
            SegmentStrategy::Highlight => "highlight",
        }
    }
}

impl std::str::FromStr for SegmentStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mid30" => Ok(Self::Mid30),
            "highlight" => Ok(Self::Highlight),
            other => Err(Error::Config(format!("unknown segment strategy {other:?}"))),
        }
    }
}

/// Picks the start sample of a highlight window.
pub trait SegmentSelector: Send + Sync {
    /// `window <= samples.len()` is guaranteed by the caller.
    fn select_start(&self, samples: &[f64], window: usize) -> usize;
}

/// Built-in highlight selector: the window with the largest RMS energy,
/// earliest on ties. A heuristic stand-in for a learned thumbnailer.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnergySelector;

impl SegmentSelector for EnergySelector {
    fn select_start(&self, samples: &[f64], window: usize) -> usize {
        let mut prefix = Vec::with_capacity(samples.len() + 1);
        prefix.push(0.0f64);
        let mut acc = 0.0;
        for &s in samples {
            acc += s * s;
            prefix.push(acc);
        }
        let mut best = 0;
        let mut best_energy = f64::NEG_INFINITY;
        for start in 0..=samples.len() - window {
            let e = prefix[start + window] - prefix[start];
            if e > best_energy {
                best_energy = e;
                best = start;
            }
        }
        best
    }
}

pub fn select_segment(clip: &AudioClip, strategy: SegmentStrategy) -> Result<AudioClip> {
    select_segment_with(clip, strategy, &EnergySelector)
}

/// Cuts exactly 30 s out of `clip`.
pub fn select_segment_with(
    clip: &AudioClip,
    strategy: SegmentStrategy,
    selector: &dyn SegmentSelector,
) -> Result<AudioClip> {
    let window = SEGMENT_SECONDS * clip.sample_rate() as usize;
    let n = clip.len();
    if n < window {
        return Err(Error::SegmentTooShort {
            needed: window,
            got: n,
        });
    }
    let start = match strategy {
        SegmentStrategy::Mid30 => (n - window) / 2,
        SegmentStrategy::Highlight => selector.select_start(clip.samples(), window).min(n - window),
    };
    AudioClip::new(clip.samples()[start..start + window].to_vec(), clip.sample_rate())
}
