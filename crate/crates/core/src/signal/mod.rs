//! Waveform I/O and MFCC feature extraction.

mod mfcc;
mod wav;

pub use mfcc::{
    dct_matrix, extract_mfcc, mel_filterbank, power_spectrum, splice_context, FeatureKind,
    FeatureMatrix, MfccConfig, MfccExtractor,
};
pub use wav::{read_wav, write_wav};

use crate::{Error, Result};

/// Mono PCM audio with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != 8000 && sample_rate != 16000 {
            return Err(Error::Unsupported(format!("sample rate {sample_rate} Hz")));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Invalid("non-finite sample".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
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

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Scales so the absolute peak equals `target`. Silent input is left alone.
    pub fn peak_normalize(&mut self, target: f64) {
        let peak = self.peak();
        if peak > 0.0 {
            let g = target / peak;
            self.samples.iter_mut().for_each(|s| *s *= g);
        }
    }
}
