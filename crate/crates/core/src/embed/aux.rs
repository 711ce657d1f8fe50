use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::CHUNK_FRAMES;
use crate::{Error, Result};

/// Which auxiliary vectors a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AuxMode {
    #[serde(rename = "o")]
    None,
    #[serde(rename = "i")]
    Speaker,
    #[serde(rename = "p")]
    Pitch,
    #[serde(rename = "i+p")]
    Both,
}

impl AuxMode {
    pub const ALL: [AuxMode; 4] = [AuxMode::None, AuxMode::Speaker, AuxMode::Pitch, AuxMode::Both];

    pub fn as_str(self) -> &'static str {
        match self {
            AuxMode::None => "o",
            AuxMode::Speaker => "i",
            AuxMode::Pitch => "p",
            AuxMode::Both => "i+p",
        }
    }

    pub fn uses_speaker(self) -> bool {
        matches!(self, AuxMode::Speaker | AuxMode::Both)
    }

    pub fn uses_pitch(self) -> bool {
        matches!(self, AuxMode::Pitch | AuxMode::Both)
    }

    pub fn dim(self, embed_dim: usize) -> usize {
        (if self.uses_speaker() { embed_dim } else { 0 }) + if self.uses_pitch() { 3 } else { 0 }
    }
}

impl fmt::Display for AuxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AuxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AuxMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown aux mode '{s}' (expected o, i, p or i+p)")))
    }
}

pub fn num_chunks(frames: usize) -> usize {
    frames.div_ceil(CHUNK_FRAMES).max(1)
}

/// Concatenates per-chunk speaker and pitch vectors, speaker first.
pub fn concat_aux(speaker: Option<&Array2<f64>>, pitch: Option<&Array2<f64>>) -> Result<Array2<f64>> {
    match (speaker, pitch) {
        (None, None) => Err(Error::Invalid("concat_aux needs at least one auxiliary vector".into())),
        (Some(s), None) => Ok(s.clone()),
        (None, Some(p)) => Ok(p.clone()),
        (Some(s), Some(p)) => {
            if s.nrows() != p.nrows() {
                return Err(Error::Shape(format!(
                    "speaker vectors have {} chunks, pitch vectors {}",
                    s.nrows(),
                    p.nrows()
                )));
            }
            Ok(concatenate(Axis(1), &[s.view(), p.view()]).unwrap())
        }
    }
}

/// Repeats chunk rows so frame `t` carries chunk `t / 10` (clamped).
pub fn expand_to_frames(chunks: &Array2<f64>, frames: usize) -> Array2<f64> {
    let last = chunks.nrows().saturating_sub(1);
    Array2::from_shape_fn((frames, chunks.ncols()), |(t, j)| chunks[[(t / CHUNK_FRAMES).min(last), j]])
}
