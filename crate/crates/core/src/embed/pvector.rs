use ndarray::{Array1, Array2, Axis};

use super::{num_chunks, CHUNK_FRAMES};
use crate::pitch::PitchTrack;
use crate::store::Bundle;
use crate::Result;

/// Raw p-vectors (`chunks x 3`): mean log-f0 over voiced frames, mean log-f0
/// first difference over voiced pairs, mean NCCF over all frames.
pub fn compute_pvector(track: &PitchTrack) -> Array2<f64> {
    let t = track.len();
    let n = num_chunks(t);
    let mut out = Array2::zeros((n, 3));
    for c in 0..n {
        let lo = c * CHUNK_FRAMES;
        let hi = ((c + 1) * CHUNK_FRAMES).min(t);
        let (mut lf, mut nv) = (0.0, 0usize);
        let (mut dl, mut nd) = (0.0, 0usize);
        let mut nccf = 0.0;
        for i in lo..hi {
            let fr = &track.frames[i];
            nccf += fr.nccf;
            if fr.voiced {
                lf += fr.f0.ln();
                nv += 1;
                if i > 0 && track.frames[i - 1].voiced {
                    dl += fr.f0.ln() - track.frames[i - 1].f0.ln();
                    nd += 1;
                }
            }
        }
        if nv > 0 {
            out[[c, 0]] = lf / nv as f64;
        }
        if nd > 0 {
            out[[c, 1]] = dl / nd as f64;
        }
        if hi > lo {
            out[[c, 2]] = nccf / (hi - lo) as f64;
        }
    }
    out
}

/// Global standardisation fitted on training p-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PVectorStats {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl PVectorStats {
    pub fn fit(raw: &[Array2<f64>]) -> Self {
        let views: Vec<_> = raw.iter().map(|m| m.view()).collect();
        let all = ndarray::concatenate(Axis(0), &views).expect("p-vectors have 3 columns");
        let mean = all.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(3));
        let std = all.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        Self { mean, std }
    }

    pub fn apply(&self, raw: &Array2<f64>) -> Array2<f64> {
        (raw - &self.mean.view().insert_axis(Axis(0))) / self.std.view().insert_axis(Axis(0))
    }

    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::new("pvector-stats");
        b.insert_vec("mean", self.mean.as_slice().unwrap());
        b.insert_vec("std", self.std.as_slice().unwrap());
        b
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        Ok(Self {
            mean: Array1::from(b.vec("mean")?),
            std: Array1::from(b.vec("std")?),
        })
    }
}
