use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::signal::Waveform;

const NCCF_EPS: f64 = 1e-12;

/// Normalized cross-correlation of `frame` with itself at `lag`, over all
/// overlapping samples. Zero-energy input gives 0.
pub fn nccf(frame: &[f64], lag: usize) -> f64 {
    assert!(lag < frame.len(), "lag {lag} >= frame length {}", frame.len());
    nccf_window(frame, frame.len() - lag, lag)
}

/// NCCF over `x[0..win]` against `x[lag..lag+win]`.
fn nccf_window(x: &[f64], win: usize, lag: usize) -> f64 {
    let a = &x[..win];
    let b = &x[lag..lag + win];
    let mut xy = 0.0;
    let mut xx = 0.0;
    let mut yy = 0.0;
    for (&p, &q) in a.iter().zip(b) {
        xy += p * q;
        xx += p * p;
        yy += q * q;
    }
    if xx == 0.0 || yy == 0.0 {
        return 0.0;
    }
    (xy / (xx * yy + NCCF_EPS).sqrt()).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitchConfig {
    pub min_f0: f64,
    pub max_f0: f64,
    pub frame_length_ms: u32,
    pub frame_shift_ms: u32,
    pub voicing_threshold: f64,
    /// Weight on `|log f0(t) - log f0(t-1)|` in the smoothing pass.
    pub smoothing_weight: f64,
    pub num_candidates: usize,
    /// Per-octave bonus toward shorter lags; suppresses sub-harmonic picks.
    pub octave_cost: f64,
    /// Cutoff of the low-pass applied before the NCCF; 0 disables it.
    pub lowpass_hz: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            min_f0: 50.0,
            max_f0: 500.0,
            frame_length_ms: 25,
            frame_shift_ms: 10,
            voicing_threshold: 0.5,
            smoothing_weight: 5.0,
            num_candidates: 4,
            octave_cost: 0.01,
            lowpass_hz: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchFrame {
    /// Hz; 0 when unvoiced.
    pub f0: f64,
    pub nccf: f64,
    pub voiced: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PitchTrack {
    pub frames: Vec<PitchFrame>,
    pub frame_shift_ms: u32,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn voiced_f0(&self) -> impl Iterator<Item = f64> + '_ {
        self.frames.iter().filter(|f| f.voiced).map(|f| f.f0)
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.frames.iter().filter(|f| f.voiced).count() as f64 / self.frames.len() as f64
    }

    /// Median of voiced f0, if any frame is voiced.
    pub fn median_f0(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.voiced_f0().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }
}

/// Zero-phase windowed-sinc (Blackman) low-pass.
fn lowpass(x: &[f64], cutoff: f64, sample_rate: u32) -> Vec<f64> {
    let fc = cutoff / sample_rate as f64;
    let half = (3.0 / fc).ceil() as isize;
    let taps: Vec<f64> = (-half..=half)
        .map(|k| {
            let sinc = if k == 0 { 2.0 * fc } else { (2.0 * PI * fc * k as f64).sin() / (PI * k as f64) };
            let r = (k + half) as f64 / (2 * half) as f64;
            sinc * (0.42 - 0.5 * (2.0 * PI * r).cos() + 0.08 * (4.0 * PI * r).cos())
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            let lo = (i - half).max(0);
            let hi = (i + half).min(n - 1);
            (lo..=hi).map(|j| x[j as usize] * taps[(j - i + half) as usize]).sum::<f64>() / gain
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    f0: f64,
    nccf: f64,
    strength: f64,
}

pub fn track_pitch(w: &Waveform) -> PitchTrack {
    track_pitch_with(w, &PitchConfig::default())
}

/// Frame-synchronous NCCF tracker on the MFCC frame grid. Peaks of the NCCF
/// over the admissible lag range become candidates; frames whose best NCCF
/// clears the voicing threshold are voiced, and each voiced run is smoothed
/// by a Viterbi pass penalizing log-f0 jumps.
pub fn track_pitch_with(w: &Waveform, cfg: &PitchConfig) -> PitchTrack {
    let sr = w.sample_rate as usize;
    let win = sr * cfg.frame_length_ms as usize / 1000;
    let shift = sr * cfg.frame_shift_ms as usize / 1000;
    let min_lag = (w.sample_rate as f64 / cfg.max_f0).ceil() as usize;
    let max_lag = (w.sample_rate as f64 / cfg.min_f0).floor() as usize;
    let n = w.len();
    if n < win {
        return PitchTrack {
            frames: vec![],
            frame_shift_ms: cfg.frame_shift_ms,
        };
    }
    let num_frames = (n - win) / shift + 1;
    let filtered;
    let samples = if cfg.lowpass_hz > 0.0 && cfg.lowpass_hz < 0.5 * w.sample_rate as f64 {
        filtered = lowpass(&w.samples, cfg.lowpass_hz, w.sample_rate);
        &filtered
    } else {
        &w.samples
    };
    let mut seg = vec![0.0; win + max_lag + 1];
    let mut frames = Vec::with_capacity(num_frames);
    let mut cands: Vec<Vec<Candidate>> = Vec::with_capacity(num_frames);
    let mut curve = vec![0.0; max_lag + 2];
    for t in 0..num_frames {
        let start = t * shift;
        seg.iter_mut().for_each(|v| *v = 0.0);
        let avail = (n - start).min(seg.len());
        seg[..avail].copy_from_slice(&samples[start..start + avail]);
        for lag in min_lag.saturating_sub(1)..=max_lag + 1 {
            if lag + win <= seg.len() {
                curve[lag] = nccf_window(&seg, win, lag);
            }
        }
        let mut peaks = Vec::new();
        let mut best_nccf = f64::NEG_INFINITY;
        for lag in min_lag..=max_lag {
            let c = curve[lag];
            best_nccf = best_nccf.max(c);
            let left = if lag > min_lag { curve[lag - 1] } else { f64::NEG_INFINITY };
            let right = if lag < max_lag { curve[lag + 1] } else { f64::NEG_INFINITY };
            if c > 0.0 && c >= left && c > right {
                // parabolic refinement of the peak lag
                let (l, r) = (curve[lag - 1], curve[(lag + 1).min(max_lag + 1)]);
                let denom = l - 2.0 * c + r;
                let delta = if denom.abs() > 1e-12 {
                    (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
                } else {
                    0.0
                };
                let f0 = (w.sample_rate as f64 / (lag as f64 + delta)).clamp(cfg.min_f0, cfg.max_f0);
                let peak = (c - 0.25 * (l - r) * delta).min(1.0);
                let strength = peak + cfg.octave_cost * (f0 / cfg.min_f0).log2();
                peaks.push(Candidate { f0, nccf: c, strength });
            }
        }
        peaks.sort_by(|a, b| b.strength.total_cmp(&a.strength));
        peaks.truncate(cfg.num_candidates);
        let voiced = peaks.first().is_some_and(|_| {
            peaks.iter().map(|p| p.nccf).fold(f64::NEG_INFINITY, f64::max) >= cfg.voicing_threshold
        });
        frames.push(PitchFrame {
            f0: 0.0,
            nccf: if best_nccf.is_finite() { best_nccf } else { 0.0 },
            voiced,
        });
        cands.push(peaks);
    }

    // smooth each voiced run independently
    let mut t = 0;
    while t < num_frames {
        if !frames[t].voiced {
            t += 1;
            continue;
        }
        let start = t;
        while t < num_frames && frames[t].voiced {
            t += 1;
        }
        let path = smooth_run(&cands[start..t], cfg.smoothing_weight);
        for (k, &c) in path.iter().enumerate() {
            let cand = cands[start + k][c];
            frames[start + k].f0 = cand.f0;
            frames[start + k].nccf = cand.nccf;
        }
    }
    PitchTrack {
        frames,
        frame_shift_ms: cfg.frame_shift_ms,
    }
}

fn smooth_run(cands: &[Vec<Candidate>], weight: f64) -> Vec<usize> {
    let mut cost: Vec<f64> = cands[0].iter().map(|c| 1.0 - c.strength).collect();
    let mut back: Vec<Vec<usize>> = vec![vec![0; cands[0].len()]];
    for t in 1..cands.len() {
        let mut next = Vec::with_capacity(cands[t].len());
        let mut bp = Vec::with_capacity(cands[t].len());
        for c in &cands[t] {
            let (arg, best) = cands[t - 1]
                .iter()
                .zip(&cost)
                .map(|(p, &pc)| pc + weight * (c.f0.ln() - p.f0.ln()).abs())
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
            next.push(best + 1.0 - c.strength);
            bp.push(arg);
        }
        cost = next;
        back.push(bp);
    }
    let mut idx = cost
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc })
        .0;
    let mut path = vec![0; cands.len()];
    for t in (0..cands.len()).rev() {
        path[t] = idx;
        idx = back[t][idx];
    }
    path
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    pub(crate) fn sawtooth(f0: f64, secs: f64) -> Waveform {
        let n = (secs * 16000.0) as usize;
        let samples = (0..n)
            .map(|i| {
                let ph = (i as f64 * f0 / 16000.0).fract();
                0.5 * (2.0 * ph - 1.0)
            })
            .collect();
        Waveform::new(samples, 16000).unwrap()
    }

    #[test]
    fn nccf_on_sine() {
        let x: Vec<f64> = (0..800).map(|i| (2.0 * PI * 200.0 * i as f64 / 16000.0).sin()).collect();
        assert!((nccf(&x, 80) - 1.0).abs() < 1e-3);
        assert!((nccf(&x, 40) + 1.0).abs() < 1e-3);
        assert_eq!(nccf(&[0.0; 100], 10), 0.0);
    }

    #[test]
    fn nccf_on_noise_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut small = 0;
        for _ in 0..200 {
            let x: Vec<f64> = (0..720).map(|_| rng.random_range(-1.0..1.0)).collect();
            if nccf(&x, 300).abs() < 0.3 {
                small += 1;
            }
        }
        assert!(small >= 198, "{small}/200");
    }

    #[test]
    fn tracks_sawtooths() {
        for f0 in [120.0, 200.0, 215.0, 220.0, 230.0, 320.0, 368.0, 410.0] {
            let tr = track_pitch(&sawtooth(f0, 1.0));
            assert_eq!(tr.len(), 98);
            assert!(tr.voiced_fraction() >= 0.95, "{f0}: {}", tr.voiced_fraction());
            let med = tr.median_f0().unwrap();
            assert!((med - f0).abs() <= 3.0, "{f0}: median {med}");
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let tr = track_pitch(&Waveform::new(vec![0.0; 16000], 16000).unwrap());
        assert_eq!(tr.voiced_fraction(), 0.0);
        assert!(tr.frames.iter().all(|f| f.f0 == 0.0));
    }

    #[test]
    fn short_input_gives_empty_track() {
        assert!(track_pitch(&Waveform::new(vec![0.1; 300], 16000).unwrap()).is_empty());
    }

    #[test]
    fn f0_range_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Waveform::new((0..8000).map(|_| rng.random_range(-0.5..0.5)).collect(), 16000).unwrap();
        for w in [noise, sawtooth(47.0, 0.5), sawtooth(520.0, 0.5), sawtooth(260.0, 0.5)] {
            for f in track_pitch(&w).frames {
                assert!(f.f0 == 0.0 || (50.0..=500.0).contains(&f.f0));
                assert_eq!(f.voiced, f.f0 > 0.0);
                assert!(f.nccf.is_finite());
            }
        }
    }
}
