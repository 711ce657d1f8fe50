use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{PhoneClass, PhoneInventory, SpeakerProfile};
use crate::signal::Waveform;
use crate::Result;

const SAMPLE_RATE: u32 = 16000;
const PEAK: f64 = 0.7;

/// A phone occupying samples `start..end` of a synthesized utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhoneSegment {
    pub phone: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub wave: Waveform,
    pub segments: Vec<PhoneSegment>,
}

/// Canonical (F1, F2) per voiced phone at vocal-tract scale 1.
fn formants(sym: &str) -> (f64, f64) {
    match sym {
        "aa" => (730.0, 1090.0),
        "iy" => (270.0, 2290.0),
        "uw" => (300.0, 870.0),
        "eh" => (530.0, 1840.0),
        "ao" => (570.0, 840.0),
        "m" => (250.0, 1100.0),
        "n" => (250.0, 1650.0),
        _ => (500.0, 1500.0),
    }
}

/// Center frequency, bandwidth and gain of the noise shaping for unvoiced phones.
fn noise_band(sym: &str) -> (f64, f64, f64) {
    match sym {
        "s" => (5500.0, 1200.0, 0.35),
        "sh" => (2800.0, 700.0, 0.4),
        "f" => (4000.0, 3500.0, 0.12),
        "t" => (4200.0, 2000.0, 0.5),
        _ => (1000.0, 2000.0, 0.004),
    }
}

/// Two-pole resonator with unity gain at DC.
#[derive(Clone, Copy, Default)]
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn set(&mut self, freq: f64, bw: f64) {
        let t = 1.0 / SAMPLE_RATE as f64;
        let r = (-PI * bw * t).exp();
        self.c = -r * r;
        self.b = 2.0 * r * (2.0 * PI * freq * t).cos();
        self.a = 1.0 - self.b - self.c;
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Source-filter synthesis of a phone string for one speaker.
pub fn synth_with_timing(
    sp: &SpeakerProfile,
    transcript: &[usize],
    inv: &PhoneInventory,
    seed: u64,
) -> SynthOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = SAMPLE_RATE as f64;
    let mut segments = Vec::with_capacity(transcript.len());
    let mut pos = 0;
    for &p in transcript {
        let ms: f64 = rng.random_range(80.0..=160.0);
        let len = (ms * sr / 1000.0).round() as usize;
        segments.push(PhoneSegment { phone: p, start: pos, end: pos + len });
        pos += len;
    }
    let total = pos;

    // slow f0 wander: gaussian control points every 50 ms, linearly interpolated
    let ctrl_step = (0.05 * sr) as usize;
    let ctrl: Vec<f64> = (0..total / ctrl_step + 2)
        .map(|_| sp.f0_jitter * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let vowels = inv.vowels();

    let mut out = vec![0.0; total];
    let mut f1 = Resonator::default();
    let mut f2 = Resonator::default();
    let mut nz = Resonator::default();
    let mut phase = 0.0;
    for seg in &segments {
        let sym = inv.symbol(seg.phone);
        let class = inv.class(seg.phone);
        if class.is_voiced() {
            let (a, b) = formants(sym);
            let shift = vowels
                .iter()
                .position(|&v| v == seg.phone)
                .map_or(0.0, |k| sp.accent_shift[k]);
            f1.set(a * sp.vtl_scale, 60.0 + 0.05 * a);
            f2.set(b * sp.vtl_scale + shift, 80.0 + 0.05 * b);
        } else {
            let (fc, bw, _) = noise_band(sym);
            nz.set((fc * sp.vtl_scale).min(0.45 * sr), bw);
        }
        let len = seg.end - seg.start;
        for i in seg.start..seg.end {
            let k = i / ctrl_step;
            let frac = (i % ctrl_step) as f64 / ctrl_step as f64;
            let wander = ctrl[k] * (1.0 - frac) + ctrl[k + 1] * frac;
            let f0 = sp.base_f0 * (1.0 + wander);
            // attack/decay ramp of 10 ms at phone edges
            let edge = ((i - seg.start).min(seg.end - 1 - i) as f64 / (0.01 * sr)).min(1.0);
            out[i] = match class {
                PhoneClass::Vowel | PhoneClass::Nasal => {
                    phase = (phase + f0 / sr).fract();
                    let src = 2.0 * phase - 1.0;
                    let gain = if class == PhoneClass::Nasal { 0.35 } else { 1.0 };
                    gain * edge * f2.tick(f1.tick(src))
                }
                PhoneClass::Silence => {
                    let (_, _, g) = noise_band(sym);
                    g * rng.random_range(-1.0..1.0)
                }
                PhoneClass::Fricative => {
                    let (_, _, g) = noise_band(sym);
                    g * edge * nz.tick(rng.random_range(-1.0..1.0))
                }
                PhoneClass::Stop => {
                    // closure then a decaying burst over the last 40%
                    let rel = (i - seg.start) as f64 / len as f64;
                    let burst = if rel < 0.6 {
                        0.0
                    } else {
                        (-(rel - 0.6) * 12.0).exp()
                    };
                    let (_, _, g) = noise_band(sym);
                    g * burst * nz.tick(rng.random_range(-1.0..1.0)) + 0.004 * rng.random_range(-1.0..1.0)
                }
            };
        }
    }
    let mut wave = Waveform {
        samples: out,
        sample_rate: SAMPLE_RATE,
    };
    wave.peak_normalize(PEAK);
    SynthOutput { wave, segments }
}

/// Synthesizes `transcript` (phone symbols) for `sp`.
pub fn synth_utterance<S: AsRef<str>>(
    sp: &SpeakerProfile,
    transcript: &[S],
    inv: &PhoneInventory,
    seed: u64,
) -> Result<Waveform> {
    let ids = inv.encode(transcript)?;
    Ok(synth_with_timing(sp, &ids, inv, seed).wave)
}

/// Ground-truth phone per analysis frame, taken at each frame's center sample.
pub fn frame_labels(segments: &[PhoneSegment], num_frames: usize, window: usize, shift: usize) -> Vec<usize> {
    (0..num_frames)
        .map(|t| {
            let c = t * shift + window / 2;
            segments
                .iter()
                .find(|s| c < s.end)
                .or(segments.last())
                .map_or(0, |s| s.phone)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SpeakerGroup, SIL};
    use crate::pitch::track_pitch;

    fn speaker(f0: f64) -> SpeakerProfile {
        SpeakerProfile {
            id: "t".into(),
            group: SpeakerGroup::AdultFemale,
            base_f0: f0,
            f0_jitter: 0.03,
            vtl_scale: 1.0,
            accent_shift: [0.0; 5],
        }
    }

    #[test]
    fn vowel_pitch_tracks_base_f0() {
        let inv = PhoneInventory::default();
        for f0 in [110.0, 200.0, 300.0] {
            let out = synth_with_timing(&speaker(f0), &inv.encode(&[SIL, "aa", SIL]).unwrap(), &inv, 4);
            let tr = track_pitch(&out.wave);
            let seg = out.segments[1];
            let voiced: Vec<f64> = tr.frames[seg.start / 160 + 2..(seg.end / 160).saturating_sub(2)]
                .iter()
                .filter(|f| f.voiced)
                .map(|f| f.f0)
                .collect();
            let mut v = voiced.clone();
            v.sort_by(f64::total_cmp);
            let med = v[v.len() / 2];
            assert!((med / f0 - 1.0).abs() < 0.05, "{f0}: {med}");
        }
    }

    #[test]
    fn fricative_mostly_unvoiced() {
        let inv = PhoneInventory::default();
        let out = synth_with_timing(&speaker(200.0), &inv.encode(&[SIL, "s", SIL]).unwrap(), &inv, 9);
        let tr = track_pitch(&out.wave);
        let seg = out.segments[1];
        let span = &tr.frames[seg.start / 160..(seg.end.saturating_sub(400)) / 160];
        let voiced = span.iter().filter(|f| f.voiced).count();
        assert!((voiced as f64) < 0.1 * span.len() as f64, "{voiced}/{}", span.len());
    }

    #[test]
    fn deterministic_and_normalized() {
        let inv = PhoneInventory::default();
        let a = synth_utterance(&speaker(150.0), &[SIL, "m", "iy", "t", SIL], &inv, 3).unwrap();
        let b = synth_utterance(&speaker(150.0), &[SIL, "m", "iy", "t", SIL], &inv, 3).unwrap();
        assert_eq!(a, b);
        assert!((a.peak() - 0.7).abs() < 1e-12);
        assert!(synth_utterance(&speaker(150.0), &["xx"], &inv, 3).is_err());
    }
}
