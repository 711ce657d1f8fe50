use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array2};
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mfcc,
    Spliced,
}

/// Per-utterance `T x D` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: Array2<f64>,
    pub frame_shift_ms: u32,
    pub frame_length_ms: u32,
    pub kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn from_frames(frames: Array2<f64>) -> Self {
        Self {
            frames,
            frame_shift_ms: 10,
            frame_length_ms: 25,
            kind: FeatureKind::Mfcc,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub frame_length_ms: u32,
    pub frame_shift_ms: u32,
    pub num_mel_bins: usize,
    pub num_ceps: usize,
    pub preemph: f64,
    pub low_freq: f64,
    /// Upper filterbank edge in Hz; 0 means Nyquist.
    pub high_freq: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_length_ms: 25,
            frame_shift_ms: 10,
            num_mel_bins: 40,
            num_ceps: 40,
            preemph: 0.97,
            low_freq: 20.0,
            high_freq: 0.0,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (sample_rate as usize * self.frame_length_ms as usize) / 1000
    }

    pub fn shift_samples(&self, sample_rate: u32) -> usize {
        (sample_rate as usize * self.frame_shift_ms as usize) / 1000
    }

    /// Frame count for `n` samples; zero when shorter than one window.
    pub fn num_frames(&self, n: usize, sample_rate: u32) -> usize {
        let win = self.window_samples(sample_rate);
        if n < win {
            0
        } else {
            (n - win) / self.shift_samples(sample_rate) + 1
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

/// Triangular mel filters over the one-sided power spectrum, `bins x (fft/2+1)`.
pub fn mel_filterbank(
    num_bins: usize,
    fft_size: usize,
    sample_rate: u32,
    low: f64,
    high: f64,
) -> Array2<f64> {
    let nyquist = sample_rate as f64 / 2.0;
    let high = if high <= 0.0 { nyquist } else { high.min(nyquist) };
    let (mel_lo, mel_hi) = (hz_to_mel(low), hz_to_mel(high));
    let delta = (mel_hi - mel_lo) / (num_bins + 1) as f64;
    let n_fft_bins = fft_size / 2 + 1;
    let mut bank = Array2::zeros((num_bins, n_fft_bins));
    for m in 0..num_bins {
        let left = mel_lo + m as f64 * delta;
        let center = left + delta;
        let right = center + delta;
        for k in 0..n_fft_bins {
            let mel = hz_to_mel(k as f64 * sample_rate as f64 / fft_size as f64);
            if mel > left && mel < right {
                bank[[m, k]] = if mel <= center {
                    (mel - left) / (center - left)
                } else {
                    (right - mel) / (right - center)
                };
            }
        }
    }
    bank
}

/// Orthonormal type-II DCT as an `n_out x n_in` matrix.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    let mut m = Array2::zeros((n_out, n_in));
    let n = n_in as f64;
    for k in 0..n_out {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for j in 0..n_in {
            m[[k, j]] = scale * (PI * k as f64 * (2 * j + 1) as f64 / (2.0 * n)).cos();
        }
    }
    m
}

/// One-sided power spectrum `|X_k|^2`, `k = 0..=n/2`, of a zero-padded frame.
pub fn power_spectrum(frame: &[f64], fft: &dyn Fft<f64>) -> Vec<f64> {
    let n = fft.len();
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n)
        .collect();
    fft.process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Reusable MFCC pipeline for one sample rate.
pub struct MfccExtractor {
    cfg: MfccConfig,
    sample_rate: u32,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: Array2<f64>,
    dct: Array2<f64>,
}

impl MfccExtractor {
    pub fn new(cfg: &MfccConfig, sample_rate: u32) -> Self {
        let win = cfg.window_samples(sample_rate);
        let fft_size = win.next_power_of_two();
        let window = (0..win)
            .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (win - 1) as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Self {
            cfg: cfg.clone(),
            sample_rate,
            window,
            fft,
            filterbank: mel_filterbank(
                cfg.num_mel_bins,
                fft_size,
                sample_rate,
                cfg.low_freq,
                cfg.high_freq,
            ),
            dct: dct_matrix(cfg.num_ceps, cfg.num_mel_bins),
        }
    }

    pub fn filterbank(&self) -> &Array2<f64> {
        &self.filterbank
    }

    /// Log mel energies, `T x num_mel_bins`.
    pub fn log_mel(&self, w: &Waveform) -> Result<Array2<f64>> {
        if w.sample_rate != self.sample_rate {
            return Err(Error::Invalid(format!(
                "extractor built for {} Hz, got {} Hz",
                self.sample_rate, w.sample_rate
            )));
        }
        let win = self.window.len();
        let shift = self.cfg.shift_samples(self.sample_rate);
        let t = self.cfg.num_frames(w.len(), self.sample_rate);
        if t == 0 {
            return Err(Error::TooShort {
                samples: w.len(),
                needed: win,
            });
        }
        let x = &w.samples;
        let mut emph = Vec::with_capacity(x.len());
        emph.push(x[0] * (1.0 - self.cfg.preemph));
        emph.extend(x.windows(2).map(|p| p[1] - self.cfg.preemph * p[0]));

        let mut out = Array2::zeros((t, self.cfg.num_mel_bins));
        let mut frame = vec![0.0; win];
        for i in 0..t {
            let seg = &emph[i * shift..i * shift + win];
            for ((f, &s), &h) in frame.iter_mut().zip(seg).zip(&self.window) {
                *f = s * h;
            }
            let pow = power_spectrum(&frame, self.fft.as_ref());
            for (m, row) in self.filterbank.outer_iter().enumerate() {
                let e: f64 = row.iter().zip(&pow).map(|(a, b)| a * b).sum();
                out[[i, m]] = e.max(self.cfg.log_floor).ln();
            }
        }
        Ok(out)
    }

    pub fn extract(&self, w: &Waveform) -> Result<FeatureMatrix> {
        let logmel = self.log_mel(w)?;
        let ceps = logmel.dot(&self.dct.t());
        Ok(FeatureMatrix {
            frames: ceps,
            frame_shift_ms: self.cfg.frame_shift_ms,
            frame_length_ms: self.cfg.frame_length_ms,
            kind: FeatureKind::Mfcc,
        })
    }
}

/// High-resolution MFCCs: pre-emphasis, Hamming-windowed framing, power spectrum,
/// mel filterbank, floored log, orthonormal DCT-II.
pub fn extract_mfcc(w: &Waveform, cfg: &MfccConfig) -> Result<FeatureMatrix> {
    MfccExtractor::new(cfg, w.sample_rate).extract(w)
}

/// Stacks frames `t-left ..= t+right`, replicating the first/last frame at the edges.
pub fn splice_context(f: &FeatureMatrix, left: usize, right: usize) -> FeatureMatrix {
    let (t, d) = f.frames.dim();
    let width = left + right + 1;
    let mut out = Array2::zeros((t, d * width));
    for i in 0..t {
        for j in 0..width {
            let src = (i as isize + j as isize - left as isize).clamp(0, t as isize - 1) as usize;
            out.slice_mut(s![i, j * d..(j + 1) * d])
                .assign(&f.frames.row(src));
        }
    }
    FeatureMatrix {
        frames: out,
        frame_shift_ms: f.frame_shift_ms,
        frame_length_ms: f.frame_length_ms,
        kind: FeatureKind::Spliced,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect(), 16000).unwrap()
    }

    #[test]
    fn one_second_gives_98_frames() {
        let f = extract_mfcc(&noise(16000, 1), &MfccConfig::default()).unwrap();
        assert_eq!(f.frames.dim(), (98, 40));
        assert!(f.frames.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn too_short_is_error() {
        let r = extract_mfcc(&noise(399, 1), &MfccConfig::default());
        assert!(matches!(r, Err(Error::TooShort { .. })));
    }

    #[test]
    fn no_empty_mel_filters() {
        let bank = mel_filterbank(40, 512, 16000, 20.0, 0.0);
        for row in bank.outer_iter() {
            assert!(row.sum() > 0.0);
        }
    }

    #[test]
    fn gain_only_moves_c0() {
        let w = noise(8000, 3);
        let base = extract_mfcc(&w, &MfccConfig::default()).unwrap();
        for g in [0.1, 0.37, 2.5, 10.0] {
            let scaled = Waveform {
                samples: w.samples.iter().map(|s| s * g).collect(),
                sample_rate: 16000,
            };
            let f = extract_mfcc(&scaled, &MfccConfig::default()).unwrap();
            let d = &f.frames - &base.frames;
            for row in d.outer_iter() {
                for c in 1..40 {
                    assert!(row[c].abs() < 1e-6, "coef {c} moved by {}", row[c]);
                }
                assert!((row[0] - 2.0 * g.ln() * 40f64.sqrt()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn silence_gives_constant_floor_cepstrum() {
        let cfg = MfccConfig::default();
        let f = extract_mfcc(&Waveform::new(vec![0.0; 4000], 16000).unwrap(), &cfg).unwrap();
        let floor = cfg.log_floor.ln();
        for row in f.frames.outer_iter() {
            assert!((row[0] - floor * 40f64.sqrt()).abs() < 1e-9);
            assert!(row.iter().skip(1).all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        let m = dct_matrix(40, 40);
        let id = m.dot(&m.t());
        for i in 0..40 {
            for j in 0..40 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[[i, j]] - want).abs() < 1e-12);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = ndarray::Array1::from_iter((0..40).map(|_| rng.random_range(-30.0..5.0)));
        let back = m.t().dot(&m.dot(&v));
        assert!((&back - &v).iter().all(|d| d.abs() < 1e-9));
    }

    #[test]
    fn parseval_holds() {
        let fft = FftPlanner::new().plan_fft_forward(512);
        let w = noise(400, 5);
        let pow = power_spectrum(&w.samples, fft.as_ref());
        let n = 512;
        let full: f64 = pow[0] + pow[n / 2] + 2.0 * pow[1..n / 2].iter().sum::<f64>();
        let energy: f64 = w.samples.iter().map(|x| x * x).sum();
        assert!((full / n as f64 - energy).abs() / energy < 1e-6);
    }

    #[test]
    fn splice_shapes_and_edges() {
        let frames = Array2::from_shape_fn((5, 40), |(t, d)| (t * 100 + d) as f64);
        let f = FeatureMatrix::from_frames(frames.clone());
        let sp = splice_context(&f, 3, 3);
        assert_eq!(sp.dim(), 280);
        for j in 0..7usize {
            let src = (2 + j).saturating_sub(3).min(4);
            assert_eq!(sp.frames.slice(s![2, j * 40..(j + 1) * 40]), frames.row(src));
        }
        let one = FeatureMatrix::from_frames(frames.slice(s![0..1, ..]).to_owned());
        let sp1 = splice_context(&one, 3, 3);
        for j in 0..7 {
            assert_eq!(sp1.frames.slice(s![0, j * 40..(j + 1) * 40]), frames.row(0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn framing_count_formula(n in 400usize..6000) {
            let f = extract_mfcc(&noise(n, n as u64), &MfccConfig::default()).unwrap();
            prop_assert_eq!(f.num_frames(), (n - 400) / 160 + 1);
        }
    }
}
