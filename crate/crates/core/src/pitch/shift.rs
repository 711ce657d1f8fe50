use std::f64::consts::PI;

use super::cents_ratio;
use crate::signal::Waveform;

const SINC_ZEROS: f64 = 16.0;

/// Band-limited resampling that reads the input `rate` times faster:
/// output length is `round(len / rate)` and every frequency is scaled by `rate`.
pub fn resample_by_rate(x: &[f64], rate: f64) -> Vec<f64> {
    assert!(rate > 0.0);
    if (rate - 1.0).abs() < 1e-12 {
        return x.to_vec();
    }
    let out_len = (x.len() as f64 / rate).round() as usize;
    let cutoff = (1.0 / rate).min(1.0);
    let half = SINC_ZEROS / cutoff;
    let n = x.len() as isize;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * rate;
            let lo = (pos - half).ceil() as isize;
            let hi = (pos + half).floor() as isize;
            let mut acc = 0.0;
            for j in lo.max(0)..=hi.min(n - 1) {
                let d = pos - j as f64;
                let arg = d * cutoff;
                let sinc = if arg.abs() < 1e-12 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
                let win = 0.5 + 0.5 * (PI * d / half).cos();
                acc += x[j as usize] * cutoff * sinc * win;
            }
            acc
        })
        .collect()
}

/// WSOLA time stretch to exactly `out_len` samples: 20 ms Hann segments at
/// 50% overlap, each placed within +-5 ms of its nominal analysis position
/// where it best continues the previously copied segment.
pub fn time_stretch(x: &[f64], out_len: usize, sample_rate: u32) -> Vec<f64> {
    if x.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    if out_len == x.len() {
        return x.to_vec();
    }
    let seg = (sample_rate as usize * 20) / 1000;
    let syn_hop = seg / 2;
    let tol = (sample_rate as usize * 5) / 1000;
    let ana_hop = syn_hop as f64 * x.len() as f64 / out_len as f64;
    let window: Vec<f64> = (0..seg)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / seg as f64).cos())
        .collect();
    let at = |i: usize| x.get(i).copied().unwrap_or(0.0);

    let mut out = vec![0.0; out_len + seg];
    let mut wsum = vec![0.0; out_len + seg];
    let mut prev = 0usize;
    let mut k = 0usize;
    while k * syn_hop < out_len {
        let pos = if k == 0 {
            0
        } else {
            let natural = prev + syn_hop;
            let nominal = (k as f64 * ana_hop).round() as isize;
            let lo = (nominal - tol as isize).max(0);
            let hi = (nominal + tol as isize).min(x.len() as isize - 1).max(lo);
            let mut best = (lo as usize, f64::NEG_INFINITY);
            for cand in lo..=hi {
                let c = cand as usize;
                let score: f64 = (0..seg).map(|n| at(c + n) * at(natural + n)).sum();
                if score > best.1 {
                    best = (c, score);
                }
            }
            best.0
        };
        let base = k * syn_hop;
        for n in 0..seg {
            out[base + n] += at(pos + n) * window[n];
            wsum[base + n] += window[n];
        }
        prev = pos;
        k += 1;
    }
    out.truncate(out_len);
    out.iter()
        .zip(&wsum)
        .map(|(&o, &w)| if w > 1e-9 { o / w } else { 0.0 })
        .collect()
}

/// Shifts pitch by `cents` while preserving duration: resample by the cent
/// ratio, then time-stretch back to the original length.
pub fn pitch_shift_cents(w: &Waveform, cents: i32) -> Waveform {
    if cents == 0 {
        return w.clone();
    }
    let ratio = cents_ratio(cents as f64);
    let fast = resample_by_rate(&w.samples, ratio);
    let samples = time_stretch(&fast, w.len(), w.sample_rate)
        .into_iter()
        .map(|s| s.clamp(-1.0, 1.0))
        .collect();
    Waveform {
        samples,
        sample_rate: w.sample_rate,
    }
}

/// Speed perturbation: duration scales by `1/factor`, pitch by `factor`.
pub fn speed_perturb(w: &Waveform, factor: f64) -> Waveform {
    let samples = resample_by_rate(&w.samples, factor)
        .into_iter()
        .map(|s| s.clamp(-1.0, 1.0))
        .collect();
    Waveform {
        samples,
        sample_rate: w.sample_rate,
    }
}

pub fn volume_perturb(w: &Waveform, gain: f64) -> Waveform {
    Waveform {
        samples: w.samples.iter().map(|s| (s * gain).clamp(-1.0, 1.0)).collect(),
        sample_rate: w.sample_rate,
    }
}
