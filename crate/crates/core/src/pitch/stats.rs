use std::collections::BTreeMap;

use super::PitchTrack;

pub const HIST_BIN_HZ: f64 = 25.0;
pub const HIST_LOW_HZ: f64 = 50.0;
pub const HIST_NUM_BINS: usize = 18;

/// Voiced-frame pitch summary for one speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerPitchStats {
    pub mean_f0: f64,
    pub voiced_frames: usize,
    /// Counts in 25 Hz bins starting at 50 Hz; bin `i` covers `[50+25i, 75+25i)`.
    pub histogram: Vec<usize>,
}

impl SpeakerPitchStats {
    pub fn bin_start(i: usize) -> f64 {
        HIST_LOW_HZ + HIST_BIN_HZ * i as f64
    }
}

fn bin_of(f0: f64) -> usize {
    (((f0 - HIST_LOW_HZ) / HIST_BIN_HZ).floor().max(0.0) as usize).min(HIST_NUM_BINS - 1)
}

/// Pools voiced frames of every utterance per speaker. Speakers without any
/// voiced frame are dropped with a warning.
pub fn compute_speaker_pitch_stats<'a, I>(tracks: I) -> BTreeMap<String, SpeakerPitchStats>
where
    I: IntoIterator<Item = (&'a str, &'a PitchTrack)>,
{
    let mut acc: BTreeMap<String, (f64, usize, Vec<usize>)> = BTreeMap::new();
    for (spk, track) in tracks {
        let e = acc
            .entry(spk.to_string())
            .or_insert_with(|| (0.0, 0, vec![0; HIST_NUM_BINS]));
        for f0 in track.voiced_f0() {
            e.0 += f0;
            e.1 += 1;
            e.2[bin_of(f0)] += 1;
        }
    }
    acc.into_iter()
        .filter_map(|(spk, (sum, n, hist))| {
            if n == 0 {
                log::warn!("speaker {spk} has no voiced frames; excluded from pitch stats");
                return None;
            }
            Some((
                spk,
                SpeakerPitchStats {
                    mean_f0: sum / n as f64,
                    voiced_frames: n,
                    histogram: hist,
                },
            ))
        })
        .collect()
}
