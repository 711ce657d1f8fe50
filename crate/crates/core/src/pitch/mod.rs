//! NCCF pitch tracking and prosodic augmentation.

mod shift;
mod stats;
mod tracker;

pub use shift::{pitch_shift_cents, resample_by_rate, speed_perturb, time_stretch, volume_perturb};
pub use stats::{compute_speaker_pitch_stats, SpeakerPitchStats, HIST_BIN_HZ, HIST_LOW_HZ, HIST_NUM_BINS};
pub use tracker::{nccf, track_pitch, track_pitch_with, PitchConfig, PitchFrame, PitchTrack};

/// Frequency ratio of a shift in cents.
pub fn cents_ratio(cents: f64) -> f64 {
    2f64.powf(cents / 1200.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cent_ratios() {
        assert!((cents_ratio(300.0) - 1.18921).abs() < 1e-5);
        assert!((cents_ratio(500.0) - 1.33484).abs() < 1e-5);
        assert_eq!(cents_ratio(0.0), 1.0);
    }
}
