//! Deterministic synthetic adult/child corpus and manifest handling.

mod build;
mod inventory;
mod manifest;
mod speaker;
mod synth;

pub use build::{build_corpus, triple_with_perturbation, CorpusConfig, CorpusSet, PERTURB_PREFIXES};
pub use inventory::{PhoneClass, PhoneInventory, SIL};
pub use manifest::{read_timings, write_timings, Manifest, Split, UtteranceRecord};
pub use speaker::{make_population, GroupCounts, SpeakerGroup, SpeakerProfile};
pub use synth::{frame_labels, synth_utterance, synth_with_timing, PhoneSegment, SynthOutput};

/// SplitMix64 step; derives independent sub-seeds from one run seed.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
