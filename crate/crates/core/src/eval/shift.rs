use std::path::PathBuf;

use rayon::prelude::*;

use crate::corpus::{Manifest, UtteranceRecord};
use crate::pitch::pitch_shift_cents;
use crate::signal::{read_wav, write_wav};
use crate::{Error, Result};

/// Name of the shifted copy of `corpus`, e.g. `adult+300`.
pub fn shifted_name(corpus: &str, cents: i32) -> String {
    format!("{corpus}{cents:+}")
}

/// Pitch-shifted copies of a test manifest, one per entry of `cents`. WAVs
/// go under `wav/<name>/` of the source manifest's base directory; utterance
/// and speaker ids get the shift as a suffix.
pub fn make_shifted_testset(m: &Manifest, cents: &[i32]) -> Result<Vec<Manifest>> {
    cents
        .iter()
        .map(|&c| {
            let name = shifted_name(&m.corpus, c);
            let rel_dir = PathBuf::from("wav").join(&name);
            let abs_dir = m.base_dir.join(&rel_dir);
            std::fs::create_dir_all(&abs_dir).map_err(|e| Error::io(&abs_dir, e))?;
            let records = m
                .records
                .par_iter()
                .map(|r| {
                    let w = pitch_shift_cents(&read_wav(m.wav_path(r))?, c);
                    let id = format!("{}{c:+}", r.utt_id);
                    let rel = rel_dir.join(format!("{id}.wav"));
                    write_wav(&w, m.base_dir.join(&rel))?;
                    Ok(UtteranceRecord {
                        utt_id: id,
                        speaker_id: format!("{}{c:+}", r.speaker_id),
                        group: r.group,
                        wav_path: rel,
                        transcript: r.transcript.clone(),
                        duration: w.duration_secs(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut out = Manifest::new(name, m.split, m.base_dir.clone());
            out.records = records;
            Ok(out)
        })
        .collect()
}
