use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    make_population, sub_seed, synth_with_timing, write_timings, GroupCounts, Manifest, PhoneInventory,
    PhoneSegment, SpeakerProfile, Split, UtteranceRecord,
};
use crate::pitch::{speed_perturb, volume_perturb};
use crate::signal::{read_wav, write_wav};
use crate::{Error, Result};

pub const PERTURB_PREFIXES: [&str; 2] = ["sp0.9-", "sp1.1-"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub seed: u64,
    pub adult_train_male: usize,
    pub adult_train_female: usize,
    pub adult_test_male: usize,
    pub adult_test_female: usize,
    pub child_train_speakers: usize,
    pub child_test_speakers: usize,
    pub accent_train_speakers: usize,
    pub accent_test_speakers: usize,
    pub utts_per_adult_train: usize,
    pub utts_per_child_train: usize,
    pub utts_per_test: usize,
    pub utts_per_accent_train: usize,
    /// Phones between the leading and trailing silence.
    pub min_phones: usize,
    pub max_phones: usize,
    /// Relative F2 offset magnitude of the accented child population.
    pub accent_f2_shift: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            adult_train_male: 8,
            adult_train_female: 8,
            adult_test_male: 3,
            adult_test_female: 3,
            child_train_speakers: 4,
            child_test_speakers: 6,
            accent_train_speakers: 6,
            accent_test_speakers: 4,
            utts_per_adult_train: 10,
            utts_per_child_train: 4,
            utts_per_test: 5,
            utts_per_accent_train: 5,
            min_phones: 4,
            max_phones: 8,
            accent_f2_shift: 0.12,
        }
    }
}

/// All manifests of a generated corpus plus generator ground-truth timings.
#[derive(Debug, Clone)]
pub struct CorpusSet {
    pub manifests: Vec<Manifest>,
    pub timings: BTreeMap<String, Vec<PhoneSegment>>,
    pub speakers: Vec<SpeakerProfile>,
}

impl CorpusSet {
    pub fn get(&self, corpus: &str, split: Split) -> Option<&Manifest> {
        self.manifests.iter().find(|m| m.corpus == corpus && m.split == split)
    }

    /// Re-reads manifests and timings written by [`build_corpus`].
    pub fn load(dir: &Path, inv: &PhoneInventory) -> Result<Self> {
        let mut manifests = Vec::new();
        let mut timings = BTreeMap::new();
        for (corpus, split) in LAYOUT {
            let name = format!("{corpus}.{}", split.as_str());
            manifests.push(Manifest::read(dir.join(format!("{name}.tsv")))?);
            timings.extend(super::read_timings(dir.join(format!("{name}.timing")), inv)?);
        }
        Ok(Self {
            manifests,
            timings,
            speakers: Vec::new(),
        })
    }
}

const LAYOUT: [(&str, Split); 6] = [
    ("adult", Split::Train),
    ("adult", Split::Test),
    ("child", Split::Train),
    ("child", Split::Test),
    ("accent", Split::Train),
    ("accent", Split::Test),
];

fn random_transcript(rng: &mut ChaCha8Rng, inv: &PhoneInventory, min: usize, max: usize) -> Vec<usize> {
    let vowels = inv.vowels();
    let cons = inv.consonants();
    let n = rng.random_range(min..=max);
    let mut vowel_next = rng.random_bool(0.5);
    let mut out = vec![0];
    for _ in 0..n {
        let pool = if vowel_next { &vowels } else { &cons };
        out.push(pool[rng.random_range(0..pool.len())]);
        vowel_next = !vowel_next;
    }
    out.push(0);
    out
}

/// Accent offsets: alternating-sign F2 shifts of `rel` times each vowel's F2.
fn accent_offsets(rel: f64) -> [f64; 5] {
    // canonical F2 of aa iy uw eh ao
    let f2 = [1090.0, 2290.0, 870.0, 1840.0, 840.0];
    let sign = [1.0, -1.0, 1.0, 1.0, 1.0];
    std::array::from_fn(|i| sign[i] * rel * f2[i])
}

struct Job<'a> {
    corpus: &'static str,
    split: Split,
    speaker: &'a SpeakerProfile,
    index: usize,
}

/// Writes WAVs, manifests and timing files for the adult, child and
/// accented-child corpora under `dir`.
pub fn build_corpus(cfg: &CorpusConfig, dir: &Path, inv: &PhoneInventory) -> Result<CorpusSet> {
    let adult_pop = make_population(
        sub_seed(cfg.seed, 101),
        GroupCounts {
            adult_male: cfg.adult_train_male + cfg.adult_test_male,
            adult_female: cfg.adult_train_female + cfg.adult_test_female,
            child: 0,
        },
        "A",
        [0.0; 5],
    );
    let child_pop = make_population(
        sub_seed(cfg.seed, 102),
        GroupCounts {
            child: cfg.child_train_speakers + cfg.child_test_speakers,
            ..Default::default()
        },
        "C",
        [0.0; 5],
    );
    let accent_pop = make_population(
        sub_seed(cfg.seed, 103),
        GroupCounts {
            child: cfg.accent_train_speakers + cfg.accent_test_speakers,
            ..Default::default()
        },
        "P",
        accent_offsets(cfg.accent_f2_shift),
    );

    let males: Vec<_> = adult_pop.iter().filter(|s| s.id.starts_with("Am")).collect();
    let females: Vec<_> = adult_pop.iter().filter(|s| s.id.starts_with("Af")).collect();
    let mut jobs = Vec::new();
    fn push<'a>(jobs: &mut Vec<Job<'a>>, corpus: &'static str, split: Split, spks: &[&'a SpeakerProfile], n: usize) {
        for sp in spks {
            for index in 0..n {
                jobs.push(Job { corpus, split, speaker: sp, index });
            }
        }
    }
    let adult_train: Vec<_> = males[..cfg.adult_train_male]
        .iter()
        .chain(&females[..cfg.adult_train_female])
        .copied()
        .collect();
    let adult_test: Vec<_> = males[cfg.adult_train_male..]
        .iter()
        .chain(&females[cfg.adult_train_female..])
        .copied()
        .collect();
    let child: Vec<_> = child_pop.iter().collect();
    let accent: Vec<_> = accent_pop.iter().collect();
    push(&mut jobs, "adult", Split::Train, &adult_train, cfg.utts_per_adult_train);
    push(&mut jobs, "adult", Split::Test, &adult_test, cfg.utts_per_test);
    push(&mut jobs, "child", Split::Train, &child[..cfg.child_train_speakers], cfg.utts_per_child_train);
    push(&mut jobs, "child", Split::Test, &child[cfg.child_train_speakers..], cfg.utts_per_test);
    push(&mut jobs, "accent", Split::Train, &accent[..cfg.accent_train_speakers], cfg.utts_per_accent_train);
    push(&mut jobs, "accent", Split::Test, &accent[cfg.accent_train_speakers..], cfg.utts_per_test);

    for (corpus, split) in LAYOUT {
        let d = dir.join("wav").join(format!("{corpus}.{}", split.as_str()));
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }

    let results: Vec<(UtteranceRecord, Vec<PhoneSegment>)> = jobs
        .par_iter()
        .map(|job| {
            let utt_id = format!("{}-{:03}", job.speaker.id, job.index);
            let seed = sub_seed(
                cfg.seed,
                utt_id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
                    (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
                }),
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ids = random_transcript(&mut rng, inv, cfg.min_phones, cfg.max_phones);
            let out = synth_with_timing(job.speaker, &ids, inv, rng.random());
            let rel = PathBuf::from("wav")
                .join(format!("{}.{}", job.corpus, job.split.as_str()))
                .join(format!("{utt_id}.wav"));
            write_wav(&out.wave, dir.join(&rel))?;
            Ok((
                UtteranceRecord {
                    utt_id,
                    speaker_id: job.speaker.id.clone(),
                    group: job.speaker.group,
                    wav_path: rel,
                    transcript: ids.iter().map(|&p| inv.symbol(p).to_string()).collect(),
                    duration: out.wave.duration_secs(),
                },
                out.segments,
            ))
        })
        .collect::<Result<_>>()?;

    let mut manifests = Vec::new();
    let mut timings = BTreeMap::new();
    let mut it = results.into_iter();
    for (corpus, split) in LAYOUT {
        let mut m = Manifest::new(corpus, split, dir);
        let mut t = BTreeMap::new();
        let count = jobs.iter().filter(|j| j.corpus == corpus && j.split == split).count();
        for (rec, segs) in it.by_ref().take(count) {
            t.insert(rec.utt_id.clone(), segs);
            m.records.push(rec);
        }
        m.validate(inv)?;
        m.write(dir.join(format!("{}.tsv", m.name())))?;
        write_timings(dir.join(format!("{}.timing", m.name())), &t, inv)?;
        timings.extend(t);
        manifests.push(m);
    }
    let mut speakers = adult_pop;
    speakers.extend(child_pop);
    speakers.extend(accent_pop);
    Ok(CorpusSet {
        manifests,
        timings,
        speakers,
    })
}

/// Original plus 0.9x and 1.1x speed copies, each copy with a random volume
/// gain in [0.8, 1.25]. Perturbed WAVs are written next to the originals.
pub fn triple_with_perturbation(m: &Manifest, seed: u64) -> Result<Manifest> {
    if m.records.iter().any(|r| PERTURB_PREFIXES.iter().any(|p| r.utt_id.starts_with(p))) {
        return Err(Error::Invalid(format!("{} is already speed-perturbed", m.name())));
    }
    let rel_dir = PathBuf::from("wav").join(format!("{}.sp", m.name()));
    let abs_dir = m.base_dir.join(&rel_dir);
    std::fs::create_dir_all(&abs_dir).map_err(|e| Error::io(&abs_dir, e))?;
    let copies: Vec<Vec<UtteranceRecord>> = m
        .records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let w = read_wav(m.wav_path(r))?;
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, i as u64));
            let mut out = vec![r.clone()];
            for (prefix, factor) in PERTURB_PREFIXES.iter().zip([0.9, 1.1]) {
                let gain = rng.random_range(0.8..=1.25);
                let p = volume_perturb(&speed_perturb(&w, factor), gain);
                let id = format!("{prefix}{}", r.utt_id);
                let rel = rel_dir.join(format!("{id}.wav"));
                write_wav(&p, m.base_dir.join(&rel))?;
                out.push(UtteranceRecord {
                    utt_id: id,
                    speaker_id: format!("{prefix}{}", r.speaker_id),
                    group: r.group,
                    wav_path: rel,
                    transcript: r.transcript.clone(),
                    duration: p.duration_secs(),
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut out = Manifest::new(m.corpus.clone(), m.split, m.base_dir.clone());
    // originals first, then each perturbation in turn
    for k in 0..3 {
        out.records.extend(copies.iter().map(|c| c[k].clone()));
    }
    Ok(out)
}

