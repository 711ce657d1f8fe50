//! Data preparation stages of the experiment harness.
//!
//! Every stage reads the artifacts of earlier stages from the output
//! directory and writes its own, so the stages can run one at a time from
//! the command line or all at once from [`Pipeline::prepare`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::corpus::{build_corpus, sub_seed, triple_with_perturbation, Manifest, PhoneInventory, SpeakerGroup};
use crate::embed::{compute_pvector, concat_aux, expand_to_frames, AuxMode, PVectorStats, SpeakerEmbedder};
use crate::fdcae::{FeatureNorm, TrainContext, TrainSeq};
use crate::graph::{build_denominator_graph, DenominatorKind, PhoneBigram, StateGraph};
use crate::hmm::{flat_start, read_alignments, viterbi_train, write_alignments, Alignment, GmmHmmModel, HmmTopology, TrainUtt};
use crate::pitch::{track_pitch, PitchFrame, PitchTrack};
use crate::signal::{extract_mfcc, read_wav, FeatureMatrix};
use crate::store::Bundle;
use crate::{Error, Result};

use super::report::Arm;
use super::shift::{make_shifted_testset, shifted_name};

/// Adult training data after speed perturbation.
pub const ADULT_SP: &str = "adult-sp";

/// One utterance with everything the harness needs.
#[derive(Debug, Clone)]
pub struct UttData {
    pub utt_id: String,
    pub speaker_id: String,
    pub group: SpeakerGroup,
    pub transcript: Vec<usize>,
    pub feats: FeatureMatrix,
    pub pitch: PitchTrack,
}

/// Utterances of one manifest, in manifest order.
#[derive(Debug, Clone)]
pub struct DataSet {
    pub name: String,
    pub utts: Vec<UttData>,
}

fn track_to_matrix(t: &PitchTrack) -> Array2<f64> {
    Array2::from_shape_fn((t.len(), 3), |(i, j)| {
        let f = &t.frames[i];
        [f.f0, f.nccf, f64::from(u8::from(f.voiced))][j]
    })
}

fn matrix_to_track(m: &Array2<f64>, frame_shift_ms: u32) -> PitchTrack {
    PitchTrack {
        frames: m
            .outer_iter()
            .map(|r| PitchFrame {
                f0: r[0],
                nccf: r[1],
                voiced: r[2] > 0.5,
            })
            .collect(),
        frame_shift_ms,
    }
}

/// Stage driver bound to a config and an output directory.
pub struct Pipeline {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub inv: PhoneInventory,
}

impl Pipeline {
    pub fn new(cfg: RunConfig, out: impl Into<PathBuf>) -> Self {
        Self {
            cfg,
            out: out.into(),
            inv: PhoneInventory::default(),
        }
    }

    pub fn topology(&self) -> HmmTopology {
        HmmTopology::standard(self.inv.len())
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.out.join("corpus")
    }

    fn path(&self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let p = self.out.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(p)
    }

    /// Manifest names (`corpus.split`) used to train the acoustic models.
    pub fn train_sets(&self) -> Vec<String> {
        let adult = if self.cfg.matrix.triple_adult { ADULT_SP } else { "adult" };
        vec![format!("{adult}.train"), "child.train".into()]
    }

    /// Adaptation set of an arm: in-domain child data or accented child data.
    pub fn adapt_set(&self, arm: Arm) -> Result<&'static str> {
        match arm {
            Arm::AdaptChild => Ok("child.train"),
            Arm::AdaptAccent => Ok("accent.train"),
            Arm::Seed => Err(Error::Invalid("the seed arm has no adaptation set".into())),
        }
    }

    /// Test manifests in report order, keyed by their report name.
    pub fn test_sets(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("child".to_string(), "child.test".to_string()),
            ("adult".into(), "adult.test".into()),
        ];
        for &c in &self.cfg.matrix.shift_cents {
            let n = shifted_name("adult", c);
            v.push((n.clone(), format!("{n}.test")));
        }
        v.push(("accent".into(), "accent.test".into()));
        v
    }

    /// Every manifest with features: training, adaptation and test sets
    /// plus the unperturbed adult training set (for pitch statistics).
    pub fn all_sets(&self) -> Vec<String> {
        let mut v = vec!["adult.train".to_string()];
        for s in self.train_sets().into_iter().chain(["accent.train".to_string()]) {
            if !v.contains(&s) {
                v.push(s);
            }
        }
        v.extend(self.test_sets().into_iter().map(|(_, m)| m));
        v
    }

    pub fn manifest(&self, name: &str) -> Result<Manifest> {
        Manifest::read(self.corpus_dir().join(format!("{name}.tsv")))
    }

    pub fn synth_corpus(&self) -> Result<()> {
        let set = build_corpus(&self.cfg.corpus, &self.corpus_dir(), &self.inv)?;
        info!("corpus: {} manifests, {} utterances", set.manifests.len(), set.timings.len());
        Ok(())
    }

    /// Speed-perturbed adult training set and pitch-shifted adult test sets.
    pub fn augment(&self) -> Result<()> {
        if self.cfg.matrix.triple_adult {
            let mut m = triple_with_perturbation(&self.manifest("adult.train")?, sub_seed(self.cfg.corpus.seed, 7))?;
            m.corpus = ADULT_SP.into();
            m.write(self.corpus_dir().join(format!("{}.tsv", m.name())))?;
            info!("{}: {} utterances", m.name(), m.len());
        }
        for m in make_shifted_testset(&self.manifest("adult.test")?, &self.cfg.matrix.shift_cents)? {
            m.write(self.corpus_dir().join(format!("{}.tsv", m.name())))?;
        }
        Ok(())
    }

    fn features_path(&self, set: &str) -> Result<PathBuf> {
        self.path(format!("features/{set}.bin"))
    }

    /// MFCCs and pitch tracks of every manifest.
    pub fn features(&self) -> Result<()> {
        for set in self.all_sets() {
            let m = self.manifest(&set)?;
            let items: Vec<(String, Array2<f64>, Array2<f64>)> = m
                .records
                .par_iter()
                .map(|r| {
                    let w = read_wav(m.wav_path(r))?;
                    let f = extract_mfcc(&w, &self.cfg.mfcc)?;
                    Ok((r.utt_id.clone(), f.frames, track_to_matrix(&track_pitch(&w))))
                })
                .collect::<Result<_>>()?;
            let mut b = Bundle::new("features");
            for (id, f, p) in items {
                b.insert(format!("{id}/mfcc"), f);
                b.insert(format!("{id}/pitch"), p);
            }
            b.save(self.features_path(&set)?)?;
        }
        Ok(())
    }

    pub fn load_set(&self, set: &str) -> Result<DataSet> {
        let m = self.manifest(set)?;
        let b = Bundle::load(self.features_path(set)?)?.expect_kind("features")?;
        let utts = m
            .records
            .iter()
            .map(|r| {
                let mut feats = FeatureMatrix::from_frames(b.get(&format!("{}/mfcc", r.utt_id))?.clone());
                feats.frame_shift_ms = self.cfg.mfcc.frame_shift_ms;
                feats.frame_length_ms = self.cfg.mfcc.frame_length_ms;
                Ok(UttData {
                    utt_id: r.utt_id.clone(),
                    speaker_id: r.speaker_id.clone(),
                    group: r.group,
                    transcript: self.inv.encode(&r.transcript)?,
                    pitch: matrix_to_track(b.get(&format!("{}/pitch", r.utt_id))?, self.cfg.mfcc.frame_shift_ms),
                    feats,
                })
            })
            .collect::<Result<_>>()?;
        Ok(DataSet { name: set.to_string(), utts })
    }

    fn load_sets(&self, names: &[String]) -> Result<Vec<DataSet>> {
        names.iter().map(|n| self.load_set(n)).collect()
    }

    /// Standardised p-vectors of every set; statistics from the training sets.
    pub fn pvectors(&self) -> Result<()> {
        let train = self.load_sets(&self.train_sets())?;
        let raw: Vec<Array2<f64>> = train.iter().flat_map(|d| d.utts.iter().map(|u| compute_pvector(&u.pitch))).collect();
        let stats = PVectorStats::fit(&raw);
        stats.to_bundle().save(self.path("aux/pvector-stats.bin")?)?;
        for set in self.all_sets() {
            let d = self.load_set(&set)?;
            let mut b = Bundle::new("pvectors");
            for u in &d.utts {
                b.insert(u.utt_id.clone(), stats.apply(&compute_pvector(&u.pitch)));
            }
            b.save(self.path(format!("aux/{set}.pvec.bin"))?)?;
        }
        Ok(())
    }

    /// Trains the speaker embedder on the training sets and extracts
    /// per-chunk embeddings for every set.
    pub fn spkembed(&self) -> Result<()> {
        let train = self.load_sets(&self.train_sets())?;
        let feats: Vec<&FeatureMatrix> = train.iter().flat_map(|d| d.utts.iter().map(|u| &u.feats)).collect();
        let (emb, rep) = SpeakerEmbedder::train(&feats, &self.cfg.embed, sub_seed(self.cfg.corpus.seed, 11))?;
        info!(
            "speaker embedder: {} UBM rows, {} supervectors, UBM loglik {:?}",
            rep.ubm_rows, rep.sv_rows, rep.ubm_log.loglik
        );
        emb.to_bundle().save(self.path("aux/embedder.bin")?)?;
        for set in self.all_sets() {
            let d = self.load_set(&set)?;
            let vecs: Vec<Array2<f64>> = d.utts.par_iter().map(|u| emb.extract(&u.feats)).collect();
            let mut b = Bundle::new("speaker-vectors");
            for (u, v) in d.utts.iter().zip(vecs) {
                b.insert(u.utt_id.clone(), v);
            }
            b.save(self.path(format!("aux/{set}.spk.bin"))?)?;
        }
        Ok(())
    }

    pub fn train_gmm(&self) -> Result<()> {
        let train = self.load_sets(&self.train_sets())?;
        let data: Vec<TrainUtt> = train
            .iter()
            .flat_map(|d| d.utts.iter())
            .map(|u| TrainUtt {
                id: &u.utt_id,
                feats: u.feats.frames.view(),
                transcript: &u.transcript,
            })
            .collect();
        let m0 = flat_start(&self.topology(), &data)?;
        let (model, log) = viterbi_train(&m0, &data, self.cfg.matrix.gmm_iters)?;
        if let Some(l) = log.last() {
            info!("gmm: {} iterations, final loglik/frame {:.4}", log.len(), l.loglik / l.frames as f64);
        }
        model.save(self.path("gmm.bin")?)
    }

    fn ali_path(&self, set: &str) -> Result<PathBuf> {
        self.path(format!("ali/{set}.ali"))
    }

    /// Forced alignments of the training and adaptation sets.
    pub fn align(&self) -> Result<()> {
        let gmm = GmmHmmModel::load(self.out.join("gmm.bin"))?;
        let mut sets = self.train_sets();
        for arm in [Arm::AdaptChild, Arm::AdaptAccent] {
            let s = self.adapt_set(arm)?;
            if !sets.iter().any(|x| x == s) {
                sets.push(s.to_string());
            }
        }
        for set in sets {
            let d = self.load_set(&set)?;
            let alis: Vec<Option<Alignment>> = d
                .utts
                .par_iter()
                .map(|u| match gmm.force_align(u.feats.frames.view(), &u.transcript) {
                    Ok((states, _)) => Some(Alignment {
                        utt_id: u.utt_id.clone(),
                        states,
                    }),
                    Err(e) => {
                        warn!("{}: alignment failed: {e}", u.utt_id);
                        None
                    }
                })
                .collect();
            let alis: Vec<Alignment> = alis.into_iter().flatten().collect();
            write_alignments(self.ali_path(&set)?, &alis)?;
        }
        Ok(())
    }

    /// Phone bigram from the training transcripts plus both denominator graphs.
    pub fn graphs(&self) -> Result<()> {
        let train = self.load_sets(&self.train_sets())?;
        let lm = PhoneBigram::estimate(
            self.inv.len(),
            train.iter().flat_map(|d| d.utts.iter().map(|u| u.transcript.as_slice())),
        );
        lm.to_bundle().save(self.path("graphs/lm.bin")?)?;
        let topo = self.topology();
        build_denominator_graph(&lm, &topo, DenominatorKind::Chunk).write(self.path("graphs/den-chunk.txt")?)?;
        build_denominator_graph(&lm, &topo, DenominatorKind::Utterance).write(self.path("graphs/den-utt.txt")?)?;
        Ok(())
    }

    /// Runs every preparation stage in order.
    pub fn prepare(&self) -> Result<()> {
        self.synth_corpus()?;
        self.augment()?;
        self.features()?;
        self.pvectors()?;
        self.spkembed()?;
        self.train_gmm()?;
        self.align()?;
        self.graphs()
    }

    /// Loads the artifacts of all preparation stages.
    pub fn load(&self) -> Result<Prepared> {
        let mut names = self.all_sets();
        names.sort();
        let mut sets = BTreeMap::new();
        let mut spk = BTreeMap::new();
        let mut pvec = BTreeMap::new();
        for n in &names {
            sets.insert(n.clone(), self.load_set(n)?);
            let s = Bundle::load(self.out.join(format!("aux/{n}.spk.bin")))?.expect_kind("speaker-vectors")?;
            let p = Bundle::load(self.out.join(format!("aux/{n}.pvec.bin")))?.expect_kind("pvectors")?;
            for u in &sets[n].utts {
                spk.insert(u.utt_id.clone(), s.get(&u.utt_id)?.clone());
                pvec.insert(u.utt_id.clone(), p.get(&u.utt_id)?.clone());
            }
        }
        let mut alignments = BTreeMap::new();
        for entry in std::fs::read_dir(self.out.join("ali")).map_err(|e| Error::io(self.out.join("ali"), e))? {
            let path = entry.map_err(|e| Error::io(self.out.join("ali"), e))?.path();
            for a in read_alignments(&path)? {
                alignments.insert(a.utt_id, a.states);
            }
        }
        let lm = PhoneBigram::from_bundle(&Bundle::load(self.out.join("graphs/lm.bin"))?)?;
        let topo = self.topology();
        let embed_dim = SpeakerEmbedder::from_bundle(&Bundle::load(self.out.join("aux/embedder.bin"))?)?.embed_dim();
        let train_feats: Vec<_> = self
            .train_sets()
            .iter()
            .flat_map(|n| sets[n].utts.iter().map(|u| u.feats.frames.view()))
            .collect();
        let norm = FeatureNorm::fit(train_feats);
        Ok(Prepared {
            den_utt: StateGraph::read(self.out.join("graphs/den-utt.txt"))?,
            ctx: TrainContext::new(topo, lm),
            sets,
            spk,
            pvec,
            alignments,
            embed_dim,
            norm,
        })
    }
}

/// In-memory view of a prepared output directory.
pub struct Prepared {
    pub sets: BTreeMap<String, DataSet>,
    /// Per-chunk speaker embeddings by utterance.
    pub spk: BTreeMap<String, Array2<f64>>,
    /// Per-chunk standardised p-vectors by utterance.
    pub pvec: BTreeMap<String, Array2<f64>>,
    pub alignments: BTreeMap<String, Vec<usize>>,
    pub ctx: TrainContext,
    pub den_utt: StateGraph,
    pub embed_dim: usize,
    pub norm: FeatureNorm,
}

impl Prepared {
    pub fn set(&self, name: &str) -> Result<&DataSet> {
        self.sets
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("unknown data set {name}")))
    }

    /// Frame-level auxiliary input of an utterance for `mode`.
    pub fn aux(&self, utt: &UttData, mode: AuxMode) -> Result<Option<Array2<f64>>> {
        if mode == AuxMode::None {
            return Ok(None);
        }
        let t = utt.feats.num_frames();
        let get = |map: &BTreeMap<String, Array2<f64>>| {
            map.get(&utt.utt_id)
                .map(|c| expand_to_frames(c, t))
                .ok_or_else(|| Error::Invalid(format!("{}: missing auxiliary vectors", utt.utt_id)))
        };
        let s = mode.uses_speaker().then(|| get(&self.spk)).transpose()?;
        let p = mode.uses_pitch().then(|| get(&self.pvec)).transpose()?;
        concat_aux(s.as_ref(), p.as_ref()).map(Some)
    }

    /// Aligned training sequences of the named sets; unaligned utterances
    /// are left out.
    pub fn train_seqs(&self, names: &[String], mode: AuxMode) -> Result<Vec<TrainSeq>> {
        let mut out = Vec::new();
        for n in names {
            for u in &self.set(n)?.utts {
                let Some(states) = self.alignments.get(&u.utt_id) else {
                    continue;
                };
                out.push(TrainSeq {
                    utt_id: u.utt_id.clone(),
                    feats: u.feats.frames.clone(),
                    aux: self.aux(u, mode)?,
                    states: states.clone(),
                });
            }
        }
        Ok(out)
    }

    /// Total frames of the named sets.
    pub fn frames(&self, names: &[String]) -> usize {
        names
            .iter()
            .filter_map(|n| self.sets.get(n))
            .flat_map(|d| d.utts.iter())
            .map(|u| u.feats.frames.len_of(Axis(0)))
            .sum()
    }
}

/// Report name of a manifest name, e.g. `adult+300.test` -> `adult+300`.
pub fn corpus_of(set: &str) -> &str {
    set.rsplit_once('.').map_or(set, |(c, _)| c)
}
