use log::warn;
use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::{viterbi_composite, Alignment, DiagGmm, HmmTopology};
use crate::store::Bundle;
use crate::{Error, Result};

pub const MAX_COMPONENTS: usize = 8;
const SPLIT_ITERS: [usize; 3] = [4, 8, 12];
const MIN_FRAMES_PER_COMPONENT: f64 = 20.0;

/// One training utterance: features (`T x D`) and phone ids.
#[derive(Debug, Clone, Copy)]
pub struct TrainUtt<'a> {
    pub id: &'a str,
    pub feats: ArrayView2<'a, f64>,
    pub transcript: &'a [usize],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmHmmModel {
    pub topology: HmmTopology,
    pub gmms: Vec<DiagGmm>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainIterLog {
    pub iter: usize,
    /// Total aligned log-likelihood under the model entering this iteration.
    pub loglik: f64,
    pub frames: usize,
    pub split: bool,
}

impl GmmHmmModel {
    pub fn num_states(&self) -> usize {
        self.gmms.len()
    }

    /// Emission log-likelihoods `T x S`.
    pub fn state_logliks(&self, feats: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((feats.nrows(), self.num_states()));
        for (row, mut o) in feats.outer_iter().zip(out.outer_iter_mut()) {
            for (s, g) in self.gmms.iter().enumerate() {
                o[s] = g.loglik(row);
            }
        }
        out
    }

    pub fn force_align(&self, feats: ArrayView2<f64>, transcript: &[usize]) -> Result<(Vec<usize>, f64)> {
        let comp = self.topology.composite(transcript);
        let ll = self.state_logliks(feats);
        viterbi_composite(ll.view(), &comp, self.topology.log_self_loop(), self.topology.log_forward())
    }

    /// Aligns every utterance in parallel; utterances without a path are
    /// dropped with a warning.
    pub fn align_all(&self, data: &[TrainUtt]) -> Vec<(Alignment, f64)> {
        let results: Vec<_> = data
            .par_iter()
            .map(|u| {
                self.force_align(u.feats, u.transcript).map(|(states, ll)| {
                    (
                        Alignment {
                            utt_id: u.id.to_string(),
                            states,
                        },
                        ll,
                    )
                })
            })
            .collect();
        results
            .into_iter()
            .zip(data)
            .filter_map(|(r, u)| match r {
                Ok(a) => Some(a),
                Err(e) => {
                    warn!("skipping {}: {e}", u.id);
                    None
                }
            })
            .collect()
    }

    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::new("gmm-hmm");
        b.insert_scalar("num_phones", self.topology.num_phones() as f64);
        b.insert_scalar("sil_states", self.topology.phone_states(0).len() as f64);
        let other = if self.topology.num_phones() > 1 { self.topology.phone_states(1).len() } else { 3 };
        b.insert_scalar("phone_states", other as f64);
        b.insert_scalar("self_loop", self.topology.self_loop());
        for (s, g) in self.gmms.iter().enumerate() {
            b.insert_vec(format!("state{s}.weights"), g.weights.as_slice().unwrap());
            b.insert(format!("state{s}.means"), g.means.clone());
            b.insert(format!("state{s}.variances"), g.variances.clone());
        }
        b
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        let topology = HmmTopology::new(
            b.scalar("num_phones")? as usize,
            b.scalar("sil_states")? as usize,
            b.scalar("phone_states")? as usize,
            b.scalar("self_loop")?,
        );
        let gmms = (0..topology.num_states())
            .map(|s| {
                Ok(DiagGmm::new(
                    ndarray::Array1::from(b.vec(&format!("state{s}.weights"))?),
                    b.get(&format!("state{s}.means"))?.clone(),
                    b.get(&format!("state{s}.variances"))?.clone(),
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self { topology, gmms })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_bundle().save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bundle(&Bundle::load(path)?.expect_kind("gmm-hmm")?)
    }
}

/// Gathers the frames aligned to each state.
fn frames_per_state(num_states: usize, alis: &[(usize, Vec<usize>)]) -> Vec<Vec<usize>> {
    let mut idx = vec![Vec::new(); num_states];
    let mut offset = 0;
    for (_, states) in alis {
        for (t, &s) in states.iter().enumerate() {
            idx[s].push(offset + t);
        }
        offset += states.len();
    }
    idx
}

fn reestimate(prev: &[Option<DiagGmm>], data: &[TrainUtt], alis: &[(usize, Vec<usize>)], dim: usize) -> Vec<Option<DiagGmm>> {
    let rows: Vec<ArrayView2<f64>> = alis.iter().map(|(u, _)| data[*u].feats).collect();
    let all = if rows.is_empty() {
        Array2::zeros((0, dim))
    } else {
        ndarray::concatenate(Axis(0), &rows).expect("feature dims agree")
    };
    let idx = frames_per_state(prev.len(), alis);
    idx.par_iter()
        .enumerate()
        .map(|(s, frames)| {
            if frames.is_empty() {
                return prev[s].clone();
            }
            let x = all.select(Axis(0), frames);
            Some(match &prev[s] {
                Some(g) => g.reestimate(x.view()),
                None => DiagGmm::from_frames(x.view()),
            })
        })
        .collect()
}

fn finish(topology: &HmmTopology, gmms: Vec<Option<DiagGmm>>) -> Result<GmmHmmModel> {
    let gmms = gmms
        .into_iter()
        .enumerate()
        .map(|(s, g)| {
            g.ok_or_else(|| Error::Invalid(format!("state {s} (phone {}) received no frames", topology.phone_of(s))))
        })
        .collect::<Result<_>>()?;
    Ok(GmmHmmModel {
        topology: topology.clone(),
        gmms,
    })
}

/// Uniform segmentation of each utterance over its composite states, then a
/// single Gaussian per state.
pub fn flat_start(topology: &HmmTopology, data: &[TrainUtt]) -> Result<GmmHmmModel> {
    if data.is_empty() {
        return Err(Error::Invalid("flat start needs at least one utterance".into()));
    }
    let mut alis = Vec::new();
    for (u, utt) in data.iter().enumerate() {
        let comp = topology.composite(utt.transcript);
        let t = utt.feats.nrows();
        if t < comp.len() {
            warn!("flat start: skipping {} ({t} frames < {} states)", utt.id, comp.len());
            continue;
        }
        let states = (0..t).map(|i| comp[i * comp.len() / t]).collect();
        alis.push((u, states));
    }
    let dim = data[0].feats.ncols();
    finish(topology, reestimate(&vec![None; topology.num_states()], data, &alis, dim))
}

/// Viterbi training: align, re-estimate, and double the mixture size of each
/// state after iterations 4, 8 and 12.
pub fn viterbi_train(model: &GmmHmmModel, data: &[TrainUtt], iters: usize) -> Result<(GmmHmmModel, Vec<TrainIterLog>)> {
    let mut model = model.clone();
    let mut log = Vec::new();
    let index: std::collections::HashMap<&str, usize> = data.iter().enumerate().map(|(i, u)| (u.id, i)).collect();
    let dim = data.first().map_or(0, |u| u.feats.ncols());
    for iter in 1..=iters {
        let aligned = model.align_all(data);
        let loglik: f64 = aligned.iter().map(|(_, ll)| ll).sum();
        let alis: Vec<(usize, Vec<usize>)> = aligned
            .into_iter()
            .map(|(a, _)| (index[a.utt_id.as_str()], a.states))
            .collect();
        let frames: usize = alis.iter().map(|(_, s)| s.len()).sum();
        let prev: Vec<Option<DiagGmm>> = model.gmms.iter().cloned().map(Some).collect();
        let mut gmms = finish(&model.topology, reestimate(&prev, data, &alis, dim))?.gmms;
        let split = SPLIT_ITERS.contains(&iter);
        if split {
            let counts = frames_per_state(gmms.len(), &alis);
            for (g, c) in gmms.iter_mut().zip(&counts) {
                *g = g.split(MAX_COMPONENTS, c.len() as f64, MIN_FRAMES_PER_COMPONENT);
            }
        }
        model.gmms = gmms;
        log.push(TrainIterLog {
            iter,
            loglik,
            frames,
            split,
        });
    }
    Ok((model, log))
}
