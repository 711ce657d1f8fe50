use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Condition, FdcaeModel, LossBreakdown, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::corpus::sub_seed;
use crate::graph::{build_chunk_numerator, build_denominator_graph, lfmmi_objective, DenominatorKind, PhoneBigram, StateGraph};
use crate::hmm::HmmTopology;
use crate::nnet::{apply_bn_updates, Adam, AdamConfig, BnUpdate, ParamStore, Tape};
use crate::{Error, Result};

/// One training utterance: raw features, per-frame aux vectors and the
/// aligned state per frame.
#[derive(Debug, Clone)]
pub struct TrainSeq {
    pub utt_id: String,
    pub feats: Array2<f64>,
    pub aux: Option<Array2<f64>>,
    pub states: Vec<usize>,
}

/// A fixed-length window of a training utterance and its numerator graph.
#[derive(Debug, Clone)]
pub struct Chunk {
    pub seq: usize,
    pub start: usize,
    pub len: usize,
    pub num: StateGraph,
}

/// Shared graph material for sequence training.
#[derive(Debug, Clone)]
pub struct TrainContext {
    pub topology: HmmTopology,
    pub lm: PhoneBigram,
    pub den: StateGraph,
}

impl TrainContext {
    pub fn new(topology: HmmTopology, lm: PhoneBigram) -> Self {
        let den = build_denominator_graph(&lm, &topology, DenominatorKind::Chunk);
        Self { topology, lm, den }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub chunk_frames: usize,
    pub chunks_per_batch: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Learning-rate multiplier used by adaptation.
    pub adapt_lr_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            chunk_frames: 150,
            chunks_per_batch: 8,
            epochs: 10,
            adam: AdamConfig::default(),
            adapt_lr_factor: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Every minibatch in order, `total` as optimised on the tape.
    pub batches: Vec<LossBreakdown>,
    pub skipped_steps: u64,
    pub skipped_chunks: usize,
}

/// Cuts every sequence into `chunk_frames` windows; the final window of a
/// sequence may be shorter and is padded at batch time.
pub fn make_chunks(seqs: &[TrainSeq], chunk_frames: usize, ctx: &TrainContext) -> Result<Vec<Chunk>> {
    let mut out = Vec::new();
    for (i, sq) in seqs.iter().enumerate() {
        let t = sq.feats.nrows();
        if sq.states.len() != t {
            return Err(Error::Shape(format!("{}: {} labels for {t} frames", sq.utt_id, sq.states.len())));
        }
        let mut start = 0;
        while start < t {
            let len = chunk_frames.min(t - start);
            let num = build_chunk_numerator(&sq.states[start..start + len], &ctx.topology, &ctx.lm)?;
            out.push(Chunk { seq: i, start, len, num });
            start += len;
        }
    }
    Ok(out)
}

fn check_aux(model: &FdcaeModel, seqs: &[TrainSeq]) -> Result<()> {
    for sq in seqs {
        match (&sq.aux, model.aux_mode().uses_speaker() || model.aux_mode().uses_pitch()) {
            (None, false) => {}
            (Some(a), true) if a.ncols() == model.encoder.aux_dim && a.nrows() == sq.feats.nrows() => {}
            _ => {
                return Err(Error::Invalid(format!(
                    "{}: aux vectors do not match aux mode {} ({} dims)",
                    sq.utt_id,
                    model.aux_mode(),
                    model.encoder.aux_dim
                )))
            }
        }
    }
    Ok(())
}

struct Batch {
    feats: Array2<f64>,
    aux: Option<Array2<f64>>,
    targets: Vec<usize>,
    mask: Vec<bool>,
}

fn assemble(seqs: &[TrainSeq], chunks: &[&Chunk], c: usize) -> Batch {
    let d = seqs[0].feats.ncols();
    let ad = seqs[0].aux.as_ref().map(|a| a.ncols());
    let rows = chunks.len() * c;
    let mut feats = Array2::zeros((rows, d));
    let mut aux = ad.map(|ad| Array2::zeros((rows, ad)));
    let mut targets = Vec::with_capacity(rows);
    let mut mask = Vec::with_capacity(rows);
    for (k, ch) in chunks.iter().enumerate() {
        let sq = &seqs[ch.seq];
        for r in 0..c {
            // past the end of a short chunk the last frame is repeated
            let src = ch.start + r.min(ch.len - 1);
            feats.row_mut(k * c + r).assign(&sq.feats.row(src));
            if let (Some(dst), Some(a)) = (aux.as_mut(), sq.aux.as_ref()) {
                dst.row_mut(k * c + r).assign(&a.row(src));
            }
            targets.push(sq.states[src]);
            mask.push(r < ch.len);
        }
    }
    Batch { feats, aux, targets, mask }
}

struct StepOut {
    loss: LossBreakdown,
    stepped: bool,
    skipped_chunks: usize,
}

/// Loss, parameter gradients and normalisation statistics of one minibatch.
pub struct BatchResult {
    pub loss: LossBreakdown,
    pub grads: BTreeMap<String, Array2<f64>>,
    pub bn_updates: Vec<BnUpdate>,
    pub skipped_chunks: usize,
}

/// Evaluates the joint objective on `chunks` with parameters `params`
/// (which must match `model`'s layout) and differentiates it.
pub fn batch_objective(
    model: &FdcaeModel,
    params: &ParamStore,
    seqs: &[TrainSeq],
    chunks: &[&Chunk],
    ctx: &TrainContext,
    cfg: &TrainConfig,
) -> Result<BatchResult> {
    let c = cfg.chunk_frames;
    let batch = assemble(seqs, chunks, c);
    let frames = batch.mask.iter().filter(|&&m| m).count();
    let seq_lens = vec![c; chunks.len()];
    let mut tape = Tape::new(params, true);
    let x = tape.input(model.norm.apply(batch.feats.view()));
    let a = batch.aux.map(|a| tape.input(a));
    let enc = model.encoder.forward(&mut tape, x, a, &seq_lens)?;
    let logp = tape.log_softmax(enc.logits);
    let ce = tape.nll_sum(logp, &batch.targets, &batch.mask);

    let logits = tape.value(enc.logits);
    let results: Vec<Option<(f64, Array2<f64>)>> = chunks
        .par_iter()
        .enumerate()
        .map(|(k, ch)| {
            let rows = logits.slice(s![k * c..k * c + ch.len, ..]);
            match lfmmi_objective(&ch.num, &ctx.den, rows) {
                Ok(r) => Some((r.value, r.grad)),
                Err(e) => {
                    warn!("LF-MMI skipped for chunk of {} at {}: {e}", seqs[ch.seq].utt_id, ch.start);
                    None
                }
            }
        })
        .collect();
    let mut grad = Array2::zeros(logits.dim());
    let mut lf_value = 0.0;
    let mut skipped_chunks = 0;
    for (k, (r, ch)) in results.into_iter().zip(chunks).enumerate() {
        match r {
            Some((v, g)) => {
                lf_value += v;
                grad.slice_mut(s![k * c..k * c + ch.len, ..]).assign(&g);
            }
            None => skipped_chunks += 1,
        }
    }
    let lf = tape.external(enc.logits, lf_value, grad);

    let ce_term = tape.scale(ce, cfg.alpha);
    let lf_term = tape.scale(lf, -1.0);
    let mut total = tape.add(ce_term, lf_term);
    let mut mse_value = 0.0;
    if let Some(dec) = &model.decoder {
        let r = dec.forward(&mut tape, enc.pcode, a)?;
        let mse = tape.mse_sum(r, &batch.feats, &batch.mask);
        mse_value = tape.scalar(mse);
        let mse_term = tape.scale(mse, cfg.beta);
        total = tape.add(total, mse_term);
    }
    let loss = LossBreakdown {
        f_ce: tape.scalar(ce),
        f_lfmmi: lf_value,
        f_mse: mse_value,
        total: tape.scalar(total),
        frames,
    };
    if !loss.total.is_finite() {
        return Err(Error::Diverged(format!("non-finite total loss {loss:?}")));
    }
    let grads = tape.backward(total).params;
    Ok(BatchResult {
        loss,
        grads,
        bn_updates: std::mem::take(&mut tape.bn_updates),
        skipped_chunks,
    })
}

fn step(
    model: &mut FdcaeModel,
    opt: &mut Adam,
    seqs: &[TrainSeq],
    chunks: &[&Chunk],
    ctx: &TrainContext,
    cfg: &TrainConfig,
) -> Result<StepOut> {
    let r = batch_objective(model, &model.params, seqs, chunks, ctx, cfg)?;
    let stepped = opt.step(&mut model.params, &r.grads);
    apply_bn_updates(&mut model.params, &r.bn_updates);
    Ok(StepOut {
        loss: r.loss,
        stepped,
        skipped_chunks: r.skipped_chunks,
    })
}

fn checkpoint_paths(dir: &Path, epoch: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("epoch{epoch:03}.encoder.bin")),
        dir.join(format!("epoch{epoch:03}.decoder.bin")),
    )
}

fn run(
    model: &mut FdcaeModel,
    seqs: &[TrainSeq],
    ctx: &TrainContext,
    cfg: &TrainConfig,
    lr: f64,
    seed: u64,
    checkpoints: Option<&Path>,
) -> Result<TrainReport> {
    check_aux(model, seqs)?;
    if model.condition == Condition::Baseline && model.decoder.is_some() {
        return Err(Error::Invalid("baseline model carries a decoder".into()));
    }
    let mut report = TrainReport::default();
    if cfg.epochs == 0 || seqs.is_empty() {
        return Ok(report);
    }
    let chunks = make_chunks(seqs, cfg.chunk_frames, ctx)?;
    let mut opt = Adam::new(AdamConfig { lr, ..cfg.adam });
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<&Chunk> = chunks.iter().collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(seed, epoch as u64)));
        let mut sum = LossBreakdown::default();
        let lr_used = opt.lr;
        for batch in order.chunks(cfg.chunks_per_batch.max(1)) {
            let out = match step(model, &mut opt, seqs, batch, ctx, cfg) {
                Ok(o) => o,
                Err(e) => {
                    if let Some(dir) = checkpoints {
                        let (enc, dec) = checkpoint_paths(dir, epoch);
                        let enc = enc.with_extension("diverged.bin");
                        model.save(&enc, Some(&dec.with_extension("diverged.bin")))?;
                    }
                    return Err(e);
                }
            };
            report.skipped_chunks += out.skipped_chunks;
            if !out.stepped {
                report.skipped_steps += 1;
            }
            sum.accumulate(&out.loss);
            report.batches.push(out.loss);
        }
        opt.end_epoch();
        info!(
            "epoch {epoch}: ce/frame {:.4} lfmmi/frame {:.4} mse/frame {:.4}",
            sum.f_ce / sum.frames as f64,
            sum.f_lfmmi / sum.frames as f64,
            sum.f_mse / sum.frames as f64
        );
        report.epochs.push(EpochLog {
            epoch,
            lr: lr_used,
            loss: sum,
        });
        if let Some(dir) = checkpoints {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let (enc, dec) = checkpoint_paths(dir, epoch);
            model.save(enc, Some(&dec))?;
        }
    }
    Ok(report)
}

/// Trains `model` in place for `cfg.epochs` epochs.
pub fn train(
    model: &mut FdcaeModel,
    seqs: &[TrainSeq],
    ctx: &TrainContext,
    cfg: &TrainConfig,
    seed: u64,
    checkpoints: Option<&Path>,
) -> Result<TrainReport> {
    run(model, seqs, ctx, cfg, cfg.adam.lr, seed, checkpoints)
}

/// Continues training a seed model on new data with a reduced learning
/// rate and a fresh optimiser state.
pub fn adapt(
    model: &mut FdcaeModel,
    seqs: &[TrainSeq],
    ctx: &TrainContext,
    cfg: &TrainConfig,
    epochs: usize,
    seed: u64,
) -> Result<TrainReport> {
    let cfg = TrainConfig {
        epochs,
        ..cfg.clone()
    };
    run(model, seqs, ctx, &cfg, cfg.adam.lr * cfg.adapt_lr_factor, sub_seed(seed, 0xada), None)
}
