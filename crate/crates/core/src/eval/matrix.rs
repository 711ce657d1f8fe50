use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;

use crate::embed::AuxMode;
use crate::fdcae::{adapt, train, Condition, FdcaeModel, TrainConfig, TrainReport};
use crate::pitch::compute_speaker_pitch_stats;
use crate::{Error, Result};

use super::data::{DataSet, Pipeline, Prepared, ADULT_SP};
use super::decode::decode_utterance;
use super::report::{emit_report, Arm, DecoderFreeCheck, LossRow, PitchRow, ResultRow, RunReport};
use super::score::ErrorCount;

/// File stem of a trained model, e.g. `fdcae-i+p-s2`.
pub fn model_name(cond: Condition, aux: AuxMode, seed: u64) -> String {
    format!("{}-{}-s{seed}", cond.as_str(), aux.as_str())
}

pub fn model_paths(p: &Pipeline, name: &str) -> (PathBuf, PathBuf) {
    let dir = p.out.join("models");
    (dir.join(format!("{name}.encoder.bin")), dir.join(format!("{name}.decoder.bin")))
}

/// Decodes a whole test set; returns corpus-level error counts and the
/// hypotheses in utterance order.
pub fn decode_set(model: &FdcaeModel, d: &Prepared, set: &DataSet) -> Result<(ErrorCount, Vec<Vec<usize>>)> {
    let mode = model.aux_mode();
    let hyps: Vec<Vec<usize>> = set
        .utts
        .par_iter()
        .map(|u| {
            let aux = d.aux(u, mode)?;
            let r = decode_utterance(model, &u.utt_id, u.feats.frames.view(), aux.as_ref(), &d.den_utt, &d.ctx.topology)?;
            Ok(r.phones)
        })
        .collect::<Result<_>>()?;
    let mut count = ErrorCount::default();
    for (u, h) in set.utts.iter().zip(&hyps) {
        let reference: Vec<usize> = u.transcript.iter().copied().filter(|&p| p != super::decode::SIL_PHONE).collect();
        count.add(h, &reference);
    }
    Ok((count, hyps))
}

fn loss_rows(cond: Condition, aux: AuxMode, arm: Arm, seed: u64, rep: &TrainReport) -> Vec<LossRow> {
    rep.epochs
        .iter()
        .map(|e| LossRow {
            condition: cond,
            aux,
            arm,
            seed,
            epoch: e.epoch,
            lr: e.lr,
            f_ce: e.loss.f_ce,
            f_lfmmi: e.loss.f_lfmmi,
            f_mse: e.loss.f_mse,
            total: e.loss.total,
            frames: e.loss.frames,
        })
        .collect()
}

#[derive(Default)]
struct CellOut {
    results: Vec<ResultRow>,
    losses: Vec<LossRow>,
    decoder_free: Option<DecoderFreeCheck>,
}

struct Cell {
    cond: Condition,
    aux: AuxMode,
    seed: u64,
}

impl Cell {
    fn row(&self, arm: Arm, test_set: &str, per: Result<f64>) -> ResultRow {
        let (per, status) = match per {
            Ok(v) => (Some(v), "ok".to_string()),
            Err(e) => (None, format!("skipped: {e}")),
        };
        ResultRow {
            condition: self.cond,
            aux: self.aux,
            arm,
            test_set: test_set.to_string(),
            seed: self.seed,
            per,
            status,
        }
    }
}

fn evaluate(model: &FdcaeModel, d: &Prepared, set: &str) -> Result<f64> {
    decode_set(model, d, d.set(set)?)?.0.per()
}

fn run_cell(p: &Pipeline, d: &Prepared, cell: &Cell, tcfg: &TrainConfig) -> CellOut {
    let name = model_name(cell.cond, cell.aux, cell.seed);
    let tests = p.test_sets();
    let mut out = CellOut::default();
    let trained = (|| -> Result<(FdcaeModel, TrainReport)> {
        let seqs = d.train_seqs(&p.train_sets(), cell.aux)?;
        let mut model = FdcaeModel::new(
            &p.cfg.model,
            cell.cond,
            cell.aux,
            cell.aux.dim(d.embed_dim),
            d.ctx.topology.num_states(),
            d.norm.clone(),
            cell.seed,
        );
        let rep = train(&mut model, &seqs, &d.ctx, tcfg, cell.seed, None)?;
        let (enc, dec) = model_paths(p, &name);
        std::fs::create_dir_all(enc.parent().unwrap()).map_err(|e| Error::io(&enc, e))?;
        model.save(&enc, model.decoder.is_some().then_some(dec.as_path()))?;
        Ok((model, rep))
    })();
    let (model, rep) = match trained {
        Ok(x) => x,
        Err(e) => {
            warn!("{name}: training failed: {e}");
            let reason = e.to_string();
            for (t, _) in &tests {
                out.results.push(cell.row(Arm::Seed, t, Err(Error::Invalid(reason.clone()))));
            }
            return out;
        }
    };
    info!("{name}: trained, {} skipped steps", rep.skipped_steps);
    out.losses.extend(loss_rows(cell.cond, cell.aux, Arm::Seed, cell.seed, &rep));
    for (t, set) in &tests {
        out.results.push(cell.row(Arm::Seed, t, evaluate(&model, d, set)));
    }

    if model.decoder.is_some() {
        let check = (|| -> Result<bool> {
            let (enc, _) = model_paths(p, &name);
            let bare = FdcaeModel::load(&enc, None)?;
            let set = d.set("child.test")?;
            Ok(decode_set(&model, d, set)?.1 == decode_set(&bare, d, set)?.1)
        })();
        out.decoder_free = Some(DecoderFreeCheck {
            model: name.clone(),
            identical: check.unwrap_or(false),
        });
    }

    if p.cfg.matrix.adapt_aux_modes.contains(&cell.aux) {
        for arm in [Arm::AdaptChild, Arm::AdaptAccent] {
            let test = if arm == Arm::AdaptChild { "child" } else { "accent" };
            let mut m = model.clone();
            let adapted = p
                .adapt_set(arm)
                .and_then(|set| d.train_seqs(&[set.to_string()], cell.aux))
                .and_then(|seqs| adapt(&mut m, &seqs, &d.ctx, tcfg, p.cfg.train.adapt_epochs, cell.seed));
            match adapted {
                Ok(rep) => {
                    out.losses.extend(loss_rows(cell.cond, cell.aux, arm, cell.seed, &rep));
                    out.results.push(cell.row(arm, test, evaluate(&m, d, &format!("{test}.test"))));
                }
                Err(e) => out.results.push(cell.row(arm, test, Err(e))),
            }
        }
    }
    out
}

/// Per-speaker pitch statistics of every unperturbed set.
pub fn pitch_rows(d: &Prepared) -> Vec<PitchRow> {
    let mut rows = Vec::new();
    for set in d.sets.values().filter(|s| !s.name.starts_with(ADULT_SP)) {
        let stats = compute_speaker_pitch_stats(set.utts.iter().map(|u| (u.speaker_id.as_str(), &u.pitch)));
        for (spk, st) in stats {
            let group = set
                .utts
                .iter()
                .find(|u| u.speaker_id == spk)
                .map(|u| u.group.as_str())
                .unwrap_or_default();
            rows.push(PitchRow {
                speaker: spk,
                group: group.to_string(),
                set: set.name.clone(),
                stats: st,
            });
        }
    }
    rows
}

/// Trains and evaluates every (seed, condition, aux mode) cell of the
/// configured matrix. Cells run in parallel; rows come out in a fixed
/// order regardless of scheduling.
pub fn run_matrix(p: &Pipeline, d: &Prepared) -> RunReport {
    let m = &p.cfg.matrix;
    let tcfg = p.cfg.train.to_train_config();
    let cells: Vec<Cell> = m
        .seeds
        .iter()
        .flat_map(|&seed| {
            m.conditions
                .iter()
                .flat_map(move |&cond| m.aux_modes.iter().map(move |&aux| Cell { cond, aux, seed }))
        })
        .collect();
    info!(
        "matrix: {} cells, {} training frames",
        cells.len(),
        d.frames(&p.train_sets())
    );
    let outs: Vec<CellOut> = cells.par_iter().map(|c| run_cell(p, d, c, &tcfg)).collect();
    let mut report = RunReport {
        pitch: pitch_rows(d),
        config_echo: format!(
            "{}\n# beta used in training: {:e}\n",
            p.cfg.to_toml(),
            p.cfg.train.beta_used()
        ),
        ..Default::default()
    };
    for o in outs {
        report.results.extend(o.results);
        report.losses.extend(o.losses);
        report.decoder_free.extend(o.decoder_free);
    }
    report
}

/// Prepares the data, runs the matrix and writes the report into
/// `<out>/report`.
pub fn run_all(p: &Pipeline) -> Result<RunReport> {
    p.prepare()?;
    let d = p.load()?;
    let report = run_matrix(p, &d);
    emit_report(&report, &p.out.join("report"))?;
    for r in report.skipped() {
        warn!(
            "skipped cell {} {} {} {} seed {}: {}",
            r.condition, r.aux, r.arm, r.test_set, r.seed, r.status
        );
    }
    Ok(report)
}
