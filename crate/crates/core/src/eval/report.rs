use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::AuxMode;
use crate::fdcae::Condition;
use crate::pitch::{SpeakerPitchStats, HIST_NUM_BINS};
use crate::{Error, Result};

/// Which model a result comes from: the trained seed model or one of its
/// adapted copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "seed")]
    Seed,
    #[serde(rename = "adapt-child")]
    AdaptChild,
    #[serde(rename = "adapt-accent")]
    AdaptAccent,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Seed => "seed",
            Arm::AdaptChild => "adapt-child",
            Arm::AdaptAccent => "adapt-accent",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Arm::Seed, Arm::AdaptChild, Arm::AdaptAccent]
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown arm '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub condition: Condition,
    pub aux: AuxMode,
    pub arm: Arm,
    pub test_set: String,
    pub seed: u64,
    /// Empty when the cell was skipped.
    pub per: Option<f64>,
    /// `ok`, or `skipped: <reason>`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub condition: Condition,
    pub aux: AuxMode,
    pub arm: Arm,
    pub seed: u64,
    pub epoch: usize,
    pub lr: f64,
    pub f_ce: f64,
    pub f_lfmmi: f64,
    pub f_mse: f64,
    pub total: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchRow {
    pub speaker: String,
    pub group: String,
    pub set: String,
    pub stats: SpeakerPitchStats,
}

/// Outcome of re-decoding a model from its encoder-only checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderFreeCheck {
    pub model: String,
    pub identical: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub results: Vec<ResultRow>,
    pub losses: Vec<LossRow>,
    pub pitch: Vec<PitchRow>,
    pub decoder_free: Vec<DecoderFreeCheck>,
    pub config_echo: String,
}

/// Mean and population standard deviation of the non-skipped cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

pub type SummaryKey = (Condition, AuxMode, Arm, String);

impl RunReport {
    pub fn per(&self, cond: Condition, aux: AuxMode, arm: Arm, test_set: &str, seed: u64) -> Option<f64> {
        self.results
            .iter()
            .find(|r| r.condition == cond && r.aux == aux && r.arm == arm && r.test_set == test_set && r.seed == seed)
            .and_then(|r| r.per)
    }

    pub fn summary(&self) -> BTreeMap<SummaryKey, Summary> {
        let mut acc: BTreeMap<SummaryKey, Vec<f64>> = BTreeMap::new();
        for r in &self.results {
            if let Some(p) = r.per {
                acc.entry((r.condition, r.aux, r.arm, r.test_set.clone())).or_default().push(p);
            }
        }
        acc.into_iter()
            .map(|(k, v)| {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                (
                    k,
                    Summary {
                        mean,
                        std: var.sqrt(),
                        count: v.len(),
                    },
                )
            })
            .collect()
    }

    pub fn mean_per(&self, cond: Condition, aux: AuxMode, arm: Arm, test_set: &str) -> Option<f64> {
        self.summary()
            .get(&(cond, aux, arm, test_set.to_string()))
            .map(|s| s.mean)
    }

    pub fn skipped(&self) -> impl Iterator<Item = &ResultRow> {
        self.results.iter().filter(|r| r.per.is_none())
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    read_rows(path)
}

pub fn write_losses(path: &Path, rows: &[LossRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_losses(path: &Path) -> Result<Vec<LossRow>> {
    read_rows(path)
}

fn write_pitch(path: &Path, rows: &[PitchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = ["speaker", "group", "set", "mean_f0", "voiced_frames"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..HIST_NUM_BINS).map(|i| format!("bin_{}", SpeakerPitchStats::bin_start(i))));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let mut rec = vec![
            r.speaker.clone(),
            r.group.clone(),
            r.set.clone(),
            r.stats.mean_f0.to_string(),
            r.stats.voiced_frames.to_string(),
        ];
        rec.extend(r.stats.histogram.iter().map(|c| c.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pitch(path: &Path) -> Result<Vec<PitchRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let bad = |what: &str| Error::format(path, format!("bad {what}"));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != 5 + HIST_NUM_BINS {
            return Err(bad("column count"));
        }
        out.push(PitchRow {
            speaker: rec[0].to_string(),
            group: rec[1].to_string(),
            set: rec[2].to_string(),
            stats: SpeakerPitchStats {
                mean_f0: rec[3].parse().map_err(|_| bad("mean_f0"))?,
                voiced_frames: rec[4].parse().map_err(|_| bad("voiced_frames"))?,
                histogram: (5..rec.len())
                    .map(|i| rec[i].parse().map_err(|_| bad("histogram")))
                    .collect::<Result<_>>()?,
            },
        });
    }
    Ok(out)
}

/// Plain-text mean and standard deviation table.
pub fn format_summary(report: &RunReport) -> String {
    let mut s = format!("{:<9} {:<4} {:<13} {:<10} {:>8} {:>7} {:>3}\n", "condition", "aux", "arm", "test_set", "mean", "std", "n");
    for ((c, a, arm, t), v) in report.summary() {
        s.push_str(&format!(
            "{:<9} {:<4} {:<13} {:<10} {:>8.2} {:>7.2} {:>3}\n",
            c.as_str(),
            a.as_str(),
            arm.as_str(),
            t,
            v.mean,
            v.std,
            v.count
        ));
    }
    s
}

/// Writes `results.csv`, `loss_curves.csv`, `pitch_stats.csv`,
/// `summary.txt` and `config.echo` into `dir`.
pub fn emit_report(r: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_results(&dir.join("results.csv"), &r.results)?;
    write_rows(&dir.join("loss_curves.csv"), &r.losses)?;
    write_pitch(&dir.join("pitch_stats.csv"), &r.pitch)?;
    let summary = dir.join("summary.txt");
    std::fs::write(&summary, format_summary(r)).map_err(|e| Error::io(summary, e))?;
    let echo = dir.join("config.echo");
    std::fs::write(&echo, &r.config_echo).map_err(|e| Error::io(echo, e))
}

/// Reads back what [`emit_report`] wrote; decoder-free checks are not
/// persisted.
pub fn load_report(dir: &Path) -> Result<RunReport> {
    let echo = dir.join("config.echo");
    Ok(RunReport {
        results: read_results(&dir.join("results.csv"))?,
        losses: read_losses(&dir.join("loss_curves.csv"))?,
        pitch: read_pitch(&dir.join("pitch_stats.csv"))?,
        decoder_free: Vec::new(),
        config_echo: std::fs::read_to_string(&echo).map_err(|e| Error::io(echo, e))?,
    })
}
