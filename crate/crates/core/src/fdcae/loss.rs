use ndarray::ArrayView2;

use crate::graph::{lfmmi_objective, LfmmiResult, StateGraph};
use crate::{log_sum_exp, Error, Result};

pub const DEFAULT_ALPHA: f64 = 5.0;
pub const DEFAULT_BETA: f64 = 5e-14;

/// Loss terms of one minibatch (or their sums over an epoch).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub f_ce: f64,
    pub f_lfmmi: f64,
    pub f_mse: f64,
    pub total: f64,
    pub frames: usize,
}

impl LossBreakdown {
    pub fn accumulate(&mut self, o: &LossBreakdown) {
        self.f_ce += o.f_ce;
        self.f_lfmmi += o.f_lfmmi;
        self.f_mse += o.f_mse;
        self.total += o.total;
        self.frames += o.frames;
    }

    pub fn ce_per_frame(&self) -> f64 {
        self.f_ce / self.frames.max(1) as f64
    }
}

/// `alpha * f_ce - f_lfmmi + beta * f_mse`.
pub fn total_loss(f_ce: f64, f_lfmmi: f64, f_mse: f64, alpha: f64, beta: f64, frames: usize) -> LossBreakdown {
    LossBreakdown {
        f_ce,
        f_lfmmi,
        f_mse,
        total: alpha * f_ce - f_lfmmi + beta * f_mse,
        frames,
    }
}

/// Summed negative log-softmax probability of the aligned states.
pub fn loss_ce(logits: ArrayView2<f64>, states: &[usize]) -> Result<f64> {
    if states.len() != logits.nrows() {
        return Err(Error::Shape(format!("{} labels for {} frames", states.len(), logits.nrows())));
    }
    let mut total = 0.0;
    for (row, &s) in logits.outer_iter().zip(states) {
        if s >= row.len() {
            return Err(Error::Invalid(format!("state {s} outside {} outputs", row.len())));
        }
        total += log_sum_exp(row.as_slice().unwrap()) - row[s];
    }
    Ok(total)
}

/// Summed squared reconstruction error.
pub fn loss_mse(recon: ArrayView2<f64>, feats: ArrayView2<f64>) -> Result<f64> {
    if recon.dim() != feats.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", recon.dim(), feats.dim())));
    }
    Ok(recon.iter().zip(feats).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// LF-MMI with logits used directly as frame log-likelihoods.
pub fn loss_lfmmi(logits: ArrayView2<f64>, num: &StateGraph, den: &StateGraph) -> Result<LfmmiResult> {
    lfmmi_objective(num, den, logits)
}
