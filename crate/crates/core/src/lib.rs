//! Acoustic-modeling lab for filter-based discriminative autoencoders.
//!
//! The crate covers the whole desk-scale pipeline: a synthetic adult/child
//! corpus, MFCC and pitch front ends, auxiliary speaker and pitch vectors,
//! monophone GMM-HMM alignment, numerator/denominator state graphs with exact
//! forward-backward, a small reverse-mode autodiff engine, the f-DcAE model
//! with its CE + LF-MMI + MSE objective, and an experiment harness that
//! decodes, scores and reports.

pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod fdcae;
pub mod graph;
pub mod hmm;
pub mod nnet;
pub mod pitch;
pub mod signal;
pub mod store;

pub use error::{Error, Result};

/// Log of zero in the log semiring.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// Numerically stable `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum(exp(xs)))` with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(LOG_ZERO, f64::max);
    if max == LOG_ZERO {
        return LOG_ZERO;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
