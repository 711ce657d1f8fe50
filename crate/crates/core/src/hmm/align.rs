use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView2;

use crate::{Error, Result, LOG_ZERO};

/// Per-frame emitting-state ids of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub utt_id: String,
    pub states: Vec<usize>,
}

/// Best path through a left-to-right chain of `composite` states that starts
/// in the first and ends in the last. `logliks` is `T x S`. On equal scores
/// the path that moved forward earlier wins. Returns the state per frame and
/// the path log-probability (emissions plus transitions).
pub fn viterbi_composite(
    logliks: ArrayView2<f64>,
    composite: &[usize],
    log_self: f64,
    log_fwd: f64,
) -> Result<(Vec<usize>, f64)> {
    let t_len = logliks.nrows();
    let n = composite.len();
    if n == 0 || t_len < n {
        return Err(Error::NoPath(format!("{t_len} frames cannot cover {n} states")));
    }
    let mut score = vec![LOG_ZERO; n];
    let mut back = vec![0u8; t_len * n];
    score[0] = logliks[[0, composite[0]]];
    let mut next = vec![LOG_ZERO; n];
    for t in 1..t_len {
        // position j is reachable at t only if j <= t and the rest fits in the remaining frames
        let lo = (n + t).saturating_sub(t_len);
        let hi = t.min(n - 1);
        next.iter_mut().for_each(|v| *v = LOG_ZERO);
        for j in lo..=hi {
            let stay = score[j] + log_self;
            let adv = if j > 0 { score[j - 1] + log_fwd } else { LOG_ZERO };
            let (best, from_prev) = if stay >= adv { (stay, false) } else { (adv, true) };
            if best == LOG_ZERO {
                continue;
            }
            next[j] = best + logliks[[t, composite[j]]];
            back[t * n + j] = from_prev as u8;
        }
        std::mem::swap(&mut score, &mut next);
    }
    let total = score[n - 1];
    if !total.is_finite() {
        return Err(Error::NoPath("no finite-score path".into()));
    }
    let mut path = vec![0; t_len];
    let mut j = n - 1;
    for t in (0..t_len).rev() {
        path[t] = composite[j];
        if t > 0 && back[t * n + j] == 1 {
            j -= 1;
        }
    }
    Ok((path, total))
}

pub fn write_alignments(path: impl AsRef<Path>, alis: &[Alignment]) -> Result<()> {
    let mut s = String::new();
    for a in alis {
        s.push_str(&a.utt_id);
        for st in &a.states {
            write!(s, " {st}").unwrap();
        }
        s.push('\n');
    }
    std::fs::write(path.as_ref(), s).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_alignments(path: impl AsRef<Path>) -> Result<Vec<Alignment>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let mut it = l.split_whitespace();
            let utt_id = it.next().unwrap().to_string();
            let states = it
                .map(|v| v.parse().map_err(|_| Error::format(path, format!("line {}: bad state id '{v}'", i + 1))))
                .collect::<Result<_>>()?;
            Ok(Alignment { utt_id, states })
        })
        .collect()
}
