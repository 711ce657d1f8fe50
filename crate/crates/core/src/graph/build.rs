use super::{PhoneBigram, StateGraph};
use crate::hmm::HmmTopology;
use crate::{Error, Result};

/// How paths enter and leave the denominator graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenominatorKind {
    /// Whole utterances: enter through phone entry states with the bigram
    /// start weight, leave through exit states with the end weight.
    Utterance,
    /// Training chunks cut from the middle of utterances: any state may begin
    /// (weight `log(1/S)`) or end (weight 0) a path.
    Chunk,
}

/// Weight of the transition `from -> to` in the denominator graph, if any.
fn transition(topo: &HmmTopology, lm: Option<&PhoneBigram>, from: usize, to: usize) -> Option<f64> {
    let (pf, pt) = (topo.phone_of(from), topo.phone_of(to));
    if from == to {
        Some(topo.log_self_loop())
    } else if pf == pt && to == from + 1 {
        Some(topo.log_forward())
    } else if topo.is_exit(from) && topo.is_entry(to) {
        Some(topo.log_forward() + lm.map_or(0.0, |lm| lm.next(pf, pt)))
    } else {
        None
    }
}

/// One node per emitting state plus the start node 0; every phone sequence is
/// a path, weighted by the topology and the bigram.
pub fn build_denominator_graph(lm: &PhoneBigram, topo: &HmmTopology, kind: DenominatorKind) -> StateGraph {
    let s_count = topo.num_states();
    let mut g = StateGraph::new(s_count + 1, s_count, 0);
    match kind {
        DenominatorKind::Utterance => {
            for p in 0..topo.num_phones() {
                let e = topo.phone_states(p).start;
                g.add_arc(0, e + 1, e, lm.start(p));
            }
        }
        DenominatorKind::Chunk => {
            let w = -(s_count as f64).ln();
            for s in 0..s_count {
                g.add_arc(0, s + 1, s, w);
            }
        }
    }
    for from in 0..s_count {
        for to in 0..s_count {
            if let Some(w) = transition(topo, Some(lm), from, to) {
                g.add_arc(from + 1, to + 1, to, w);
            }
        }
        match kind {
            DenominatorKind::Utterance => {
                if topo.is_exit(from) {
                    g.set_final(from + 1, topo.log_forward() + lm.end(topo.phone_of(from)));
                }
            }
            DenominatorKind::Chunk => g.set_final(from + 1, 0.0),
        }
    }
    g
}

/// Left-to-right composite graph of the transcript. With `lm` the arcs carry
/// the same bigram weights as the utterance denominator graph, so every
/// numerator path is also a denominator path of equal weight. With
/// `optional_sil`, a leading or trailing silence may be skipped.
pub fn build_numerator_graph(
    transcript: &[usize],
    topo: &HmmTopology,
    lm: Option<&PhoneBigram>,
    optional_sil: bool,
) -> Result<StateGraph> {
    if transcript.is_empty() {
        return Err(Error::Invalid("numerator graph needs a non-empty transcript".into()));
    }
    if let Some(&p) = transcript.iter().find(|&&p| p >= topo.num_phones()) {
        return Err(Error::Invalid(format!("phone id {p} outside the topology")));
    }
    let comp = topo.composite(transcript);
    let mut g = StateGraph::new(comp.len() + 1, topo.num_states(), 0);
    // node of the first state of each transcript position
    let mut first = Vec::with_capacity(transcript.len());
    let mut node = 1;
    for &p in transcript {
        first.push(node);
        node += topo.phone_states(p).len();
    }
    let start_w = |p: usize| lm.map_or(0.0, |lm| lm.start(p));
    let end_w = |p: usize| topo.log_forward() + lm.map_or(0.0, |lm| lm.end(p));
    let n = transcript.len();
    g.add_arc(0, 1, comp[0], start_w(transcript[0]));
    if optional_sil && n > 1 && transcript[0] == 0 {
        g.add_arc(0, first[1], comp[first[1] - 1], start_w(transcript[1]));
    }
    for (i, &s) in comp.iter().enumerate() {
        let node = i + 1;
        g.add_arc(node, node, s, topo.log_self_loop());
        if i + 1 < comp.len() {
            let next = comp[i + 1];
            let w = transition(topo, lm, s, next).expect("composite states are adjacent");
            g.add_arc(node, node + 1, next, w);
        }
    }
    let last = comp.len();
    g.set_final(last, end_w(transcript[n - 1]));
    if optional_sil && n > 1 && transcript[n - 1] == 0 {
        g.set_final(first[n - 1] - 1, end_w(transcript[n - 2]));
    }
    Ok(g)
}

/// Numerator for a training chunk: the sequence of states the alignment
/// visits, with free timing, entered with `log(1/S)` and left with weight 0
/// like the chunk denominator.
pub fn build_chunk_numerator(alignment: &[usize], topo: &HmmTopology, lm: &PhoneBigram) -> Result<StateGraph> {
    if alignment.is_empty() {
        return Err(Error::Invalid("empty chunk alignment".into()));
    }
    let mut visits: Vec<usize> = Vec::new();
    for &s in alignment {
        if s >= topo.num_states() {
            return Err(Error::Invalid(format!("state {s} outside the topology")));
        }
        if visits.last() != Some(&s) {
            visits.push(s);
        }
    }
    let mut g = StateGraph::new(visits.len() + 1, topo.num_states(), 0);
    g.add_arc(0, 1, visits[0], -(topo.num_states() as f64).ln());
    for (i, &s) in visits.iter().enumerate() {
        g.add_arc(i + 1, i + 1, s, topo.log_self_loop());
        if let Some(&next) = visits.get(i + 1) {
            let w = transition(topo, Some(lm), s, next)
                .ok_or_else(|| Error::Invalid(format!("alignment jumps from state {s} to {next}")))?;
            g.add_arc(i + 1, i + 2, next, w);
        }
    }
    g.set_final(visits.len(), 0.0);
    Ok(g)
}
