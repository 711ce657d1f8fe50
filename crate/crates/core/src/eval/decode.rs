use ndarray::{Array2, ArrayView2};

use crate::fdcae::FdcaeModel;
use crate::graph::{viterbi_best_path, StateGraph};
use crate::hmm::HmmTopology;
use crate::Result;

/// Phone index of silence in every inventory.
pub const SIL_PHONE: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub utt_id: String,
    /// Silence-free phone sequence.
    pub phones: Vec<usize>,
    pub score: f64,
    /// Set when the graph had no path; `phones` is then empty.
    pub no_path: bool,
}

/// Best path through `den` (an utterance-level denominator graph) read back
/// as phones: a phone starts wherever the path enters a phone's entry state
/// through a non-self-loop arc.
pub fn decode_logits(utt_id: &str, logits: ArrayView2<f64>, den: &StateGraph, topo: &HmmTopology) -> DecodeResult {
    let best = match viterbi_best_path(den, logits) {
        Ok(b) => b,
        Err(e) => {
            log::warn!("{utt_id}: {e}");
            return DecodeResult {
                utt_id: utt_id.to_string(),
                phones: Vec::new(),
                score: f64::NEG_INFINITY,
                no_path: true,
            };
        }
    };
    let mut phones = Vec::new();
    for &i in &best.arcs {
        let a = &den.arcs[i];
        if a.src == den.start || (a.src != a.dst && topo.is_entry(a.state)) {
            phones.push(topo.phone_of(a.state));
        }
    }
    phones.retain(|&p| p != SIL_PHONE);
    DecodeResult {
        utt_id: utt_id.to_string(),
        phones,
        score: best.score,
        no_path: false,
    }
}

/// Runs the encoder and decodes its logits.
pub fn decode_utterance(
    model: &FdcaeModel,
    utt_id: &str,
    feats: ArrayView2<f64>,
    aux: Option<&Array2<f64>>,
    den: &StateGraph,
    topo: &HmmTopology,
) -> Result<DecodeResult> {
    let logits = model.logits(feats, aux)?;
    Ok(decode_logits(utt_id, logits.view(), den, topo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_denominator_graph, forward_backward, DenominatorKind, PhoneBigram};
    use proptest::prelude::*;

    fn setup() -> (HmmTopology, StateGraph) {
        let topo = HmmTopology::new(4, 2, 2, 0.5);
        let lm = PhoneBigram::uniform(4);
        let den = build_denominator_graph(&lm, &topo, DenominatorKind::Utterance);
        (topo, den)
    }

    fn oracle_logits(topo: &HmmTopology, phones: &[usize], frames_per_state: usize) -> Array2<f64> {
        let states: Vec<usize> = topo
            .composite(phones)
            .into_iter()
            .flat_map(|s| std::iter::repeat_n(s, frames_per_state))
            .collect();
        let mut ll = Array2::from_elem((states.len(), topo.num_states()), -30.0);
        for (t, &s) in states.iter().enumerate() {
            ll[[t, s]] = 0.0;
        }
        ll
    }

    proptest! {
        #[test]
        fn oracle_logits_recover_reference(inner in prop::collection::vec(1usize..4, 1..6), k in 1usize..4) {
            let (topo, den) = setup();
            let mut phones = vec![SIL_PHONE];
            phones.extend(&inner);
            phones.push(SIL_PHONE);
            let ll = oracle_logits(&topo, &phones, k);
            let r = decode_logits("u", ll.view(), &den, &topo);
            prop_assert_eq!(r.phones, inner);
            let fb = forward_backward(&den, ll.view()).unwrap();
            prop_assert!(r.score <= fb.log_total + 1e-9);
        }
    }

    #[test]
    fn repeated_phone_is_two_tokens() {
        let (topo, den) = setup();
        let ll = oracle_logits(&topo, &[0, 2, 2, 0], 2);
        assert_eq!(decode_logits("u", ll.view(), &den, &topo).phones, vec![2, 2]);
    }

    #[test]
    fn flat_logits_are_deterministic() {
        let (topo, den) = setup();
        let ll = Array2::zeros((12, topo.num_states()));
        let a = decode_logits("u", ll.view(), &den, &topo);
        let b = decode_logits("u", ll.view(), &den, &topo);
        assert_eq!(a, b);
        assert!(!a.no_path);
    }

    #[test]
    fn too_short_input_has_no_path() {
        // shortest path needs two frames (a two-state phone)
        let (topo, den) = setup();
        let ll = Array2::zeros((1, topo.num_states()));
        let r = decode_logits("u", ll.view(), &den, &topo);
        assert!(r.no_path && r.phones.is_empty());
    }
}
