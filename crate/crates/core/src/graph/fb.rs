use ndarray::{Array2, ArrayView2};

use super::StateGraph;
use crate::{log_add, Error, Result, LOG_ZERO};

#[derive(Debug, Clone)]
pub struct FbResult {
    pub log_total: f64,
    /// The same quantity from the backward recursion.
    pub log_total_backward: f64,
    /// Occupation posteriors `T x S`.
    pub posteriors: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestPath {
    pub states: Vec<usize>,
    pub arcs: Vec<usize>,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct LfmmiResult {
    /// `log p(num) - log p(den)`.
    pub value: f64,
    pub num_log_total: f64,
    pub den_log_total: f64,
    /// Derivative of `value` with respect to the log-likelihoods.
    pub grad: Array2<f64>,
}

fn check(g: &StateGraph, ll: &ArrayView2<f64>) -> Result<()> {
    if ll.ncols() != g.num_states {
        return Err(Error::Shape(format!("loglikes have {} columns, graph has {} states", ll.ncols(), g.num_states)));
    }
    if ll.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite log-likelihood".into()));
    }
    Ok(())
}

/// Exact forward-backward in the log semiring.
pub fn forward_backward(g: &StateGraph, ll: ArrayView2<f64>) -> Result<FbResult> {
    check(g, &ll)?;
    let (t_len, n) = (ll.nrows(), g.num_nodes);
    let mut alpha = Array2::from_elem((t_len + 1, n), LOG_ZERO);
    alpha[[0, g.start]] = 0.0;
    for t in 0..t_len {
        for a in &g.arcs {
            let from = alpha[[t, a.src]];
            if from == LOG_ZERO {
                continue;
            }
            let v = from + a.weight + ll[[t, a.state]];
            alpha[[t + 1, a.dst]] = log_add(alpha[[t + 1, a.dst]], v);
        }
    }
    let mut beta = Array2::from_elem((t_len + 1, n), LOG_ZERO);
    for (node, &f) in g.finals.iter().enumerate() {
        beta[[t_len, node]] = f;
    }
    for t in (0..t_len).rev() {
        for a in &g.arcs {
            let to = beta[[t + 1, a.dst]];
            if to == LOG_ZERO {
                continue;
            }
            let v = to + a.weight + ll[[t, a.state]];
            beta[[t, a.src]] = log_add(beta[[t, a.src]], v);
        }
    }
    let log_total = (0..n).fold(LOG_ZERO, |acc, node| log_add(acc, alpha[[t_len, node]] + g.finals[node]));
    if log_total == LOG_ZERO || log_total.is_nan() {
        return Err(Error::NoPath(format!("no path of {t_len} frames through the graph")));
    }
    let mut post = Array2::zeros((t_len, g.num_states));
    for t in 0..t_len {
        for a in &g.arcs {
            let v = alpha[[t, a.src]] + a.weight + ll[[t, a.state]] + beta[[t + 1, a.dst]];
            if v > LOG_ZERO {
                post[[t, a.state]] += (v - log_total).exp();
            }
        }
    }
    Ok(FbResult {
        log_total,
        log_total_backward: beta[[0, g.start]],
        posteriors: post,
    })
}

/// Highest-scoring path; ties go to the smallest arc index (and the
/// smallest final node).
pub fn viterbi_best_path(g: &StateGraph, ll: ArrayView2<f64>) -> Result<BestPath> {
    check(g, &ll)?;
    let (t_len, n) = (ll.nrows(), g.num_nodes);
    let mut delta = Array2::from_elem((t_len + 1, n), LOG_ZERO);
    let mut back = Array2::from_elem((t_len + 1, n), usize::MAX);
    delta[[0, g.start]] = 0.0;
    for t in 0..t_len {
        for (i, a) in g.arcs.iter().enumerate() {
            let from = delta[[t, a.src]];
            if from == LOG_ZERO {
                continue;
            }
            let v = from + a.weight + ll[[t, a.state]];
            if v > delta[[t + 1, a.dst]] {
                delta[[t + 1, a.dst]] = v;
                back[[t + 1, a.dst]] = i;
            }
        }
    }
    let mut best = (LOG_ZERO, usize::MAX);
    for node in 0..n {
        let v = delta[[t_len, node]] + g.finals[node];
        if v > best.0 {
            best = (v, node);
        }
    }
    if best.0 == LOG_ZERO {
        return Err(Error::NoPath(format!("no path of {t_len} frames through the graph")));
    }
    let mut arcs = vec![0; t_len];
    let mut node = best.1;
    for t in (1..=t_len).rev() {
        let i = back[[t, node]];
        arcs[t - 1] = i;
        node = g.arcs[i].src;
    }
    Ok(BestPath {
        states: arcs.iter().map(|&i| g.arcs[i].state).collect(),
        arcs,
        score: best.0,
    })
}

/// Lattice-free MMI for one sequence: numerator minus denominator log mass,
/// with gradient `gamma_num - gamma_den`.
pub fn lfmmi_objective(num: &StateGraph, den: &StateGraph, ll: ArrayView2<f64>) -> Result<LfmmiResult> {
    let n = forward_backward(num, ll)?;
    let d = forward_backward(den, ll)?;
    Ok(LfmmiResult {
        value: n.log_total - d.log_total,
        num_log_total: n.log_total,
        den_log_total: d.log_total,
        grad: n.posteriors - d.posteriors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(g: &StateGraph, ll: &Array2<f64>) -> (f64, f64) {
        fn go(g: &StateGraph, ll: &Array2<f64>, node: usize, t: usize, acc: f64, out: &mut Vec<f64>) {
            if t == ll.nrows() {
                if g.finals[node] > LOG_ZERO {
                    out.push(acc + g.finals[node]);
                }
                return;
            }
            for a in g.arcs.iter().filter(|a| a.src == node) {
                go(g, ll, a.dst, t + 1, acc + a.weight + ll[[t, a.state]], out);
            }
        }
        let mut scores = Vec::new();
        go(g, ll, g.start, 0, 0.0, &mut scores);
        (crate::log_sum_exp(&scores), scores.iter().copied().fold(LOG_ZERO, f64::max))
    }

    fn graph_strategy() -> impl Strategy<Value = StateGraph> {
        (2usize..=6, 1usize..=5).prop_flat_map(|(nodes, states)| {
            (
                proptest::collection::vec((0..nodes, 0..nodes, 0..states, -2.0f64..0.0), 1..14),
                proptest::collection::vec(proptest::option::of(-1.0f64..0.0), nodes),
            )
                .prop_map(move |(arcs, finals)| {
                    let mut g = StateGraph::new(nodes, states, 0);
                    for (s, d, st, w) in arcs {
                        g.add_arc(s, d, st, w);
                    }
                    for (i, f) in finals.into_iter().enumerate() {
                        g.finals[i] = f.unwrap_or(LOG_ZERO);
                    }
                    g
                })
        })
    }

    proptest! {
        #[test]
        fn matches_path_enumeration(g in graph_strategy(), t_len in 1usize..=5, seed in 0u64..1000) {
            let ll = Array2::from_shape_fn((t_len, g.num_states), |(t, s)| -(((seed as usize * 31 + t * 7 + s * 13) % 17) as f64) / 5.0 - 0.01 * (t * s) as f64);
            let (total, best) = brute(&g, &ll);
            match forward_backward(&g, ll.view()) {
                Ok(fb) => {
                    prop_assert!((fb.log_total - total).abs() < 1e-9);
                    prop_assert!((fb.log_total - fb.log_total_backward).abs() < 1e-9);
                    for row in fb.posteriors.outer_iter() {
                        prop_assert!((row.sum() - 1.0).abs() < 1e-6);
                    }
                    let vp = viterbi_best_path(&g, ll.view()).unwrap();
                    prop_assert!((vp.score - best).abs() < 1e-9);
                    prop_assert!(vp.score <= fb.log_total + 1e-12);
                }
                Err(_) => prop_assert!(total == LOG_ZERO),
            }
        }
    }

    #[test]
    fn single_state_two_frames() {
        let mut g = StateGraph::new(2, 1, 0);
        g.add_arc(0, 1, 0, 0.0);
        g.add_arc(1, 1, 0, 0.0);
        g.set_final(1, 0.0);
        let ll = Array2::from_shape_vec((2, 1), vec![-1.5, -0.25]).unwrap();
        let fb = forward_backward(&g, ll.view()).unwrap();
        assert!((fb.log_total + 1.75).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_shifts_total_only() {
        let mut g = StateGraph::new(3, 2, 0);
        g.add_arc(0, 1, 0, -0.3);
        g.add_arc(0, 2, 1, -1.2);
        g.add_arc(1, 1, 0, -0.7);
        g.add_arc(1, 2, 1, -0.7);
        g.add_arc(2, 2, 1, -0.1);
        g.set_final(2, 0.0);
        let ll = Array2::from_shape_fn((5, 2), |(t, s)| -((t + 2 * s) as f64).sin().abs());
        let a = forward_backward(&g, ll.view()).unwrap();
        let b = forward_backward(&g, (&ll + 2.5).view()).unwrap();
        assert!((b.log_total - a.log_total - 12.5).abs() < 1e-9);
        assert!((&a.posteriors - &b.posteriors).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn lfmmi_rows_sum_to_zero() {
        let mut den = StateGraph::new(3, 2, 0);
        for (s, d, st) in [(0, 1, 0), (0, 2, 1), (1, 1, 0), (1, 2, 1), (2, 2, 1), (2, 1, 0)] {
            den.add_arc(s, d, st, -0.69);
        }
        den.set_final(1, 0.0);
        den.set_final(2, 0.0);
        let mut num = StateGraph::new(3, 2, 0);
        for (s, d, st) in [(0, 1, 0), (1, 1, 0), (1, 2, 1), (2, 2, 1)] {
            num.add_arc(s, d, st, -0.69);
        }
        num.set_final(2, 0.0);
        let ll = Array2::from_shape_fn((6, 2), |(t, s)| ((t * 3 + s) as f64).cos());
        let r = lfmmi_objective(&num, &den, ll.view()).unwrap();
        assert!(r.value <= 0.0);
        for row in r.grad.outer_iter() {
            assert!(row.sum().abs() < 1e-9);
        }
    }

    #[test]
    fn viterbi_ties_pick_smallest_arc() {
        let mut g = StateGraph::new(3, 2, 0);
        g.add_arc(0, 1, 0, 0.0);
        g.add_arc(0, 2, 1, 0.0);
        g.set_final(1, 0.0);
        g.set_final(2, 0.0);
        let ll = Array2::zeros((1, 2));
        assert_eq!(viterbi_best_path(&g, ll.view()).unwrap().arcs, vec![0]);
    }
}
