use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ParamStore;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Parameter, coordinate, analytic and numeric value at the worst error.
    pub worst: Option<(String, (usize, usize), f64, f64)>,
}

/// Central-difference check of `analytic` on `coords` randomly sampled
/// parameter entries (all entries if there are fewer). Relative error is
/// `max(0, |a - n| - r) / max(1e-8, |a| + |n|)`, where `r` bounds the
/// rounding error of the difference quotient itself, so entries whose true
/// gradient is zero do not report noise as error.
pub fn grad_check(
    ps: &ParamStore,
    analytic: &BTreeMap<String, Array2<f64>>,
    loss: impl Fn(&ParamStore) -> f64,
    h: f64,
    coords: usize,
    seed: u64,
) -> GradCheckReport {
    let entries: Vec<(String, (usize, usize))> = ps
        .params
        .iter()
        .flat_map(|(k, v)| {
            let (r, c) = v.dim();
            (0..r * c).map(move |i| (k.clone(), (i / c, i % c)))
        })
        .collect();
    let picked: Vec<usize> = if entries.len() <= coords {
        (0..entries.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..coords).map(|_| rng.random_range(0..entries.len())).collect()
    };
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        worst: None,
    };
    let mut work = ps.clone();
    for i in picked {
        let (name, idx) = &entries[i];
        let orig = ps.params[name][*idx];
        work.params.get_mut(name).unwrap()[*idx] = orig + h;
        let up = loss(&work);
        work.params.get_mut(name).unwrap()[*idx] = orig - h;
        let down = loss(&work);
        work.params.get_mut(name).unwrap()[*idx] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rounding = 8.0 * f64::EPSILON * (up.abs() + down.abs()) / (2.0 * h);
        let a = analytic.get(name).map_or(0.0, |g| g[*idx]);
        let rel = ((a - numeric).abs() - rounding).max(0.0) / (a.abs() + numeric.abs()).max(1e-8);
        report.checked += 1;
        if rel > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(rel);
            report.worst = Some((name.clone(), *idx, a, numeric));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{Affine, NormAffine, Tape, TdnnLayer};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random(r: usize, c: usize, seed: u64) -> Array2<f64> {
        let mut g = rng(seed);
        Array2::from_shape_fn((r, c), |_| g.random_range(-1.0..1.0))
    }

    /// Runs `build` twice through the checker: once as is, once with the
    /// analytic gradient of one coordinate corrupted.
    fn check(ps: &ParamStore, build: impl Fn(&mut Tape) -> super::super::Var, tol: f64) {
        let mut tape = Tape::new(ps, true);
        let root = build(&mut tape);
        let grads = tape.backward(root).params;
        let loss = |p: &ParamStore| {
            let mut t = Tape::new(p, true);
            let r = build(&mut t);
            t.scalar(r)
        };
        let rep = grad_check(ps, &grads, loss, 1e-4, 60, 1);
        assert!(rep.max_rel_err < tol, "{rep:?}");
        let mut bad = grads.clone();
        let (name, g) = bad.iter_mut().next().unwrap();
        let name = name.clone();
        g[[0, 0]] += 0.5 + g[[0, 0]].abs();
        let rep = grad_check(ps, &bad, loss, 1e-4, usize::MAX, 1);
        assert!(rep.max_rel_err > 1e-2, "corruption of {name} went unnoticed");
    }

    #[test]
    fn affine_mse() {
        let mut ps = ParamStore::new();
        let layer = Affine::new("a", 6, 3);
        layer.init(&mut ps, 1.0, &mut rng(2));
        ps.params.insert("a.b".into(), random(1, 3, 9));
        let x = random(4, 6, 3);
        let target = random(4, 3, 4);
        check(
            &ps,
            |t| {
                let xi = t.input(x.clone());
                let y = layer.forward(t, xi);
                t.mse_sum(y, &target, &[true; 4])
            },
            1e-6,
        );
    }

    #[test]
    fn tdnn_stack_ce() {
        let mut ps = ParamStore::new();
        let l1 = TdnnLayer::new("t1", 3, 6, &[-1, 0, 1]);
        let l2 = TdnnLayer::new("t2", 6, 5, &[-3, 0, 3]);
        let out = Affine::new("out", 5, 4);
        l1.init(&mut ps, &mut rng(5));
        l2.init(&mut ps, &mut rng(6));
        out.init(&mut ps, 1.0, &mut rng(7));
        let x = random(10, 3, 8);
        let targets = [0, 1, 2, 3, 1, 0, 2, 2, 3, 1];
        check(
            &ps,
            |t| {
                let xi = t.input(x.clone());
                let h = l1.forward(t, xi, &[5, 5]);
                let h = l2.forward(t, h, &[5, 5]);
                let o = out.forward(t, h);
                let lp = t.log_softmax(o);
                t.nll_sum(lp, &targets, &[true; 10])
            },
            1e-4,
        );
    }

    #[test]
    fn norm_layer_inference_mode_and_concat() {
        let mut ps = ParamStore::new();
        let l = NormAffine::new("n", 5, 4);
        l.init(&mut ps, &mut rng(10));
        ps.buffers.insert("n.bn.running_mean".into(), random(1, 4, 11));
        ps.buffers.insert("n.bn.running_var".into(), random(1, 4, 12).mapv(|v| v.abs() + 0.5));
        let x = random(6, 3, 13);
        let aux = random(6, 2, 14);
        let target = random(6, 4, 15);
        let build = |t: &mut Tape| {
            t.training = false;
            let xi = t.input(x.clone());
            let ai = t.input(aux.clone());
            let c = t.concat(&[xi, ai]);
            let y = l.forward(t, c);
            let m = t.mse_sum(y, &target, &[true, true, false, true, true, true]);
            t.scale(m, 0.5)
        };
        check(&ps, build, 1e-6);
    }

    #[test]
    fn external_gradient_passes_through() {
        let mut ps = ParamStore::new();
        ps.insert("w", random(3, 2, 20));
        let x = random(4, 3, 21);
        let g = random(4, 2, 22);
        // value sum(y * g) with the matching external gradient
        let build = |t: &mut Tape| {
            let xi = t.input(x.clone());
            let w = t.param("w");
            let y = t.matmul(xi, w);
            let v = (t.value(y) * &g).sum();
            let e = t.external(y, v, g.clone());
            let s = t.scale(e, -1.0);
            t.add(s, e)
        };
        let mut tape = Tape::new(&ps, true);
        let r = build(&mut tape);
        assert_eq!(tape.scalar(r), 0.0);
        let build2 = |t: &mut Tape| {
            let xi = t.input(x.clone());
            let w = t.param("w");
            let y = t.matmul(xi, w);
            let v = (t.value(y) * &g).sum();
            t.external(y, v, g.clone())
        };
        check(&ps, build2, 1e-6);
    }
}
