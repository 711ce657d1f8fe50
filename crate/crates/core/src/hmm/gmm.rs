use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::log_sum_exp;

pub const VARIANCE_FLOOR: f64 = 1e-4;

/// Per-state diagonal Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGmm {
    pub weights: Array1<f64>,
    pub means: Array2<f64>,
    pub variances: Array2<f64>,
    consts: Array1<f64>,
}

impl DiagGmm {
    pub fn new(weights: Array1<f64>, means: Array2<f64>, variances: Array2<f64>) -> Self {
        let variances = variances.mapv(|v| v.max(VARIANCE_FLOOR));
        let d = means.ncols() as f64;
        let consts = Array1::from_shape_fn(weights.len(), |k| {
            let logdet: f64 = variances.row(k).iter().map(|v| v.ln()).sum();
            weights[k].ln() - 0.5 * (d * (2.0 * std::f64::consts::PI).ln() + logdet)
        });
        Self {
            weights,
            means,
            variances,
            consts,
        }
    }

    /// Single Gaussian with the sample moments of `x`.
    pub fn from_frames(x: ArrayView2<f64>) -> Self {
        let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
        let var = x.var_axis(ndarray::Axis(0), 0.0);
        Self::new(
            Array1::ones(1),
            mean.insert_axis(ndarray::Axis(0)),
            var.insert_axis(ndarray::Axis(0)),
        )
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    fn component_logliks(&self, x: ArrayView1<f64>, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for ((&xi, &m), &v) in x.iter().zip(self.means.row(k)).zip(self.variances.row(k)) {
                let d = xi - m;
                acc += d * d / v;
            }
            *o = self.consts[k] - 0.5 * acc;
        }
    }

    pub fn loglik(&self, x: ArrayView1<f64>) -> f64 {
        let mut lp = vec![0.0; self.num_components()];
        self.component_logliks(x, &mut lp);
        log_sum_exp(&lp)
    }

    /// One EM update on frames assigned to this state. Components whose
    /// occupancy vanishes keep their previous parameters.
    pub fn reestimate(&self, x: ArrayView2<f64>) -> Self {
        let (k, d) = (self.num_components(), self.dim());
        let mut n = Array1::<f64>::zeros(k);
        let mut f = Array2::<f64>::zeros((k, d));
        let mut s = Array2::<f64>::zeros((k, d));
        let mut lp = vec![0.0; k];
        for row in x.outer_iter() {
            self.component_logliks(row, &mut lp);
            let tot = log_sum_exp(&lp);
            for c in 0..k {
                let g = (lp[c] - tot).exp();
                n[c] += g;
                for j in 0..d {
                    f[[c, j]] += g * row[j];
                    s[[c, j]] += g * row[j] * row[j];
                }
            }
        }
        let total: f64 = n.sum();
        let mut w = self.weights.clone();
        let mut means = self.means.clone();
        let mut vars = self.variances.clone();
        for c in 0..k {
            if n[c] < 1e-6 {
                continue;
            }
            w[c] = n[c] / total;
            for j in 0..d {
                let m = f[[c, j]] / n[c];
                means[[c, j]] = m;
                vars[[c, j]] = s[[c, j]] / n[c] - m * m;
            }
        }
        let ws = w.sum();
        Self::new(w / ws, means, vars)
    }

    /// Splits every component in two (means displaced by ±0.2 sd), stopping
    /// at `max` components or when fewer than `min_frames` would remain per
    /// component.
    pub fn split(&self, max: usize, frames: f64, min_frames: f64) -> Self {
        let k = self.num_components();
        let target = (2 * k).min(max);
        let affordable = (frames / min_frames).floor() as usize;
        let target = target.min(affordable.max(k));
        if target <= k {
            return self.clone();
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]).then(a.cmp(&b)));
        let d = self.dim();
        let mut w = self.weights.to_vec();
        let mut means: Vec<Vec<f64>> = self.means.outer_iter().map(|r| r.to_vec()).collect();
        let mut vars: Vec<Vec<f64>> = self.variances.outer_iter().map(|r| r.to_vec()).collect();
        for &c in order.iter().take(target - k) {
            w[c] *= 0.5;
            let sd: Vec<f64> = vars[c].iter().map(|v| v.sqrt()).collect();
            let base = means[c].clone();
            means[c] = (0..d).map(|j| base[j] + 0.2 * sd[j]).collect();
            w.push(w[c]);
            means.push((0..d).map(|j| base[j] - 0.2 * sd[j]).collect());
            vars.push(vars[c].clone());
        }
        let n = w.len();
        Self::new(
            Array1::from(w),
            Array2::from_shape_fn((n, d), |(i, j)| means[i][j]),
            Array2::from_shape_fn((n, d), |(i, j)| vars[i][j]),
        )
    }
}
