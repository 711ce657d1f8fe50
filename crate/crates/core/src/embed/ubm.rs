use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::store::Bundle;
use crate::{log_sum_exp, Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-4;
const EM_ITERS: usize = 10;
const ROW_BLOCK: usize = 512;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagUbm {
    pub weights: Array1<f64>,
    pub means: Array2<f64>,
    pub variances: Array2<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct UbmTrainLog {
    /// Average per-row log-likelihood before each EM update and after the last.
    pub loglik: Vec<f64>,
    pub reseeded: usize,
}

impl UbmTrainLog {
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.loglik.windows(2).all(|w| w[1] >= w[0] - tol)
    }
}

struct Accum {
    n: Array1<f64>,
    f: Array2<f64>,
    s: Array2<f64>,
    loglik: f64,
}

impl Accum {
    fn zeros(k: usize, d: usize) -> Self {
        Self {
            n: Array1::zeros(k),
            f: Array2::zeros((k, d)),
            s: Array2::zeros((k, d)),
            loglik: 0.0,
        }
    }

    fn merge(mut self, o: Accum) -> Self {
        self.n += &o.n;
        self.f += &o.f;
        self.s += &o.s;
        self.loglik += o.loglik;
        self
    }
}

impl DiagUbm {
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    fn log_consts(&self) -> Array1<f64> {
        let d = self.dim() as f64;
        Array1::from_shape_fn(self.num_components(), |k| {
            let logdet: f64 = self.variances.row(k).iter().map(|v| v.ln()).sum();
            self.weights[k].ln() - 0.5 * (d * (2.0 * std::f64::consts::PI).ln() + logdet)
        })
    }

    fn component_logliks(&self, consts: &Array1<f64>, x: ArrayView1<f64>, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for ((&xi, &m), &v) in x.iter().zip(self.means.row(k)).zip(self.variances.row(k)) {
                let d = xi - m;
                acc += d * d / v;
            }
            *o = consts[k] - 0.5 * acc;
        }
    }

    /// Per-component posteriors of one frame and its total log-likelihood.
    pub fn posteriors(&self, x: ArrayView1<f64>) -> (Vec<f64>, f64) {
        let consts = self.log_consts();
        let mut lp = vec![0.0; self.num_components()];
        self.component_logliks(&consts, x, &mut lp);
        let total = log_sum_exp(&lp);
        (lp.iter().map(|v| (v - total).exp()).collect(), total)
    }

    /// Posterior matrix (`rows x K`) for a block of frames.
    pub fn posterior_matrix(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let consts = self.log_consts();
        let k = self.num_components();
        let mut out = Array2::zeros((x.nrows(), k));
        let mut lp = vec![0.0; k];
        for (row, mut o) in x.outer_iter().zip(out.outer_iter_mut()) {
            self.component_logliks(&consts, row, &mut lp);
            let total = log_sum_exp(&lp);
            for (dst, v) in o.iter_mut().zip(&lp) {
                *dst = (v - total).exp();
            }
        }
        out
    }

    pub fn average_loglik(&self, x: ArrayView2<f64>) -> f64 {
        self.accumulate(x).loglik / x.nrows() as f64
    }

    fn accumulate(&self, x: ArrayView2<f64>) -> Accum {
        let (k, d) = (self.num_components(), self.dim());
        let consts = self.log_consts();
        let parts: Vec<Accum> = x
            .axis_chunks_iter(Axis(0), ROW_BLOCK)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|block| {
                let mut acc = Accum::zeros(k, d);
                let mut lp = vec![0.0; k];
                for row in block.outer_iter() {
                    self.component_logliks(&consts, row, &mut lp);
                    let total = log_sum_exp(&lp);
                    acc.loglik += total;
                    for c in 0..k {
                        let g = (lp[c] - total).exp();
                        if g < 1e-300 {
                            continue;
                        }
                        acc.n[c] += g;
                        for j in 0..d {
                            acc.f[[c, j]] += g * row[j];
                            acc.s[[c, j]] += g * row[j] * row[j];
                        }
                    }
                }
                acc
            })
            .collect();
        // merged in block order so the result does not depend on scheduling
        parts.into_iter().fold(Accum::zeros(k, d), Accum::merge)
    }

    pub fn validate(&self) -> Result<()> {
        let wsum = self.weights.sum();
        if (wsum - 1.0).abs() > 1e-8 || self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Invalid(format!("UBM weights sum to {wsum}")));
        }
        if self.variances.iter().any(|v| !(*v >= VARIANCE_FLOOR * (1.0 - 1e-12))) {
            return Err(Error::Invalid("UBM variance below floor".into()));
        }
        Ok(())
    }

    pub fn to_bundle(&self, prefix: &str, b: &mut Bundle) {
        b.insert_vec(format!("{prefix}.weights"), self.weights.as_slice().unwrap());
        b.insert(format!("{prefix}.means"), self.means.clone());
        b.insert(format!("{prefix}.variances"), self.variances.clone());
    }

    pub fn from_bundle(prefix: &str, b: &Bundle) -> Result<Self> {
        let ubm = Self {
            weights: Array1::from(b.vec(&format!("{prefix}.weights"))?),
            means: b.get(&format!("{prefix}.means"))?.clone(),
            variances: b.get(&format!("{prefix}.variances"))?.clone(),
        };
        ubm.validate()?;
        Ok(ubm)
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(x: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    centers.row_mut(0).assign(&x.row(rng.random_range(0..n)));
    let mut best: Vec<f64> = x.outer_iter().map(|r| sq_dist(r, centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &b) in best.iter().enumerate() {
                if u < b {
                    idx = i;
                    break;
                }
                u -= b;
            }
            idx
        };
        centers.row_mut(c).assign(&x.row(pick));
        for (b, r) in best.iter_mut().zip(x.outer_iter()) {
            *b = b.min(sq_dist(r, centers.row(c)));
        }
    }
    centers
}

/// Initial model: hard k-means++ assignment turned into per-cluster moments.
fn initial_model(x: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> DiagUbm {
    let (n, d) = x.dim();
    let centers = kmeans_pp(x, k, rng);
    let global_var = x.var_axis(Axis(0), 0.0).mapv(|v| v.max(VARIANCE_FLOOR));
    let mut count = Array1::<f64>::zeros(k);
    let mut sum = Array2::<f64>::zeros((k, d));
    let mut sq = Array2::<f64>::zeros((k, d));
    for r in x.outer_iter() {
        let c = (0..k)
            .min_by(|&a, &b| sq_dist(r, centers.row(a)).total_cmp(&sq_dist(r, centers.row(b))))
            .unwrap();
        count[c] += 1.0;
        for j in 0..d {
            sum[[c, j]] += r[j];
            sq[[c, j]] += r[j] * r[j];
        }
    }
    let mut means = centers.clone();
    let mut vars = Array2::zeros((k, d));
    for c in 0..k {
        for j in 0..d {
            if count[c] >= 2.0 {
                let m = sum[[c, j]] / count[c];
                means[[c, j]] = m;
                vars[[c, j]] = (sq[[c, j]] / count[c] - m * m).max(VARIANCE_FLOOR);
            } else {
                vars[[c, j]] = global_var[j];
            }
        }
    }
    let weights = (count + 1.0) / (n + k) as f64;
    DiagUbm { weights, means, variances: vars }
}

/// Diagonal UBM trained with k-means++ initialisation and 10 EM iterations.
pub fn train_diag_ubm(x: ArrayView2<f64>, k: usize, seed: u64) -> Result<(DiagUbm, UbmTrainLog)> {
    let (n, d) = x.dim();
    if k == 0 || d == 0 {
        return Err(Error::Invalid("UBM needs K > 0 and non-empty features".into()));
    }
    if n < 50 * k {
        return Err(Error::Invalid(format!("UBM with K={k} needs at least {} rows, got {n}", 50 * k)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ubm = initial_model(x, k, &mut rng);
    let mut log = UbmTrainLog::default();
    for _ in 0..EM_ITERS {
        let acc = ubm.accumulate(x);
        log.loglik.push(acc.loglik / n as f64);
        let heaviest = (0..k).max_by(|&a, &b| acc.n[a].total_cmp(&acc.n[b])).unwrap();
        for c in 0..k {
            if acc.n[c] < 1e-3 {
                // empty component: restart next to the heaviest one
                log.reseeded += 1;
                for j in 0..d {
                    let sd = (acc.s[[heaviest, j]] / acc.n[heaviest]
                        - (acc.f[[heaviest, j]] / acc.n[heaviest]).powi(2))
                    .max(VARIANCE_FLOOR)
                    .sqrt();
                    ubm.means[[c, j]] = acc.f[[heaviest, j]] / acc.n[heaviest] + 0.1 * sd * rng.random_range(-1.0..1.0);
                    ubm.variances[[c, j]] = sd * sd;
                }
                ubm.weights[c] = 1e-3 / n as f64;
                continue;
            }
            ubm.weights[c] = acc.n[c] / n as f64;
            for j in 0..d {
                let m = acc.f[[c, j]] / acc.n[c];
                ubm.means[[c, j]] = m;
                ubm.variances[[c, j]] = (acc.s[[c, j]] / acc.n[c] - m * m).max(VARIANCE_FLOOR);
            }
        }
        let wsum = ubm.weights.sum();
        ubm.weights /= wsum;
    }
    log.loglik.push(ubm.average_loglik(x));
    Ok((ubm, log))
}
