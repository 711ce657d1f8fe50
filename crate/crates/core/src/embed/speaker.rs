use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{fit_pca, num_chunks, train_diag_ubm, DiagUbm, PcaModel, UbmTrainLog, CHUNK_FRAMES};
use crate::signal::{splice_context, FeatureMatrix};
use crate::store::Bundle;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    /// Context frames on each side before the first PCA.
    pub splice: usize,
    pub pca_dim: usize,
    pub ubm_components: usize,
    pub embed_dim: usize,
    pub relevance: f64,
    /// UBM is trained on every `train_stride`-th training utterance.
    pub train_stride: usize,
    /// Upper bound on supervector rows used to fit the embedding PCA.
    pub max_sv_rows: usize,
    /// Zero cepstrum 0 before splicing so the embedding ignores level.
    pub drop_c0: bool,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            splice: 3,
            pca_dim: 40,
            ubm_components: 64,
            embed_dim: 16,
            relevance: 10.0,
            train_stride: 4,
            max_sv_rows: 1500,
            drop_c0: true,
        }
    }
}

/// Zeroth and first order Baum-Welch statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct UbmStats {
    pub n: Array1<f64>,
    pub f: Array2<f64>,
}

impl UbmStats {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            n: Array1::zeros(k),
            f: Array2::zeros((k, d)),
        }
    }

    /// Adds frames given their component posteriors (`rows x K`).
    pub fn add(&mut self, post: ArrayView2<f64>, x: ArrayView2<f64>) {
        self.n += &post.sum_axis(Axis(0));
        self.f += &post.t().dot(&x);
    }
}

pub fn accumulate_stats(ubm: &DiagUbm, x: ArrayView2<f64>) -> UbmStats {
    let mut s = UbmStats::zeros(ubm.num_components(), ubm.dim());
    s.add(ubm.posterior_matrix(x).view(), x);
    s
}

/// Relevance-MAP mean offsets `(F_k - N_k mu_k) / (N_k + tau)`, stacked.
pub fn supervector(stats: &UbmStats, ubm: &DiagUbm, tau: f64) -> Array1<f64> {
    let (k, d) = (ubm.num_components(), ubm.dim());
    let mut sv = Array1::zeros(k * d);
    for c in 0..k {
        let denom = stats.n[c] + tau;
        if denom <= 0.0 {
            continue;
        }
        for j in 0..d {
            sv[c * d + j] = (stats.f[[c, j]] - stats.n[c] * ubm.means[[c, j]]) / denom;
        }
    }
    sv
}

/// UBM + PCA speaker embedder producing one vector per 10-frame chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedder {
    pub splice: usize,
    pub relevance: f64,
    pub drop_c0: bool,
    pub frame_pca: PcaModel,
    pub ubm: DiagUbm,
    pub sv_pca: PcaModel,
    pub scale: Array1<f64>,
}

pub struct EmbedderTrainReport {
    pub ubm_log: UbmTrainLog,
    pub ubm_rows: usize,
    pub sv_rows: usize,
}

impl SpeakerEmbedder {
    pub fn embed_dim(&self) -> usize {
        self.sv_pca.out_dim()
    }

    fn project_frames(&self, f: &FeatureMatrix) -> Array2<f64> {
        self.frame_pca.project(spliced_input(f, self.splice, self.drop_c0).view())
    }

    /// Cumulative supervectors, one per chunk boundary.
    pub fn chunk_supervectors(&self, f: &FeatureMatrix) -> Vec<Array1<f64>> {
        let x = self.project_frames(f);
        supervectors_of(&self.ubm, x.view(), self.relevance)
    }

    /// Embedding sequence (`chunks x E`).
    pub fn extract(&self, f: &FeatureMatrix) -> Array2<f64> {
        let svs = self.chunk_supervectors(f);
        let mut out = Array2::zeros((svs.len(), self.embed_dim()));
        for (mut row, sv) in out.outer_iter_mut().zip(&svs) {
            row.assign(&(self.sv_pca.projection.dot(sv) / &self.scale));
        }
        out
    }

    pub fn train(train: &[&FeatureMatrix], cfg: &EmbedConfig, seed: u64) -> Result<(Self, EmbedderTrainReport)> {
        let subset: Vec<&FeatureMatrix> = train.iter().step_by(cfg.train_stride.max(1)).copied().collect();
        if subset.is_empty() {
            return Err(Error::Invalid("no utterances to train the speaker embedder".into()));
        }
        let spliced: Vec<Array2<f64>> = subset
            .iter()
            .map(|f| spliced_input(f, cfg.splice, cfg.drop_c0))
            .collect();
        let views: Vec<_> = spliced.iter().map(|m| m.view()).collect();
        let all = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
        let frame_pca = fit_pca(all.view(), cfg.pca_dim)?;
        let projected = frame_pca.project(all.view());
        let (ubm, ubm_log) = train_diag_ubm(projected.view(), cfg.ubm_components, seed)?;

        let mut rows: Vec<Array1<f64>> = Vec::new();
        for f in train {
            let x = frame_pca.project(spliced_input(f, cfg.splice, cfg.drop_c0).view());
            rows.extend(supervectors_of(&ubm, x.view(), cfg.relevance));
        }
        let stride = rows.len().div_ceil(cfg.max_sv_rows.max(1)).max(1);
        let picked: Vec<_> = rows.iter().step_by(stride).map(|r| r.view()).collect();
        let sv_rows = picked.len();
        let svs = ndarray::stack(Axis(0), &picked).map_err(|e| Error::Shape(e.to_string()))?;
        let sv_pca = fit_pca(svs.view(), cfg.embed_dim)?;
        let proj = svs.dot(&sv_pca.projection.t());
        let scale = proj.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        Ok((
            Self {
                splice: cfg.splice,
                relevance: cfg.relevance,
                drop_c0: cfg.drop_c0,
                frame_pca,
                ubm,
                sv_pca,
                scale,
            },
            EmbedderTrainReport {
                ubm_log,
                ubm_rows: all.nrows(),
                sv_rows,
            },
        ))
    }

    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::new("speaker-embedder");
        b.insert_scalar("splice", self.splice as f64);
        b.insert_scalar("relevance", self.relevance);
        b.insert_scalar("drop_c0", if self.drop_c0 { 1.0 } else { 0.0 });
        self.frame_pca.to_bundle("frame_pca", &mut b);
        self.ubm.to_bundle("ubm", &mut b);
        self.sv_pca.to_bundle("sv_pca", &mut b);
        b.insert_vec("scale", self.scale.as_slice().unwrap());
        b
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        Ok(Self {
            splice: b.scalar("splice")? as usize,
            relevance: b.scalar("relevance")?,
            drop_c0: b.scalar("drop_c0")? != 0.0,
            frame_pca: PcaModel::from_bundle("frame_pca", b)?,
            ubm: DiagUbm::from_bundle("ubm", b)?,
            sv_pca: PcaModel::from_bundle("sv_pca", b)?,
            scale: Array1::from(b.vec("scale")?),
        })
    }
}

fn spliced_input(f: &FeatureMatrix, splice: usize, drop_c0: bool) -> Array2<f64> {
    if !drop_c0 {
        return splice_context(f, splice, splice).frames;
    }
    let mut g = f.clone();
    g.frames.column_mut(0).fill(0.0);
    splice_context(&g, splice, splice).frames
}

fn supervectors_of(ubm: &DiagUbm, x: ArrayView2<f64>, tau: f64) -> Vec<Array1<f64>> {
    let t = x.nrows();
    let post = ubm.posterior_matrix(x);
    let mut stats = UbmStats::zeros(ubm.num_components(), ubm.dim());
    let mut out = Vec::with_capacity(num_chunks(t));
    for c in 0..num_chunks(t) {
        let lo = c * CHUNK_FRAMES;
        let hi = ((c + 1) * CHUNK_FRAMES).min(t);
        if lo < hi {
            let rows = ndarray::s![lo..hi, ..];
            stats.add(post.slice(rows), x.slice(rows));
        }
        out.push(supervector(&stats, ubm, tau));
    }
    out
}
