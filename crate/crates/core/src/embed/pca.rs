use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::store::Bundle;
use crate::{Error, Result};

/// Top principal directions of centered data; `projection` is `out x in` with
/// orthonormal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    pub projection: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    /// Sum of all covariance eigenvalues (total variance).
    pub total_variance: f64,
}

impl PcaModel {
    pub fn in_dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.projection.nrows()
    }

    /// `(x - mean) P^T` for each row of `x`.
    pub fn project(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.mean.view().insert_axis(Axis(0))).dot(&self.projection.t())
    }

    /// `mean + y P` for each row of `y`.
    pub fn reconstruct(&self, y: ArrayView2<f64>) -> Array2<f64> {
        y.dot(&self.projection) + self.mean.view().insert_axis(Axis(0))
    }

    pub fn to_bundle(&self, prefix: &str, b: &mut Bundle) {
        b.insert_vec(format!("{prefix}.mean"), self.mean.as_slice().unwrap());
        b.insert(format!("{prefix}.projection"), self.projection.clone());
        b.insert_vec(format!("{prefix}.eigenvalues"), self.eigenvalues.as_slice().unwrap());
        b.insert_scalar(format!("{prefix}.total_variance"), self.total_variance);
    }

    pub fn from_bundle(prefix: &str, b: &Bundle) -> Result<Self> {
        Ok(Self {
            mean: Array1::from(b.vec(&format!("{prefix}.mean"))?),
            projection: b.get(&format!("{prefix}.projection"))?.clone(),
            eigenvalues: Array1::from(b.vec(&format!("{prefix}.eigenvalues"))?),
            total_variance: b.scalar(&format!("{prefix}.total_variance"))?,
        })
    }
}

fn to_nalgebra(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Eigenpairs sorted by descending eigenvalue; vectors as rows.
fn sorted_eigen(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let eig = SymmetricEigen::new(to_nalgebra(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = m.nrows();
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(c, order[r])]);
    (vals, vecs)
}

/// PCA by eigendecomposition of the covariance, or of the Gram matrix when
/// there are fewer rows than dimensions.
pub fn fit_pca(data: ArrayView2<f64>, out_dim: usize) -> Result<PcaModel> {
    let (n, d) = data.dim();
    if n <= out_dim || out_dim == 0 || out_dim > d {
        return Err(Error::Invalid(format!(
            "PCA needs rows > out_dim and 0 < out_dim <= in_dim; got {n} rows, in {d}, out {out_dim}"
        )));
    }
    let mean = data.mean_axis(Axis(0)).unwrap();
    let centered = &data - &mean.view().insert_axis(Axis(0));
    let denom = (n - 1) as f64;

    let (vals, mut dirs) = if n >= d {
        let cov = centered.t().dot(&centered) / denom;
        sorted_eigen(&cov)
    } else {
        let gram = centered.dot(&centered.t()) / denom;
        let (vals, u) = sorted_eigen(&gram);
        // map Gram eigenvectors back to feature space
        let mut dirs = u.dot(&centered);
        for (mut row, &lam) in dirs.outer_iter_mut().zip(&vals) {
            let norm = row.dot(&row).sqrt();
            if lam > 0.0 && norm > 0.0 {
                row /= norm;
            }
        }
        (vals, dirs)
    };
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let tol = 1e-10 * vals.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let rank = vals.iter().filter(|&&v| v > tol).count();
    if rank < out_dim {
        return Err(Error::RankDeficient {
            rank,
            requested: out_dim,
        });
    }

    let mut proj = dirs.slice_mut(ndarray::s![..out_dim, ..]).to_owned();
    // modified Gram-Schmidt, then the sign convention
    for i in 0..out_dim {
        for j in 0..i {
            let dot = proj.row(i).dot(&proj.row(j));
            let pj = proj.row(j).to_owned();
            proj.row_mut(i).scaled_add(-dot, &pj);
        }
        let norm = proj.row(i).dot(&proj.row(i)).sqrt();
        proj.row_mut(i).mapv_inplace(|v| v / norm);
        if let Some(&first) = proj.row(i).iter().find(|v| v.abs() > 1e-12) {
            if first < 0.0 {
                proj.row_mut(i).mapv_inplace(|v| -v);
            }
        }
    }
    dirs = proj;
    Ok(PcaModel {
        mean,
        projection: dirs,
        eigenvalues: Array1::from(vals[..out_dim].to_vec()),
        total_variance: total,
    })
}
