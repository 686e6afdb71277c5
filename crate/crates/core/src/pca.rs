//! Principal component reduction of modality features, backed by a cyclic
//! Jacobi eigensolver on the sample covariance.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math;
use crate::numerics::DenseMatrix;

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaReducer {
    pub name: String,
    pub mean: Vec<f64>,
    /// `d_m × d`, orthonormal columns (zero columns past the data rank).
    pub components: DenseMatrix,
    pub explained_variance: Vec<f64>,
}

impl PcaReducer {
    pub fn input_dim(&self) -> usize {
        self.components.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.components.cols()
    }

    /// `Cᵀ (x − mean)`.
    pub fn reduce(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            bail!(Shape, "reduce expects {} values, got {}", self.input_dim(), x.len());
        }
        let mut out = vec![0.0; self.output_dim()];
        for (k, (&xv, &m)) in x.iter().zip(&self.mean).enumerate() {
            let centered = xv - m;
            for (o, &c) in out.iter_mut().zip(self.components.row(k)) {
                *o += c * centered;
            }
        }
        Ok(out)
    }

    /// `C y + mean`.
    pub fn lift(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.lift_centered(y)?;
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += m;
        }
        Ok(out)
    }

    /// `C y`: the back-projection without re-adding the mean.
    pub fn lift_centered(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.output_dim() {
            bail!(Shape, "lift expects {} values, got {}", self.output_dim(), y.len());
        }
        Ok((0..self.input_dim()).map(|k| math::dot(self.components.row(k), y)).collect())
    }

    /// Row-wise [`reduce`](Self::reduce) over an `n × d_m` matrix.
    pub fn reduce_rows(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.input_dim() {
            bail!(Shape, "reduce_rows expects {} columns, got {}", self.input_dim(), x.cols());
        }
        let mut centered = x.clone();
        let neg: Vec<f64> = self.mean.iter().map(|m| -m).collect();
        centered.add_row_broadcast(&neg)?;
        centered.matmul(&self.components)
    }
}

/// Fits a `d`-component reducer to the rows of `features`.
pub fn fit_pca(name: &str, features: &DenseMatrix, d: usize) -> Result<PcaReducer> {
    let (n, dm) = features.shape();
    if n < 2 {
        bail!(InvalidArgument, "PCA needs at least 2 samples, got {n}");
    }
    if d == 0 || d > n.min(dm) {
        bail!(InvalidArgument, "PCA target dimension {d} must lie in 1..={}", n.min(dm));
    }
    let mean: Vec<f64> = features.column_sums().into_iter().map(|s| s / n as f64).collect();
    let mut centered = features.clone();
    let neg: Vec<f64> = mean.iter().map(|m| -m).collect();
    centered.add_row_broadcast(&neg)?;
    let mut cov = centered.t_matmul(&centered)?;
    cov.scale(1.0 / (n - 1) as f64);

    let (values, vectors) = symmetric_eigen(&cov);
    let mut order: Vec<usize> = (0..dm).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let top = values[order[0]].max(0.0);

    let mut components = DenseMatrix::zeros(dm, d);
    let mut explained = Vec::with_capacity(d);
    let mut padded = 0;
    for (col, &idx) in order.iter().take(d).enumerate() {
        let lambda = values[idx];
        if top == 0.0 || lambda <= RANK_TOL * top {
            padded += 1;
            explained.push(0.0);
            continue;
        }
        let v: Vec<f64> = (0..dm).map(|r| vectors.get(r, idx)).collect();
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (k, x)| if x.abs() > v[best].abs() { k } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (r, x) in v.iter().enumerate() {
            components.set(r, col, sign * x);
        }
        explained.push(lambda);
    }
    if padded > 0 {
        log::warn!("PCA '{name}': data rank below {d}, zero-padded {padded} component(s)");
    }
    Ok(PcaReducer { name: name.to_string(), mean, components, explained_variance: explained })
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns unsorted eigenvalues and the matrix whose columns are the
/// matching unit eigenvectors.
pub fn symmetric_eigen(m: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = m.rows();
    assert_eq!(n, m.cols(), "symmetric_eigen needs a square matrix");
    let mut a = m.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = math::sqrt(a.as_slice().iter().map(|x| x * x).sum::<f64>());
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a.get(p, q) * a.get(p, q))
            .sum();
        if math::sqrt(off) <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + math::sqrt(theta * theta + 1.0));
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.get(k, p), a.get(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.get(p, k), a.get(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    ((0..n).map(|i| a.get(i, i)).collect(), v)
}
