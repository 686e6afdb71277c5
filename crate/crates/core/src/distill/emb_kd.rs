use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math;
use crate::numerics::DenseMatrix;

const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbKdOutput {
    pub loss: f64,
    pub d_student: DenseMatrix,
    /// One gradient per modality, same order as the input.
    pub d_modal: Vec<DenseMatrix>,
}

/// Scaled cosine error between student item rows and each modality's item
/// rows: mean over items of `(1 − cos)^γ`, summed over modalities.
pub fn emb_kd_loss(student: &DenseMatrix, modal: &[&DenseMatrix], gamma: f64) -> Result<EmbKdOutput> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        bail!(InvalidArgument, "gamma must be at least 1, got {gamma}");
    }
    if student.rows() == 0 {
        bail!(InvalidArgument, "emb kd: no items");
    }
    if !student.is_finite() {
        bail!(NonFinite, "emb kd: student embedding");
    }
    let n = student.rows() as f64;
    let mut loss = 0.0;
    let mut d_student = DenseMatrix::zeros(student.rows(), student.cols());
    let mut d_modal = Vec::with_capacity(modal.len());
    for f in modal {
        if f.shape() != student.shape() {
            bail!(Shape, "emb kd: modality is {:?}, student is {:?}", f.shape(), student.shape());
        }
        if !f.is_finite() {
            bail!(NonFinite, "emb kd: modality embedding");
        }
        let mut d_f = DenseMatrix::zeros(f.rows(), f.cols());
        for i in 0..student.rows() {
            let (a, b) = (student.row(i), f.row(i));
            let na = math::sqrt(math::dot(a, a)).max(NORM_FLOOR);
            let nb = math::sqrt(math::dot(b, b)).max(NORM_FLOOR);
            let c = math::dot(a, b) / (na * nb);
            let t = (1.0 - c).max(0.0);
            loss += math::powf(t, gamma) / n;
            let dc = -gamma * math::powf(t, gamma - 1.0) / n;
            let mut ga = vec![0.0; a.len()];
            for k in 0..a.len() {
                ga[k] = dc * (b[k] / (na * nb) - c * a[k] / (na * na));
                d_f.row_mut(i)[k] = dc * (a[k] / (na * nb) - c * b[k] / (nb * nb));
            }
            for (g, v) in d_student.row_mut(i).iter_mut().zip(ga) {
                *g += v;
            }
        }
        d_modal.push(d_f);
    }
    Ok(EmbKdOutput { loss, d_student, d_modal })
}
