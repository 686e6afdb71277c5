use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct PairKdOutput {
    pub loss: f64,
    pub d_student: Vec<f64>,
    pub d_teacher: Vec<f64>,
}

/// Batch mean of the binary KL between the teacher's and the student's pair
/// probabilities `σ(Δ)`, where `Δ = s⁺ − s⁻` is a triplet's score margin.
///
/// Logarithms are taken through `log σ` directly, so confident margins stay
/// finite without flooring.
pub fn pair_kd_loss(teacher_margin: &[f64], student_margin: &[f64]) -> Result<PairKdOutput> {
    if teacher_margin.len() != student_margin.len() {
        bail!(Shape, "pair kd: {} teacher vs {} student margins", teacher_margin.len(), student_margin.len());
    }
    if teacher_margin.is_empty() {
        bail!(InvalidArgument, "pair kd: empty batch");
    }
    if teacher_margin.iter().chain(student_margin).any(|s| !s.is_finite()) {
        bail!(NonFinite, "pair kd: non-finite margin");
    }
    let n = teacher_margin.len() as f64;
    let mut loss = 0.0;
    let mut d_student = Vec::with_capacity(teacher_margin.len());
    let mut d_teacher = Vec::with_capacity(teacher_margin.len());
    for (&t, &s) in teacher_margin.iter().zip(student_margin) {
        let pt = math::sigmoid(t);
        let ps = math::sigmoid(s);
        let kl = pt * (math::log_sigmoid(t) - math::log_sigmoid(s))
            + (1.0 - pt) * (math::log_sigmoid(-t) - math::log_sigmoid(-s));
        loss += kl.max(0.0);
        d_student.push((ps - pt) / n);
        d_teacher.push(pt * (1.0 - pt) * (t - s) / n);
    }
    Ok(PairKdOutput { loss: loss / n, d_student, d_teacher })
}
