use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math;

/// A softened ranking list split into the positive-vs-rest binary part
/// `(b⁺, b⁻)` and the distribution `q` over the `K − 1` negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DisentangledLogits {
    pub b_pos: f64,
    pub b_neg: f64,
    pub q: Vec<f64>,
    pub temperature: f64,
}

/// How the teacher side of the list loss is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListKdMode {
    /// The `(1 − b⁺)` weight on the negatives term is a constant.
    #[default]
    Disentangled,
    /// Plain KL over the whole list; the weight moves with the teacher.
    Vanilla,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListKdOutput {
    pub loss: f64,
    pub kl_b: f64,
    pub kl_q: f64,
    /// Gradient with respect to the raw student scores.
    pub d_student: Vec<f64>,
    /// Gradient with respect to the raw teacher scores.
    pub d_teacher: Vec<f64>,
}

struct LogProbs {
    /// `log softmax(y/τ)`.
    full: Vec<f64>,
    /// `log b⁻`.
    neg: f64,
    /// `log q`, one per negative.
    q: Vec<f64>,
}

fn log_probs(y: &[f64], tau: f64) -> LogProbs {
    let z: Vec<f64> = y.iter().map(|v| v / tau).collect();
    let lse_all = math::log_sum_exp(&z);
    let lse_neg = math::log_sum_exp(&z[1..]);
    LogProbs {
        full: z.iter().map(|v| v - lse_all).collect(),
        neg: lse_neg - lse_all,
        q: z[1..].iter().map(|v| v - lse_neg).collect(),
    }
}

fn check_list(y: &[f64], tau: f64) -> Result<()> {
    if y.len() < 2 {
        bail!(InvalidArgument, "ranking list needs at least 2 entries, got {}", y.len());
    }
    if !(tau > 0.0 && tau.is_finite()) {
        bail!(InvalidArgument, "temperature must be positive, got {tau}");
    }
    if y.iter().any(|v| !v.is_finite()) {
        bail!(NonFinite, "ranking list has a non-finite score");
    }
    Ok(())
}

/// Softens `y / τ`; entry 0 is the observed item.
pub fn soften_list(y: &[f64], tau: f64) -> Result<DisentangledLogits> {
    check_list(y, tau)?;
    let lp = log_probs(y, tau);
    let b_pos = math::exp(lp.full[0]);
    Ok(DisentangledLogits {
        b_pos,
        b_neg: math::exp(lp.neg),
        q: lp.q.iter().map(|&v| math::exp(v)).collect(),
        temperature: tau,
    })
}

/// `KL(softmax(y_t/τ) ‖ softmax(y_s/τ))` over the whole list.
pub fn vanilla_list_kl(teacher: &[f64], student: &[f64], tau: f64) -> Result<f64> {
    check_list(teacher, tau)?;
    check_list(student, tau)?;
    if teacher.len() != student.len() {
        bail!(Shape, "list lengths differ: {} vs {}", teacher.len(), student.len());
    }
    let t = log_probs(teacher, tau);
    let s = log_probs(student, tau);
    Ok(t.full.iter().zip(&s.full).map(|(&a, &b)| math::exp(a) * (a - b)).sum::<f64>().max(0.0))
}

/// `KL(b^T ‖ b^S) + (1 − b⁺^T) · KL(q^T ‖ q^S)` for one list.
///
/// The value equals the whole-list KL; `mode` only changes the teacher-side
/// gradient. The student-side gradient is `(P^S − P^T)/τ` in both modes.
pub fn list_kd_loss(teacher: &[f64], student: &[f64], tau: f64, mode: ListKdMode) -> Result<ListKdOutput> {
    check_list(teacher, tau)?;
    check_list(student, tau)?;
    if teacher.len() != student.len() {
        bail!(Shape, "list lengths differ: {} vs {}", teacher.len(), student.len());
    }
    let t = log_probs(teacher, tau);
    let s = log_probs(student, tau);
    let pt: Vec<f64> = t.full.iter().map(|&v| math::exp(v)).collect();
    let ps: Vec<f64> = s.full.iter().map(|&v| math::exp(v)).collect();
    let (bt_pos, bt_neg) = (pt[0], math::exp(t.neg));

    let kl_b = (bt_pos * (t.full[0] - s.full[0]) + bt_neg * (t.neg - s.neg)).max(0.0);
    let qt: Vec<f64> = t.q.iter().map(|&v| math::exp(v)).collect();
    let kl_q = qt.iter().zip(t.q.iter().zip(&s.q)).map(|(&q, (&a, &b))| q * (a - b)).sum::<f64>().max(0.0);
    let loss = kl_b + bt_neg * kl_q;

    let d_student = ps.iter().zip(&pt).map(|(a, b)| (a - b) / tau).collect();
    let d_teacher = match mode {
        ListKdMode::Vanilla => {
            let kl: f64 = pt.iter().zip(t.full.iter().zip(&s.full)).map(|(&p, (&a, &b))| p * (a - b)).sum();
            pt.iter().zip(t.full.iter().zip(&s.full)).map(|(&p, (&a, &b))| p * (a - b - kl) / tau).collect()
        }
        ListKdMode::Disentangled => {
            // d KL_b / d b⁺, then through b⁺ = softmax_0.
            let g_b = (t.full[0] - s.full[0]) - (t.neg - s.neg);
            let mut d: Vec<f64> = pt
                .iter()
                .enumerate()
                .map(|(j, &p)| g_b * bt_pos * (if j == 0 { 1.0 } else { 0.0 } - p))
                .collect();
            for (j, (&q, (&a, &b))) in qt.iter().zip(t.q.iter().zip(&s.q)).enumerate() {
                d[j + 1] += bt_neg * q * (a - b - kl_q);
            }
            d.iter_mut().for_each(|v| *v /= tau);
            d
        }
    };
    Ok(ListKdOutput { loss, kl_b, kl_q, d_student, d_teacher })
}
