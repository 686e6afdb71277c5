use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{bpr_loss, emb_kd_loss, list_kd_loss, pair_kd_loss, ListKdMode};
use crate::error::{bail, Result};
use crate::graph::{BprTriplet, RankList};
use crate::propagate::NodeEmbeddings;
use crate::teacher::TeacherForward;

/// Weights of the three distillation terms; BPR always has weight 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub pair_kd: f64,
    pub list_kd: f64,
    pub emb_kd: f64,
}

impl LossWeights {
    pub const ZERO: Self = Self { pair_kd: 0.0, list_kd: 0.0, emb_kd: 0.0 };

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("pair_kd", self.pair_kd), ("list_kd", self.list_kd), ("emb_kd", self.emb_kd)] {
            if !(w >= 0.0 && w.is_finite()) {
                bail!(InvalidArgument, "loss weight {name} must be non-negative, got {w}");
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.pair_kd == 0.0 && self.list_kd == 0.0 && self.emb_kd == 0.0
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { pair_kd: 0.1, list_kd: 0.1, emb_kd: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdConfig {
    pub weights: LossWeights,
    pub tau: f64,
    pub gamma: f64,
    pub list_mode: ListKdMode,
}

impl Default for KdConfig {
    fn default() -> Self {
        Self { weights: LossWeights::default(), tau: 1.0, gamma: 2.0, list_mode: ListKdMode::Disentangled }
    }
}

/// Unweighted component values and the weighted total of one step.
///
/// A component whose weight is zero is not evaluated and reads 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bpr: f64,
    pub pair_kd: f64,
    pub list_kd: f64,
    pub emb_kd: f64,
    pub total: f64,
}

/// Samples consumed by one distillation step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistillBatch {
    pub triplets: Vec<BprTriplet>,
    pub lists: Vec<RankList>,
}

/// Gradients on the final embeddings of the student and of each teacher
/// modality.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGrads {
    pub student: NodeEmbeddings,
    pub teacher_modal: Vec<NodeEmbeddings>,
}

fn margins(emb: &NodeEmbeddings, triplets: &[BprTriplet]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut pos = Vec::with_capacity(triplets.len());
    let mut neg = Vec::with_capacity(triplets.len());
    for t in triplets {
        pos.push(emb.score(t.user, t.pos)?);
        neg.push(emb.score(t.user, t.neg)?);
    }
    Ok((pos, neg))
}

/// Adds `g · ∂(e_u·e_pos − e_u·e_neg)` to `grad`.
fn scatter_margin(emb: &NodeEmbeddings, grad: &mut NodeEmbeddings, t: &BprTriplet, g: f64) {
    let (u, p, n) = (emb.user(t.user), emb.item(t.pos), emb.item(t.neg));
    for (k, gu) in grad.users.row_mut(t.user).iter_mut().enumerate() {
        *gu += g * (p[k] - n[k]);
    }
    for (gp, &uk) in grad.items.row_mut(t.pos).iter_mut().zip(u) {
        *gp += g * uk;
    }
    for (gn, &uk) in grad.items.row_mut(t.neg).iter_mut().zip(u) {
        *gn -= g * uk;
    }
}

/// Adds `Σ_k g_k · ∂(e_u·e_{i_k})` to `grad`.
fn scatter_list(emb: &NodeEmbeddings, grad: &mut NodeEmbeddings, list: &RankList, g: &[f64]) {
    let u = emb.user(list.user);
    for (&i, &gk) in list.items.iter().zip(g) {
        let item = emb.item(i);
        for (gu, &v) in grad.users.row_mut(list.user).iter_mut().zip(item) {
            *gu += gk * v;
        }
        for (gi, &v) in grad.items.row_mut(i).iter_mut().zip(u) {
            *gi += gk * v;
        }
    }
}

fn list_scores(emb: &NodeEmbeddings, list: &RankList) -> Result<Vec<f64>> {
    list.items.iter().map(|&i| emb.score(list.user, i)).collect()
}

/// `BPR + λ2·PairKD + λ3·ListKD + λ4·EmbKD` for one batch.
///
/// `student` and the teacher embeddings are the final (propagated) tables.
/// PairKD compares ID-path margins; ListKD compares each modality's list
/// scores with the student's; EmbKD aligns student item rows with each
/// modality's item rows.
pub fn joint_loss(
    student: &NodeEmbeddings,
    teacher_id: &NodeEmbeddings,
    teacher_modal: &[NodeEmbeddings],
    batch: &DistillBatch,
    config: &KdConfig,
) -> Result<(LossBreakdown, JointGrads)> {
    config.weights.validate()?;
    let w = config.weights;
    let mut grads = JointGrads {
        student: student.zeros_like(),
        teacher_modal: teacher_modal.iter().map(NodeEmbeddings::zeros_like).collect(),
    };
    let mut out = LossBreakdown::default();

    let (pos, neg) = margins(student, &batch.triplets)?;
    let bpr = bpr_loss(&pos, &neg)?;
    out.bpr = bpr.loss;
    let student_margin: Vec<f64> = pos.iter().zip(&neg).map(|(a, b)| a - b).collect();
    let mut d_margin = bpr.d_margin;

    if w.pair_kd > 0.0 {
        let (tp, tn) = margins(teacher_id, &batch.triplets)?;
        let teacher_margin: Vec<f64> = tp.iter().zip(&tn).map(|(a, b)| a - b).collect();
        let pk = pair_kd_loss(&teacher_margin, &student_margin)?;
        out.pair_kd = pk.loss;
        for (d, g) in d_margin.iter_mut().zip(&pk.d_student) {
            *d += w.pair_kd * g;
        }
    }
    for (t, &g) in batch.triplets.iter().zip(&d_margin) {
        scatter_margin(student, &mut grads.student, t, g);
    }

    if w.list_kd > 0.0 {
        if batch.lists.is_empty() {
            bail!(InvalidArgument, "list kd enabled but the batch has no ranking lists");
        }
        let scale = w.list_kd / batch.lists.len() as f64;
        for list in &batch.lists {
            let ys = list_scores(student, list)?;
            let mut d_student = alloc::vec![0.0; ys.len()];
            for (f, gf) in teacher_modal.iter().zip(grads.teacher_modal.iter_mut()) {
                let yt = list_scores(f, list)?;
                let lk = list_kd_loss(&yt, &ys, config.tau, config.list_mode)?;
                out.list_kd += lk.loss / batch.lists.len() as f64;
                for (a, b) in d_student.iter_mut().zip(&lk.d_student) {
                    *a += scale * b;
                }
                let d_teacher: Vec<f64> = lk.d_teacher.iter().map(|g| scale * g).collect();
                scatter_list(f, gf, list, &d_teacher);
            }
            scatter_list(student, &mut grads.student, list, &d_student);
        }
    }

    if w.emb_kd > 0.0 {
        let items: Vec<_> = teacher_modal.iter().map(|f| &f.items).collect();
        let ek = emb_kd_loss(&student.items, &items, config.gamma)?;
        out.emb_kd = ek.loss;
        grads.student.items.axpy(w.emb_kd, &ek.d_student)?;
        for (gf, d) in grads.teacher_modal.iter_mut().zip(&ek.d_modal) {
            gf.items.axpy(w.emb_kd, d)?;
        }
    }

    out.total = out.bpr + w.pair_kd * out.pair_kd + w.list_kd * out.list_kd + w.emb_kd * out.emb_kd;
    if !out.total.is_finite() {
        bail!(NonFinite, "joint loss diverged: {out:?}");
    }
    Ok((out, grads))
}

/// Teacher stage-1 objective: BPR on the fused score. Returns the loss and
/// gradients on the ID-path and per-modality final embeddings.
pub fn teacher_bpr_loss(
    fwd: &TeacherForward,
    triplets: &[BprTriplet],
) -> Result<(f64, NodeEmbeddings, Vec<NodeEmbeddings>)> {
    let mut pos = Vec::with_capacity(triplets.len());
    let mut neg = Vec::with_capacity(triplets.len());
    for t in triplets {
        pos.push(fwd.score(t.user, t.pos)?);
        neg.push(fwd.score(t.user, t.neg)?);
    }
    let bpr = bpr_loss(&pos, &neg)?;
    let mut grad_id = fwd.id.zeros_like();
    let mut grad_modal: Vec<NodeEmbeddings> = fwd.modal.iter().map(NodeEmbeddings::zeros_like).collect();
    let share = 1.0 / fwd.modal.len().max(1) as f64;
    for (t, &g) in triplets.iter().zip(&bpr.d_margin) {
        scatter_margin(&fwd.id, &mut grad_id, t, g);
        for (f, gf) in fwd.modal.iter().zip(grad_modal.iter_mut()) {
            scatter_margin(f, gf, t, share * g);
        }
    }
    Ok((bpr.loss, grad_id, grad_modal))
}
