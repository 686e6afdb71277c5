//! Loss terms for both training stages and their joint objective.
//!
//! Every loss returns its value together with gradients with respect to its
//! direct inputs (scores, margins or embeddings); the joint objective
//! scatters those back onto the final node embeddings of each model.

mod bpr;
mod emb_kd;
mod joint;
mod list_kd;
mod pair_kd;

pub use bpr::{bpr_loss, MarginLoss};
pub use emb_kd::{emb_kd_loss, EmbKdOutput};
pub use joint::{joint_loss, teacher_bpr_loss, DistillBatch, JointGrads, KdConfig, LossBreakdown, LossWeights};
pub use list_kd::{list_kd_loss, soften_list, vanilla_list_kl, DisentangledLogits, ListKdMode, ListKdOutput};
pub use pair_kd::{pair_kd_loss, PairKdOutput};
