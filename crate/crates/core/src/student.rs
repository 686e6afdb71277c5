//! The inference-time recommender: two ID embedding tables propagated by
//! LightGCN. It owns no modality parameters.

use alloc::vec::Vec;

use crate::error::Result;
use crate::numerics::{stream_rng, xavier_init_with, ParamTensor, SparseMatrix, Stream};
use crate::propagate::NodeEmbeddings;

pub const USER_TABLE: &str = "student.user_id_embedding";
pub const ITEM_TABLE: &str = "student.item_id_embedding";

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    pub user_emb: ParamTensor,
    pub item_emb: ParamTensor,
    pub layers: usize,
}

impl StudentModel {
    pub fn new(n_users: usize, n_items: usize, dim: usize, layers: usize, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, Stream::Init, 100);
        Ok(Self {
            user_emb: ParamTensor::new(USER_TABLE, xavier_init_with(n_users, dim, &mut rng)?),
            item_emb: ParamTensor::new(ITEM_TABLE, xavier_init_with(n_items, dim, &mut rng)?),
            layers,
        })
    }

    pub fn dim(&self) -> usize {
        self.user_emb.value.cols()
    }

    pub fn n_users(&self) -> usize {
        self.user_emb.value.rows()
    }

    pub fn n_items(&self) -> usize {
        self.item_emb.value.rows()
    }

    /// Layer-mean propagation of the raw tables.
    pub fn forward(&self, adj: &SparseMatrix) -> Result<NodeEmbeddings> {
        NodeEmbeddings { users: self.user_emb.value.clone(), items: self.item_emb.value.clone() }
            .propagate(adj, self.layers)
    }

    /// Accumulates table gradients given gradients on the forward output.
    pub fn backward(&mut self, adj: &SparseMatrix, grad: &NodeEmbeddings) -> Result<()> {
        let raw = grad.propagate(adj, self.layers)?;
        self.user_emb.grad.axpy(1.0, &raw.users)?;
        self.item_emb.grad.axpy(1.0, &raw.items)
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        alloc::vec![&self.user_emb, &self.item_emb]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        alloc::vec![&mut self.user_emb, &mut self.item_emb]
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }
}

/// `(users + items) · d`, the student's full parameter budget.
pub fn student_param_count(n_users: usize, n_items: usize, dim: usize) -> usize {
    (n_users + n_items) * dim
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, normalized_adjacency};
    use crate::numerics::DenseMatrix;

    #[test]
    fn zero_layers_returns_tables() {
        let g = build_graph(&[(0, 0), (1, 1), (1, 0)]).unwrap();
        let s = StudentModel::new(2, 2, 3, 0, 1).unwrap();
        let out = s.forward(&normalized_adjacency(&g)).unwrap();
        assert_eq!(out.users, s.user_emb.value);
        assert_eq!(out.items, s.item_emb.value);
    }

    #[test]
    fn single_edge_one_layer_averages() {
        let g = build_graph(&[(0, 0)]).unwrap();
        let mut s = StudentModel::new(1, 1, 2, 1, 1).unwrap();
        s.user_emb.value = DenseMatrix::new(1, 2, alloc::vec![1.0, 3.0]).unwrap();
        s.item_emb.value = DenseMatrix::new(1, 2, alloc::vec![-1.0, 5.0]).unwrap();
        let out = s.forward(&normalized_adjacency(&g)).unwrap();
        assert_eq!(out.users.row(0), &[0.0, 4.0]);
        assert_eq!(out.items.row(0), &[0.0, 4.0]);
    }

    #[test]
    fn score_is_inner_product() {
        let e = NodeEmbeddings {
            users: DenseMatrix::new(1, 4, alloc::vec![1.0, 0.0, 0.0, 0.0]).unwrap(),
            items: DenseMatrix::new(2, 4, alloc::vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(),
        };
        assert_eq!(e.score(0, 0).unwrap(), 1.0);
        assert_eq!(e.score(0, 1).unwrap(), 0.0);
        assert!(e.score(1, 0).is_err());
        assert!(e.score(0, 2).is_err());
    }

    #[test]
    fn published_student_counts() {
        assert_eq!(student_param_count(43739, 17239, 32), 1_951_296);
        assert_eq!(student_param_count(41691, 21479, 64), 4_042_880);
        assert_eq!(student_param_count(1, 1, 8), 16);
        assert_eq!(StudentModel::new(1, 1, 8, 2, 0).unwrap().param_count(), 16);
    }

    #[test]
    fn census_has_exactly_two_tables() {
        let s = StudentModel::new(3, 4, 5, 2, 0).unwrap();
        let names: Vec<_> = s.params().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, [USER_TABLE, ITEM_TABLE]);
    }
}
