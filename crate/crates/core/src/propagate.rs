//! LightGCN propagation: `mean(X, ÂX, Â²X, …, Â^L X)`.
//!
//! The map is linear in `X`, and its adjoint is itself whenever `Â` is
//! symmetric. The normalized adjacency always is, so [`layer_mean`] also
//! backpropagates an upstream gradient to the layer-0 embeddings.

use crate::error::{bail, Result};
use crate::math;
use crate::numerics::{DenseMatrix, SparseMatrix};

/// User and item rows of one embedding space, or gradients with respect
/// to them.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings {
    pub users: DenseMatrix,
    pub items: DenseMatrix,
}

impl NodeEmbeddings {
    pub fn zeros(n_users: usize, n_items: usize, dim: usize) -> Self {
        Self { users: DenseMatrix::zeros(n_users, dim), items: DenseMatrix::zeros(n_items, dim) }
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    pub fn n_users(&self) -> usize {
        self.users.rows()
    }

    pub fn n_items(&self) -> usize {
        self.items.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_users(), self.n_items(), self.dim())
    }

    #[inline]
    pub fn user(&self, u: usize) -> &[f64] {
        self.users.row(u)
    }

    #[inline]
    pub fn item(&self, i: usize) -> &[f64] {
        self.items.row(i)
    }

    /// Inner product of user `u` and item `i`.
    pub fn score(&self, u: usize, i: usize) -> Result<f64> {
        if u >= self.n_users() || i >= self.n_items() {
            bail!(InvalidArgument, "score index ({u}, {i}) outside {}x{}", self.n_users(), self.n_items());
        }
        Ok(math::dot(self.user(u), self.item(i)))
    }

    /// Propagates both blocks together over the bipartite adjacency.
    pub fn propagate(&self, adj: &SparseMatrix, layers: usize) -> Result<Self> {
        let n_users = self.n_users();
        if adj.rows() != n_users + self.n_items() {
            bail!(Shape, "adjacency has {} nodes, embeddings have {}", adj.rows(), n_users + self.n_items());
        }
        let stacked = DenseMatrix::vstack(&self.users, &self.items)?;
        let (users, items) = layer_mean(adj, &stacked, layers)?.split_rows(n_users);
        Ok(Self { users, items })
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.users.axpy(alpha, &other.users)?;
        self.items.axpy(alpha, &other.items)
    }
}

pub fn layer_mean(adj: &SparseMatrix, x: &DenseMatrix, layers: usize) -> Result<DenseMatrix> {
    let mut acc = x.clone();
    let mut current = x.clone();
    for _ in 0..layers {
        current = adj.spmm(&current)?;
        acc.axpy(1.0, &current)?;
    }
    acc.scale(1.0 / (layers + 1) as f64);
    Ok(acc)
}
