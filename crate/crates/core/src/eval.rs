//! All-ranking top-K evaluation.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::graph::InteractionGraph;
use crate::math;
use crate::propagate::NodeEmbeddings;
use crate::teacher::TeacherForward;

/// Anything that can score every item for a user.
pub trait Scorer {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    /// Writes the score of every item for `user` into `out`.
    fn score_user(&self, user: usize, out: &mut [f64]);
}

impl Scorer for NodeEmbeddings {
    fn n_users(&self) -> usize {
        self.users.rows()
    }

    fn n_items(&self) -> usize {
        self.items.rows()
    }

    fn score_user(&self, user: usize, out: &mut [f64]) {
        let u = self.user(user);
        for (i, o) in out.iter_mut().enumerate() {
            *o = math::dot(u, self.item(i));
        }
    }
}

impl Scorer for TeacherForward {
    fn n_users(&self) -> usize {
        self.id.users.rows()
    }

    fn n_items(&self) -> usize {
        self.id.items.rows()
    }

    fn score_user(&self, user: usize, out: &mut [f64]) {
        self.id.score_user(user, out);
        let scale = 1.0 / self.modal.len() as f64;
        for f in &self.modal {
            let u = f.user(user);
            for (i, o) in out.iter_mut().enumerate() {
                *o += scale * math::dot(u, f.item(i));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    /// Users with at least one target item and one candidate.
    pub n_users: usize,
}

impl EvalResult {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.recall[p])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.ndcg[p])
    }
}

/// Ranks every item not in `exclude` for each user with items in `target`,
/// ordering by score descending and item index ascending on ties.
///
/// Recall@K is hits over the number of target items; NDCG@K uses binary
/// relevance and `log2(rank + 1)` discounts. Both are averaged over users.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    exclude: &InteractionGraph,
    target: &InteractionGraph,
    ks: &[usize],
) -> Result<EvalResult> {
    if ks.is_empty() || ks.contains(&0) {
        bail!(InvalidArgument, "cutoffs must be a non-empty list of positive integers");
    }
    let (n_users, n_items) = (scorer.n_users(), scorer.n_items());
    for g in [exclude, target] {
        if g.n_users() != n_users || g.n_items() != n_items {
            bail!(Shape, "graph is {}x{}, scorer is {}x{}", g.n_users(), g.n_items(), n_users, n_items);
        }
    }
    let k_max = *ks.iter().max().expect("non-empty");
    let mut recall = vec![0.0; ks.len()];
    let mut ndcg = vec![0.0; ks.len()];
    let mut counted = 0usize;
    let mut scores = vec![0.0; n_items];
    for u in 0..n_users {
        let relevant = target.items_of(u);
        if relevant.is_empty() {
            continue;
        }
        scorer.score_user(u, &mut scores);
        let seen = exclude.items_of(u);
        let mut candidates: Vec<usize> =
            (0..n_items).filter(|&i| seen.binary_search(&(i as u32)).is_err()).collect();
        if candidates.is_empty() {
            log::warn!("user {u} has no candidate items; skipped");
            continue;
        }
        let order = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
        let top = k_max.min(candidates.len());
        if top < candidates.len() {
            candidates.select_nth_unstable_by(top - 1, order);
            candidates.truncate(top);
        }
        candidates.sort_unstable_by(order);

        counted += 1;
        for (slot, &k) in ks.iter().enumerate() {
            let mut hits = 0usize;
            let mut dcg = 0.0;
            for (rank, &i) in candidates.iter().take(k).enumerate() {
                if relevant.binary_search(&(i as u32)).is_ok() {
                    hits += 1;
                    dcg += 1.0 / math::log2(rank as f64 + 2.0);
                }
            }
            let idcg: f64 = (0..relevant.len().min(k)).map(|r| 1.0 / math::log2(r as f64 + 2.0)).sum();
            recall[slot] += hits as f64 / relevant.len() as f64;
            ndcg[slot] += dcg / idcg;
        }
    }
    if counted > 0 {
        recall.iter_mut().chain(ndcg.iter_mut()).for_each(|v| *v /= counted as f64);
    }
    Ok(EvalResult { ks: ks.to_vec(), recall, ndcg, n_users: counted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseMatrix;

    struct Fixed(Vec<Vec<f64>>);

    impl Scorer for Fixed {
        fn n_users(&self) -> usize {
            self.0.len()
        }
        fn n_items(&self) -> usize {
            self.0[0].len()
        }
        fn score_user(&self, user: usize, out: &mut [f64]) {
            out.copy_from_slice(&self.0[user]);
        }
    }

    #[test]
    fn single_target_ranked_first() {
        let train = InteractionGraph::with_sizes(1, 4, &[(0, 0)]).unwrap();
        let test = InteractionGraph::with_sizes(1, 4, &[(0, 2)]).unwrap();
        let r = evaluate(&Fixed(vec![vec![9.0, 0.0, 5.0, 1.0]]), &train, &test, &[1, 2]).unwrap();
        assert_eq!(r.recall, vec![1.0, 1.0]);
        assert_eq!(r.ndcg, vec![1.0, 1.0]);
    }

    #[test]
    fn single_target_outside_cutoff() {
        let train = InteractionGraph::with_sizes(1, 4, &[(0, 0)]).unwrap();
        let test = InteractionGraph::with_sizes(1, 4, &[(0, 2)]).unwrap();
        let r = evaluate(&Fixed(vec![vec![9.0, 3.0, 0.5, 1.0]]), &train, &test, &[2]).unwrap();
        assert_eq!(r.recall_at(2), Some(0.0));
        assert_eq!(r.ndcg_at(2), Some(0.0));
    }

    #[test]
    fn ties_prefer_lower_index() {
        let train = InteractionGraph::with_sizes(1, 3, &[]).unwrap();
        let test = InteractionGraph::with_sizes(1, 3, &[(0, 1)]).unwrap();
        let r = evaluate(&Fixed(vec![vec![1.0, 1.0, 1.0]]), &train, &test, &[1, 2]).unwrap();
        assert_eq!(r.recall, vec![0.0, 1.0]);
        assert!((r.ndcg[1] - 1.0 / libm::log2(3.0)).abs() < 1e-15);
    }

    #[test]
    fn users_without_candidates_skipped() {
        let train = InteractionGraph::with_sizes(2, 2, &[(0, 0), (0, 1)]).unwrap();
        let test = InteractionGraph::with_sizes(2, 2, &[(1, 1)]).unwrap();
        let emb = NodeEmbeddings { users: DenseMatrix::zeros(2, 1), items: DenseMatrix::zeros(2, 1) };
        // User 0 has no target items, so only user 1 counts.
        let r = evaluate(&emb, &train, &test, &[1]).unwrap();
        assert_eq!(r.n_users, 1);
    }

    #[test]
    fn bad_cutoffs() {
        let g = InteractionGraph::with_sizes(1, 1, &[]).unwrap();
        assert!(evaluate(&Fixed(vec![vec![0.0]]), &g, &g, &[]).is_err());
        assert!(evaluate(&Fixed(vec![vec![0.0]]), &g, &g, &[0]).is_err());
    }
}
