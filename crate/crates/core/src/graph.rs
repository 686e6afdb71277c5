//! Bipartite user–item interaction graph, its symmetric degree-normalized
//! adjacency, and the samplers feeding the ranking losses.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::math;
use crate::numerics::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    n_users: usize,
    n_items: usize,
    n_edges: usize,
    user_items: Vec<Vec<u32>>,
    item_users: Vec<Vec<u32>>,
}

/// Builds a graph sized `1 + max index` along each side.
pub fn build_graph(interactions: &[(usize, usize)]) -> Result<InteractionGraph> {
    if interactions.is_empty() {
        bail!(InvalidArgument, "no interactions");
    }
    let n_users = interactions.iter().map(|e| e.0).max().unwrap_or(0) + 1;
    let n_items = interactions.iter().map(|e| e.1).max().unwrap_or(0) + 1;
    InteractionGraph::with_sizes(n_users, n_items, interactions)
}

impl InteractionGraph {
    /// Builds a graph over fixed user/item counts. Duplicate edges collapse;
    /// out-of-range indices are errors. An empty edge list is allowed here so
    /// that held-out splits with no edges for some users stay representable.
    pub fn with_sizes(n_users: usize, n_items: usize, interactions: &[(usize, usize)]) -> Result<Self> {
        if n_users == 0 || n_items == 0 {
            bail!(InvalidArgument, "graph needs at least one user and one item");
        }
        if n_users > u32::MAX as usize || n_items > u32::MAX as usize {
            bail!(InvalidArgument, "graph too large for 32-bit indices");
        }
        let mut user_items = vec![Vec::new(); n_users];
        for &(u, i) in interactions {
            if u >= n_users || i >= n_items {
                bail!(InvalidArgument, "edge ({u}, {i}) outside {n_users} users x {n_items} items");
            }
            user_items[u].push(i as u32);
        }
        let mut item_users = vec![Vec::new(); n_items];
        let mut n_edges = 0;
        for (u, items) in user_items.iter_mut().enumerate() {
            items.sort_unstable();
            items.dedup();
            n_edges += items.len();
            for &i in items.iter() {
                item_users[i as usize].push(u as u32);
            }
        }
        Ok(Self { n_users, n_items, n_edges, user_items, item_users })
    }

    #[inline]
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    #[inline]
    pub fn n_items(&self) -> usize {
        self.n_items
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    #[inline]
    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Sorted items of user `u`.
    #[inline]
    pub fn items_of(&self, u: usize) -> &[u32] {
        &self.user_items[u]
    }

    /// Sorted users of item `i`.
    #[inline]
    pub fn users_of(&self, i: usize) -> &[u32] {
        &self.item_users[i]
    }

    #[inline]
    pub fn contains(&self, u: usize, i: usize) -> bool {
        u < self.n_users && self.user_items[u].binary_search(&(i as u32)).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.user_items
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i as usize)))
    }

    /// `1 − |E| / (users · items)`.
    pub fn sparsity(&self) -> f64 {
        sparsity(self.n_users, self.n_items, self.n_edges)
    }
}

pub fn sparsity(n_users: usize, n_items: usize, n_edges: usize) -> f64 {
    1.0 - n_edges as f64 / (n_users as f64 * n_items as f64)
}

/// Symmetric bipartite adjacency over `users ++ items`, with the entry for
/// edge `(u, i)` equal to `1 / √(deg(u) · deg(i))`. Isolated nodes get
/// empty rows.
pub fn normalized_adjacency(g: &InteractionGraph) -> SparseMatrix {
    let n = g.n_nodes();
    let mut entries = Vec::with_capacity(2 * g.n_edges());
    for (u, i) in g.edges() {
        let w = 1.0 / math::sqrt(g.items_of(u).len() as f64 * g.users_of(i).len() as f64);
        entries.push((u, g.n_users + i, w));
        entries.push((g.n_users + i, u, w));
    }
    SparseMatrix::from_triplets(n, n, entries).expect("edges are unique and in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BprTriplet {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// One observed item followed by `K − 1` distinct unobserved items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankList {
    pub user: usize,
    pub items: Vec<usize>,
}

fn sample_negative<R: Rng + ?Sized>(g: &InteractionGraph, u: usize, rng: &mut R) -> usize {
    let observed = g.items_of(u);
    debug_assert!(observed.len() < g.n_items);
    if observed.len() * 2 <= g.n_items {
        loop {
            let i = rng.random_range(0..g.n_items);
            if observed.binary_search(&(i as u32)).is_err() {
                return i;
            }
        }
    }
    // Dense user: walk to the k-th unobserved item.
    let k = rng.random_range(0..g.n_items - observed.len());
    (0..g.n_items)
        .filter(|&i| observed.binary_search(&(i as u32)).is_err())
        .nth(k)
        .expect("k is below the complement size")
}

/// `batch_size` triplets with the user drawn uniformly among users that
/// have at least one observed and one unobserved item, the positive uniform
/// over that user's items and the negative uniform over the rest.
pub fn sample_bpr_batch<R: Rng + ?Sized>(
    g: &InteractionGraph,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<BprTriplet>> {
    let eligible: Vec<usize> = (0..g.n_users)
        .filter(|&u| {
            let d = g.items_of(u).len();
            d > 0 && d < g.n_items
        })
        .collect();
    if eligible.is_empty() {
        bail!(Sampling, "no user has both observed and unobserved items");
    }
    let mut out = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let user = eligible[rng.random_range(0..eligible.len())];
        let items = g.items_of(user);
        let pos = items[rng.random_range(0..items.len())] as usize;
        let neg = sample_negative(g, user, rng);
        out.push(BprTriplet { user, pos, neg });
    }
    Ok(out)
}

/// Completes each `(user, observed item)` anchor with `list_len − 1`
/// distinct unobserved items, sampled uniformly without replacement.
pub fn rank_lists_for_anchors<R: Rng + ?Sized>(
    g: &InteractionGraph,
    anchors: &[(usize, usize)],
    list_len: usize,
    rng: &mut R,
) -> Result<Vec<RankList>> {
    if list_len < 2 {
        bail!(InvalidArgument, "ranking lists need at least 2 items, got {list_len}");
    }
    let need = list_len - 1;
    let mut out = Vec::with_capacity(anchors.len());
    for &(user, anchor) in anchors {
        if !g.contains(user, anchor) {
            bail!(Sampling, "anchor ({user}, {anchor}) is not an observed edge");
        }
        let observed = g.items_of(user);
        let free = g.n_items - observed.len();
        if free < need {
            bail!(Sampling, "user {user} has {free} unobserved items, list needs {need}");
        }
        let mut items = Vec::with_capacity(list_len);
        items.push(anchor);
        if need * 4 <= free {
            while items.len() < list_len {
                let i = sample_negative(g, user, rng);
                if !items[1..].contains(&i) {
                    items.push(i);
                }
            }
        } else {
            let mut pool: Vec<usize> =
                (0..g.n_items).filter(|&i| observed.binary_search(&(i as u32)).is_err()).collect();
            for k in 0..need {
                let j = rng.random_range(k..pool.len());
                pool.swap(k, j);
                items.push(pool[k]);
            }
        }
        out.push(RankList { user, items });
    }
    Ok(out)
}

/// `n_lists` ranking lists for users drawn uniformly among users with at
/// least one observed item.
pub fn sample_rank_lists<R: Rng + ?Sized>(
    g: &InteractionGraph,
    n_lists: usize,
    list_len: usize,
    rng: &mut R,
) -> Result<Vec<RankList>> {
    let active: Vec<usize> = (0..g.n_users).filter(|&u| !g.items_of(u).is_empty()).collect();
    if active.is_empty() {
        bail!(Sampling, "graph has no edges");
    }
    let mut anchors = Vec::with_capacity(n_lists);
    for _ in 0..n_lists {
        let user = active[rng.random_range(0..active.len())];
        let items = g.items_of(user);
        anchors.push((user, items[rng.random_range(0..items.len())] as usize));
    }
    rank_lists_for_anchors(g, &anchors, list_len, rng)
}
