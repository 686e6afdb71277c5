//! Datasets: modality feature sets, train/validation/test bundles, the
//! synthetic latent-factor generator and summary statistics.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::graph::{sparsity, InteractionGraph};
use crate::math;
use crate::numerics::{stream_rng, DenseMatrix, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Modality {
    pub name: String,
    /// `n_items × d_m`.
    pub features: DenseMatrix,
}

impl Modality {
    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityFeatureSet {
    modalities: Vec<Modality>,
}

impl ModalityFeatureSet {
    pub fn new(n_items: usize, modalities: Vec<Modality>) -> Result<Self> {
        if modalities.is_empty() {
            bail!(InvalidArgument, "at least one modality is required");
        }
        for m in &modalities {
            if m.features.rows() != n_items {
                bail!(Shape, "modality '{}' has {} rows for {n_items} items", m.name, m.features.rows());
            }
            if !m.features.is_finite() {
                bail!(NonFinite, "features of modality '{}'", m.name);
            }
        }
        Ok(Self { modalities })
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.modalities
    }

    pub fn len(&self) -> usize {
        self.modalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modalities.is_empty()
    }
}

/// Train graph plus held-out validation and test edges and item features.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: InteractionGraph,
    pub validation: InteractionGraph,
    pub test: InteractionGraph,
    pub features: ModalityFeatureSet,
}

impl DatasetBundle {
    pub fn new(
        train: InteractionGraph,
        validation: InteractionGraph,
        test: InteractionGraph,
        features: ModalityFeatureSet,
    ) -> Result<Self> {
        let dims = (train.n_users(), train.n_items());
        for (name, g) in [("validation", &validation), ("test", &test)] {
            if (g.n_users(), g.n_items()) != dims {
                bail!(Shape, "{name} split is {}x{}, train is {}x{}", g.n_users(), g.n_items(), dims.0, dims.1);
            }
        }
        let pairs = [("train", &train, "validation", &validation), ("train", &train, "test", &test), (
            "validation",
            &validation,
            "test",
            &test,
        )];
        for (na, a, nb, b) in pairs {
            if let Some((u, i)) = a.edges().find(|&(u, i)| b.contains(u, i)) {
                bail!(InvalidArgument, "edge ({u}, {i}) is in both {na} and {nb}");
            }
        }
        let features_ok = features.modalities().iter().all(|m| m.features.rows() == dims.1);
        if !features_ok {
            bail!(Shape, "feature rows do not cover all {} items", dims.1);
        }
        Ok(Self { train, validation, test, features })
    }

    pub fn n_users(&self) -> usize {
        self.train.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items()
    }

    pub fn n_interactions(&self) -> usize {
        self.train.n_edges() + self.validation.n_edges() + self.test.n_edges()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub latent_dim: usize,
    pub modality_dims: Vec<usize>,
    pub interactions_per_user: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 500,
            n_items: 300,
            latent_dim: 16,
            modality_dims: alloc::vec![64, 48],
            interactions_per_user: 20,
            noise_std: 0.1,
            seed: 0,
        }
    }
}

/// A generated bundle together with the latent factors that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub bundle: DatasetBundle,
    pub user_latents: DenseMatrix,
    pub item_latents: DenseMatrix,
    /// Per modality, the `d_m × g` map with orthonormal columns.
    pub lift_maps: Vec<DenseMatrix>,
}

pub fn gen_synthetic(config: &SyntheticConfig) -> Result<DatasetBundle> {
    gen_synthetic_with_latents(config).map(|d| d.bundle)
}

/// Latent-factor generator. Users and items get standard-normal latents;
/// each user observes the top items under `z_u · z_i + noise`; modality
/// features are `M_m z_i + noise` for an orthonormal lift `M_m`. Every user
/// then contributes ~10% of its edges to test and ~5% to validation.
pub fn gen_synthetic_with_latents(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    let c = config;
    if c.n_users == 0 || c.n_items == 0 || c.latent_dim == 0 || c.interactions_per_user == 0 {
        bail!(InvalidArgument, "synthetic sizes must be positive");
    }
    if c.interactions_per_user >= c.n_items {
        bail!(InvalidArgument, "interactions per user ({}) must be below item count ({})", c.interactions_per_user, c.n_items);
    }
    if c.modality_dims.is_empty() {
        bail!(InvalidArgument, "at least one modality is required");
    }
    if let Some(&d) = c.modality_dims.iter().find(|&&d| d < c.latent_dim) {
        bail!(InvalidArgument, "modality dimension {d} is below latent dimension {}", c.latent_dim);
    }
    if !(c.noise_std >= 0.0 && c.noise_std.is_finite()) {
        bail!(InvalidArgument, "noise_std must be finite and non-negative");
    }

    let mut rng = stream_rng(c.seed, Stream::Data, 0);
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let user_latents = DenseMatrix::from_fn(c.n_users, c.latent_dim, |_, _| normal(&mut rng));
    let item_latents = DenseMatrix::from_fn(c.n_items, c.latent_dim, |_, _| normal(&mut rng));

    let mut observed: Vec<Vec<usize>> = Vec::with_capacity(c.n_users);
    for u in 0..c.n_users {
        let zu = user_latents.row(u);
        let mut scored: Vec<(f64, usize)> = (0..c.n_items)
            .map(|i| (math::dot(zu, item_latents.row(i)) + c.noise_std * normal(&mut rng), i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        observed.push(scored.iter().take(c.interactions_per_user).map(|&(_, i)| i).collect());
    }

    let mut modalities = Vec::with_capacity(c.modality_dims.len());
    let mut lift_maps = Vec::with_capacity(c.modality_dims.len());
    for (m, &dm) in c.modality_dims.iter().enumerate() {
        let mut mrng = stream_rng(c.seed, Stream::Data, 1 + m as u32);
        let lift = orthonormal_columns(DenseMatrix::from_fn(dm, c.latent_dim, |_, _| normal(&mut mrng)))?;
        let mut x = item_latents.matmul_t(&lift)?;
        for v in x.as_mut_slice() {
            *v += c.noise_std * normal(&mut mrng);
        }
        modalities.push(Modality { name: format!("m{m}"), features: x });
        lift_maps.push(lift);
    }

    let mut split_rng = stream_rng(c.seed, Stream::Data, 1000);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (u, items) in observed.iter_mut().enumerate() {
        items.shuffle(&mut split_rng);
        let (n_val, n_test) = split_sizes(items.len());
        for (k, &i) in items.iter().enumerate() {
            if k < n_test {
                test.push((u, i));
            } else if k < n_test + n_val {
                val.push((u, i));
            } else {
                train.push((u, i));
            }
        }
    }
    let bundle = DatasetBundle::new(
        InteractionGraph::with_sizes(c.n_users, c.n_items, &train)?,
        InteractionGraph::with_sizes(c.n_users, c.n_items, &val)?,
        InteractionGraph::with_sizes(c.n_users, c.n_items, &test)?,
        ModalityFeatureSet::new(c.n_items, modalities)?,
    )?;
    Ok(SyntheticDataset { bundle, user_latents, item_latents, lift_maps })
}

/// `(validation, test)` edge counts for a user with `n` edges: 5% / 10%
/// rounded, with at least one of each once `n ≥ 3` (test alone at `n = 2`).
pub fn split_sizes(n: usize) -> (usize, usize) {
    match n {
        0 | 1 => (0, 0),
        2 => (0, 1),
        _ => {
            let test = (math::round(0.10 * n as f64) as usize).max(1);
            let val = (math::round(0.05 * n as f64) as usize).max(1);
            (val, test)
        }
    }
}

/// Gram–Schmidt over the columns (twice, for stability).
fn orthonormal_columns(mut m: DenseMatrix) -> Result<DenseMatrix> {
    let (rows, cols) = m.shape();
    for j in 0..cols {
        for _ in 0..2 {
            for k in 0..j {
                let proj: f64 = (0..rows).map(|r| m.get(r, j) * m.get(r, k)).sum();
                for r in 0..rows {
                    let v = m.get(r, j) - proj * m.get(r, k);
                    m.set(r, j, v);
                }
            }
        }
        let norm = math::sqrt((0..rows).map(|r| m.get(r, j) * m.get(r, j)).sum());
        if norm < 1e-12 {
            bail!(InvalidArgument, "degenerate lift map column {j}");
        }
        for r in 0..rows {
            let v = m.get(r, j) / norm;
            m.set(r, j, v);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    /// Fraction in `[0, 1]`.
    pub sparsity: f64,
    pub modality_dims: Vec<(String, usize)>,
}

impl DatasetStats {
    pub fn from_counts(n_users: usize, n_items: usize, n_interactions: usize) -> Self {
        Self {
            n_users,
            n_items,
            n_interactions,
            sparsity: sparsity(n_users, n_items, n_interactions),
            modality_dims: Vec::new(),
        }
    }

    /// Sparsity as a percentage with three decimals, e.g. `"99.919%"`.
    pub fn sparsity_percent(&self) -> String {
        format!("{:.3}%", self.sparsity * 100.0)
    }
}

pub fn dataset_stats(bundle: &DatasetBundle) -> DatasetStats {
    let mut stats = DatasetStats::from_counts(bundle.n_users(), bundle.n_items(), bundle.n_interactions());
    stats.modality_dims = bundle.features.modalities().iter().map(|m| (m.name.clone(), m.dim())).collect();
    stats
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "users: {}", self.n_users)?;
        writeln!(f, "items: {}", self.n_items)?;
        writeln!(f, "interactions: {}", self.n_interactions)?;
        writeln!(f, "sparsity: {}", self.sparsity_percent())?;
        for (name, d) in &self.modality_dims {
            writeln!(f, "modality {name}: {d}")?;
        }
        Ok(())
    }
}
