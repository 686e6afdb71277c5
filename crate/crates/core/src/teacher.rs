//! The multi-modal teacher.
//!
//! Two encoders share the interaction graph:
//! * an ID path, LightGCN over `E^T`;
//! * one modality path per feature set: a prompt-guided affine reduction
//!   `d_m → d` of the item features, a neighbour-mean user init, and
//!   LightGCN over both.
//!
//! The prompt `p ∈ R^d` comes from a feed-forward layer over the averaged
//! PCA-reduced features. Per item and modality it is turned into a
//! feature-space offset `p^m_i = C_m (s_i · p)` with `s_i = pᵀ reduce_m(x_i)`,
//! i.e. the frozen PCA back-projection of the scaled prompt, and added to
//! the features (scaled by `λ1`) before the reduction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ModalityFeatureSet;
use crate::error::{bail, Result};
use crate::graph::InteractionGraph;
use crate::math;
use crate::numerics::{
    dropout_forward, stream_rng, xavier_init_with, DenseMatrix, DropoutMask, ParamTensor, SparseMatrix, Stream,
};
use crate::pca::{fit_pca, PcaReducer};
use crate::propagate::NodeEmbeddings;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub dim: usize,
    pub layers: usize,
    pub dropout: f64,
    /// Scale of the prompt offset added to the raw features.
    pub lambda1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptModule {
    /// `d × d`.
    pub weight: ParamTensor,
    /// `1 × d`.
    pub bias: ParamTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionLayer {
    /// `d_m × d`.
    pub weight: ParamTensor,
    /// `1 × d`.
    pub bias: ParamTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherModel {
    pub user_emb: ParamTensor,
    pub item_emb: ParamTensor,
    pub prompt: PromptModule,
    pub reductions: Vec<ReductionLayer>,
    /// Frozen; never part of the parameter census.
    pub reducers: Vec<PcaReducer>,
    pub layers: usize,
    pub dropout: f64,
    pub lambda1: f64,
}

struct ModalCache {
    /// `C p`.
    lifted_prompt: Vec<f64>,
    /// `s_i = pᵀ reduce(x_i)` per item.
    prompt_scores: Vec<f64>,
    mask: DropoutMask,
}

/// Everything one teacher forward pass produces, plus what its backward
/// pass needs.
pub struct TeacherForward {
    /// Averaged reduced features fed to the prompt layer.
    pub prompt_input: Vec<f64>,
    pub prompt: Vec<f64>,
    /// Final ID embeddings `E^T`.
    pub id: NodeEmbeddings,
    /// Final modality embeddings `F^m`, one per modality.
    pub modal: Vec<NodeEmbeddings>,
    caches: Vec<ModalCache>,
}

impl TeacherForward {
    /// `e_u · e_i + mean_m f^m_u · f^m_i`.
    pub fn score(&self, u: usize, i: usize) -> Result<f64> {
        let mut s = self.id.score(u, i)?;
        let scale = 1.0 / self.modal.len() as f64;
        for f in &self.modal {
            s += scale * f.score(u, i)?;
        }
        Ok(s)
    }
}

impl TeacherModel {
    /// Fits the PCA reducers to `features` and initializes every trainable
    /// tensor from `seed`.
    pub fn new(
        n_users: usize,
        n_items: usize,
        features: &ModalityFeatureSet,
        config: &TeacherConfig,
        seed: u64,
    ) -> Result<Self> {
        let d = config.dim;
        if !(0.0..1.0).contains(&config.dropout) {
            bail!(InvalidArgument, "dropout must lie in [0, 1), got {}", config.dropout);
        }
        let reducers = features
            .modalities()
            .iter()
            .map(|m| fit_pca(&m.name, &m.features, d))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = stream_rng(seed, Stream::Init, 200);
        let user_emb = ParamTensor::new("teacher.user_id_embedding", xavier_init_with(n_users, d, &mut rng)?);
        let item_emb = ParamTensor::new("teacher.item_id_embedding", xavier_init_with(n_items, d, &mut rng)?);
        let prompt = PromptModule {
            weight: ParamTensor::new("teacher.prompt.weight", xavier_init_with(d, d, &mut rng)?),
            bias: ParamTensor::new("teacher.prompt.bias", semantic_prompt_init(&reducers, d, &mut rng)?),
        };
        let mut reductions = Vec::with_capacity(reducers.len());
        for m in features.modalities() {
            reductions.push(ReductionLayer {
                weight: ParamTensor::new(format!("teacher.{}.reduce.weight", m.name), xavier_init_with(m.dim(), d, &mut rng)?),
                bias: ParamTensor::new(format!("teacher.{}.reduce.bias", m.name), DenseMatrix::zeros(1, d)),
            });
        }
        Ok(Self {
            user_emb,
            item_emb,
            prompt,
            reductions,
            reducers,
            layers: config.layers,
            dropout: config.dropout,
            lambda1: config.lambda1,
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

    pub fn n_modalities(&self) -> usize {
        self.reductions.len()
    }

    fn check_features(&self, features: &ModalityFeatureSet) -> Result<()> {
        if features.len() != self.reducers.len() {
            bail!(Shape, "teacher has {} modalities, features have {}", self.reducers.len(), features.len());
        }
        for (m, r) in features.modalities().iter().zip(&self.reducers) {
            if m.dim() != r.input_dim() || m.features.rows() != self.n_items() {
                bail!(
                    Shape,
                    "modality '{}' is {}x{}, teacher expects {}x{}",
                    m.name,
                    m.features.rows(),
                    m.dim(),
                    self.n_items(),
                    r.input_dim()
                );
            }
        }
        Ok(())
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        adj: &SparseMatrix,
        train: &InteractionGraph,
        features: &ModalityFeatureSet,
        training: bool,
        rng: &mut R,
    ) -> Result<TeacherForward> {
        self.check_features(features)?;
        if train.n_users() != self.n_users() || train.n_items() != self.n_items() {
            bail!(Shape, "graph is {}x{}, teacher is {}x{}", train.n_users(), train.n_items(), self.n_users(), self.n_items());
        }
        let (prompt_input, prompt) =
            build_prompt(&self.prompt.weight.value, &self.prompt.bias.value, &self.reducers, features)?;
        let id = NodeEmbeddings { users: self.user_emb.value.clone(), items: self.item_emb.value.clone() }
            .propagate(adj, self.layers)?;

        let mut modal = Vec::with_capacity(self.n_modalities());
        let mut caches = Vec::with_capacity(self.n_modalities());
        for ((layer, reducer), m) in self.reductions.iter().zip(&self.reducers).zip(features.modalities()) {
            let x = &m.features;
            let lifted_prompt = reducer.lift_centered(&prompt)?;
            let prompt_scores = centered_dots(x, &reducer.mean, &lifted_prompt);
            // (x_i + λ1 s_i C p) W + b, without materializing the offsets.
            let mut z = x.matmul(&layer.weight.value)?;
            let offset = row_times(&lifted_prompt, &layer.weight.value);
            for (i, &s) in prompt_scores.iter().enumerate() {
                for ((zv, &o), &b) in z.row_mut(i).iter_mut().zip(&offset).zip(layer.bias.value.as_slice()) {
                    *zv += self.lambda1 * s * o + b;
                }
            }
            let (items0, mask) = dropout_forward(&z, self.dropout, training, rng)?;
            let users0 = neighbour_mean(train, &items0);
            modal.push(NodeEmbeddings { users: users0, items: items0 }.propagate(adj, self.layers)?);
            caches.push(ModalCache { lifted_prompt, prompt_scores, mask });
        }
        Ok(TeacherForward { prompt_input, prompt, id, modal, caches })
    }

    /// Accumulates gradients into every non-frozen tensor, given gradients
    /// on the final ID embeddings (optional) and on each modality's output.
    pub fn backward(
        &mut self,
        adj: &SparseMatrix,
        train: &InteractionGraph,
        features: &ModalityFeatureSet,
        fwd: &TeacherForward,
        grad_id: Option<&NodeEmbeddings>,
        grad_modal: &[NodeEmbeddings],
    ) -> Result<()> {
        if grad_modal.len() != self.n_modalities() {
            bail!(Shape, "expected {} modality gradients, got {}", self.n_modalities(), grad_modal.len());
        }
        if let Some(g) = grad_id {
            if !(self.user_emb.frozen && self.item_emb.frozen) {
                let raw = g.propagate(adj, self.layers)?;
                if !self.user_emb.frozen {
                    self.user_emb.grad.axpy(1.0, &raw.users)?;
                }
                if !self.item_emb.frozen {
                    self.item_emb.grad.axpy(1.0, &raw.items)?;
                }
            }
        }
        let prompt_live = !(self.prompt.weight.frozen && self.prompt.bias.frozen) && self.lambda1 != 0.0;
        let mut grad_prompt = vec![0.0; self.dim()];
        for (m, ((layer, reducer), cache)) in self.reductions.iter_mut().zip(&self.reducers).zip(&fwd.caches).enumerate() {
            let layer_live = !(layer.weight.frozen && layer.bias.frozen);
            if !layer_live && !prompt_live {
                continue;
            }
            let x = &features.modalities()[m].features;
            let raw = grad_modal[m].propagate(adj, self.layers)?;
            let mut dz = raw.items;
            neighbour_mean_adjoint(train, &raw.users, &mut dz);
            cache.mask.backward(&mut dz);

            // sᵀ dZ, shared by the weight and prompt gradients.
            let mut sdz = vec![0.0; dz.cols()];
            for (i, &s) in cache.prompt_scores.iter().enumerate() {
                for (a, &g) in sdz.iter_mut().zip(dz.row(i)) {
                    *a += s * g;
                }
            }
            if !layer.weight.frozen {
                let mut dw = x.t_matmul(&dz)?;
                for (r, &v) in cache.lifted_prompt.iter().enumerate() {
                    for (w, &g) in dw.row_mut(r).iter_mut().zip(&sdz) {
                        *w += self.lambda1 * v * g;
                    }
                }
                layer.weight.grad.axpy(1.0, &dw)?;
            }
            if !layer.bias.frozen {
                for (b, g) in layer.bias.grad.as_mut_slice().iter_mut().zip(dz.column_sums()) {
                    *b += g;
                }
            }
            if prompt_live {
                let w = &layer.weight.value;
                // Through the offset's direction C p.
                let mut d_lifted: Vec<f64> = (0..w.rows()).map(|r| self.lambda1 * math::dot(w.row(r), &sdz)).collect();
                // Through the per-item scales s_i = (C p) · (x_i − μ).
                let offset = row_times(&cache.lifted_prompt, w);
                for i in 0..x.rows() {
                    let ds = self.lambda1 * math::dot(dz.row(i), &offset);
                    if ds == 0.0 {
                        continue;
                    }
                    for ((acc, &xv), &mu) in d_lifted.iter_mut().zip(x.row(i)).zip(&reducer.mean) {
                        *acc += ds * (xv - mu);
                    }
                }
                let dp = reducer.components.t_matmul(&DenseMatrix::new(d_lifted.len(), 1, d_lifted)?)?;
                for (g, &v) in grad_prompt.iter_mut().zip(dp.as_slice()) {
                    *g += v;
                }
            }
        }
        if prompt_live {
            if !self.prompt.weight.frozen {
                for (j, &h) in fwd.prompt_input.iter().enumerate() {
                    for (w, &g) in self.prompt.weight.grad.row_mut(j).iter_mut().zip(&grad_prompt) {
                        *w += h * g;
                    }
                }
            }
            if !self.prompt.bias.frozen {
                for (b, &g) in self.prompt.bias.grad.as_mut_slice().iter_mut().zip(&grad_prompt) {
                    *b += g;
                }
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out = vec![&self.user_emb, &self.item_emb, &self.prompt.weight, &self.prompt.bias];
        for r in &self.reductions {
            out.push(&r.weight);
            out.push(&r.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = vec![&mut self.user_emb, &mut self.item_emb, &mut self.prompt.weight, &mut self.prompt.bias];
        for r in &mut self.reductions {
            out.push(&mut r.weight);
            out.push(&mut r.bias);
        }
        out
    }

    /// Tensors other than the prompt module.
    pub fn backbone_params(&self) -> Vec<&ParamTensor> {
        self.params().into_iter().filter(|p| !is_prompt(p)).collect()
    }

    /// Freezes every tensor except the prompt module, which stays trainable
    /// iff `tune_prompt`.
    pub fn freeze_for_distillation(&mut self, tune_prompt: bool) {
        for p in self.params_mut() {
            p.frozen = !(tune_prompt && is_prompt(p));
        }
    }

    pub fn unfreeze_all(&mut self) {
        for p in self.params_mut() {
            p.frozen = false;
        }
    }

    /// Sum of trainable tensor sizes; optionally adds the raw feature
    /// matrices (`Σ_m items · d_m`) as if stored in the model.
    pub fn param_count(&self, include_feature_storage: bool) -> usize {
        let params: usize = self.params().iter().map(|p| p.numel()).sum();
        let storage = if include_feature_storage {
            self.reducers.iter().map(|r| r.input_dim() * self.n_items()).sum()
        } else {
            0
        };
        params + storage
    }
}

fn is_prompt(p: &ParamTensor) -> bool {
    p.name.starts_with("teacher.prompt.")
}

/// Initial prompt bias from the modality spectra: per component, the mean
/// over modalities of the explained standard deviation, scaled to unit norm.
fn semantic_prompt_init<R: Rng + ?Sized>(reducers: &[PcaReducer], d: usize, rng: &mut R) -> Result<DenseMatrix> {
    let mut v = vec![0.0; d];
    for r in reducers {
        for (a, &ev) in v.iter_mut().zip(&r.explained_variance) {
            *a += math::sqrt(ev.max(0.0)) / reducers.len() as f64;
        }
    }
    let norm = math::sqrt(v.iter().map(|x| x * x).sum());
    if norm == 0.0 {
        return xavier_init_with(1, d, rng);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    DenseMatrix::new(1, d, v)
}

/// Returns `(h, p)` with `h` the mean over modalities of the mean reduced
/// item feature and `p = W_Pᵀ h + b_P`.
pub fn build_prompt(
    weight: &DenseMatrix,
    bias: &DenseMatrix,
    reducers: &[PcaReducer],
    features: &ModalityFeatureSet,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if reducers.len() != features.len() || reducers.is_empty() {
        bail!(Shape, "{} reducers for {} modalities", reducers.len(), features.len());
    }
    let d = bias.cols();
    if weight.shape() != (d, d) || reducers.iter().any(|r| r.output_dim() != d) {
        bail!(Shape, "prompt layer and reducers disagree on dimension {d}");
    }
    let mut h = vec![0.0; d];
    for (r, m) in reducers.iter().zip(features.modalities()) {
        let n = m.features.rows() as f64;
        let mean: Vec<f64> = m.features.column_sums().into_iter().map(|s| s / n).collect();
        // Reduction is affine, so the mean of reductions is the reduction of the mean.
        for (a, v) in h.iter_mut().zip(r.reduce(&mean)?) {
            *a += v / reducers.len() as f64;
        }
    }
    let mut p = bias.as_slice().to_vec();
    for (j, &hj) in h.iter().enumerate() {
        for (a, &w) in p.iter_mut().zip(weight.row(j)) {
            *a += hj * w;
        }
    }
    Ok((h, p))
}

/// The feature-space prompt for one item: `C (s · p)` with `s = pᵀ reduce(x)`.
pub fn modality_prompt(prompt: &[f64], reducer: &PcaReducer, x: &[f64]) -> Result<Vec<f64>> {
    let s = math::dot(prompt, &reducer.reduce(x)?);
    let scaled: Vec<f64> = prompt.iter().map(|v| s * v).collect();
    reducer.lift_centered(&scaled)
}

/// `dropout((x + λ1 p^m) W + b)` for a single item.
pub fn reduce_features<R: Rng + ?Sized>(
    layer: &ReductionLayer,
    x: &[f64],
    item_prompt: &[f64],
    lambda1: f64,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let w = &layer.weight.value;
    if x.len() != w.rows() || item_prompt.len() != w.rows() {
        bail!(Shape, "reduction expects {} inputs", w.rows());
    }
    if x.iter().chain(item_prompt).any(|v| !v.is_finite()) {
        bail!(NonFinite, "reduction input");
    }
    let mixed: Vec<f64> = x.iter().zip(item_prompt).map(|(a, b)| a + lambda1 * b).collect();
    let mut out = row_times(&mixed, w);
    for (o, b) in out.iter_mut().zip(layer.bias.value.as_slice()) {
        *o += b;
    }
    let (y, _) = dropout_forward(&DenseMatrix::row_vector(&out), dropout, training, rng)?;
    Ok(y.into_vec())
}

/// `vᵀ W` for a row vector `v`.
fn row_times(v: &[f64], w: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (r, &a) in v.iter().enumerate() {
        for (o, &b) in out.iter_mut().zip(w.row(r)) {
            *o += a * b;
        }
    }
    out
}

/// `v · (x_i − μ)` for every row.
fn centered_dots(x: &DenseMatrix, mean: &[f64], v: &[f64]) -> Vec<f64> {
    let offset = math::dot(mean, v);
    (0..x.rows()).map(|i| math::dot(x.row(i), v) - offset).collect()
}

/// Each user's row is the mean of its training items' rows (zero if none).
fn neighbour_mean(g: &InteractionGraph, items: &DenseMatrix) -> DenseMatrix {
    let mut users = DenseMatrix::zeros(g.n_users(), items.cols());
    for u in 0..g.n_users() {
        let nbrs = g.items_of(u);
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        let row = users.row_mut(u);
        for &i in nbrs {
            for (a, &b) in row.iter_mut().zip(items.row(i as usize)) {
                *a += inv * b;
            }
        }
    }
    users
}

fn neighbour_mean_adjoint(g: &InteractionGraph, grad_users: &DenseMatrix, grad_items: &mut DenseMatrix) {
    for u in 0..g.n_users() {
        let nbrs = g.items_of(u);
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        for &i in nbrs {
            for (a, &b) in grad_items.row_mut(i as usize).iter_mut().zip(grad_users.row(u)) {
                *a += inv * b;
            }
        }
    }
}

/// Name, shape and count of one tensor in a parameter table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl LayoutEntry {
    pub fn count(&self) -> usize {
        self.rows * self.cols
    }
}

/// Shape of a published teacher, for reproducing parameter tables without
/// materializing the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherLayoutSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub dim: usize,
    /// `(name, d_m)` per modality.
    pub modalities: Vec<(String, usize)>,
    /// Per-modality `items × d` embedding tables.
    pub modality_tables: bool,
    /// Raw `items × d_m` feature matrices counted as parameters.
    pub feature_storage: bool,
    /// Batch-norm scale and shift (`2 d`).
    pub norm: bool,
}

impl TeacherLayoutSpec {
    /// The d = 32 layout with 4096/768 reduction layers and per-modality
    /// item tables, without feature storage.
    pub fn netflix_shaped() -> Self {
        Self {
            n_users: 43739,
            n_items: 17239,
            dim: 32,
            modalities: vec![(String::from("image"), 4096), (String::from("text"), 768)],
            modality_tables: true,
            feature_storage: false,
            norm: true,
        }
    }

    /// The d = 64 layout with 4096/768 reduction layers and stored features.
    pub fn electronics_shaped() -> Self {
        Self {
            n_users: 41691,
            n_items: 21479,
            dim: 64,
            modalities: vec![(String::from("image"), 4096), (String::from("text"), 768)],
            modality_tables: false,
            feature_storage: true,
            norm: true,
        }
    }

    pub fn layout(&self) -> Vec<LayoutEntry> {
        let e = |name: String, rows, cols| LayoutEntry { name, rows, cols };
        let mut out = Vec::new();
        for (name, dm) in &self.modalities {
            out.push(e(format!("{name}_trans.weight"), *dm, self.dim));
            out.push(e(format!("{name}_trans.bias"), 1, self.dim));
        }
        if self.feature_storage {
            for (name, dm) in &self.modalities {
                out.push(e(format!("{name}_feat.weight"), self.n_items, *dm));
            }
        }
        out.push(e(String::from("user_id_embedding.weight"), self.n_users, self.dim));
        out.push(e(String::from("item_id_embedding.weight"), self.n_items, self.dim));
        if self.modality_tables {
            for (name, _) in &self.modalities {
                out.push(e(format!("{name}_embedding.weight"), self.n_items, self.dim));
            }
        }
        if self.norm {
            out.push(e(String::from("batch_norm.weight"), 1, self.dim));
            out.push(e(String::from("batch_norm.bias"), 1, self.dim));
        }
        out
    }

    pub fn count(&self) -> usize {
        self.layout().iter().map(LayoutEntry::count).sum()
    }
}

/// Student size as a percentage of teacher size (0 for an empty teacher).
pub fn compression_ratio_percent(student: usize, teacher: usize) -> f64 {
    if teacher == 0 {
        return 0.0;
    }
    100.0 * student as f64 / teacher as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Modality;
    use crate::graph::{build_graph, normalized_adjacency};
    use crate::numerics::{stream_rng, Stream};
    use rand::Rng;

    fn features(n_items: usize, dims: &[usize], seed: u64) -> ModalityFeatureSet {
        let mut rng = stream_rng(seed, Stream::Data, 0);
        let mods = dims
            .iter()
            .enumerate()
            .map(|(k, &d)| Modality {
                name: format!("m{k}"),
                features: DenseMatrix::from_fn(n_items, d, |_, _| rng.random_range(-1.0..1.0)),
            })
            .collect();
        ModalityFeatureSet::new(n_items, mods).unwrap()
    }

    fn config(lambda1: f64) -> TeacherConfig {
        TeacherConfig { dim: 3, layers: 2, dropout: 0.0, lambda1 }
    }

    fn small_graph() -> InteractionGraph {
        build_graph(&[(0, 0), (0, 2), (1, 1), (1, 3), (2, 0), (2, 4), (3, 5), (3, 1)]).unwrap()
    }

    #[test]
    fn prompt_of_centered_features_is_bias() {
        let feats = features(6, &[5, 4], 1);
        let teacher = TeacherModel::new(4, 6, &feats, &config(0.1), 1).unwrap();
        let (h, p) = build_prompt(&DenseMatrix::identity(3), &DenseMatrix::zeros(1, 3), &teacher.reducers, &feats).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-12));
        assert!(p.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn prompt_scalar_oracle() {
        // Two modalities, two items; reducers fitted elsewhere so h ≠ 0.
        let fit_feats = features(4, &[3, 2], 2);
        let teacher = TeacherModel::new(1, 4, &fit_feats, &TeacherConfig { dim: 2, ..config(0.1) }, 2).unwrap();
        let x0 = DenseMatrix::new(2, 3, vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]).unwrap();
        let x1 = DenseMatrix::new(2, 2, vec![-2.0, 1.0, 4.0, 0.25]).unwrap();
        let feats = ModalityFeatureSet::new(
            2,
            vec![Modality { name: "m0".into(), features: x0.clone() }, Modality { name: "m1".into(), features: x1.clone() }],
        )
        .unwrap();
        let w = DenseMatrix::new(2, 2, vec![0.3, -0.7, 1.1, 0.2]).unwrap();
        let b = DenseMatrix::new(1, 2, vec![0.05, -0.4]).unwrap();
        let (_, p) = build_prompt(&w, &b, &teacher.reducers, &feats).unwrap();
        // Oracle: reduce every item with explicit loops, average, then apply the layer.
        let mut h = [0.0; 2];
        for (r, x) in teacher.reducers.iter().zip([&x0, &x1]) {
            for i in 0..2 {
                for k in 0..2 {
                    let mut acc = 0.0;
                    for j in 0..x.cols() {
                        acc += r.components.get(j, k) * (x.get(i, j) - r.mean[j]);
                    }
                    h[k] += acc / 4.0;
                }
            }
        }
        for k in 0..2 {
            let expected = b.get(0, k) + h[0] * w.get(0, k) + h[1] * w.get(1, k);
            assert!((p[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn single_item_single_modality_prompt_input_is_reduction() {
        let fit = features(3, &[3], 5);
        let teacher = TeacherModel::new(1, 3, &fit, &TeacherConfig { dim: 2, ..config(0.1) }, 5).unwrap();
        let x = DenseMatrix::new(1, 3, vec![0.3, -0.2, 0.9]).unwrap();
        let one = ModalityFeatureSet::new(1, vec![Modality { name: "m0".into(), features: x.clone() }]).unwrap();
        let (h, _) = build_prompt(&DenseMatrix::identity(2), &DenseMatrix::zeros(1, 2), &teacher.reducers, &one).unwrap();
        assert_eq!(h, teacher.reducers[0].reduce(x.row(0)).unwrap());
    }

    #[test]
    fn modality_prompt_cases() {
        let feats = features(5, &[4], 3);
        let teacher = TeacherModel::new(1, 5, &feats, &TeacherConfig { dim: 2, ..config(0.1) }, 3).unwrap();
        let r = &teacher.reducers[0];
        let x = feats.modalities()[0].features.row(1);
        assert!(modality_prompt(&[0.0, 0.0], r, x).unwrap().iter().all(|&v| v == 0.0));
        // Prompt orthogonal to the reduced feature.
        let red = r.reduce(x).unwrap();
        let orth = [-red[1], red[0]];
        assert!(modality_prompt(&orth, r, x).unwrap().iter().all(|v| v.abs() < 1e-14));
        // Bilinear form by hand.
        let p = [0.4, -1.3];
        let s = p[0] * red[0] + p[1] * red[1];
        let got = modality_prompt(&p, r, x).unwrap();
        for j in 0..4 {
            let expected = s * (r.components.get(j, 0) * p[0] + r.components.get(j, 1) * p[1]);
            assert!((got[j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn reduce_features_cases() {
        let mut rng = stream_rng(0, Stream::Dropout, 0);
        let mut init = stream_rng(4, Stream::Init, 0);
        let layer = ReductionLayer {
            weight: ParamTensor::new("w", xavier_init_with(10, 4, &mut init).unwrap()),
            bias: ParamTensor::new("b", DenseMatrix::new(1, 4, vec![0.1, 0.2, 0.3, 0.4]).unwrap()),
        };
        let x: Vec<f64> = (0..10).map(|k| libm::sin(k as f64)).collect();
        let pm: Vec<f64> = (0..10).map(|k| libm::cos(k as f64)).collect();
        let got = reduce_features(&layer, &x, &pm, 0.5, 0.0, false, &mut rng).unwrap();
        for c in 0..4 {
            let mut expected = layer.bias.value.get(0, c);
            for r in 0..10 {
                expected += (x[r] + 0.5 * pm[r]) * layer.weight.value.get(r, c);
            }
            assert!((got[c] - expected).abs() < 1e-12);
        }
        let plain = reduce_features(&layer, &x, &pm, 0.0, 0.0, false, &mut rng).unwrap();
        let zero = reduce_features(&layer, &x, &[0.0; 10], 0.7, 0.0, false, &mut rng).unwrap();
        assert_eq!(plain, zero);
        let zero_w = ReductionLayer { weight: ParamTensor::new("w", DenseMatrix::zeros(10, 4)), bias: layer.bias.clone() };
        assert_eq!(reduce_features(&zero_w, &x, &pm, 0.5, 0.0, false, &mut rng).unwrap(), vec![0.1, 0.2, 0.3, 0.4]);
        assert!(reduce_features(&layer, &[f64::NAN; 10], &pm, 0.5, 0.0, false, &mut rng).is_err());
    }

    #[test]
    fn forward_matches_per_item_ops() {
        let feats = features(6, &[5, 4], 6);
        let g = small_graph();
        let adj = normalized_adjacency(&g);
        let mut cfg = config(0.3);
        cfg.layers = 0;
        let teacher = TeacherModel::new(4, 6, &feats, &cfg, 6).unwrap();
        let mut rng = stream_rng(0, Stream::Dropout, 0);
        let fwd = teacher.forward(&adj, &g, &feats, false, &mut rng).unwrap();
        for (m, modality) in feats.modalities().iter().enumerate() {
            for i in 0..6 {
                let x = modality.features.row(i);
                let pm = modality_prompt(&fwd.prompt, &teacher.reducers[m], x).unwrap();
                let f = reduce_features(&teacher.reductions[m], x, &pm, 0.3, 0.0, false, &mut rng).unwrap();
                for (a, b) in f.iter().zip(fwd.modal[m].item(i)) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            // With no propagation the user rows are neighbour means.
            for u in 0..4 {
                let nbrs = g.items_of(u);
                for c in 0..3 {
                    let mean: f64 = nbrs.iter().map(|&i| fwd.modal[m].items.get(i as usize, c)).sum::<f64>() / nbrs.len() as f64;
                    assert!((fwd.modal[m].users.get(u, c) - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn modality_path_is_linear_without_bias_and_prompt() {
        let feats = features(6, &[5], 7);
        let doubled = ModalityFeatureSet::new(
            6,
            vec![Modality {
                name: "m0".into(),
                features: {
                    let mut x = feats.modalities()[0].features.clone();
                    x.scale(2.0);
                    x
                },
            }],
        )
        .unwrap();
        let g = small_graph();
        let adj = normalized_adjacency(&g);
        let teacher = TeacherModel::new(4, 6, &feats, &config(0.0), 7).unwrap();
        let mut rng = stream_rng(0, Stream::Dropout, 0);
        let a = teacher.forward(&adj, &g, &feats, false, &mut rng).unwrap();
        let b = teacher.forward(&adj, &g, &doubled, false, &mut rng).unwrap();
        for (x, y) in a.modal[0].items.as_slice().iter().zip(b.modal[0].items.as_slice()) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
        for (x, y) in a.modal[0].users.as_slice().iter().zip(b.modal[0].users.as_slice()) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn fused_score_sums_id_and_modal_dots() {
        let feats = features(6, &[5], 8);
        let g = small_graph();
        let adj = normalized_adjacency(&g);
        let teacher = TeacherModel::new(4, 6, &feats, &config(0.1), 8).unwrap();
        let mut rng = stream_rng(0, Stream::Dropout, 0);
        let mut fwd = teacher.forward(&adj, &g, &feats, false, &mut rng).unwrap();
        let expected = math::dot(fwd.id.user(1), fwd.id.item(3)) + math::dot(fwd.modal[0].user(1), fwd.modal[0].item(3));
        assert!((fwd.score(1, 3).unwrap() - expected).abs() < 1e-12);
        fwd.modal[0] = fwd.modal[0].zeros_like();
        assert_eq!(fwd.score(1, 3).unwrap(), fwd.id.score(1, 3).unwrap());
    }

    #[test]
    fn shape_mismatch_is_error() {
        let feats = features(6, &[5], 9);
        let g = small_graph();
        let adj = normalized_adjacency(&g);
        let teacher = TeacherModel::new(4, 6, &feats, &config(0.1), 9).unwrap();
        let wrong = features(6, &[4], 9);
        let mut rng = stream_rng(0, Stream::Dropout, 0);
        assert!(matches!(teacher.forward(&adj, &g, &wrong, false, &mut rng), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn published_teacher_counts() {
        assert_eq!(TeacherLayoutSpec::netflix_shaped().count(), 3_210_368);
        assert_eq!(TeacherLayoutSpec::electronics_shaped().count(), 108_828_288);
        let empty = TeacherLayoutSpec {
            n_users: 0,
            n_items: 0,
            dim: 0,
            modalities: vec![],
            modality_tables: false,
            feature_storage: false,
            norm: false,
        };
        assert_eq!(empty.count(), 0);
    }

    #[test]
    fn live_model_count() {
        let feats = features(6, &[5, 4], 10);
        let teacher = TeacherModel::new(4, 6, &feats, &config(0.1), 10).unwrap();
        // ID tables + prompt (d² + d) + reductions ((5 + 4)·d + 2d).
        let expected = 10 * 3 + 9 + 3 + 9 * 3 + 2 * 3;
        assert_eq!(teacher.param_count(false), expected);
        assert_eq!(teacher.param_count(true), expected + 6 * 9);
    }

    #[test]
    fn ratio_edge_cases() {
        assert_eq!(compression_ratio_percent(10, 10), 100.0);
        assert_eq!(compression_ratio_percent(0, 10), 0.0);
        let r = compression_ratio_percent(1_951_296, 3_210_368);
        assert!((r - 60.78).abs() < 0.005);
    }
}
