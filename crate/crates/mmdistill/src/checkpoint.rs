//! Model checkpoints: a `manifest.json` plus one `PMMF` file per tensor.
//! Teacher checkpoints also carry the fitted PCA reducers.

use std::path::Path;

use mmdistill_core::numerics::{DenseMatrix, ParamTensor};
use mmdistill_core::pca::PcaReducer;
use mmdistill_core::student::StudentModel;
use mmdistill_core::teacher::{PromptModule, ReductionLayer, TeacherModel};
use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, IoError, IoResult};
use crate::pmmf::{load_features, save_features};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducerEntry {
    pub name: String,
    pub mean: String,
    pub components: String,
    pub explained_variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointManifest {
    Student {
        n_users: usize,
        n_items: usize,
        dim: usize,
        layers: usize,
        seed: u64,
        param_count: usize,
        tensors: Vec<TensorEntry>,
    },
    Teacher {
        n_users: usize,
        n_items: usize,
        dim: usize,
        layers: usize,
        dropout: f64,
        lambda1: f64,
        seed: u64,
        param_count: usize,
        param_count_with_features: usize,
        tensors: Vec<TensorEntry>,
        reducers: Vec<ReducerEntry>,
    },
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Checkpoint {
    Student(StudentModel),
    Teacher(TeacherModel),
}

fn save_tensor(dir: &Path, p: &ParamTensor) -> IoResult<TensorEntry> {
    let file = format!("{}.pmmf", p.name);
    save_features(&dir.join(&file), &p.value)?;
    Ok(TensorEntry { name: p.name.clone(), file, rows: p.value.rows(), cols: p.value.cols() })
}

fn load_tensor(dir: &Path, entries: &[TensorEntry], name: &str) -> IoResult<ParamTensor> {
    let entry = entries
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| IoError::format(dir.join(MANIFEST), format!("missing tensor '{name}'")))?;
    let path = dir.join(&entry.file);
    let value = load_features(&path)?;
    if value.shape() != (entry.rows, entry.cols) {
        return Err(IoError::format(&path, format!("matrix is {:?}, manifest says {}x{}", value.shape(), entry.rows, entry.cols)));
    }
    Ok(ParamTensor::new(name, value))
}

fn create(dir: &Path) -> IoResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))
}

pub fn save_student(dir: &Path, model: &StudentModel, seed: u64) -> IoResult<CheckpointManifest> {
    create(dir)?;
    let tensors = model.params().into_iter().map(|p| save_tensor(dir, p)).collect::<IoResult<Vec<_>>>()?;
    let manifest = CheckpointManifest::Student {
        n_users: model.n_users(),
        n_items: model.n_items(),
        dim: model.dim(),
        layers: model.layers,
        seed,
        param_count: model.param_count(),
        tensors,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn save_teacher(dir: &Path, model: &TeacherModel, seed: u64) -> IoResult<CheckpointManifest> {
    create(dir)?;
    let tensors = model.params().into_iter().map(|p| save_tensor(dir, p)).collect::<IoResult<Vec<_>>>()?;
    let mut reducers = Vec::new();
    for r in &model.reducers {
        let mean = format!("pca.{}.mean.pmmf", r.name);
        let components = format!("pca.{}.components.pmmf", r.name);
        save_features(&dir.join(&mean), &DenseMatrix::row_vector(&r.mean))?;
        save_features(&dir.join(&components), &r.components)?;
        reducers.push(ReducerEntry { name: r.name.clone(), mean, components, explained_variance: r.explained_variance.clone() });
    }
    let manifest = CheckpointManifest::Teacher {
        n_users: model.n_users(),
        n_items: model.n_items(),
        dim: model.dim(),
        layers: model.layers,
        dropout: model.dropout,
        lambda1: model.lambda1,
        seed,
        param_count: model.param_count(false),
        param_count_with_features: model.param_count(true),
        tensors,
        reducers,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> IoResult<CheckpointManifest> {
    read_json(&dir.join(MANIFEST))
}

pub fn load_checkpoint(dir: &Path) -> IoResult<Checkpoint> {
    match load_manifest(dir)? {
        CheckpointManifest::Student { layers, tensors, .. } => Ok(Checkpoint::Student(StudentModel {
            user_emb: load_tensor(dir, &tensors, mmdistill_core::student::USER_TABLE)?,
            item_emb: load_tensor(dir, &tensors, mmdistill_core::student::ITEM_TABLE)?,
            layers,
        })),
        CheckpointManifest::Teacher { layers, dropout, lambda1, tensors, reducers, .. } => {
            let mut loaded = Vec::with_capacity(reducers.len());
            let mut reductions = Vec::with_capacity(reducers.len());
            for r in &reducers {
                let mean = load_features(&dir.join(&r.mean))?;
                let components = load_features(&dir.join(&r.components))?;
                if mean.rows() != 1 || mean.cols() != components.rows() || r.explained_variance.len() != components.cols() {
                    return Err(IoError::format(dir.join(&r.components), format!("reducer '{}' has inconsistent shapes", r.name)));
                }
                loaded.push(PcaReducer {
                    name: r.name.clone(),
                    mean: mean.into_vec(),
                    components,
                    explained_variance: r.explained_variance.clone(),
                });
                reductions.push(ReductionLayer {
                    weight: load_tensor(dir, &tensors, &format!("teacher.{}.reduce.weight", r.name))?,
                    bias: load_tensor(dir, &tensors, &format!("teacher.{}.reduce.bias", r.name))?,
                });
            }
            let mut model = TeacherModel {
                user_emb: load_tensor(dir, &tensors, "teacher.user_id_embedding")?,
                item_emb: load_tensor(dir, &tensors, "teacher.item_id_embedding")?,
                prompt: PromptModule {
                    weight: load_tensor(dir, &tensors, "teacher.prompt.weight")?,
                    bias: load_tensor(dir, &tensors, "teacher.prompt.bias")?,
                },
                reductions,
                reducers: loaded,
                layers,
                dropout,
                lambda1,
            };
            if lambda1 == 0.0 {
                model.prompt.weight.frozen = true;
                model.prompt.bias.frozen = true;
            }
            Ok(Checkpoint::Teacher(model))
        }
    }
}

pub fn load_student(dir: &Path) -> IoResult<StudentModel> {
    match load_checkpoint(dir)? {
        Checkpoint::Student(s) => Ok(s),
        Checkpoint::Teacher(_) => Err(IoError::format(dir.join(MANIFEST), "expected a student checkpoint, found a teacher")),
    }
}

pub fn load_teacher(dir: &Path) -> IoResult<TeacherModel> {
    match load_checkpoint(dir)? {
        Checkpoint::Teacher(t) => Ok(t),
        Checkpoint::Student(_) => Err(IoError::format(dir.join(MANIFEST), "expected a teacher checkpoint, found a student")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmdistill_core::data::{gen_synthetic, SyntheticConfig};
    use mmdistill_core::teacher::TeacherConfig;

    fn round(m: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(m.rows(), m.cols(), |r, c| m.get(r, c) as f32 as f64)
    }

    #[test]
    fn student_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = StudentModel::new(4, 6, 3, 2, 9).unwrap();
        save_student(dir.path(), &s, 9).unwrap();
        let back = load_student(dir.path()).unwrap();
        assert_eq!(back.layers, 2);
        assert_eq!(back.user_emb.value, round(&s.user_emb.value));
        assert_eq!(back.item_emb.value, round(&s.item_emb.value));
        assert!(load_teacher(dir.path()).is_err());
    }

    #[test]
    fn teacher_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig { n_users: 20, n_items: 15, modality_dims: vec![8, 6], interactions_per_user: 5, latent_dim: 3, ..SyntheticConfig::default() };
        let bundle = gen_synthetic(&cfg).unwrap();
        let t = TeacherModel::new(20, 15, &bundle.features, &TeacherConfig { dim: 4, layers: 2, dropout: 0.1, lambda1: 0.3 }, 1).unwrap();
        save_teacher(dir.path(), &t, 1).unwrap();
        let back = load_teacher(dir.path()).unwrap();
        for (a, b) in back.params().iter().zip(t.params()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, round(&b.value));
        }
        assert_eq!(back.reducers[1].explained_variance, t.reducers[1].explained_variance);
        assert_eq!((back.layers, back.dropout, back.lambda1), (2, 0.1, 0.3));
        match load_manifest(dir.path()).unwrap() {
            CheckpointManifest::Teacher { param_count, param_count_with_features, .. } => {
                assert_eq!(param_count, t.param_count(false));
                assert_eq!(param_count_with_features, param_count + 15 * 14);
            }
            other => panic!("unexpected manifest {other:?}"),
        }
    }
}
