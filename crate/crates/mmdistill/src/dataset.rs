//! Dataset directories.
//!
//! ```text
//! dataset.json         manifest: sizes, split files, modality files
//! interactions.tsv     every edge
//! train.tsv validation.tsv test.tsv
//! features/<name>.pmmf one matrix per modality
//! stats.txt stats.json
//! ```

use std::path::{Path, PathBuf};

use mmdistill_core::data::{dataset_stats, DatasetBundle, DatasetStats, Modality, ModalityFeatureSet, SyntheticConfig};
use mmdistill_core::graph::InteractionGraph;
use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, IoError, IoResult};
use crate::pmmf::{load_features, save_features};
use crate::tsv::{load_interactions, save_interactions};

pub const MANIFEST: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityEntry {
    pub name: String,
    pub dim: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n_users: usize,
    pub n_items: usize,
    pub train: String,
    pub validation: String,
    pub test: String,
    pub modalities: Vec<ModalityEntry>,
    /// Generator settings when the dataset is synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<SyntheticConfig>,
}

fn sorted_edges(g: &InteractionGraph) -> Vec<(usize, usize)> {
    g.edges().collect()
}

/// Writes `bundle` under `dir`, creating it if needed.
pub fn save_dataset(dir: &Path, bundle: &DatasetBundle, generator: Option<&SyntheticConfig>) -> IoResult<DatasetManifest> {
    let features_dir = dir.join("features");
    std::fs::create_dir_all(&features_dir).map_err(|e| IoError::io(&features_dir, e))?;
    let mut all: Vec<(usize, usize)> = sorted_edges(&bundle.train);
    all.extend(sorted_edges(&bundle.validation));
    all.extend(sorted_edges(&bundle.test));
    all.sort_unstable();
    save_interactions(&dir.join("interactions.tsv"), all)?;
    for (file, g) in [("train.tsv", &bundle.train), ("validation.tsv", &bundle.validation), ("test.tsv", &bundle.test)] {
        save_interactions(&dir.join(file), sorted_edges(g))?;
    }
    let mut modalities = Vec::new();
    for m in bundle.features.modalities() {
        let file = format!("features/{}.pmmf", m.name);
        save_features(&dir.join(&file), &m.features)?;
        modalities.push(ModalityEntry { name: m.name.clone(), dim: m.dim(), file });
    }
    let manifest = DatasetManifest {
        n_users: bundle.n_users(),
        n_items: bundle.n_items(),
        train: "train.tsv".into(),
        validation: "validation.tsv".into(),
        test: "test.tsv".into(),
        modalities,
        generator: generator.cloned(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    save_stats(dir, &dataset_stats(bundle))?;
    Ok(manifest)
}

pub fn save_stats(dir: &Path, stats: &DatasetStats) -> IoResult<()> {
    let txt = dir.join("stats.txt");
    std::fs::write(&txt, stats.to_string()).map_err(|e| IoError::io(&txt, e))?;
    write_json(&dir.join("stats.json"), stats)
}

pub fn load_manifest(dir: &Path) -> IoResult<DatasetManifest> {
    read_json(&dir.join(MANIFEST))
}

/// Reads a dataset directory, checking every file against the manifest.
pub fn load_dataset(dir: &Path) -> IoResult<DatasetBundle> {
    let manifest = load_manifest(dir)?;
    let graph = |file: &str| -> IoResult<InteractionGraph> {
        let path: PathBuf = dir.join(file);
        let pairs = load_interactions(&path)?;
        InteractionGraph::with_sizes(manifest.n_users, manifest.n_items, &pairs)
            .map_err(|e| IoError::format(&path, e.to_string()))
    };
    let train = graph(&manifest.train)?;
    let validation = graph(&manifest.validation)?;
    let test = graph(&manifest.test)?;
    let mut modalities = Vec::with_capacity(manifest.modalities.len());
    for entry in &manifest.modalities {
        let path = dir.join(&entry.file);
        let features = load_features(&path)?;
        if features.shape() != (manifest.n_items, entry.dim) {
            return Err(IoError::format(
                &path,
                format!("matrix is {:?}, manifest says {}x{}", features.shape(), manifest.n_items, entry.dim),
            ));
        }
        modalities.push(Modality { name: entry.name.clone(), features });
    }
    let features = ModalityFeatureSet::new(manifest.n_items, modalities)?;
    Ok(DatasetBundle::new(train, validation, test, features)?)
}
