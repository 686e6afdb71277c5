//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment line, unknown keys are
//! errors. Lists are comma-separated (`ks = 20, 50`).
//!
//! | key | meaning |
//! |-----|---------|
//! | `seed` | seed for data generation and both training stages |
//! | `n_users`, `n_items`, `latent_dim`, `modality_dims`, `interactions_per_user`, `noise_std` | synthetic data |
//! | `dim`, `teacher_layers`, `student_layers`, `dropout` | model shape |
//! | `lambda1` | prompt scale in the teacher's reduction layers |
//! | `lambda2`, `lambda3`, `lambda4` | PairKD, ListKD and EmbKD weights |
//! | `tau`, `gamma`, `list_mode` (`disentangled` or `vanilla`), `list_len` | distillation losses |
//! | `teacher_lr`, `student_lr`, `weight_decay`, `batch_size` | optimization |
//! | `teacher_epochs`, `student_epochs`, `eval_interval`, `patience`, `prompt_refresh` | schedule |
//! | `ks` | evaluation cutoffs |

use std::path::Path;
use std::str::FromStr;

use mmdistill_core::data::SyntheticConfig;
use mmdistill_core::distill::ListKdMode;
use mmdistill_core::pipeline::TrainConfig;

use crate::error::{IoError, IoResult};

pub const KEYS: &[&str] = &[
    "seed",
    "n_users",
    "n_items",
    "latent_dim",
    "modality_dims",
    "interactions_per_user",
    "noise_std",
    "dim",
    "teacher_layers",
    "student_layers",
    "dropout",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda4",
    "tau",
    "gamma",
    "list_mode",
    "list_len",
    "teacher_lr",
    "student_lr",
    "weight_decay",
    "batch_size",
    "teacher_epochs",
    "student_epochs",
    "eval_interval",
    "patience",
    "prompt_refresh",
    "ks",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: SyntheticConfig,
}

fn scalar<T: FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {value:?}"))
}

fn list<T: FromStr>(value: &str) -> Result<Vec<T>, String> {
    value.split(',').map(|v| scalar(v.trim())).collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let (t, d) = (&mut self.train, &mut self.data);
        match key {
            "seed" => {
                t.seed = scalar(value)?;
                d.seed = t.seed;
            }
            "n_users" => d.n_users = scalar(value)?,
            "n_items" => d.n_items = scalar(value)?,
            "latent_dim" => d.latent_dim = scalar(value)?,
            "modality_dims" => d.modality_dims = list(value)?,
            "interactions_per_user" => d.interactions_per_user = scalar(value)?,
            "noise_std" => d.noise_std = scalar(value)?,
            "dim" => t.dim = scalar(value)?,
            "teacher_layers" => t.teacher_layers = scalar(value)?,
            "student_layers" => t.student_layers = scalar(value)?,
            "dropout" => t.dropout = scalar(value)?,
            "lambda1" => t.lambda1 = scalar(value)?,
            "lambda2" => t.weights.pair_kd = scalar(value)?,
            "lambda3" => t.weights.list_kd = scalar(value)?,
            "lambda4" => t.weights.emb_kd = scalar(value)?,
            "tau" => t.tau = scalar(value)?,
            "gamma" => t.gamma = scalar(value)?,
            "list_mode" => {
                t.list_mode = match value {
                    "disentangled" => ListKdMode::Disentangled,
                    "vanilla" => ListKdMode::Vanilla,
                    other => return Err(format!("list_mode must be 'disentangled' or 'vanilla', got {other:?}")),
                }
            }
            "list_len" => t.list_len = scalar(value)?,
            "teacher_lr" => t.teacher_lr = scalar(value)?,
            "student_lr" => t.student_lr = scalar(value)?,
            "weight_decay" => t.weight_decay = scalar(value)?,
            "batch_size" => t.batch_size = scalar(value)?,
            "teacher_epochs" => t.teacher_epochs = scalar(value)?,
            "student_epochs" => t.student_epochs = scalar(value)?,
            "eval_interval" => t.eval_interval = scalar(value)?,
            "patience" => t.patience = scalar(value)?,
            "prompt_refresh" => t.prompt_refresh = scalar(value)?,
            "ks" => t.ks = list(value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Applies every assignment in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> IoResult<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| IoError::Parse { path: path.into(), line: n + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected 'key = value', got {line:?}")))?;
            self.set(key.trim(), value.trim()).map_err(|m| err(format!("{}: {m}", key.trim())))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> IoResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        let mut config = Self::default();
        config.apply_text(&text, path)?;
        Ok(config)
    }
}
