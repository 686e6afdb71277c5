//! JSON-lines logs written during training.
//!
//! * losses: `{"step", "L_BPR", "L_PairKD", "L_ListKD", "L_EmbKD", "total"}` per step;
//! * metrics: `{"epoch", "recall@K", "ndcg@K", ...}` per evaluation;
//! * timing: `{"stage", "epoch", "seconds"}` per epoch.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use mmdistill_core::distill::LossBreakdown;
use mmdistill_core::eval::EvalResult;
use mmdistill_core::pipeline::{Stage, TrainObserver};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{IoError, IoResult};

pub const LOSSES: &str = "losses.jsonl";
pub const METRICS: &str = "metrics.jsonl";
pub const TIMING: &str = "timing.jsonl";

/// Flat JSON object with `recall@K` and `ndcg@K` for every cutoff.
pub fn metrics_json(result: &EvalResult) -> Map<String, Value> {
    let mut out = Map::new();
    for (k, (r, n)) in result.ks.iter().zip(result.recall.iter().zip(&result.ndcg)) {
        out.insert(format!("recall@{k}"), json!(r));
        out.insert(format!("ndcg@{k}"), json!(n));
    }
    out
}

pub fn loss_json(step: u64, loss: &LossBreakdown) -> Value {
    json!({
        "step": step,
        "L_BPR": loss.bpr,
        "L_PairKD": loss.pair_kd,
        "L_ListKD": loss.list_kd,
        "L_EmbKD": loss.emb_kd,
        "total": loss.total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTiming {
    pub stage: Stage,
    pub epoch: usize,
    pub seconds: f64,
}

/// Observer that appends to the three logs in `dir`.
pub struct JsonLinesObserver {
    losses: BufWriter<File>,
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
    epoch_start: Instant,
    error: Option<std::io::Error>,
}

fn open(dir: &Path, name: &str) -> IoResult<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| IoError::io(path, e))
}

impl JsonLinesObserver {
    pub fn create(dir: &Path) -> IoResult<Self> {
        Ok(Self {
            losses: open(dir, LOSSES)?,
            metrics: open(dir, METRICS)?,
            timing: open(dir, TIMING)?,
            epoch_start: Instant::now(),
            error: None,
        })
    }

    fn write(&mut self, which: fn(&mut Self) -> &mut BufWriter<File>, value: Value) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = writeln!(which(self), "{value}") {
            self.error = Some(e);
        }
    }

    /// Flushes all logs, reporting the first write error if any occurred.
    pub fn finish(mut self) -> std::io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.losses.flush()?;
        self.metrics.flush()?;
        self.timing.flush()
    }
}

impl TrainObserver for JsonLinesObserver {
    fn on_step(&mut self, _stage: Stage, step: u64, loss: &LossBreakdown) {
        if step == 1 {
            self.epoch_start = Instant::now();
        }
        self.write(|s| &mut s.losses, loss_json(step, loss));
    }

    fn on_epoch_end(&mut self, stage: Stage, epoch: usize) {
        let seconds = self.epoch_start.elapsed().as_secs_f64();
        self.epoch_start = Instant::now();
        let value = serde_json::to_value(EpochTiming { stage, epoch, seconds }).expect("plain struct");
        self.write(|s| &mut s.timing, value);
    }

    fn on_eval(&mut self, _stage: Stage, epoch: usize, result: &EvalResult) {
        let mut line = Map::new();
        line.insert("epoch".into(), json!(epoch));
        line.extend(metrics_json(result));
        self.write(|s| &mut s.metrics, Value::Object(line));
        // Evaluation time is not part of the next epoch.
        self.epoch_start = Instant::now();
    }
}

pub fn read_timing(path: &Path) -> IoResult<Vec<EpochTiming>> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| IoError::Parse { path: path.into(), line: n + 1, message: e.to_string() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_keys() {
        let r = EvalResult { ks: vec![20, 50], recall: vec![0.5, 0.75], ndcg: vec![0.25, 0.3], n_users: 3 };
        let m = metrics_json(&r);
        assert_eq!(m["recall@20"], json!(0.5));
        assert_eq!(m["ndcg@50"], json!(0.3));
    }

    #[test]
    fn loss_keys() {
        let v = loss_json(3, &LossBreakdown { bpr: 1.0, total: 1.0, ..LossBreakdown::default() });
        for key in ["step", "L_BPR", "L_PairKD", "L_ListKD", "L_EmbKD", "total"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn observer_writes_all_logs() {
        let dir = tempfile::tempdir().unwrap();
        let mut obs = JsonLinesObserver::create(dir.path()).unwrap();
        obs.on_step(Stage::Student, 1, &LossBreakdown::default());
        obs.on_epoch_end(Stage::Student, 1);
        obs.on_eval(Stage::Student, 1, &EvalResult { ks: vec![20], recall: vec![0.1], ndcg: vec![0.2], n_users: 1 });
        obs.finish().unwrap();
        let timing = read_timing(&dir.path().join(TIMING)).unwrap();
        assert_eq!(timing.len(), 1);
        assert_eq!(timing[0].stage, Stage::Student);
        let metrics = std::fs::read_to_string(dir.path().join(METRICS)).unwrap();
        assert!(metrics.starts_with("{\"epoch\":1,"), "{metrics}");
    }
}
