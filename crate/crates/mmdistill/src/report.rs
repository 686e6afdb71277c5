//! Parameter-count and compression reports.
//!
//! Two accounting modes are always reported side by side: trainable
//! tensors only, and trainable tensors plus the raw modality feature
//! matrices stored as if they were embedding tables.

use std::collections::BTreeMap;
use std::fmt;

use mmdistill_core::pipeline::Stage;
use mmdistill_core::student::student_param_count;
use mmdistill_core::teacher::{compression_ratio_percent, TeacherLayoutSpec, TeacherModel};
use mmdistill_core::student::StudentModel;
use serde::{Deserialize, Serialize};

use crate::logs::EpochTiming;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accounting<T> {
    pub without_feature_storage: T,
    pub with_feature_storage: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub label: String,
    pub student_params: usize,
    pub teacher_params: Accounting<usize>,
    pub ratio_percent: Accounting<f64>,
    /// Mean wall-clock seconds per epoch, keyed by stage.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub seconds_per_epoch: BTreeMap<String, f64>,
}

impl ParamReport {
    pub fn from_counts(label: impl Into<String>, student: usize, teacher: Accounting<usize>) -> Self {
        Self {
            label: label.into(),
            student_params: student,
            teacher_params: teacher,
            ratio_percent: Accounting {
                without_feature_storage: compression_ratio_percent(student, teacher.without_feature_storage),
                with_feature_storage: compression_ratio_percent(student, teacher.with_feature_storage),
            },
            seconds_per_epoch: BTreeMap::new(),
        }
    }

    pub fn from_models(label: impl Into<String>, teacher: &TeacherModel, student: &StudentModel) -> Self {
        Self::from_counts(
            label,
            student.param_count(),
            Accounting {
                without_feature_storage: teacher.param_count(false),
                with_feature_storage: teacher.param_count(true),
            },
        )
    }

    /// Reference layouts: `netflix` (d = 32) or `electronics` (d = 64).
    pub fn preset(name: &str) -> Option<Self> {
        let spec = match name {
            "netflix" => TeacherLayoutSpec::netflix_shaped(),
            "electronics" => TeacherLayoutSpec::electronics_shaped(),
            _ => return None,
        };
        let without = TeacherLayoutSpec { feature_storage: false, ..spec.clone() }.count();
        let with = TeacherLayoutSpec { feature_storage: true, ..spec.clone() }.count();
        let student = student_param_count(spec.n_users, spec.n_items, spec.dim);
        Some(Self::from_counts(
            format!("{name}-shaped (d={})", spec.dim),
            student,
            Accounting { without_feature_storage: without, with_feature_storage: with },
        ))
    }

    pub fn add_timing(&mut self, timing: &[EpochTiming]) {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for t in timing {
            let key = match t.stage {
                Stage::Teacher => "teacher",
                Stage::Student => "student",
            };
            let e = sums.entry(key.to_string()).or_default();
            e.0 += t.seconds;
            e.1 += 1;
        }
        for (k, (s, n)) in sums {
            self.seconds_per_epoch.insert(k, s / n as f64);
        }
    }
}

impl fmt::Display for ParamReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.label)?;
        writeln!(f, "  student parameters:                 {}", self.student_params)?;
        writeln!(f, "  teacher parameters (no features):   {}", self.teacher_params.without_feature_storage)?;
        writeln!(f, "  teacher parameters (with features): {}", self.teacher_params.with_feature_storage)?;
        writeln!(f, "  ratio (no features):                {:.2}%", self.ratio_percent.without_feature_storage)?;
        writeln!(f, "  ratio (with features):              {:.2}%", self.ratio_percent.with_feature_storage)?;
        for (stage, s) in &self.seconds_per_epoch {
            writeln!(f, "  {stage} seconds/epoch:              {s:.4}")?;
        }
        Ok(())
    }
}
