//! Two-stage training: fit the teacher, then freeze it (except the prompt
//! module) and distill into the student.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DatasetBundle;
use crate::distill::{joint_loss, teacher_bpr_loss, DistillBatch, KdConfig, ListKdMode, LossBreakdown, LossWeights};
use crate::error::{bail, Error, Result};
use crate::eval::{evaluate, EvalResult};
use crate::graph::{normalized_adjacency, rank_lists_for_anchors, sample_bpr_batch};
use crate::numerics::{checksum, stream_rng, AdamW, AdamWConfig, ParamTensor, Stream};
use crate::student::StudentModel;
use crate::teacher::{TeacherConfig, TeacherForward, TeacherModel};

/// Cutoff used for early stopping.
pub const STOP_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub teacher_layers: usize,
    pub student_layers: usize,
    pub dropout: f64,
    /// Prompt scale inside the teacher's reduction layers.
    pub lambda1: f64,
    pub teacher_lr: f64,
    pub student_lr: f64,
    pub weight_decay: f64,
    pub teacher_epochs: usize,
    pub student_epochs: usize,
    pub batch_size: usize,
    /// Ranking-list length `K` (one observed item plus `K − 1` negatives).
    pub list_len: usize,
    pub weights: LossWeights,
    pub tau: f64,
    pub gamma: f64,
    pub list_mode: ListKdMode,
    /// Evaluate every this many epochs.
    pub eval_interval: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Recompute the teacher forward (and prompt) every this many steps in
    /// stage 2. Values above 1 make prompt gradients stale.
    pub prompt_refresh: usize,
    pub seed: u64,
    pub ks: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            teacher_layers: 2,
            student_layers: 1,
            dropout: 0.1,
            lambda1: 0.1,
            teacher_lr: 5e-3,
            student_lr: 8.5e-4,
            weight_decay: 2.5e-3,
            teacher_epochs: 60,
            student_epochs: 150,
            batch_size: 512,
            list_len: 20,
            weights: LossWeights::default(),
            tau: 1.0,
            gamma: 2.0,
            list_mode: ListKdMode::Disentangled,
            eval_interval: 1,
            patience: 10,
            prompt_refresh: 1,
            seed: 0,
            ks: vec![20, 50],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [("teacher_lr", self.teacher_lr), ("student_lr", self.student_lr)] {
            if !(lr > 0.0 && lr < 1.0) {
                bail!(InvalidArgument, "{name} must lie in (0, 1), got {lr}");
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            bail!(InvalidArgument, "weight_decay must be non-negative, got {}", self.weight_decay);
        }
        if self.dim == 0 || self.batch_size == 0 || self.eval_interval == 0 || self.prompt_refresh == 0 {
            bail!(InvalidArgument, "dim, batch_size, eval_interval and prompt_refresh must be positive");
        }
        if self.patience == 0 {
            bail!(InvalidArgument, "patience must be at least 1");
        }
        if self.list_len < 2 {
            bail!(InvalidArgument, "list_len must be at least 2, got {}", self.list_len);
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bail!(InvalidArgument, "dropout must lie in [0, 1), got {}", self.dropout);
        }
        if !self.lambda1.is_finite() {
            bail!(InvalidArgument, "lambda1 must be finite");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            bail!(InvalidArgument, "tau must be positive, got {}", self.tau);
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            bail!(InvalidArgument, "gamma must be at least 1, got {}", self.gamma);
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            bail!(InvalidArgument, "ks must be a non-empty list of positive cutoffs");
        }
        self.weights.validate()
    }

    pub fn kd(&self) -> KdConfig {
        KdConfig { weights: self.weights, tau: self.tau, gamma: self.gamma, list_mode: self.list_mode }
    }

    pub fn teacher(&self) -> TeacherConfig {
        TeacherConfig { dim: self.dim, layers: self.teacher_layers, dropout: self.dropout, lambda1: self.lambda1 }
    }
}

/// Ablations of the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// `λ1 = 0` and the prompt module frozen in both stages.
    NoPrompt,
    NoPairkd,
    NoListkd,
    /// Whole-list KL in place of the re-weighted decomposition.
    NoDisentangle,
    /// All distillation weights zero: the student trained alone.
    NoKd,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::Full, Variant::NoPrompt, Variant::NoPairkd, Variant::NoListkd, Variant::NoDisentangle, Variant::NoKd];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoPrompt => "no_prompt",
            Variant::NoPairkd => "no_pairkd",
            Variant::NoListkd => "no_listkd",
            Variant::NoDisentangle => "no_disentangle",
            Variant::NoKd => "no_kd",
        }
    }

    pub fn apply(self, config: &TrainConfig) -> TrainConfig {
        let mut c = config.clone();
        match self {
            Variant::Full => {}
            Variant::NoPrompt => c.lambda1 = 0.0,
            Variant::NoPairkd => c.weights.pair_kd = 0.0,
            Variant::NoListkd => c.weights.list_kd = 0.0,
            Variant::NoDisentangle => c.list_mode = ListKdMode::Vanilla,
            Variant::NoKd => c.weights = LossWeights::ZERO,
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Teacher,
    Student,
}

/// Hooks for logging; every method defaults to doing nothing.
pub trait TrainObserver {
    fn on_step(&mut self, _stage: Stage, _step: u64, _loss: &LossBreakdown) {}
    fn on_epoch_end(&mut self, _stage: Stage, _epoch: usize) {}
    fn on_eval(&mut self, _stage: Stage, _epoch: usize, _result: &EvalResult) {}
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

#[derive(Debug, Clone)]
pub struct TeacherOutcome {
    pub model: TeacherModel,
    /// Epoch of the returned checkpoint (0 = untrained).
    pub best_epoch: usize,
    pub best_recall: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub student: StudentModel,
    /// The teacher with its prompt tuned in stage 2; absent for plain training.
    pub teacher: Option<TeacherModel>,
    pub best_epoch: usize,
    pub best_recall: f64,
    pub epochs_run: usize,
}

impl DistillOutcome {
    /// Name and size of every student tensor.
    pub fn student_census(&self) -> Vec<(String, usize)> {
        self.student.params().iter().map(|p| (p.name.clone(), p.numel())).collect()
    }
}

fn steps_per_epoch(n_edges: usize, batch: usize) -> usize {
    n_edges.div_ceil(batch).max(1)
}

struct EarlyStop {
    best: f64,
    best_epoch: usize,
    bad: usize,
    patience: usize,
}

impl EarlyStop {
    fn new(initial: f64, patience: usize) -> Self {
        Self { best: initial, best_epoch: 0, bad: 0, patience }
    }

    /// Records a validation score; returns whether it is a new best.
    fn record(&mut self, epoch: usize, score: f64) -> bool {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.bad = 0;
            true
        } else {
            self.bad += 1;
            false
        }
    }

    fn exhausted(&self) -> bool {
        self.bad >= self.patience
    }
}

fn validation_recall(result: &EvalResult) -> f64 {
    result.recall_at(STOP_K).unwrap_or(result.recall[0])
}

fn eval_ks(config: &TrainConfig) -> Vec<usize> {
    let mut ks = config.ks.clone();
    if !ks.contains(&STOP_K) {
        ks.push(STOP_K);
    }
    ks
}

/// Stage 1: trains every teacher tensor on BPR over the fused score,
/// keeping the checkpoint with the best validation Recall@20.
pub fn train_teacher(
    bundle: &DatasetBundle,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TeacherOutcome> {
    config.validate()?;
    let train = &bundle.train;
    let mut model = TeacherModel::new(train.n_users(), train.n_items(), &bundle.features, &config.teacher(), config.seed)?;
    if model.lambda1 == 0.0 {
        model.prompt.weight.frozen = true;
        model.prompt.bias.frozen = true;
    }
    let adj = normalized_adjacency(train);
    let ks = eval_ks(config);
    let mut sampling = stream_rng(config.seed, Stream::Sampling, 1);
    let mut dropout = stream_rng(config.seed, Stream::Dropout, 1);
    let mut opt = AdamW::new(AdamWConfig::new(config.teacher_lr, config.weight_decay))?;

    let eval = |m: &TeacherModel, rng: &mut rand_chacha::ChaCha8Rng| -> Result<EvalResult> {
        let fwd = m.forward(&adj, train, &bundle.features, false, rng)?;
        evaluate(&fwd, train, &bundle.validation, &ks)
    };
    let initial = eval(&model, &mut dropout)?;
    observer.on_eval(Stage::Teacher, 0, &initial);
    let mut stop = EarlyStop::new(validation_recall(&initial), config.patience);
    let mut best = model.clone();
    let steps = steps_per_epoch(train.n_edges(), config.batch_size);
    let mut step: u64 = 0;
    let mut epochs_run = 0;

    for epoch in 1..=config.teacher_epochs {
        for _ in 0..steps {
            let triplets = sample_bpr_batch(train, config.batch_size, &mut sampling)?;
            let fwd = model.forward(&adj, train, &bundle.features, true, &mut dropout)?;
            let (loss, grad_id, grad_modal) = teacher_bpr_loss(&fwd, &triplets)?;
            if !loss.is_finite() {
                bail!(Training, "teacher loss diverged at epoch {epoch}, step {step}: {loss}");
            }
            model.backward(&adj, train, &bundle.features, &fwd, Some(&grad_id), &grad_modal)?;
            opt.step(&mut model.params_mut()).map_err(|e| Error::Training(alloc::format!("teacher step {step}: {e}")))?;
            step += 1;
            let breakdown = LossBreakdown { bpr: loss, total: loss, ..LossBreakdown::default() };
            observer.on_step(Stage::Teacher, step, &breakdown);
        }
        epochs_run = epoch;
        observer.on_epoch_end(Stage::Teacher, epoch);
        if epoch % config.eval_interval == 0 {
            let result = eval(&model, &mut dropout)?;
            observer.on_eval(Stage::Teacher, epoch, &result);
            if stop.record(epoch, validation_recall(&result)) {
                best = model.clone();
            } else if stop.exhausted() {
                break;
            }
        }
    }
    best.unfreeze_all();
    if best.lambda1 == 0.0 {
        best.prompt.weight.frozen = true;
        best.prompt.bias.frozen = true;
    }
    Ok(TeacherOutcome { model: best, best_epoch: stop.best_epoch, best_recall: stop.best, epochs_run })
}

/// Stage 2: freezes the teacher except its prompt module and trains the
/// student on the joint objective.
///
/// Fails if any frozen teacher value changes.
pub fn distill_student(
    teacher: &TeacherModel,
    bundle: &DatasetBundle,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<DistillOutcome> {
    let mut teacher = teacher.clone();
    teacher.freeze_for_distillation(teacher.lambda1 != 0.0);
    student_stage(Some(teacher), bundle, config, observer)
}

/// The student trained on BPR alone, with the same sampling sequence as
/// [`distill_student`].
pub fn train_student_plain(
    bundle: &DatasetBundle,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<DistillOutcome> {
    let config = TrainConfig { weights: LossWeights::ZERO, ..config.clone() };
    student_stage(None, bundle, &config, observer)
}

fn backbone_checksum(t: &TeacherModel) -> u64 {
    checksum(t.backbone_params())
}

fn student_stage(
    mut teacher: Option<TeacherModel>,
    bundle: &DatasetBundle,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<DistillOutcome> {
    config.validate()?;
    let train = &bundle.train;
    let adj = normalized_adjacency(train);
    let ks = eval_ks(config);
    let kd = config.kd();
    let use_teacher = teacher.is_some() && !kd.weights.is_zero();
    let tune_prompt = use_teacher
        && teacher.as_ref().is_some_and(|t| !t.prompt.weight.frozen || !t.prompt.bias.frozen)
        && (kd.weights.list_kd > 0.0 || kd.weights.emb_kd > 0.0);
    let frozen_sum = teacher.as_ref().map(backbone_checksum);

    let mut student =
        StudentModel::new(train.n_users(), train.n_items(), config.dim, config.student_layers, config.seed)?;
    let mut sampling = stream_rng(config.seed, Stream::Sampling, 2);
    let mut no_dropout = stream_rng(config.seed, Stream::Dropout, 2);
    let mut opt = AdamW::new(AdamWConfig::new(config.student_lr, config.weight_decay))?;

    let eval = |s: &StudentModel| -> Result<EvalResult> { evaluate(&s.forward(&adj)?, train, &bundle.validation, &ks) };
    let initial = eval(&student)?;
    observer.on_eval(Stage::Student, 0, &initial);
    let mut stop = EarlyStop::new(validation_recall(&initial), config.patience);
    let mut best = (student.clone(), teacher.clone());
    let steps = steps_per_epoch(train.n_edges(), config.batch_size);
    let mut cached: Option<TeacherForward> = None;
    let mut step: u64 = 0;
    let mut epochs_run = 0;

    for epoch in 1..=config.student_epochs {
        for _ in 0..steps {
            let triplets = sample_bpr_batch(train, config.batch_size, &mut sampling)?;
            let anchors: Vec<(usize, usize)> = triplets.iter().map(|t| (t.user, t.pos)).collect();
            let lists = rank_lists_for_anchors(train, &anchors, config.list_len, &mut sampling)?;
            let batch = DistillBatch { triplets, lists };

            if use_teacher {
                let stale = !step.is_multiple_of(config.prompt_refresh as u64) || (!tune_prompt && cached.is_some());
                if cached.is_none() || !stale {
                    let t = teacher.as_ref().expect("teacher present");
                    cached = Some(t.forward(&adj, train, &bundle.features, false, &mut no_dropout)?);
                }
            }
            let s_fwd = student.forward(&adj)?;
            let (loss, grads) = match &cached {
                Some(t) => joint_loss(&s_fwd, &t.id, &t.modal, &batch, &kd)?,
                None => joint_loss(&s_fwd, &s_fwd, &[], &batch, &kd)?,
            };
            if !loss.total.is_finite() {
                bail!(Training, "student loss diverged at epoch {epoch}, step {step}: {loss:?}");
            }
            student.backward(&adj, &grads.student)?;
            let mut params: Vec<&mut ParamTensor> = student.params_mut();
            if let (Some(t), Some(fwd)) = (teacher.as_mut(), cached.as_ref()) {
                if tune_prompt {
                    t.backward(&adj, train, &bundle.features, fwd, None, &grads.teacher_modal)?;
                    params.push(&mut t.prompt.weight);
                    params.push(&mut t.prompt.bias);
                }
            }
            opt.step(&mut params).map_err(|e| Error::Training(alloc::format!("student step {step}: {e}")))?;
            step += 1;
            observer.on_step(Stage::Student, step, &loss);
        }
        epochs_run = epoch;
        if let (Some(t), Some(expected)) = (teacher.as_ref(), frozen_sum) {
            if backbone_checksum(t) != expected {
                bail!(Training, "frozen teacher parameters changed during epoch {epoch}");
            }
        }
        observer.on_epoch_end(Stage::Student, epoch);
        if epoch % config.eval_interval == 0 {
            let result = eval(&student)?;
            observer.on_eval(Stage::Student, epoch, &result);
            if stop.record(epoch, validation_recall(&result)) {
                best = (student.clone(), teacher.clone());
            } else if stop.exhausted() {
                break;
            }
        }
    }
    Ok(DistillOutcome {
        student: best.0,
        teacher: best.1,
        best_epoch: stop.best_epoch,
        best_recall: stop.best,
        epochs_run,
    })
}

/// Test-split metrics for a student, excluding each user's training items.
pub fn evaluate_student(student: &StudentModel, bundle: &DatasetBundle, ks: &[usize]) -> Result<EvalResult> {
    let adj = normalized_adjacency(&bundle.train);
    evaluate(&student.forward(&adj)?, &bundle.train, &bundle.test, ks)
}

/// Test-split metrics for a teacher in evaluation mode.
pub fn evaluate_teacher(teacher: &TeacherModel, bundle: &DatasetBundle, ks: &[usize]) -> Result<EvalResult> {
    let adj = normalized_adjacency(&bundle.train);
    let mut rng = stream_rng(0, Stream::Dropout, 0);
    let fwd = teacher.forward(&adj, &bundle.train, &bundle.features, false, &mut rng)?;
    evaluate(&fwd, &bundle.train, &bundle.test, ks)
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub variant: Variant,
    pub teacher: TeacherOutcome,
    pub student: DistillOutcome,
    pub test: EvalResult,
}

/// Both stages under `variant`, reporting test metrics of the student.
pub fn run_ablation(
    bundle: &DatasetBundle,
    config: &TrainConfig,
    variant: Variant,
    observer: &mut dyn TrainObserver,
) -> Result<AblationOutcome> {
    let config = variant.apply(config);
    let teacher = train_teacher(bundle, &config, observer)?;
    let student = distill_student(&teacher.model, bundle, &config, observer)?;
    let test = evaluate_student(&student.student, bundle, &config.ks)?;
    Ok(AblationOutcome { variant, teacher, student, test })
}
