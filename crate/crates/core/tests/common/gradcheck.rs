//! Central finite-difference checks for every loss and both model forwards.

use mmdistill_core::data::{Modality, ModalityFeatureSet};
use mmdistill_core::distill::{
    bpr_loss, emb_kd_loss, joint_loss, list_kd_loss, pair_kd_loss, soften_list, teacher_bpr_loss, DistillBatch,
    KdConfig, ListKdMode, LossWeights,
};
use mmdistill_core::graph::{build_graph, normalized_adjacency, BprTriplet, InteractionGraph};
use mmdistill_core::numerics::{stream_rng, DenseMatrix, SparseMatrix, Stream};
use mmdistill_core::propagate::NodeEmbeddings;
use mmdistill_core::student::StudentModel;
use mmdistill_core::teacher::{TeacherConfig, TeacherModel};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
const MIN_COORDS: usize = 50;

fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, Stream::Data, 77)
}

fn random_matrix(rows: usize, cols: usize, scale: f64, r: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| r.random_range(-scale..scale))
}

/// Compares `analytic` with central differences of `f` at up to
/// `MIN_COORDS` sampled coordinates (all of them for small tensors).
fn check<F: FnMut(&[f64]) -> f64>(label: &str, x: &[f64], analytic: &[f64], mut f: F, seed: u64) {
    assert_eq!(x.len(), analytic.len(), "{label}: gradient length");
    let coords: Vec<usize> = if x.len() <= MIN_COORDS {
        (0..x.len()).collect()
    } else {
        sample(&mut rng(seed), x.len(), MIN_COORDS).into_vec()
    };
    let mut probe = x.to_vec();
    for k in coords {
        probe[k] = x[k] + STEP;
        let up = f(&probe);
        probe[k] = x[k] - STEP;
        let down = f(&probe);
        probe[k] = x[k];
        let numeric = (up - down) / (2.0 * STEP);
        let err = (analytic[k] - numeric).abs() / numeric.abs().max(1.0);
        assert!(err < TOL, "{label}[{k}]: analytic {} numeric {numeric} (err {err:e})", analytic[k]);
    }
}

fn with(m: &DenseMatrix, data: &[f64]) -> DenseMatrix {
    DenseMatrix::new(m.rows(), m.cols(), data.to_vec()).unwrap()
}

pub fn bpr_gradient() {
    let mut r = rng(1);
    let pos: Vec<f64> = (0..20).map(|_| r.random_range(-4.0..4.0)).collect();
    let neg: Vec<f64> = (0..20).map(|_| r.random_range(-4.0..4.0)).collect();
    let out = bpr_loss(&pos, &neg).unwrap();
    check("bpr/pos", &pos, &out.d_margin, |p| bpr_loss(p, &neg).unwrap().loss, 1);
    let d_neg: Vec<f64> = out.d_margin.iter().map(|g| -g).collect();
    check("bpr/neg", &neg, &d_neg, |n| bpr_loss(&pos, n).unwrap().loss, 2);
}

pub fn pair_kd_gradient() {
    let mut r = rng(2);
    let t: Vec<f64> = (0..30).map(|_| r.random_range(-5.0..5.0)).collect();
    let s: Vec<f64> = (0..30).map(|_| r.random_range(-5.0..5.0)).collect();
    let out = pair_kd_loss(&t, &s).unwrap();
    check("pair/student", &s, &out.d_student, |x| pair_kd_loss(&t, x).unwrap().loss, 3);
    check("pair/teacher", &t, &out.d_teacher, |x| pair_kd_loss(x, &s).unwrap().loss, 4);
}

/// Loss with the negatives weight held at the teacher's current `b⁻`.
fn detached_list_loss(t: &[f64], s: &[f64], tau: f64, weight: f64) -> f64 {
    let out = list_kd_loss(t, s, tau, ListKdMode::Disentangled).unwrap();
    out.kl_b + weight * out.kl_q
}

pub fn list_kd_gradient() {
    let mut r = rng(3);
    for (case, &(k, tau)) in [(2, 1.0), (5, 0.5), (10, 2.0), (20, 1.0)].iter().enumerate() {
        let t: Vec<f64> = (0..k).map(|_| r.random_range(-3.0..3.0)).collect();
        let s: Vec<f64> = (0..k).map(|_| r.random_range(-3.0..3.0)).collect();
        let seed = 10 + case as u64;
        for mode in [ListKdMode::Disentangled, ListKdMode::Vanilla] {
            let out = list_kd_loss(&t, &s, tau, mode).unwrap();
            check("list/student", &s, &out.d_student, |x| list_kd_loss(&t, x, tau, mode).unwrap().loss, seed);
            match mode {
                ListKdMode::Vanilla => {
                    check("list/teacher", &t, &out.d_teacher, |x| list_kd_loss(x, &s, tau, mode).unwrap().loss, seed)
                }
                ListKdMode::Disentangled => {
                    let w = soften_list(&t, tau).unwrap().b_neg;
                    check("list/teacher-detached", &t, &out.d_teacher, |x| detached_list_loss(x, &s, tau, w), seed)
                }
            }
        }
    }
}

pub fn emb_kd_gradient() {
    let mut r = rng(4);
    let s = random_matrix(12, 5, 1.0, &mut r);
    let f0 = random_matrix(12, 5, 1.0, &mut r);
    let f1 = random_matrix(12, 5, 1.0, &mut r);
    for gamma in [1.0, 2.0, 3.0] {
        let out = emb_kd_loss(&s, &[&f0, &f1], gamma).unwrap();
        check("emb/student", s.as_slice(), out.d_student.as_slice(), |x| {
            emb_kd_loss(&with(&s, x), &[&f0, &f1], gamma).unwrap().loss
        }, 5);
        check("emb/modal0", f0.as_slice(), out.d_modal[0].as_slice(), |x| {
            emb_kd_loss(&s, &[&with(&f0, x), &f1], gamma).unwrap().loss
        }, 6);
        check("emb/modal1", f1.as_slice(), out.d_modal[1].as_slice(), |x| {
            emb_kd_loss(&s, &[&f0, &with(&f1, x)], gamma).unwrap().loss
        }, 7);
    }
}

pub fn small_graph() -> InteractionGraph {
    build_graph(&[
        (0, 0), (0, 3), (0, 5), (1, 1), (1, 2), (1, 6), (2, 0), (2, 4), (2, 7),
        (3, 3), (3, 5), (3, 8), (4, 2), (4, 6), (4, 9), (5, 1), (5, 7), (5, 9),
    ])
    .unwrap()
}

fn random_emb(g: &InteractionGraph, d: usize, r: &mut ChaCha8Rng) -> NodeEmbeddings {
    NodeEmbeddings { users: random_matrix(g.n_users(), d, 1.0, r), items: random_matrix(g.n_items(), d, 1.0, r) }
}

pub fn batch(g: &InteractionGraph) -> DistillBatch {
    let mut r = stream_rng(5, Stream::Sampling, 0);
    let triplets = mmdistill_core::graph::sample_bpr_batch(g, 12, &mut r).unwrap();
    let anchors: Vec<_> = triplets.iter().map(|t| (t.user, t.pos)).collect();
    let lists = mmdistill_core::graph::rank_lists_for_anchors(g, &anchors, 4, &mut r).unwrap();
    DistillBatch { triplets, lists }
}

fn split(e: &NodeEmbeddings, x: &[f64]) -> NodeEmbeddings {
    let nu = e.users.len();
    NodeEmbeddings { users: with(&e.users, &x[..nu]), items: with(&e.items, &x[nu..]) }
}

fn flat(e: &NodeEmbeddings) -> Vec<f64> {
    e.users.as_slice().iter().chain(e.items.as_slice()).copied().collect()
}

pub fn joint_gradient() {
    let g = small_graph();
    let mut r = rng(6);
    let s = random_emb(&g, 4, &mut r);
    let t = random_emb(&g, 4, &mut r);
    let m = vec![random_emb(&g, 4, &mut r), random_emb(&g, 4, &mut r)];
    let b = batch(&g);
    let cfg = KdConfig {
        weights: LossWeights { pair_kd: 0.4, list_kd: 0.6, emb_kd: 0.8 },
        tau: 0.7,
        gamma: 2.0,
        list_mode: ListKdMode::Vanilla,
    };
    let (_, grads) = joint_loss(&s, &t, &m, &b, &cfg).unwrap();
    check("joint/student", &flat(&s), &flat(&grads.student), |x| {
        joint_loss(&split(&s, x), &t, &m, &b, &cfg).unwrap().0.total
    }, 8);
    for (k, gm) in grads.teacher_modal.iter().enumerate() {
        check("joint/modal", &flat(&m[k]), &flat(gm), |x| {
            let mut mm = m.clone();
            mm[k] = split(&m[k], x);
            joint_loss(&s, &t, &mm, &b, &cfg).unwrap().0.total
        }, 9 + k as u64);
    }
}

/// `Σ G ⊙ E` over both node tables.
fn pairing(e: &NodeEmbeddings, g: &NodeEmbeddings) -> f64 {
    flat(e).iter().zip(flat(g)).map(|(a, b)| a * b).sum()
}

pub fn student_forward_gradient() {
    let g = small_graph();
    let adj = normalized_adjacency(&g);
    for layers in [0, 1, 3] {
        let mut student = StudentModel::new(g.n_users(), g.n_items(), 5, layers, 3).unwrap();
        let probe = random_emb(&g, 5, &mut rng(7));
        student.backward(&adj, &probe).unwrap();
        let base = student.clone();
        let eval = |users: &DenseMatrix, items: &DenseMatrix| {
            let mut s = base.clone();
            s.user_emb.value = users.clone();
            s.item_emb.value = items.clone();
            pairing(&s.forward(&adj).unwrap(), &probe)
        };
        let (u, i) = (&base.user_emb.value, &base.item_emb.value);
        check("student/users", u.as_slice(), base.user_emb.grad.as_slice(), |x| eval(&with(u, x), i), 11);
        check("student/items", i.as_slice(), base.item_emb.grad.as_slice(), |x| eval(u, &with(i, x)), 12);
    }
}

fn features(n_items: usize, dims: &[usize], seed: u64) -> ModalityFeatureSet {
    let mut r = rng(seed);
    let mods = dims
        .iter()
        .enumerate()
        .map(|(k, &d)| Modality { name: format!("m{k}"), features: random_matrix(n_items, d, 1.0, &mut r) })
        .collect();
    ModalityFeatureSet::new(n_items, mods).unwrap()
}

/// Teacher whose prompt input is non-zero, so every tensor has a live gradient.
fn teacher_with_offset_prompt(g: &InteractionGraph, feats: &ModalityFeatureSet, dropout: f64) -> TeacherModel {
    let cfg = TeacherConfig { dim: 3, layers: 2, dropout, lambda1: 0.7 };
    let mut t = TeacherModel::new(g.n_users(), g.n_items(), feats, &cfg, 21).unwrap();
    let mut r = rng(22);
    for reducer in &mut t.reducers {
        for v in reducer.mean.iter_mut() {
            *v += r.random_range(-0.5..0.5);
        }
    }
    for layer in &mut t.reductions {
        layer.bias.value = random_matrix(1, 3, 0.5, &mut r);
    }
    t
}

type Probe = (NodeEmbeddings, Vec<NodeEmbeddings>);

fn teacher_objective(t: &TeacherModel, adj: &SparseMatrix, g: &InteractionGraph, f: &ModalityFeatureSet, probe: &Probe) -> f64 {
    let mut drop = stream_rng(1, Stream::Dropout, 0);
    let fwd = t.forward(adj, g, f, true, &mut drop).unwrap();
    pairing(&fwd.id, &probe.0) + fwd.modal.iter().zip(&probe.1).map(|(a, b)| pairing(a, b)).sum::<f64>()
}

fn check_teacher_params<F: Fn(&TeacherModel) -> f64>(base: &TeacherModel, grads: &TeacherModel, objective: F) {
    for (k, p) in grads.params().iter().enumerate() {
        let value = base.params()[k].value.clone();
        check(&p.name, value.as_slice(), p.grad.as_slice(), |x| {
            let mut t = base.clone();
            t.params_mut()[k].value = with(&value, x);
            objective(&t)
        }, 30 + k as u64);
    }
}

pub fn teacher_forward_gradient() {
    let g = small_graph();
    let adj = normalized_adjacency(&g);
    let feats = features(g.n_items(), &[6, 4], 8);
    let base = teacher_with_offset_prompt(&g, &feats, 0.3);
    let mut r = rng(9);
    let probe: Probe = (random_emb(&g, 3, &mut r), vec![random_emb(&g, 3, &mut r), random_emb(&g, 3, &mut r)]);
    let mut drop = stream_rng(1, Stream::Dropout, 0);
    let fwd = base.forward(&adj, &g, &feats, true, &mut drop).unwrap();
    let mut grads = base.clone();
    grads.backward(&adj, &g, &feats, &fwd, Some(&probe.0), &probe.1).unwrap();
    assert!(grads.prompt.weight.grad.as_slice().iter().any(|&v| v != 0.0));
    check_teacher_params(&base, &grads, |t| teacher_objective(t, &adj, &g, &feats, &probe));
}

pub fn teacher_bpr_end_to_end_gradient() {
    let g = small_graph();
    let adj = normalized_adjacency(&g);
    let feats = features(g.n_items(), &[5, 7], 10);
    let base = teacher_with_offset_prompt(&g, &feats, 0.0);
    let triplets: Vec<BprTriplet> = batch(&g).triplets;
    let loss = |t: &TeacherModel| {
        let mut drop = stream_rng(1, Stream::Dropout, 0);
        let fwd = t.forward(&adj, &g, &feats, false, &mut drop).unwrap();
        teacher_bpr_loss(&fwd, &triplets).unwrap().0
    };
    let mut drop = stream_rng(1, Stream::Dropout, 0);
    let fwd = base.forward(&adj, &g, &feats, false, &mut drop).unwrap();
    let (_, gid, gm) = teacher_bpr_loss(&fwd, &triplets).unwrap();
    let mut grads = base.clone();
    grads.backward(&adj, &g, &feats, &fwd, Some(&gid), &gm).unwrap();
    check_teacher_params(&base, &grads, loss);
}

pub fn stage_two_prompt_gradient() {
    // Student + prompt through the joint objective, teacher frozen otherwise.
    let g = small_graph();
    let adj = normalized_adjacency(&g);
    let feats = features(g.n_items(), &[6, 5], 11);
    let mut base = teacher_with_offset_prompt(&g, &feats, 0.0);
    base.freeze_for_distillation(true);
    let student = random_emb(&g, 3, &mut rng(12));
    let b = batch(&g);
    let cfg = KdConfig {
        weights: LossWeights { pair_kd: 0.5, list_kd: 0.5, emb_kd: 0.5 },
        list_mode: ListKdMode::Vanilla,
        ..KdConfig::default()
    };
    let loss = |t: &TeacherModel| {
        let mut drop = stream_rng(1, Stream::Dropout, 0);
        let fwd = t.forward(&adj, &g, &feats, false, &mut drop).unwrap();
        joint_loss(&student, &fwd.id, &fwd.modal, &b, &cfg).unwrap().0.total
    };
    let mut drop = stream_rng(1, Stream::Dropout, 0);
    let fwd = base.forward(&adj, &g, &feats, false, &mut drop).unwrap();
    let (_, grads) = joint_loss(&student, &fwd.id, &fwd.modal, &b, &cfg).unwrap();
    let mut with_grads = base.clone();
    with_grads.backward(&adj, &g, &feats, &fwd, None, &grads.teacher_modal).unwrap();
    for p in with_grads.backbone_params() {
        assert!(p.grad.as_slice().iter().all(|&v| v == 0.0), "{} received a gradient", p.name);
    }
    for k in [2, 3] {
        let p = &with_grads.params()[k];
        let value = base.params()[k].value.clone();
        check(&p.name, value.as_slice(), p.grad.as_slice(), |x| {
            let mut t = base.clone();
            t.params_mut()[k].value = with(&value, x);
            loss(&t)
        }, 50 + k as u64);
    }
}

pub const ALL: &[(&str, fn())] = &[
    ("bpr_gradient", bpr_gradient),
    ("pair_kd_gradient", pair_kd_gradient),
    ("list_kd_gradient", list_kd_gradient),
    ("emb_kd_gradient", emb_kd_gradient),
    ("joint_gradient", joint_gradient),
    ("student_forward_gradient", student_forward_gradient),
    ("teacher_forward_gradient", teacher_forward_gradient),
    ("teacher_bpr_end_to_end_gradient", teacher_bpr_end_to_end_gradient),
    ("stage_two_prompt_gradient", stage_two_prompt_gradient),
];
