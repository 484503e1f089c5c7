use std::sync::Arc;

use ftd_core::autograd::{Graph, ParamLayout, ParamVector, Tensor};
use ftd_core::buffer::{train_teacher, FtdConfig, TeacherMode, TeacherTrajectory};
use ftd_core::data::{make_toy, NoiseSpec, RealDataset, SyntheticDataset, SyntheticInit, ToyKind, ToySpec};
use ftd_core::distill::*;
use ftd_core::models::{ArchSpec, Batch, ForwardMode, InputShape, Network};
use ftd_core::rng;
use ftd_core::Error;
use proptest::prelude::*;

fn blobs_setup() -> (RealDataset, Network, TeacherTrajectory) {
    let real = make_toy(&ToySpec::new(ToyKind::Blobs, 2, 16, 3)).unwrap();
    let arch = ArchSpec::mlp(real.shape, 4, 1, 2);
    let net = Network::build(arch).unwrap();
    assert_eq!(net.param_count(), 46);
    let cfg = FtdConfig { lr: 0.1, epochs: 4, batch_size: 8, seed: 2, ..Default::default() };
    let traj = train_teacher(&real, &arch, &cfg, TeacherMode::Sgd, 1).unwrap();
    (real, net, traj)
}

fn synthetic(real: &RealDataset, ipc: usize) -> SyntheticDataset {
    SyntheticDataset::init(real, ipc, 9, SyntheticInit::RealSample, 0.1, 0.9).unwrap()
}

fn full_plan(n: usize) -> Vec<Option<Vec<usize>>> {
    vec![None; n]
}

fn worst_relative(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, f)| (a - f).abs() / f.abs().max(1e-3 * scale))
        .fold(0.0, f64::max)
}

#[test]
fn meta_gradient_matches_central_differences() {
    let (real, net, traj) = blobs_setup();
    let seg = segment_at(&traj, 0, 1, 1).unwrap();
    let syn = synthetic(&real, 2);
    let h = 1e-4;
    for n in 1..=3 {
        let plan = full_plan(n);
        let meta = meta_gradient(&net, &syn, &seg.theta_start, &seg, &plan).unwrap();
        let loss_at = |s: &SyntheticDataset| meta_gradient(&net, s, &seg.theta_start, &seg, &plan).unwrap().loss;
        let mut fd = Vec::with_capacity(syn.pixels.len());
        for i in 0..syn.pixels.len() {
            let mut plus = syn.clone();
            plus.pixels[i] += h;
            let mut minus = syn.clone();
            minus.pixels[i] -= h;
            fd.push((loss_at(&plus) - loss_at(&minus)) / (2.0 * h));
        }
        let err = worst_relative(&meta.pixels, &fd);
        assert!(err < 1e-4, "n={n}: pixel gradient error {err:e}");

        let eh = 1e-4 * syn.step_size;
        let mut plus = syn.clone();
        plus.step_size += eh;
        let mut minus = syn.clone();
        minus.step_size -= eh;
        let fd_eta = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eh);
        let err = (meta.step_size - fd_eta).abs() / fd_eta.abs();
        assert!(err < 1e-4, "n={n}: step-size gradient error {err:e}");
    }
}

#[test]
fn zero_and_one_step_unrolls() {
    let (real, net, traj) = blobs_setup();
    let syn = synthetic(&real, 1);
    let theta0 = &traj.snapshots[1];
    let mut g = Graph::new();
    let theta = g.constant(theta0.to_tensor());
    let nodes = SyntheticNodes {
        pixels: g.param(Tensor::new(vec![syn.len(), syn.dim()], syn.pixels.clone()).unwrap()),
        labels: syn.labels.clone().into(),
        step_size: g.param(Tensor::vector(vec![syn.step_size])),
    };
    let same = student_unroll(&mut g, &net, theta, &nodes, &[]).unwrap();
    assert_eq!(g.value(same).data(), theta0.values());

    let one = student_unroll(&mut g, &net, theta, &nodes, &full_plan(1)).unwrap();
    let (_, grad) = net.loss_and_grad(theta0, &syn.batch(false)).unwrap();
    let oracle = theta0.axpy(-syn.step_size, &grad).unwrap();
    for (a, b) in g.value(one).data().iter().zip(oracle.values()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn single_step_matching_reduces_to_gradient_matching() {
    let (real, net, traj) = blobs_setup();
    let syn = synthetic(&real, 2);
    let eta = syn.step_size;
    let theta_start = traj.snapshots[1].clone();
    let real_batch = Batch::new(&real.train.pixels, &real.train.labels);
    let (_, grad_real) = net.loss_and_grad(&theta_start, &real_batch).unwrap();
    let theta_target = theta_start.axpy(-eta, &grad_real).unwrap();
    let seg = SegmentSample {
        trajectory: 0,
        index: 0,
        start_epoch: 0,
        theta_start: theta_start.clone(),
        theta_target,
        denominator: 1.0,
    };
    let meta = meta_gradient(&net, &syn, &theta_start, &seg, &full_plan(1)).unwrap();

    // η²‖∇L_S(θ) − ∇L_T(θ)‖² built directly
    let mut g = Graph::new();
    let theta = g.param(theta_start.to_tensor());
    let px = g.param(Tensor::new(vec![syn.len(), syn.dim()], syn.pixels.clone()).unwrap());
    let loss = net.loss(&mut g, theta, px, syn.labels.clone().into(), ForwardMode::Train).unwrap();
    let gs = g.grad_with_graph(loss, &[theta]).unwrap()[0];
    let gt = g.constant(grad_real.to_tensor());
    let diff = g.sub(gs, gt).unwrap();
    let sq = g.squared_l2(diff).unwrap();
    let obj = g.scale(sq, eta * eta).unwrap();
    let direct = g.grad(obj, &[px]).unwrap().remove(0);

    assert!((g.value(obj).item() - meta.loss).abs() < 1e-10);
    for (a, b) in meta.pixels.iter().zip(direct.data()) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

fn line_trajectory(epochs: usize, m: usize) -> TeacherTrajectory {
    let layout = Arc::new(ParamLayout::new([("w", vec![2])]));
    TeacherTrajectory {
        arch: ArchSpec::mlp(InputShape::flat(1), 1, 1, 2),
        snapshots: (0..=epochs)
            .map(|e| ParamVector::with_layout(vec![e as f64, 1.0], layout.clone()).unwrap())
            .collect(),
        expert_epochs: m,
        config_hash: 0,
        train_loss: vec![0.0; epochs],
        degenerate_steps: 0,
    }
}

#[test]
fn segment_sampling_is_uniform() {
    let pool = vec![line_trajectory(5, 2)];
    let cfg = DistillConfig { expert_epochs: 2, max_start_epoch: 4, ..Default::default() };
    let mut r = rng::prng(1);
    let draws = 10_000;
    let mut zeros = 0usize;
    for _ in 0..draws {
        let s = sample_segment(&pool, &cfg, &mut r).unwrap();
        assert!(s.index <= 1);
        zeros += usize::from(s.index == 0);
    }
    let sigma = (draws as f64 * 0.25).sqrt();
    assert!((zeros as f64 - draws as f64 / 2.0).abs() <= 3.0 * sigma, "{zeros}");

    let cfg0 = DistillConfig { max_start_epoch: 0, ..cfg };
    for _ in 0..100 {
        assert_eq!(sample_segment(&pool, &cfg0, &mut r).unwrap().index, 0);
    }
    let too_long = DistillConfig { expert_epochs: 6, ..cfg };
    assert!(matches!(sample_segment(&pool, &too_long, &mut r), Err(Error::NoAdmissibleSegment(_))));
}

#[test]
fn stationary_teacher_segment_is_rejected() {
    let mut t = line_trajectory(3, 1);
    t.snapshots[1] = t.snapshots[0].clone();
    assert_eq!(segment_at(&t, 0, 0, 1), Err(Error::DegenerateSegment { start: 0 }));
}

fn loss_value(theta_hat: &ParamVector, seg: &SegmentSample) -> f64 {
    let mut g = Graph::new();
    let th = g.constant(theta_hat.to_tensor());
    let l = mtt_loss(&mut g, th, seg).unwrap();
    g.value(l).item()
}

fn sample_of(start: Vec<f64>, target: Vec<f64>) -> SegmentSample {
    let layout = Arc::new(ParamLayout::new([("w", vec![start.len()])]));
    let theta_start = ParamVector::with_layout(start, layout.clone()).unwrap();
    let theta_target = ParamVector::with_layout(target, layout).unwrap();
    let denominator = theta_start.squared_distance(&theta_target).unwrap();
    SegmentSample { trajectory: 0, index: 0, start_epoch: 0, theta_start, theta_target, denominator }
}

#[test]
fn matching_loss_endpoints() {
    let seg = sample_of(vec![1.0, 2.0, 3.0], vec![0.5, 2.5, 1.0]);
    assert_eq!(loss_value(&seg.theta_target, &seg), 0.0);
    assert!((loss_value(&seg.theta_start, &seg) - 1.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matching_loss_is_elementwise_and_permutation_invariant(
        data in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 2..12),
        seed in any::<u64>(),
    ) {
        let start: Vec<f64> = data.iter().map(|d| d.0).collect();
        let mut target: Vec<f64> = data.iter().map(|d| d.1).collect();
        target[0] = start[0] + 1.0;
        let hat: Vec<f64> = data.iter().map(|d| d.2).collect();
        let seg = sample_of(start.clone(), target.clone());
        let hat_p = ParamVector::with_layout(hat.clone(), seg.theta_start.layout().clone()).unwrap();
        let value = loss_value(&hat_p, &seg);

        let num: f64 = hat.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = start.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
        prop_assert!((value - num / den).abs() <= 1e-12 * (1.0 + value));

        let mut perm: Vec<usize> = (0..start.len()).collect();
        rng::shuffle(&mut rng::prng(seed), &mut perm);
        let permute = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let seg_p = sample_of(permute(&start), permute(&target));
        let hat_pp = ParamVector::with_layout(permute(&hat), seg_p.theta_start.layout().clone()).unwrap();
        prop_assert!((loss_value(&hat_pp, &seg_p) - value).abs() <= 1e-12 * (1.0 + value));
    }
}

fn distill_run(noise: NoiseSpec, iterations: usize) -> (SyntheticDataset, Vec<StepLog>) {
    let (real, net, traj) = blobs_setup();
    let mut syn = synthetic(&real, 1);
    let cfg = DistillConfig {
        syn_steps: 3,
        expert_epochs: 1,
        max_start_epoch: 2,
        lr_pixels: 1.0,
        lr_step_size: 1e-3,
        iterations,
        noise,
        ema_decay: 0.9,
        batch_cap: 256,
        seed: 5,
    };
    let log = distill(&net, &mut syn, &[traj], &cfg).unwrap();
    (syn, log)
}

#[test]
fn zero_noise_equals_disabled_noise() {
    let (a, la) = distill_run(NoiseSpec::disabled(), 10);
    let (b, lb) = distill_run(NoiseSpec::relative(0.0), 10);
    assert_eq!(a, b);
    assert_eq!(la, lb);
    let (c, _) = distill_run(NoiseSpec::relative(0.05), 10);
    assert_ne!(a.pixels, c.pixels);
}

#[test]
fn distillation_is_reproducible_and_keeps_labels() {
    let (a, _) = distill_run(NoiseSpec::disabled(), 15);
    let (b, _) = distill_run(NoiseSpec::disabled(), 15);
    assert!(a.pixels.iter().zip(&b.pixels).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a.labels, vec![0, 1]);
    assert_eq!(a.len(), 2);
    assert!(a.step_size >= MIN_STEP_SIZE);
}

#[test]
fn distillation_lowers_the_matching_loss() {
    let (_, log) = distill_run(NoiseSpec::disabled(), 200);
    let head: f64 = log[..20].iter().map(|l| l.loss).sum::<f64>() / 20.0;
    let tail: f64 = log[180..].iter().map(|l| l.loss).sum::<f64>() / 20.0;
    assert!(tail < head, "{head} -> {tail}");
}

#[test]
fn minibatched_unroll_uses_cap_rows() {
    let mut r = rng::prng(0);
    let plan = batch_plan(10, 3, 4, &mut r);
    assert!(plan.iter().all(|p| p.as_ref().map(|v| v.len()) == Some(4)));
    assert!(batch_plan(4, 3, 4, &mut r).iter().all(|p| p.is_none()));
}
