//! Trajectory matching: unroll student steps on the synthetic set from a
//! teacher snapshot and pull the endpoint towards the teacher's later snapshot.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{Graph, ParamVector, Tensor, Var};
use crate::buffer::TeacherTrajectory;
use crate::data::{NoiseSpec, SyntheticDataset};
use crate::error::{Error, Result};
use crate::models::{ForwardMode, Network};
use crate::rng::{self, Prng};

/// Smallest student step size kept after an update.
pub const MIN_STEP_SIZE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistillConfig {
    /// Student steps per unroll (n).
    pub syn_steps: usize,
    /// Teacher epochs per segment (m).
    pub expert_epochs: usize,
    pub max_start_epoch: usize,
    pub lr_pixels: f64,
    pub lr_step_size: f64,
    pub iterations: usize,
    pub noise: NoiseSpec,
    pub ema_decay: f64,
    /// Unrolls use random mini-batches of this many synthetic rows once |S| exceeds it.
    pub batch_cap: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            syn_steps: 20,
            expert_epochs: 2,
            max_start_epoch: 4,
            lr_pixels: 100.0,
            lr_step_size: 1e-5,
            iterations: 200,
            noise: NoiseSpec::disabled(),
            ema_decay: 0.999,
            batch_cap: 256,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.syn_steps == 0 || self.expert_epochs == 0 {
            return Err(Error::InvalidConfig("synthetic steps and expert epochs must be at least 1".into()));
        }
        if !(self.noise.sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise sigma must be >= 0, got {}", self.noise.sigma)));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::InvalidConfig(format!("ema decay must lie in [0, 1], got {}", self.ema_decay)));
        }
        if !(self.lr_pixels >= 0.0 && self.lr_step_size >= 0.0) {
            return Err(Error::InvalidConfig("learning rates must be >= 0".into()));
        }
        if self.batch_cap == 0 {
            return Err(Error::InvalidConfig("synthetic batch cap must be positive".into()));
        }
        Ok(())
    }
}

/// One sampled teacher segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSample {
    /// Index into the trajectory pool.
    pub trajectory: usize,
    /// Segment index t; the segment spans epochs `t·m ..= t·m + m`.
    pub index: usize,
    pub start_epoch: usize,
    pub theta_start: ParamVector,
    pub theta_target: ParamVector,
    /// `‖θ_start − θ_target‖²`
    pub denominator: f64,
}

/// Segment indices t with `t·m + m ≤ E` and `t·m ≤ max_start`.
pub fn admissible_starts(epochs: usize, m: usize, max_start: usize) -> Vec<usize> {
    if m == 0 {
        return Vec::new();
    }
    (0..).take_while(|t| t * m + m <= epochs && t * m <= max_start).collect()
}

/// Builds the sample for segment `index` of `traj`.
pub fn segment_at(traj: &TeacherTrajectory, trajectory: usize, index: usize, m: usize) -> Result<SegmentSample> {
    let start_epoch = index * m;
    if m == 0 || start_epoch + m > traj.epochs() {
        return Err(Error::NoAdmissibleSegment(format!("segment {} of length {}", index, m)));
    }
    let theta_start = traj.snapshots[start_epoch].clone();
    let theta_target = traj.snapshots[start_epoch + m].clone();
    let denominator = theta_start.squared_distance(&theta_target)?;
    if !(denominator > 0.0) {
        return Err(Error::DegenerateSegment { start: start_epoch });
    }
    Ok(SegmentSample { trajectory, index, start_epoch, theta_start, theta_target, denominator })
}

/// Picks a trajectory uniformly, then an admissible segment of it uniformly.
pub fn sample_segment(pool: &[TeacherTrajectory], cfg: &DistillConfig, rng: &mut Prng) -> Result<SegmentSample> {
    let candidates: Vec<(usize, Vec<usize>)> = pool
        .iter()
        .enumerate()
        .map(|(i, t)| (i, admissible_starts(t.epochs(), cfg.expert_epochs, cfg.max_start_epoch)))
        .filter(|(_, s)| !s.is_empty())
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoAdmissibleSegment(format!(
            "no segment of {} epochs starts at or before epoch {}",
            cfg.expert_epochs, cfg.max_start_epoch
        )));
    }
    let (traj, starts) = &candidates[rng::below(rng, candidates.len())];
    let index = starts[rng::below(rng, starts.len())];
    segment_at(&pool[*traj], *traj, index, cfg.expert_epochs)
}

/// Graph nodes of the synthetic set taking part in an unroll.
#[derive(Clone, Debug)]
pub struct SyntheticNodes {
    /// `[|S|, dim]`
    pub pixels: Var,
    pub labels: Arc<[usize]>,
    /// Student step size, shape `[1]`.
    pub step_size: Var,
}

/// Per-step row choices of an unroll; `None` uses every synthetic row.
pub fn batch_plan(rows: usize, steps: usize, cap: usize, rng: &mut Prng) -> Vec<Option<Vec<usize>>> {
    (0..steps)
        .map(|_| {
            if rows <= cap {
                None
            } else {
                let mut idx: Vec<usize> = (0..rows).collect();
                rng::shuffle(rng, &mut idx);
                idx.truncate(cap);
                Some(idx)
            }
        })
        .collect()
}

/// `θ̂_{k+1} = θ̂_k − η·∇L_{B_k}(θ̂_k)`, recorded so the result stays
/// differentiable with respect to the pixels and the step size.
pub fn student_unroll(
    g: &mut Graph,
    net: &Network,
    theta_start: Var,
    syn: &SyntheticNodes,
    plan: &[Option<Vec<usize>>],
) -> Result<Var> {
    let dim = net.spec().input.dim();
    let mut theta = theta_start;
    for rows in plan {
        let (x, labels) = match rows {
            None => (syn.pixels, syn.labels.clone()),
            Some(rows) => {
                let idx: Vec<usize> = rows.iter().flat_map(|&r| r * dim..(r + 1) * dim).collect();
                let x = g.gather(syn.pixels, idx.into(), vec![rows.len(), dim])?;
                let labels: Vec<usize> = rows.iter().map(|&r| syn.labels[r]).collect();
                (x, labels.into())
            }
        };
        let loss = net.loss(g, theta, x, labels, ForwardMode::Train)?;
        let grad = g.grad_with_graph(loss, &[theta])?[0];
        let step = g.mul_scalar(grad, syn.step_size)?;
        theta = g.sub(theta, step)?;
    }
    Ok(theta)
}

/// `‖θ̂ − θ_target‖² / d`
pub fn mtt_loss(g: &mut Graph, theta_hat: Var, seg: &SegmentSample) -> Result<Var> {
    let target = g.constant(seg.theta_target.to_tensor());
    let diff = g.sub(theta_hat, target)?;
    let sq = g.squared_l2(diff)?;
    g.scale(sq, 1.0 / seg.denominator)
}

/// Student weights after `n` full-batch steps on the synthetic set, without gradients.
pub fn synthetic_steps(
    net: &Network,
    pixels: &[f64],
    labels: &[usize],
    step_size: f64,
    theta: &ParamVector,
    n: usize,
) -> Result<ParamVector> {
    let batch = crate::models::Batch::new(pixels, labels);
    let mut p = theta.clone();
    for _ in 0..n {
        let (_, grad) = net.loss_and_grad(&p, &batch)?;
        p = p.axpy(-step_size, &grad)?;
    }
    Ok(p)
}

/// Starting weights of the unroll, perturbed when robust noise is enabled.
pub fn perturbed_start(theta: &ParamVector, noise: &NoiseSpec, rng: &mut Prng) -> ParamVector {
    let sigma = noise.sigma * theta.rms();
    if !noise.enabled || sigma == 0.0 {
        return theta.clone();
    }
    let mut p = theta.clone();
    for v in p.values_mut() {
        *v += sigma * rng::normal(rng);
    }
    p
}

/// Loss and meta-gradients of one matched segment.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaGradient {
    pub loss: f64,
    pub pixels: Vec<f64>,
    pub step_size: f64,
}

/// Matching loss of `seg` from `theta_init` and its gradient with respect to
/// the pixels and the student step size.
pub fn meta_gradient(
    net: &Network,
    syn: &SyntheticDataset,
    theta_init: &ParamVector,
    seg: &SegmentSample,
    plan: &[Option<Vec<usize>>],
) -> Result<MetaGradient> {
    let mut g = Graph::new();
    let theta = g.constant(theta_init.to_tensor());
    let nodes = SyntheticNodes {
        pixels: g.param(Tensor::new(vec![syn.len(), syn.dim()], syn.pixels.clone())?),
        labels: syn.labels.clone().into(),
        step_size: g.param(Tensor::vector(vec![syn.step_size])),
    };
    let theta_hat = student_unroll(&mut g, net, theta, &nodes, plan)?;
    let loss = mtt_loss(&mut g, theta_hat, seg)?;
    let value = g.value(loss).item();
    let mut grads = g.grad(loss, &[nodes.pixels, nodes.step_size])?;
    let step_size = grads[1].item();
    let pixels = grads.swap_remove(0).into_data();
    Ok(MetaGradient { loss: value, pixels, step_size })
}

/// Per-iteration record of a distillation run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub iteration: usize,
    pub loss: f64,
    pub step_size: f64,
    pub start_epoch: usize,
}

/// Random streams used by distillation: segment and batch choices, and robust noise.
pub struct DistillRng {
    pub sampling: Prng,
    pub noise: Prng,
}

impl DistillRng {
    pub fn new(seed: u64) -> Self {
        Self {
            sampling: rng::prng(rng::derive_seed(seed, "distill-sampling")),
            noise: rng::prng(rng::derive_seed(seed, "distill-noise")),
        }
    }
}

/// One outer iteration: sample, unroll, update pixels and step size, update EMA.
pub fn distill_step(
    net: &Network,
    syn: &mut SyntheticDataset,
    pool: &[TeacherTrajectory],
    cfg: &DistillConfig,
    rng: &mut DistillRng,
) -> Result<StepLog> {
    let seg = sample_segment(pool, cfg, &mut rng.sampling)?;
    let plan = batch_plan(syn.len(), cfg.syn_steps, cfg.batch_cap, &mut rng.sampling);
    let theta_init = perturbed_start(&seg.theta_start, &cfg.noise, &mut rng.noise);
    let meta = meta_gradient(net, syn, &theta_init, &seg, &plan)?;
    for (p, gp) in syn.pixels.iter_mut().zip(&meta.pixels) {
        *p -= cfg.lr_pixels * gp;
    }
    let eta = syn.step_size - cfg.lr_step_size * meta.step_size;
    syn.step_size = if eta.is_finite() { eta.max(MIN_STEP_SIZE) } else { MIN_STEP_SIZE };
    syn.ema_decay = cfg.ema_decay;
    syn.ema_update();
    Ok(StepLog { iteration: 0, loss: meta.loss, step_size: syn.step_size, start_epoch: seg.start_epoch })
}

/// Runs `cfg.iterations` distillation steps and returns the per-iteration log.
pub fn distill(
    net: &Network,
    syn: &mut SyntheticDataset,
    pool: &[TeacherTrajectory],
    cfg: &DistillConfig,
) -> Result<Vec<StepLog>> {
    cfg.validate()?;
    for traj in pool {
        traj.check_network(net)?;
    }
    let mut rng = DistillRng::new(cfg.seed);
    let mut log = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let mut step = distill_step(net, syn, pool, cfg, &mut rng)?;
        if syn.pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "distill" });
        }
        step.iteration = iteration;
        log.push(step);
    }
    Ok(log)
}

/// `Σ_i (1 − ⟨X_i, Y_i⟩ / (‖X_i‖‖Y_i‖))` over the columns of two matrices;
/// vectors count as a single column.
pub fn cosine_distance(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::shape("cosine_distance", format!("{:?} vs {:?}", x.shape(), y.shape())));
    }
    let (rows, cols) = match x.shape() {
        [n] => (*n, 1),
        [r, c] => (*r, *c),
        s => return Err(Error::shape("cosine_distance", format!("expected a matrix, got {:?}", s))),
    };
    let mut total = 0.0;
    for c in 0..cols {
        let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
        for r in 0..rows {
            let (a, b) = (x.data()[r * cols + c], y.data()[r * cols + c]);
            xy += a * b;
            xx += a * a;
            yy += b * b;
        }
        if xx == 0.0 || yy == 0.0 {
            return Err(Error::ZeroColumn(c));
        }
        total += 1.0 - xy / (libm::sqrt(xx) * libm::sqrt(yy));
    }
    Ok(total)
}
