//! Teacher trajectories: plain SGD and the flat (sharpness-aware) update,
//! with one weight snapshot per epoch.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::autograd::ParamVector;
use crate::data::RealDataset;
use crate::error::{Error, Result};
use crate::models::{ArchSpec, Batch, Network};
use crate::rng;

/// Gradient norms below this skip the perturbation.
pub const DEGENERATE_GRAD_NORM: f64 = 1e-12;

/// Radii swept by the parameter study.
pub const RHO_GRID: [f64; 5] = [0.005, 0.01, 0.03, 0.05, 0.1];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TeacherMode {
    Sgd,
    Ftd,
}

impl TeacherMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TeacherMode::Sgd => "sgd",
            TeacherMode::Ftd => "ftd",
        }
    }
}

impl fmt::Display for TeacherMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TeacherMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" | "mtt" => Ok(TeacherMode::Sgd),
            "ftd" => Ok(TeacherMode::Ftd),
            other => Err(Error::InvalidConfig(format!("unknown teacher mode `{}`", other))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FtdConfig {
    /// Perturbation radius in L2 units of the flat parameter vector.
    pub rho: f64,
    /// Weight of the perturbed gradient in the blended update.
    pub alpha: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FtdConfig {
    fn default() -> Self {
        Self { rho: 0.01, alpha: 1.0, lr: 0.01, epochs: 10, batch_size: 64, seed: 0 }
    }
}

impl FtdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidConfig(format!("rho must be >= 0, got {}", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!("teacher lr must be > 0, got {}", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be positive".into()));
        }
        Ok(())
    }

    /// Stable 64-bit digest of the fields, used when no external hash is supplied.
    pub fn fingerprint(&self, mode: TeacherMode) -> u64 {
        let mut bytes = Vec::with_capacity(48);
        for v in [self.rho, self.alpha, self.lr] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.epochs as u64, self.batch_size as u64, self.seed] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(mode.as_str().as_bytes());
        rng::fnv1a64(&bytes)
    }
}

/// Outcome of one teacher update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub params: ParamVector,
    /// Loss at the unperturbed weights.
    pub loss: f64,
    /// The gradient was too small to normalise and the perturbation was skipped.
    pub degenerate: bool,
}

/// `θ − η·∇L(θ)`
pub fn sgd_step(net: &Network, params: &ParamVector, batch: &Batch<'_>, lr: f64) -> Result<StepOutcome> {
    let (loss, grad) = net.loss_and_grad(params, batch)?;
    Ok(StepOutcome { params: params.axpy(-lr, &grad)?, loss, degenerate: false })
}

/// Blended sharpness-aware step over an arbitrary loss/gradient oracle.
///
/// `θ_adv = θ + ρ·g/‖g‖`, then `θ − η·(α·∇L(θ_adv) + (1−α)·g)`.
pub fn ftd_update<F>(params: &ParamVector, rho: f64, alpha: f64, lr: f64, mut loss_and_grad: F) -> Result<StepOutcome>
where
    F: FnMut(&ParamVector) -> Result<(f64, ParamVector)>,
{
    let (loss, g_l) = loss_and_grad(params)?;
    if rho == 0.0 || alpha == 0.0 {
        return Ok(StepOutcome { params: params.axpy(-lr, &g_l)?, loss, degenerate: false });
    }
    let norm = g_l.norm();
    if norm < DEGENERATE_GRAD_NORM {
        return Ok(StepOutcome { params: params.axpy(-lr, &g_l)?, loss, degenerate: true });
    }
    let adv = params.axpy(rho / norm, &g_l)?;
    let (_, g_sl) = loss_and_grad(&adv)?;
    let blended = if alpha == 1.0 { g_sl } else { g_sl.scaled(alpha).axpy(1.0 - alpha, &g_l)? };
    Ok(StepOutcome { params: params.axpy(-lr, &blended)?, loss, degenerate: false })
}

pub fn ftd_step(net: &Network, params: &ParamVector, batch: &Batch<'_>, cfg: &FtdConfig) -> Result<StepOutcome> {
    ftd_update(params, cfg.rho, cfg.alpha, cfg.lr, |p| net.loss_and_grad(p, batch))
}

/// Per-epoch weight snapshots of one teacher run, epoch 0 being the initialisation.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherTrajectory {
    pub arch: ArchSpec,
    pub snapshots: Vec<ParamVector>,
    /// Epochs per matched segment.
    pub expert_epochs: usize,
    pub config_hash: u64,
    /// Mean mini-batch loss of each epoch.
    pub train_loss: Vec<f64>,
    /// Steps whose perturbation was skipped for a vanishing gradient.
    pub degenerate_steps: usize,
}

impl TeacherTrajectory {
    pub fn epochs(&self) -> usize {
        self.snapshots.len().saturating_sub(1)
    }

    /// Segment indices `t` whose end `t·m + m` lies inside the trajectory.
    pub fn complete_segments(&self) -> usize {
        self.epochs().checked_div(self.expert_epochs).unwrap_or(0)
    }

    /// Start and end snapshots of segment `t`.
    pub fn segment(&self, t: usize) -> Result<(&ParamVector, &ParamVector)> {
        let m = self.expert_epochs;
        if m == 0 || t * m + m > self.epochs() {
            return Err(Error::NoAdmissibleSegment(format!(
                "segment {} needs epoch {} but the trajectory ends at {}",
                t,
                t * m + m,
                self.epochs()
            )));
        }
        Ok((&self.snapshots[t * m], &self.snapshots[t * m + m]))
    }

    /// Fails unless every snapshot has `net`'s layout.
    pub fn check_network(&self, net: &Network) -> Result<()> {
        if self.arch != *net.spec() {
            return Err(Error::LayoutMismatch(format!("trajectory for {} used with {}", self.arch, net.spec())));
        }
        for s in &self.snapshots {
            if s.layout().as_ref() != net.layout().as_ref() {
                return Err(Error::LayoutMismatch(format!("snapshot of {} parameters", s.len())));
            }
        }
        Ok(())
    }
}

/// Trains one teacher from `init` and records a snapshot after every epoch.
pub fn train_teacher_from(
    real: &RealDataset,
    net: &Network,
    init: ParamVector,
    cfg: &FtdConfig,
    mode: TeacherMode,
    expert_epochs: usize,
) -> Result<TeacherTrajectory> {
    cfg.validate()?;
    if expert_epochs == 0 || expert_epochs > cfg.epochs {
        return Err(Error::InvalidConfig(format!(
            "expert epochs {} must lie in 1..={}",
            expert_epochs, cfg.epochs
        )));
    }
    let dim = real.dim();
    let rows = real.train.rows();
    if rows == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut order: Vec<usize> = (0..rows).collect();
    let mut rng = rng::prng(rng::derive_seed(cfg.seed, "teacher-minibatch"));
    let mut params = init;
    let mut snapshots = Vec::with_capacity(cfg.epochs + 1);
    snapshots.push(params.clone());
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut degenerate_steps = 0;
    let mut pixels = Vec::with_capacity(cfg.batch_size * dim);
    let mut labels = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        rng::shuffle(&mut rng, &mut order);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            pixels.clear();
            labels.clear();
            for &i in chunk {
                pixels.extend_from_slice(real.train.row(i, dim));
                labels.push(real.train.labels[i]);
            }
            let batch = Batch::new(&pixels, &labels);
            let step = match mode {
                TeacherMode::Sgd => sgd_step(net, &params, &batch, cfg.lr),
                TeacherMode::Ftd => ftd_step(net, &params, &batch, cfg),
            }
            .map_err(|e| if e.is_numerical() { Error::Divergence { epoch } } else { e })?;
            if !step.loss.is_finite() || step.params.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            degenerate_steps += usize::from(step.degenerate);
            total += step.loss;
            batches += 1;
            params = step.params;
        }
        train_loss.push(total / batches as f64);
        snapshots.push(params.clone());
    }
    Ok(TeacherTrajectory {
        arch: *net.spec(),
        snapshots,
        expert_epochs,
        config_hash: cfg.fingerprint(mode),
        train_loss,
        degenerate_steps,
    })
}

/// Builds the network, draws its initial weights from the config seed and trains.
pub fn train_teacher(
    real: &RealDataset,
    arch: &ArchSpec,
    cfg: &FtdConfig,
    mode: TeacherMode,
    expert_epochs: usize,
) -> Result<TeacherTrajectory> {
    let net = Network::build(*arch)?;
    let init = net.init_weights(rng::derive_seed(cfg.seed, "teacher-init"));
    train_teacher_from(real, &net, init, cfg, mode, expert_epochs)
}
