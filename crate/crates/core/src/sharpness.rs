//! Sharpness measurements: the one-step ascent perturbation, the sharpness
//! gap, Hessian-vector products and a power-iteration spectral norm.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{Graph, ParamLayout, ParamVector, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::{Batch, ForwardMode, Network};
use crate::rng;

/// Gradient norms below this have no ascent direction.
pub const STATIONARY_GRAD_NORM: f64 = 1e-12;

/// A twice-differentiable scalar loss of a flat parameter vector.
pub trait Objective {
    /// Records the loss at `theta` on `g`.
    fn build(&self, g: &mut Graph, theta: Var) -> Result<Var>;

    fn loss(&self, params: &ParamVector) -> Result<f64> {
        let mut g = Graph::new();
        let theta = g.constant(params.to_tensor());
        let out = self.build(&mut g, theta)?;
        Ok(g.value(out).item())
    }

    fn loss_and_grad(&self, params: &ParamVector) -> Result<(f64, ParamVector)> {
        let mut g = Graph::new();
        let theta = g.param(params.to_tensor());
        let out = self.build(&mut g, theta)?;
        let value = g.value(out).item();
        let grad = g.grad(out, &[theta])?.remove(0);
        Ok((value, params.replaced(&grad)?))
    }
}

/// Mean cross-entropy of a network on a fixed batch.
pub struct NetworkLoss<'a> {
    pub net: &'a Network,
    pub batch: Batch<'a>,
}

impl<'a> NetworkLoss<'a> {
    pub fn new(net: &'a Network, batch: Batch<'a>) -> Self {
        Self { net, batch }
    }
}

impl Objective for NetworkLoss<'_> {
    fn build(&self, g: &mut Graph, theta: Var) -> Result<Var> {
        if self.batch.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        let dim = self.net.spec().input.dim();
        let x = g.constant(Tensor::new(vec![self.batch.rows(), dim], self.batch.pixels.to_vec())?);
        self.net.loss(g, theta, x, self.batch.labels.to_vec().into(), ForwardMode::Train)
    }

    fn loss_and_grad(&self, params: &ParamVector) -> Result<(f64, ParamVector)> {
        self.net.loss_and_grad(params, &self.batch)
    }
}

/// `½θᵀAθ + bᵀθ` for a square matrix `A`.
#[derive(Clone, Debug)]
pub struct QuadraticObjective {
    n: usize,
    a: Tensor,
    b: Tensor,
}

impl QuadraticObjective {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = b.len();
        Ok(Self { n, a: Tensor::matrix(n, n, a)?, b: Tensor::vector(b) })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut a = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            a[i * n + i] = *d;
        }
        Self::new(a, vec![0.0; n]).expect("square by construction")
    }

    pub fn layout(&self) -> Arc<ParamLayout> {
        Arc::new(ParamLayout::new([("theta", vec![self.n])]))
    }

    pub fn point(&self, values: Vec<f64>) -> Result<ParamVector> {
        ParamVector::with_layout(values, self.layout())
    }
}

impl Objective for QuadraticObjective {
    fn build(&self, g: &mut Graph, theta: Var) -> Result<Var> {
        let a = g.constant(self.a.clone());
        let b = g.constant(self.b.clone());
        let col = g.reshape(theta, vec![self.n, 1])?;
        let at = g.matmul(a, col)?;
        let at = g.reshape(at, vec![self.n])?;
        let quad = g.dot(theta, at)?;
        let quad = g.scale(quad, 0.5)?;
        let lin = g.dot(b, theta)?;
        g.add(quad, lin)
    }
}

/// `cᵀθ`
#[derive(Clone, Debug)]
pub struct LinearObjective {
    pub c: Vec<f64>,
}

impl Objective for LinearObjective {
    fn build(&self, g: &mut Graph, theta: Var) -> Result<Var> {
        let c = g.constant(Tensor::vector(self.c.clone()));
        g.dot(c, theta)
    }
}

/// `ρ·∇L/‖∇L‖`
pub fn sam_perturbation<O: Objective + ?Sized>(obj: &O, params: &ParamVector, rho: f64) -> Result<ParamVector> {
    let (_, grad) = obj.loss_and_grad(params)?;
    let norm = grad.norm();
    if norm < STATIONARY_GRAD_NORM {
        return Err(Error::StationaryPoint);
    }
    Ok(grad.scaled(rho / norm))
}

/// `L(θ + ε̂) − L(θ)`, zero when `ρ = 0`.
pub fn sharpness<O: Objective + ?Sized>(obj: &O, params: &ParamVector, rho: f64) -> Result<f64> {
    if rho == 0.0 {
        return Ok(0.0);
    }
    let eps = sam_perturbation(obj, params, rho)?;
    let base = obj.loss(params)?;
    Ok(obj.loss(&params.checked_add(&eps)?)? - base)
}

/// `∇²L(θ)·v` by differentiating `⟨∇L(θ), v⟩`.
pub fn hvp<O: Objective + ?Sized>(obj: &O, params: &ParamVector, v: &ParamVector) -> Result<ParamVector> {
    params.check_layout(v)?;
    let mut g = Graph::new();
    let theta = g.param(params.to_tensor());
    let loss = obj.build(&mut g, theta)?;
    let grad = g.grad_with_graph(loss, &[theta])?[0];
    let dir = g.constant(v.to_tensor());
    let inner = g.dot(grad, dir)?;
    let hv = g.grad(inner, &[theta])?.remove(0);
    params.replaced(&hv)
}

/// Result of a power iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEstimate {
    /// Estimate of the largest absolute Hessian eigenvalue.
    pub value: f64,
    /// `‖Hv − (vᵀHv)v‖` for the final unit vector `v`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Estimate after every iteration.
    pub history: Vec<f64>,
}

/// Power iteration on `H²` (two products per iteration) so that negative
/// extremal eigenvalues are found too. The estimate `‖Hv‖` never decreases.
pub fn spectral_norm<O: Objective + ?Sized>(
    obj: &O,
    params: &ParamVector,
    iters: usize,
    tol: f64,
    seed: u64,
) -> Result<SpectralEstimate> {
    if iters == 0 {
        return Err(Error::InvalidConfig("power iteration needs at least one iteration".into()));
    }
    let mut r = rng::prng(seed);
    let mut v = params.clone();
    v.values_mut().iter_mut().for_each(|x| *x = rng::normal(&mut r));
    let n0 = v.norm();
    v = v.scaled(1.0 / n0);
    let mut history = Vec::with_capacity(iters);
    let mut out = SpectralEstimate { value: 0.0, residual: 0.0, iterations: 0, converged: false, history: Vec::new() };
    for it in 1..=iters {
        let hv = hvp(obj, params, &v)?;
        let value = hv.norm();
        let rayleigh = v.dot(&hv)?;
        let residual = hv.axpy(-rayleigh, &v)?.norm();
        history.push(value);
        out = SpectralEstimate { value, residual, iterations: it, converged: false, history: Vec::new() };
        if value == 0.0 || residual <= tol * value {
            out.converged = true;
            break;
        }
        let h2v = hvp(obj, params, &hv)?;
        let norm = h2v.norm();
        if norm == 0.0 {
            break;
        }
        v = h2v.scaled(1.0 / norm);
    }
    out.history = history;
    Ok(out)
}

/// Sharpness figures for one weight snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct SharpnessReport {
    pub trajectory: usize,
    pub epoch: usize,
    pub rho: f64,
    pub sharpness: f64,
    pub lambda_max: f64,
    pub residual: f64,
    pub converged: bool,
}

/// Power-iteration settings used for reports.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIteration {
    pub iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { iters: 100, tol: 1e-4, seed: 0 }
    }
}

pub fn report<O: Objective + ?Sized>(
    obj: &O,
    params: &ParamVector,
    rho: f64,
    power: &PowerIteration,
    trajectory: usize,
    epoch: usize,
) -> Result<SharpnessReport> {
    let s = match sharpness(obj, params, rho) {
        Err(Error::StationaryPoint) => 0.0,
        other => other?,
    };
    let spec = spectral_norm(obj, params, power.iters, power.tol, power.seed)?;
    Ok(SharpnessReport {
        trajectory,
        epoch,
        rho,
        sharpness: s,
        lambda_max: spec.value,
        residual: spec.residual,
        converged: spec.converged,
    })
}
