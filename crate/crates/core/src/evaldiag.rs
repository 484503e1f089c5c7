//! Evaluation of synthetic sets and trajectory-error diagnostics.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autograd::ParamVector;
use crate::buffer::TeacherTrajectory;
use crate::data::{Split, SyntheticDataset};
use crate::distill::synthetic_steps;
use crate::error::{Error, Result};
use crate::models::Network;
use crate::rng;

/// Fresh weights trained for `iterations` full-batch steps on `pixels`.
pub fn train_on_synthetic(
    net: &Network,
    pixels: &[f64],
    labels: &[usize],
    step_size: f64,
    init: &ParamVector,
    iterations: usize,
) -> Result<ParamVector> {
    let p = synthetic_steps(net, pixels, labels, step_size, init, iterations)?;
    if p.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "evaluation training" });
    }
    Ok(p)
}

/// Test accuracy of `params`; batch-norm statistics come from `stats_pixels`.
pub fn test_accuracy(net: &Network, params: &ParamVector, stats_pixels: &[f64], test: &Split) -> Result<f64> {
    let stats = net.batch_stats(params, stats_pixels)?;
    net.accuracy(params, &test.batch(), Some(&stats))
}

/// Test loss of `params`; batch-norm statistics come from `stats_pixels`.
pub fn test_loss(net: &Network, params: &ParamVector, stats_pixels: &[f64], test: &Split) -> Result<f64> {
    let stats = net.batch_stats(params, stats_pixels)?;
    net.eval_loss(params, &test.batch(), Some(&stats))
}

/// Weights a fresh evaluation network starts from for `seed`.
pub fn eval_init(net: &Network, seed: u64) -> ParamVector {
    net.init_weights(rng::derive_seed(seed, "eval-init"))
}

/// Trains from the seed's fresh init on `pixels` and reports test accuracy.
pub fn evaluate_seed(
    net: &Network,
    pixels: &[f64],
    labels: &[usize],
    step_size: f64,
    test: &Split,
    seed: u64,
    iterations: usize,
) -> Result<f64> {
    let p = train_on_synthetic(net, pixels, labels, step_size, &eval_init(net, seed), iterations)?;
    test_accuracy(net, &p, pixels, test)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub arch: String,
    pub iterations: usize,
    /// `(seed, accuracy)` for every seed that trained, sorted by seed.
    pub accuracies: Vec<(u64, f64)>,
    /// Seeds whose training diverged; excluded from the statistics.
    pub diverged: Vec<u64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Order-insensitive reduction of per-seed outcomes.
pub fn aggregate(arch: String, iterations: usize, mut results: Vec<(u64, Result<f64>)>) -> Result<EvalReport> {
    results.sort_by_key(|(s, _)| *s);
    let mut accuracies = Vec::new();
    let mut diverged = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(a) => accuracies.push((seed, a)),
            Err(e) if e.is_numerical() => diverged.push(seed),
            Err(e) => return Err(e),
        }
    }
    let values: Vec<f64> = accuracies.iter().map(|(_, a)| *a).collect();
    let (mean, std) = mean_std(&values);
    Ok(EvalReport { arch, iterations, accuracies, diverged, mean, std })
}

/// Trains one fresh network per seed on the synthetic set and aggregates.
pub fn evaluate(
    net: &Network,
    syn: &SyntheticDataset,
    test: &Split,
    seeds: &[u64],
    iterations: usize,
    use_ema: bool,
) -> Result<EvalReport> {
    evaluate_pixels(net, syn.eval_pixels(use_ema), &syn.labels, syn.step_size, test, seeds, iterations)
}

/// [`evaluate`] for any labelled pixel set, e.g. a random real subset.
pub fn evaluate_pixels(
    net: &Network,
    pixels: &[f64],
    labels: &[usize],
    step_size: f64,
    test: &Split,
    seeds: &[u64],
    iterations: usize,
) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("evaluation needs at least one seed".into()));
    }
    let results = seeds
        .iter()
        .map(|&s| (s, evaluate_seed(net, pixels, labels, step_size, test, s, iterations)))
        .collect();
    aggregate(net.spec().id(), iterations, results)
}

/// Norms of the trajectory-error terms at one segment boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentErrors {
    /// Segment index b; the segment runs from boundary b to b + 1.
    pub segment: usize,
    /// `‖ε_b‖`
    pub eps_start: f64,
    /// `‖ε_{b+1}‖`
    pub eps_end: f64,
    /// `‖δ_{b+1}‖`
    pub delta: f64,
    /// `‖I_b‖`
    pub init_error: f64,
    /// `‖ε_{b+1} − ε_b − I_b − δ_{b+1}‖`
    pub residual: f64,
}

impl SegmentErrors {
    /// Residual relative to `1 + ‖ε_{b+1}‖`.
    pub fn relative_residual(&self) -> f64 {
        self.residual / (1.0 + self.eps_end)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorLedger {
    pub segments: Vec<SegmentErrors>,
    /// `ε_1 − δ_1` is identically zero.
    pub first_segment_exact: bool,
}

impl ErrorLedger {
    pub fn max_relative_residual(&self) -> f64 {
        self.segments.iter().map(|s| s.relative_residual()).fold(0.0, f64::max)
    }
}

/// Splits the student-teacher gap at each segment boundary into the carried
/// error, the initialisation error and the matching error.
///
/// The student chain starts at the teacher's first snapshot and takes `n`
/// synthetic steps per segment of `m` teacher epochs.
pub fn error_decomposition(
    net: &Network,
    pixels: &[f64],
    labels: &[usize],
    step_size: f64,
    traj: &TeacherTrajectory,
    n: usize,
    m: usize,
) -> Result<ErrorLedger> {
    traj.check_network(net)?;
    if m == 0 || traj.epochs() < m {
        return Err(Error::NoAdmissibleSegment("trajectory shorter than one segment".into()));
    }
    let steps = |theta: &ParamVector| synthetic_steps(net, pixels, labels, step_size, theta, n);
    let mut student = traj.snapshots[0].clone();
    let mut ledger = ErrorLedger::default();
    for b in 0..traj.epochs() / m {
        let start = &traj.snapshots[b * m];
        let end = &traj.snapshots[b * m + m];
        let eps = student.checked_sub(start)?;
        // Student started on the teacher: A_S(θ*) = steps(θ*) − θ*.
        let aligned = steps(start)?;
        let a_aligned = aligned.checked_sub(start)?;
        // δ = A_S(θ*) − (θ*_end − θ*) = steps(θ*) − θ*_end
        let delta = aligned.checked_sub(end)?;
        let shifted = start.checked_add(&eps)?;
        let a_shifted = steps(&shifted)?.checked_sub(&shifted)?;
        let init_error = a_shifted.checked_sub(&a_aligned)?;
        let next = steps(&student)?;
        let eps_next = next.checked_sub(end)?;
        let residual = eps_next.checked_sub(&eps)?.checked_sub(&init_error)?.checked_sub(&delta)?;
        if b == 0 {
            ledger.first_segment_exact = eps_next.values() == delta.values();
        }
        ledger.segments.push(SegmentErrors {
            segment: b,
            eps_start: eps.norm(),
            eps_end: eps_next.norm(),
            delta: delta.norm(),
            init_error: init_error.norm(),
            residual: residual.norm(),
        });
        student = next;
    }
    Ok(ledger)
}

/// Cumulative synthetic steps that stand in for `epoch` teacher epochs.
pub fn steps_for_epochs(epoch: usize, n: usize, m: usize) -> usize {
    epoch * n / m
}

/// One row of the loss-difference curves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    /// Student chained from epoch 0 minus teacher, on the test split.
    pub chained: f64,
    /// Student re-anchored to the teacher every `interval` epochs minus teacher.
    pub reanchored: f64,
    pub teacher: f64,
}

/// Test-loss differences `L(student) − L(θ*_e)` for the chained and the
/// re-anchored student, per teacher epoch.
#[allow(clippy::too_many_arguments)]
pub fn loss_difference_curve(
    net: &Network,
    pixels: &[f64],
    labels: &[usize],
    step_size: f64,
    traj: &TeacherTrajectory,
    test: &Split,
    n: usize,
    m: usize,
    interval: usize,
) -> Result<Vec<CurvePoint>> {
    traj.check_network(net)?;
    if m == 0 || interval == 0 {
        return Err(Error::InvalidConfig("segment length and re-anchoring interval must be positive".into()));
    }
    let loss = |p: &ParamVector| test_loss(net, p, &test.pixels, test);
    let mut chained = traj.snapshots[0].clone();
    let mut chained_steps = 0;
    let mut anchored = traj.snapshots[0].clone();
    let mut anchored_steps = 0;
    let mut out = Vec::with_capacity(traj.epochs() + 1);
    for e in 0..=traj.epochs() {
        let target = steps_for_epochs(e, n, m);
        chained = synthetic_steps(net, pixels, labels, step_size, &chained, target - chained_steps)?;
        chained_steps = target;
        // Epoch e closes the re-anchored segment that started at the last
        // multiple of `interval` strictly before it.
        let anchor = e.saturating_sub(1) / interval * interval;
        if e == 0 || e == anchor + 1 {
            anchored = traj.snapshots[anchor].clone();
            anchored_steps = steps_for_epochs(anchor, n, m);
        }
        anchored = synthetic_steps(net, pixels, labels, step_size, &anchored, target - anchored_steps)?;
        anchored_steps = target;
        let teacher = loss(&traj.snapshots[e])?;
        out.push(CurvePoint { epoch: e, chained: loss(&chained)? - teacher, reanchored: loss(&anchored)? - teacher, teacher });
    }
    Ok(out)
}

/// `L(a_e) − L(b_e)` on the test split for two aligned weight sequences.
pub fn loss_differences(net: &Network, a: &[ParamVector], b: &[ParamVector], test: &Split) -> Result<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| Ok(test_loss(net, x, &test.pixels, test)? - test_loss(net, y, &test.pixels, test)?))
        .collect()
}

/// One row of the initialisation-discrepancy ablation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AblationRow {
    pub start_epoch: usize,
    pub steps: usize,
    pub accuracy: f64,
}

/// Starts the student at teacher epoch `e`, trains on the synthetic set for
/// the remaining `E − e` epochs' worth of steps and measures test accuracy.
#[allow(clippy::too_many_arguments)]
pub fn init_discrepancy_ablation(
    net: &Network,
    pixels: &[f64],
    labels: &[usize],
    step_size: f64,
    traj: &TeacherTrajectory,
    start_epochs: &[usize],
    test: &Split,
    n: usize,
    m: usize,
) -> Result<Vec<AblationRow>> {
    traj.check_network(net)?;
    let end = traj.epochs();
    start_epochs
        .iter()
        .map(|&e| {
            if e > end {
                return Err(Error::InvalidConfig(alloc::format!("start epoch {} beyond trajectory end {}", e, end)));
            }
            let steps = steps_for_epochs(end - e, n, m);
            let p = synthetic_steps(net, pixels, labels, step_size, &traj.snapshots[e], steps)?;
            Ok(AblationRow { start_epoch: e, steps, accuracy: test_accuracy(net, &p, pixels, test)? })
        })
        .collect()
}

/// Number of consecutive pairs in `values` that do not decrease.
pub fn non_decreasing_steps(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] >= w[0]).count()
}
