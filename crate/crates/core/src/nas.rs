//! Architecture ranking with a proxy training set and rank correlation
//! against rankings obtained on real data.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autograd::ParamVector;
use crate::data::Split;
use crate::error::{Error, Result};
use crate::evaldiag::test_accuracy;
use crate::models::{Activation, ArchSpec, Batch, Family, InputShape, Network, Norm, Pooling};
use crate::rng;

/// Value lists whose Cartesian product is the candidate grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub widths: Vec<usize>,
    pub depths: Vec<usize>,
    pub norms: Vec<Norm>,
    pub activations: Vec<Activation>,
    pub poolings: Vec<Pooling>,
}

impl SearchSpace {
    /// 4 widths × 4 depths × 5 norms × 3 activations × 3 poolings.
    pub fn full() -> Self {
        Self {
            widths: alloc::vec![32, 64, 128, 256],
            depths: alloc::vec![1, 2, 3, 4],
            norms: Norm::ALL.to_vec(),
            activations: Activation::ALL.to_vec(),
            poolings: Pooling::ALL.to_vec(),
        }
    }

    /// Small widths and depths for desk runs, every norm/activation/pooling.
    pub fn desk() -> Self {
        Self { widths: alloc::vec![4, 8, 16], depths: alloc::vec![1, 2, 3], ..Self::full() }
    }

    pub fn len(&self) -> usize {
        self.widths.len() * self.depths.len() * self.norms.len() * self.activations.len() * self.poolings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// ConvNets in lexicographic order over (width, depth, norm, activation, pooling).
    pub fn enumerate(&self, input: InputShape, classes: usize) -> Vec<ArchSpec> {
        let mut out = Vec::with_capacity(self.len());
        for &width in &self.widths {
            for &depth in &self.depths {
                for &norm in &self.norms {
                    for &activation in &self.activations {
                        for &pooling in &self.poolings {
                            out.push(ArchSpec {
                                family: Family::ConvNet,
                                width,
                                depth,
                                norm,
                                activation,
                                pooling,
                                input,
                                classes,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// How each candidate is trained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

/// Trains `arch` from a seeded init with mini-batch SGD on `train` and returns
/// its test accuracy.
pub fn train_candidate(arch: &ArchSpec, train: &Split, test: &Split, cfg: &CandidateTraining, seed: u64) -> Result<f64> {
    let net = Network::build(*arch)?;
    let dim = arch.input.dim();
    if train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut params: ParamVector = net.init_weights(rng::derive_seed(seed, "nas-init"));
    let mut r = rng::prng(rng::derive_seed(seed, "nas-minibatch"));
    let mut order: Vec<usize> = (0..train.rows()).collect();
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for epoch in 1..=cfg.epochs {
        rng::shuffle(&mut r, &mut order);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            pixels.clear();
            labels.clear();
            for &i in chunk {
                pixels.extend_from_slice(train.row(i, dim));
                labels.push(train.labels[i]);
            }
            let (loss, grad) = net
                .loss_and_grad(&params, &Batch::new(&pixels, &labels))
                .map_err(|e| if e.is_numerical() { Error::Divergence { epoch } } else { e })?;
            params = params.axpy(-cfg.lr, &grad)?;
            if !loss.is_finite() || params.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
        }
    }
    test_accuracy(&net, &params, &train.pixels, test)
}

/// Mean accuracies and ranks of a candidate list on one training set.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingResult {
    pub dataset: String,
    pub archs: Vec<ArchSpec>,
    pub accuracy: Vec<f64>,
    pub diverged: Vec<bool>,
    /// 1 = best; tied accuracies share their average rank.
    pub ranks: Vec<f64>,
}

impl RankingResult {
    /// Ranks precomputed accuracies; diverged candidates rank last.
    pub fn from_accuracies(dataset: String, archs: Vec<ArchSpec>, accuracy: Vec<f64>, diverged: Vec<bool>) -> Self {
        let keyed: Vec<f64> =
            accuracy.iter().zip(&diverged).map(|(a, d)| if *d { f64::NEG_INFINITY } else { *a }).collect();
        let ranks = average_ranks(&keyed);
        Self { dataset, archs, accuracy, diverged, ranks }
    }
}

/// Trains every candidate `repeats` times and ranks by mean test accuracy.
/// `train_one(arch_index, repeat)` supplies one accuracy.
pub fn rank_with<F>(dataset: &str, archs: &[ArchSpec], repeats: usize, mut train_one: F) -> Result<RankingResult>
where
    F: FnMut(usize, usize) -> Result<f64>,
{
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    let mut accuracy = Vec::with_capacity(archs.len());
    let mut diverged = Vec::with_capacity(archs.len());
    for i in 0..archs.len() {
        let mut total = 0.0;
        let mut failed = false;
        for r in 0..repeats {
            match train_one(i, r) {
                Ok(a) => total += a,
                Err(e) if e.is_numerical() => failed = true,
                Err(e) => return Err(e),
            }
        }
        accuracy.push(if failed { 0.0 } else { total / repeats as f64 });
        diverged.push(failed);
    }
    Ok(RankingResult::from_accuracies(dataset.into(), archs.to_vec(), accuracy, diverged))
}

/// Seed of repeat `r` of candidate `i`.
pub fn candidate_seed(seed: u64, arch: &ArchSpec, repeat: usize) -> u64 {
    rng::derive_indexed(rng::derive_seed(seed, &arch.id()), "nas-repeat", repeat as u64)
}

pub fn rank_architectures(
    dataset: &str,
    archs: &[ArchSpec],
    train: &Split,
    test: &Split,
    cfg: &CandidateTraining,
    repeats: usize,
    seed: u64,
) -> Result<RankingResult> {
    if train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    rank_with(dataset, archs, repeats, |i, r| {
        train_candidate(&archs[i], train, test, cfg, candidate_seed(seed, &archs[i], r))
    })
}

/// Average ranks, descending: the largest value gets rank 1.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share ranks i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn has_ties(ranks: &[f64]) -> bool {
    ranks.iter().any(|r| r.fract() != 0.0) || {
        let mut s = ranks.to_vec();
        s.sort_by(f64::total_cmp);
        s.windows(2).any(|w| w[0] == w[1])
    }
}

/// Spearman correlation of two rank vectors: `1 − 6Σd²/(k(k²−1))`, or the
/// Pearson correlation of the ranks when either vector has ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("spearman", format!("{} vs {} ranks", a.len(), b.len())));
    }
    let k = a.len();
    if k < 2 {
        return Err(Error::InvalidConfig(format!("rank correlation needs k >= 2, got {}", k)));
    }
    if !has_ties(a) && !has_ties(b) {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let k = k as f64;
        return Ok(1.0 - 6.0 * d2 / (k * (k * k - 1.0)));
    }
    let n = k as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// Correlation over the `k` candidates with the best real accuracy, both
/// accuracy vectors re-ranked within that subset.
pub fn spearman_topk(proxy: &RankingResult, real: &RankingResult, k: usize) -> Result<f64> {
    if proxy.archs != real.archs {
        return Err(Error::InvalidConfig("rankings cover different candidate lists".into()));
    }
    if k < 2 || k > real.archs.len() {
        return Err(Error::InvalidConfig(format!("k = {} must lie in 2..={}", k, real.archs.len())));
    }
    let mut order: Vec<usize> = (0..real.archs.len()).collect();
    order.sort_by(|&a, &b| real.ranks[a].total_cmp(&real.ranks[b]).then(a.cmp(&b)));
    order.truncate(k);
    let key = |r: &RankingResult, i: usize| if r.diverged[i] { f64::NEG_INFINITY } else { r.accuracy[i] };
    let p: Vec<f64> = order.iter().map(|&i| key(proxy, i)).collect();
    let t: Vec<f64> = order.iter().map(|&i| key(real, i)).collect();
    spearman(&average_ranks(&p), &average_ranks(&t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn grid_sizes() {
        let input = InputShape::new(1, 8, 8);
        assert_eq!(SearchSpace::full().enumerate(input, 10).len(), 720);
        assert_eq!(SearchSpace::desk().enumerate(input, 10).len(), 405);
        let single = SearchSpace {
            widths: vec![8],
            depths: vec![2],
            norms: vec![Norm::Instance],
            activations: vec![Activation::Relu],
            poolings: vec![Pooling::Avg],
        };
        assert_eq!(single.enumerate(input, 10), vec![ArchSpec::convnet(input, 8, 2, 10)]);
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let archs = SearchSpace::desk().enumerate(InputShape::new(1, 8, 8), 4);
        assert_eq!(archs[0].id(), "convnet-w4-d1-none-sigmoid-none");
        assert_eq!(archs[1].id(), "convnet-w4-d1-none-sigmoid-max");
        assert_eq!(archs[3].id(), "convnet-w4-d1-none-relu-none");
        assert_eq!(archs[404].id(), "convnet-w16-d3-batch-leakyrelu-avg");
        assert!(archs.iter().all(|a| a.validate().is_ok()));
    }

    #[test]
    fn tied_values_share_average_rank() {
        assert_eq!(average_ranks(&[0.5, 0.9, 0.5, 0.1]), vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn reference_correlations() {
        let real = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman(&real, &real).unwrap(), 1.0);
        assert_eq!(spearman(&real, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((spearman(&real, &[1.0, 3.0, 2.0, 4.0, 5.0]).unwrap() - 0.9).abs() < 1e-12);
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn divergent_candidates_rank_last() {
        let input = InputShape::new(1, 4, 4);
        let archs = vec![ArchSpec::convnet(input, 2, 1, 2), ArchSpec::convnet(input, 4, 1, 2)];
        let r = RankingResult::from_accuracies("p".into(), archs, vec![0.9, 0.2], vec![true, false]);
        assert_eq!(r.ranks, vec![2.0, 1.0]);
    }
}
