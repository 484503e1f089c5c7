use ftd_core::data::{make_toy, ToyKind, ToySpec};
use ftd_core::models::{ArchSpec, InputShape, Norm};
use ftd_core::nas::*;
use proptest::prelude::*;

fn archs(k: usize) -> Vec<ArchSpec> {
    let input = InputShape::new(1, 4, 4);
    (1..=k).map(|w| ArchSpec::convnet(input, w, 1, 2)).collect()
}

fn ranking(name: &str, acc: &[f64]) -> RankingResult {
    RankingResult::from_accuracies(name.into(), archs(acc.len()), acc.to_vec(), vec![false; acc.len()])
}

#[test]
fn topk_reference_values() {
    let real = ranking("real", &[0.9, 0.8, 0.7, 0.6, 0.5]);
    assert!((spearman_topk(&real, &real, 5).unwrap() - 1.0).abs() < 1e-12);
    let reversed = ranking("proxy", &[0.5, 0.6, 0.7, 0.8, 0.9]);
    assert!((spearman_topk(&reversed, &real, 5).unwrap() + 1.0).abs() < 1e-12);
    let swapped = ranking("proxy", &[0.9, 0.7, 0.8, 0.6, 0.5]);
    assert!((spearman_topk(&swapped, &real, 5).unwrap() - 0.9).abs() < 1e-12);
    assert!(spearman_topk(&swapped, &real, 1).is_err());
    assert!(spearman_topk(&swapped, &real, 6).is_err());
}

#[test]
fn topk_uses_best_real_candidates() {
    // proxy disagrees only outside the real top 3
    let real = ranking("real", &[0.9, 0.1, 0.8, 0.2, 0.7]);
    let proxy = ranking("proxy", &[0.6, 0.9, 0.5, 0.8, 0.4]);
    assert_eq!(spearman_topk(&proxy, &real, 3).unwrap(), 1.0);
    assert!(spearman_topk(&proxy, &real, 5).unwrap() < 0.0);
}

#[test]
fn mismatched_candidate_lists_are_rejected() {
    let a = ranking("a", &[0.1, 0.2, 0.3]);
    let mut b = ranking("b", &[0.1, 0.2, 0.3]);
    b.archs[0].norm = Norm::Batch;
    assert!(spearman_topk(&a, &b, 3).is_err());
}

#[test]
fn ranking_is_reproducible_and_wide_beats_narrow() {
    let real = make_toy(&ToySpec::new(ToyKind::TinyDigits, 4, 12, 3)).unwrap();
    let input = real.shape;
    let mut narrow = ArchSpec::convnet(input, 1, 1, 4);
    narrow.pooling = ftd_core::models::Pooling::Max;
    let wide = ArchSpec::convnet(input, 8, 1, 4);
    let candidates = [narrow, wide];
    let cfg = CandidateTraining { epochs: 6, batch_size: 16, lr: 0.1 };
    let mut dominant = 0;
    for seed in 0..5 {
        let r = rank_architectures("real", &candidates, &real.train, &real.test, &cfg, 1, seed).unwrap();
        dominant += usize::from(r.ranks[1] == 1.0);
        if seed == 0 {
            let again = rank_architectures("real", &candidates, &real.train, &real.test, &cfg, 1, seed).unwrap();
            assert_eq!(r, again);
        }
    }
    assert!(dominant >= 4, "wide ranked first in {dominant}/5 batches");
}

#[test]
fn repeats_are_averaged() {
    let candidates = archs(2);
    let r = rank_with("p", &candidates, 3, |i, rep| Ok(i as f64 * 0.1 + rep as f64 * 0.01)).unwrap();
    assert!((r.accuracy[0] - 0.01).abs() < 1e-15);
    assert!((r.accuracy[1] - 0.11).abs() < 1e-15);
    assert_eq!(r.ranks, vec![2.0, 1.0]);
    assert!(rank_with("p", &candidates, 0, |_, _| Ok(0.0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn correlation_is_bounded(a in prop::collection::vec(0.0f64..1.0, 2..12), seed in any::<u64>()) {
        let mut b = a.clone();
        ftd_core::rng::shuffle(&mut ftd_core::rng::prng(seed), &mut b);
        let b: Vec<f64> = b.iter().map(|v| (v * 4.0).round() / 4.0).collect();
        let rho = spearman(&average_ranks(&a), &average_ranks(&b)).unwrap();
        prop_assert!((-1.0..=1.0).contains(&rho));
        prop_assert!((spearman(&average_ranks(&a), &average_ranks(&a)).unwrap() - 1.0).abs() < 1e-12
            || a.iter().all(|v| *v == a[0]));
    }

    #[test]
    fn ranks_ignore_monotone_transforms(a in prop::collection::vec(-3.0f64..3.0, 1..15)) {
        let transformed: Vec<f64> = a.iter().map(|v| v.exp() * 2.0 + 1.0).collect();
        prop_assert_eq!(average_ranks(&a), average_ranks(&transformed));
        let mut sorted = average_ranks(&a);
        sorted.sort_by(f64::total_cmp);
        let total: f64 = sorted.iter().sum();
        let n = a.len() as f64;
        prop_assert!((total - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }
}
