use ltcal_core::eval::{average_precision, evaluate, with_ids, EvalBins};
use ltcal_core::synth::{generate, generate_eval, SynthConfig};
use ltcal_core::types::PredictionVector;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Interpolated AP of a ranking given the 1-based ranks of its positives.
fn ap_from_ranks(ranks: &[usize]) -> f64 {
    let mut precision: Vec<f64> = ranks
        .iter()
        .enumerate()
        .map(|(k, &r)| (k + 1) as f64 / r as f64)
        .collect();
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    precision.iter().sum::<f64>() / ranks.len() as f64
}

/// Expected AP of a uniformly random ranking, by enumerating every placement
/// of `p` positives among `n` ranks.
fn exact_random_ap(n: usize, p: usize) -> f64 {
    fn walk(start: usize, n: usize, left: usize, ranks: &mut Vec<usize>, acc: &mut (f64, usize)) {
        if left == 0 {
            acc.0 += ap_from_ranks(ranks);
            acc.1 += 1;
            return;
        }
        for r in start..=n - left + 1 {
            ranks.push(r);
            walk(r + 1, n, left - 1, ranks, acc);
            ranks.pop();
        }
    }
    let mut acc = (0.0, 0);
    walk(1, n, p, &mut Vec::new(), &mut acc);
    acc.0 / acc.1 as f64
}

fn random_ap_samples(n: usize, p: usize, trials: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<usize> = (0..n).collect();
    (0..trials)
        .map(|_| {
            let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let mut positive: Vec<bool> = (0..n).map(|i| i < p).collect();
            positive.shuffle(&mut rng);
            average_precision(&scores, &positive, &ids).unwrap()
        })
        .collect()
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn enumeration_oracle_matches_hand_values() {
    assert!((exact_random_ap(2, 1) - 0.75).abs() < 1e-15);
    assert!((exact_random_ap(5, 5) - 1.0).abs() < 1e-15);
    assert!((ap_from_ranks(&[1, 3]) - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
}

#[test]
fn random_scores_match_exact_expectation_within_three_sigma() {
    for (n, p, seed) in [(14, 4, 1), (12, 1, 2), (10, 7, 3)] {
        let expected = exact_random_ap(n, p);
        let (mean, se) = mean_and_stderr(&random_ap_samples(n, p, 4000, seed));
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "n {n} p {p}: mean {mean} expected {expected} se {se}"
        );
    }
}

#[test]
fn random_scores_approach_positive_rate() {
    let rate = 0.1;
    let gaps: Vec<f64> = [1000usize, 10000]
        .iter()
        .map(|&n| {
            let p = (n as f64 * rate) as usize;
            let (mean, _) = mean_and_stderr(&random_ap_samples(n, p, 60, n as u64));
            assert!(mean > rate);
            mean - rate
        })
        .collect();
    assert!(
        gaps[1] < gaps[0] / 2.0,
        "gap to P/n not shrinking: {gaps:?}"
    );
    assert!(gaps[1] < 0.005);
}

fn ranking() -> impl Strategy<Value = (Vec<u32>, Vec<bool>)> {
    (1usize..60).prop_flat_map(|n| {
        (
            proptest::collection::vec(0u32..40, n),
            proptest::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #[test]
    fn ap_is_bounded_by_positive_rate_and_one((scores, positive) in ranking()) {
        let ids: Vec<usize> = (0..scores.len()).collect();
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let p = positive.iter().filter(|&&x| x).count();
        match average_precision(&s, &positive, &ids) {
            None => prop_assert_eq!(p, 0),
            Some(ap) => {
                prop_assert!(ap <= 1.0 + 1e-12);
                prop_assert!(ap >= p as f64 / s.len() as f64 - 1e-12);
            }
        }
    }

    #[test]
    fn ap_is_invariant_under_increasing_transforms((scores, positive) in ranking()) {
        let ids: Vec<usize> = (0..scores.len()).collect();
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let t: Vec<f64> = s.iter().map(|v| v * v * v + 2.0 * v - 5.0).collect();
        prop_assert_eq!(average_precision(&s, &positive, &ids), average_precision(&t, &positive, &ids));
    }

    #[test]
    fn ap_ignores_input_order((scores, positive) in ranking(), seed in any::<u64>()) {
        let n = scores.len();
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let ids: Vec<usize> = (0..n).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let ps: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
        let pp: Vec<bool> = perm.iter().map(|&i| positive[i]).collect();
        let pi: Vec<usize> = perm.iter().map(|&i| ids[i]).collect();
        prop_assert_eq!(average_precision(&s, &positive, &ids), average_precision(&ps, &pp, &pi));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn overall_ap_recombines_from_bins_and_sets(seed in 0u64..1000) {
        let cfg = SynthConfig {
            num_classes: 12,
            feature_dim: 4,
            max_instances_per_head_class: 400,
            eval_max_instances_per_class: 8,
            seed,
            ..SynthConfig::default()
        };
        let train = generate(&cfg).unwrap();
        let eval = generate_eval(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let preds = with_ids(
            eval.proposals
                .iter()
                .map(|_| PredictionVector((0..=cfg.num_classes).map(|_| rng.random()).collect()))
                .collect(),
        );
        let report = evaluate(&preds, &eval, &train.stats, &EvalBins::default()).unwrap();
        let evaluable: Vec<f64> = report.per_class_ap.iter().flatten().copied().collect();
        prop_assert!(!evaluable.is_empty());
        let total = evaluable.len() as f64;
        prop_assert!((report.overall_ap - evaluable.iter().sum::<f64>() / total).abs() < 1e-12);
        for (aggregates, counts) in [(&report.ap_bins, &report.bin_counts), (&report.ap_sets, &report.set_counts)] {
            prop_assert_eq!(counts.iter().sum::<usize>(), evaluable.len());
            let weighted: f64 = aggregates.iter().zip(counts.iter()).map(|(ap, &c)| ap.unwrap_or(0.0) * c as f64).sum();
            prop_assert!((weighted / total - report.overall_ap).abs() < 1e-12);
        }
    }
}
