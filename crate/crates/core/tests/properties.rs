//! Randomized invariants of the reduction profiles, probability heads,
//! penalty and fairness metrics.

use hwfair::data::{gen_synthetic, imbalance_margin_spec, split, Standardizer};
use hwfair::fairlab::{distance_to_boundary, max_pairwise_gap, sensitivity_report, ModelSet};
use hwfair::models::{init_model, softmax, ArchSpec};
use hwfair::train::mitigation_penalty;
use hwfair::vhw::{builtin_profiles, ceil_log2, compensated_sum, error_bound, fisher_yates, Precision};
use proptest::prelude::*;

fn profile(id: &str) -> hwfair::vhw::VirtualHardwareProfile {
    builtin_profiles().get(id).expect("builtin").clone()
}

fn prob_vec(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, k).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profiles_are_deterministic(values in prop::collection::vec(-1e3f64..1e3, 0..300)) {
        for p in &builtin_profiles().profiles {
            prop_assert_eq!(p.reduce(&values).to_bits(), p.reduce(&values).to_bits());
        }
    }

    #[test]
    fn reference_is_exact_on_small_integers(values in prop::collection::vec(-1_000_000i64..1_000_000, 0..500)) {
        let xs: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let exact: i64 = values.iter().sum();
        prop_assert_eq!(profile("hw_ref").reduce(&xs), exact as f64);
    }

    #[test]
    fn sequential_and_pairwise_within_error_bounds(values in prop::collection::vec(-1.0f64..1.0, 2..2000)) {
        let xs: Vec<f64> = values.iter().map(|&v| Precision::Binary32.round(v)).collect();
        let exact = compensated_sum(&xs);
        let n = xs.len();
        let seq = (profile("hw_seq32").reduce(&xs) - exact).abs();
        prop_assert!(seq <= error_bound(&xs, n - 1, Precision::Binary32));
        let pair = (profile("hw_pair32").reduce(&xs) - exact).abs();
        prop_assert!(pair <= error_bound(&xs, ceil_log2(n), Precision::Binary32));
    }

    #[test]
    fn fisher_yates_is_a_permutation(n in 0usize..200, seed in any::<u64>()) {
        let mut order = fisher_yates(n, seed);
        order.sort_unstable();
        prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(logits in prop::collection::vec(-30.0f64..30.0, 2..8), c in -50.0f64..50.0) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let shifted: Vec<f64> = logits.iter().map(|z| z + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_distance_range_and_symmetry(p in (2usize..6).prop_flat_map(prob_vec), rot in 0usize..6) {
        let k = p.len() as f64;
        let d = distance_to_boundary(&p).unwrap().delta;
        prop_assert!(d >= 0.0 && d <= 1.0 - 1.0 / k + 1e-12);
        let mut q = p.clone();
        q.rotate_left(rot % p.len());
        prop_assert!((distance_to_boundary(&q).unwrap().delta - d).abs() < 1e-15);
    }

    #[test]
    fn penalty_is_nonnegative_and_vanishes_on_equal_means(
        probs in prop::collection::vec(prob_vec(2), 1..40),
        groups in prop::collection::vec(0usize..3, 40),
    ) {
        let g = &groups[..probs.len()];
        let r = mitigation_penalty(&probs, g, 3).unwrap();
        prop_assert!(r.penalty >= 0.0);
        let same = vec![probs[0].clone(); probs.len()];
        prop_assert!(mitigation_penalty(&same, g, 3).unwrap().penalty.abs() < 1e-12);
    }

    #[test]
    fn pairwise_gap_is_nonnegative(deltas in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let (xi, pair) = max_pairwise_gap(&deltas);
        prop_assert!(xi >= 0.0);
        if deltas.len() == 1 {
            prop_assert_eq!(xi, 0.0);
        } else {
            let (a, b) = pair.unwrap();
            prop_assert!(((deltas[a] - deltas[b]).abs() - xi).abs() < 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sensitivity_metrics_are_nonnegative(s1 in 0u64..1000, s2 in 0u64..1000) {
        let ds = gen_synthetic(&imbalance_margin_spec(0)).unwrap();
        let spec = ArchSpec::logistic(2);
        let set = ModelSet::new(vec![
            ("a".into(), init_model(&spec, s1).unwrap()),
            ("b".into(), init_model(&spec, s2).unwrap()),
        ]).unwrap();
        let r = sensitivity_report(&set, "a", &ds).unwrap();
        prop_assert!(r.delta.iter().all(|&d| d >= 0.0));
        prop_assert!(r.xi >= 0.0 && r.rho >= 0.0);
        let single = ModelSet::new(vec![("a".into(), init_model(&spec, s1).unwrap())]).unwrap();
        prop_assert!(sensitivity_report(&single, "a", &ds).unwrap().delta.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn split_keeps_group_proportions_and_standardizes(seed in 0u64..100, frac in 0.5f64..0.9) {
        let ds = gen_synthetic(&imbalance_margin_spec(seed)).unwrap();
        let sp = split(&ds, frac, seed).unwrap();
        for (a, &n) in ds.group_sizes().iter().enumerate() {
            // One sample of rounding per (group, label) stratum.
            let expected = frac * n as f64;
            prop_assert!((sp.train.group_sizes()[a] as f64 - expected).abs() <= 2.0);
        }
        let st = Standardizer::fit(&sp.train).unwrap();
        let t = st.apply(&sp.train);
        for j in 0..t.dim() {
            let col: Vec<f64> = (0..t.len()).map(|i| t.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            prop_assert!(mean.abs() <= 1e-9);
            prop_assert!((var - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn closeness_peaks_at_one_half() {
    let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    let c: Vec<f64> = grid.iter().map(|&f| distance_to_boundary(&[f]).unwrap().closeness.unwrap()).collect();
    let (imax, max) = c.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    assert_eq!(grid[imax], 0.5);
    assert_eq!(max, 0.25);
    assert_eq!((c[0], c[1000]), (0.0, 0.0));
}

#[test]
fn permuted_profile_differs_from_sequential_in_binary32() {
    let xs: Vec<f64> = (0..10_000).map(|i| Precision::Binary32.round(1.0 / (i as f64 + 1.0))).collect();
    assert_ne!(profile("hw_perm32_s7").reduce(&xs), profile("hw_seq32").reduce(&xs));
    assert_ne!(profile("hw_pair32").reduce(&xs), profile("hw_seq32").reduce(&xs));
}
