//! Property tests for invariants that span modules.

use liplab_core::bounds::{self, BoundConstants};
use liplab_core::estimators::{fixed_point_report, pattern_hill_climb, sampled_lip_lower, shallow_collapse_lower, EstimateConfig};
use liplab_core::exact::{exact_lipschitz, pattern_count_check, sup_all_patterns, Budget, LipOptions};
use liplab_core::init::{derive_trial_rng, sample_network_with, BiasSpec, TrialRng};
use liplab_core::linalg::norm2;
use liplab_core::NetworkParams;
use proptest::prelude::*;
use rand::SeedableRng;

fn bias_strategy() -> impl Strategy<Value = BiasSpec> {
    prop_oneof![
        Just(BiasSpec::Zero),
        (0.1f64..2.0).prop_map(|sigma| BiasSpec::Gaussian { sigma }),
        (0.1f64..2.0).prop_map(|m| BiasSpec::Uniform { m }),
        (-1.0f64..1.0).prop_map(|value| BiasSpec::Constant { value }),
    ]
}

/// Small random nets: `d ≤ 2`, widths ≤ 4, depth ≤ 2.
fn small_net() -> impl Strategy<Value = NetworkParams> {
    (1usize..=2, prop::collection::vec(1usize..=4, 1..=2), bias_strategy(), any::<u64>()).prop_map(|(d, widths, bias, seed)| {
        let mut rng = TrialRng::seed_from_u64(seed);
        sample_network_with(d, &widths, &bias, &mut rng).unwrap()
    })
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_pattern_gradient(net in small_net(), seed in any::<u64>()) {
        let mut rng = derive_trial_rng(seed, 0);
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
        let (g, _) = net.gradient_at(&x).unwrap();
        let (_, trace) = net.forward(&x).unwrap();
        prop_assert_eq!(g, net.pattern_gradient(&trace.pattern).unwrap());
    }

    #[test]
    fn network_is_affine_inside_a_region(net in small_net(), x in point(2), v in point(2)) {
        let d = net.input_dim();
        let (x, v) = (&x[..d], &v[..d]);
        let (g, margin) = net.gradient_at(x).unwrap();
        prop_assume!(margin > 1e-3);
        // Pre-activations move by at most ‖W‖-products × step; keep the step tiny.
        let eps = margin * 1e-4 / (1.0 + norm2(v));
        let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + eps * b).collect();
        let predicted = net.forward(x).unwrap().0 + eps * g.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let actual = net.forward(&y).unwrap().0;
        prop_assert!((predicted - actual).abs() <= 1e-9 * (1.0 + actual.abs()));
    }

    #[test]
    fn estimator_chain_is_ordered(net in small_net(), seed in any::<u64>()) {
        let exact = exact_lipschitz(&net, LipOptions { budget: Budget::default(), sup_all: true }).unwrap();
        let sup = exact.sup_all_patterns.unwrap();
        prop_assert!(exact.lip <= sup + 1e-12);
        let est = sampled_lip_lower(&net, &EstimateConfig { n_samples: 500, seed, ..Default::default() }).unwrap();
        prop_assert!(est.lower_bound <= exact.lip + 1e-12);
        if let Some(x) = &est.best_point {
            let mut rng = derive_trial_rng(seed, 1);
            let hc = pattern_hill_climb(&net, x, 20, &mut rng).unwrap();
            prop_assert!(est.lower_bound <= hc.grad_norm + 1e-12);
            prop_assert!(hc.grad_norm <= exact.lip + 1e-9);
            prop_assert!(hc.trajectory.windows(2).all(|w| w[0] <= w[1]));
        }
        if net.depth() == 1 {
            prop_assert!(shallow_collapse_lower(&net).unwrap() <= exact.lip + 1e-12);
        }
    }

    #[test]
    fn lipschitz_scales_with_output(net in small_net(), alpha in -3.0f64..3.0) {
        let base = exact_lipschitz(&net, LipOptions::default()).unwrap().lip;
        let scaled = exact_lipschitz(&net.with_scaled_output(alpha), LipOptions::default()).unwrap().lip;
        prop_assert!((scaled - alpha.abs() * base).abs() <= 1e-9 * (1.0 + base));
    }

    #[test]
    fn lipschitz_bounds_difference_quotients(net in small_net(), x in point(2), y in point(2)) {
        let d = net.input_dim();
        let (x, y) = (&x[..d], &y[..d]);
        let lip = exact_lipschitz(&net, LipOptions::default()).unwrap().lip;
        let dist = norm2(&x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>());
        let diff = (net.forward(x).unwrap().0 - net.forward(y).unwrap().0).abs();
        prop_assert!(diff <= lip * dist + 1e-9 * (1.0 + diff));
    }

    #[test]
    fn sup_all_is_invariant_under_budget_order(net in small_net()) {
        let a = sup_all_patterns(&net, Budget::default()).unwrap();
        let b = exact_lipschitz(&net, LipOptions { budget: Budget::default(), sup_all: true }).unwrap().sup_all_patterns.unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fixed_point_grad_matches_gradient(net in small_net(), x in point(2)) {
        let d = net.input_dim();
        let x = &x[..d];
        prop_assume!(x.iter().any(|&v| v != 0.0));
        let rep = fixed_point_report(&net, x).unwrap();
        let (g, margin) = net.gradient_at(x).unwrap();
        if margin > 0.0 {
            prop_assert!(rep.all_preactivations_nonzero);
            prop_assert_eq!(rep.grad_norm, norm2(&g));
        }
        prop_assert_eq!(rep.layer_singular_values.len(), net.depth());
    }

    #[test]
    fn json_round_trip_is_exact(net in small_net()) {
        let text = serde_json::to_string(&net).unwrap();
        let back: NetworkParams = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, net);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pattern_count_respects_bound(d in 1usize..=2, extra in 3usize..=5, l in 1usize..=2, bias in bias_strategy(), seed in any::<u64>()) {
        let mut rng = TrialRng::seed_from_u64(seed);
        let net = sample_network_with(d, &vec![d + extra; l], &bias, &mut rng).unwrap();
        let pc = pattern_count_check(&net, Budget::default()).unwrap();
        prop_assert!(pc.ok);
        prop_assert!(pc.count as f64 <= pc.bound);
    }
}

fn k1() -> BoundConstants {
    BoundConstants::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn upper_bounds_monotone_in_u_t_l(d in 1usize..20, extra in 3usize..200, l in 1usize..6, u in 0.0f64..5.0, t in 0.0f64..5.0, du in 0.0f64..2.0, dt in 0.0f64..2.0) {
        let n = d + extra;
        let k = k1();
        let base = bounds::deep_upper(d, n, l, u, t, &k).unwrap();
        let more = bounds::deep_upper(d, n, l, u + du, t + dt, &k).unwrap();
        prop_assert!(more.value >= base.value * (1.0 - 1e-12));
        prop_assert!(more.prob_lower_bound >= base.prob_lower_bound - 1e-15);
        let deeper = bounds::deep_upper(d, n, l + 1, u, t, &k).unwrap();
        prop_assert!(deeper.value >= base.value * (1.0 - 1e-12));

        let s = bounds::shallow_upper(d, n, u, t, &k).unwrap();
        let s2 = bounds::shallow_upper(d, n, u + du, t + dt, &k).unwrap();
        prop_assert!(s2.value >= s.value && s2.prob_lower_bound >= s.prob_lower_bound - 1e-15);
        let s3 = bounds::shallow_upper(d + 1, n, u, t, &k).unwrap();
        prop_assert!(s3.value >= s.value);
    }

    #[test]
    fn deep_upper_monotone_in_d_without_deviation(d in 1usize..20, extra in 4usize..200, l in 1usize..6, t in 0.0f64..5.0) {
        let n = d + extra;
        let a = bounds::deep_upper(d, n, l, 0.0, t, &k1()).unwrap().value;
        let b = bounds::deep_upper(d + 1, n, l, 0.0, t, &k1()).unwrap().value;
        prop_assert!(b >= a * (1.0 - 1e-12));
    }

    #[test]
    fn probabilities_and_values_clamped(d in 1usize..50, n in 1usize..100, l in 1usize..6, u in 0.0f64..20.0, t in 0.0f64..20.0) {
        let k = k1();
        let mut all = vec![
            bounds::shallow_upper(d, n, u, t, &k).unwrap(),
            bounds::shallow_lower(d, n, u, t, &k).unwrap(),
            bounds::deep_lower(d, n, l, u, t, &k).unwrap(),
        ];
        if n > d + 2 {
            all.push(bounds::deep_upper(d, n, l, u, t, &k).unwrap());
        }
        for b in all {
            prop_assert!((0.0..=1.0).contains(&b.prob_lower_bound));
            prop_assert!(b.value >= 0.0 && b.value.is_finite());
        }
        let sl = bounds::shallow_lower(d, n, u, t, &k).unwrap().value;
        let manual = (1.0 - u / (n as f64).sqrt()).max(0.0) * ((d as f64).sqrt() - t).max(0.0) / 2f64.sqrt();
        prop_assert!((sl - manual).abs() <= 1e-12 * (1.0 + manual));
    }

    #[test]
    fn deep_lower_convenience_meets_quarter_sqrt_d(d in 1usize..30, l in 1usize..5, c in 0.5f64..3.0, slack in 0usize..100) {
        let k = BoundConstants { c_lower: c, ..k1() };
        let n = (16.0 * c * c * (d * l * l) as f64).ceil() as usize + slack;
        let v = bounds::deep_lower_convenience(d, n, l, &k).unwrap().value;
        prop_assert!(v >= (d as f64).sqrt() / 4.0 * (1.0 - 1e-12));
    }

    #[test]
    fn dudley_scales_linearly(lambda in 0.1f64..10.0, k in 1usize..5) {
        let f = |x: f64| k as f64 * (9.0 / x).ln().max(0.0);
        let a = bounds::dudley_entropy_integral(|e| f(e / lambda), lambda).unwrap();
        let b = bounds::dudley_entropy_integral(|e| f(e / (2.0 * lambda)), 2.0 * lambda).unwrap();
        prop_assert!((b - 2.0 * a).abs() <= 1e-8 * b);
    }
}
