//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use liplab_core::bounds::{dudley_shallow, BoundConstants};
use liplab_core::estimators::{sampled_lip_lower, EstimateConfig, SampleLaw};
use liplab_core::exact::{exact_lipschitz, pattern_count_check, Budget, LipOptions};
use liplab_core::experiments::{
    counterexample_suite, deep_lower_event, isotropy_check, scaling_shallow, CounterexampleConfig, DeepLowerConfig,
    IsotropyConfig, ScalingConfig,
};
use liplab_core::init::{derive_trial_rng, sample_network_with, BiasSpec};
use liplab_core::linalg::norm2;
use liplab_core::net::fixtures::two_vs_five;
use liplab_core::NetworkParams;
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn laws() -> [BiasSpec; 6] {
    [
        BiasSpec::Zero,
        BiasSpec::Gaussian { sigma: 1.0 },
        BiasSpec::Uniform { m: 1.0 },
        BiasSpec::Rademacher { scale: 0.5 },
        BiasSpec::Constant { value: 0.3 },
        BiasSpec::Table { values: vec![-0.2, 0.1, 0.7] },
    ]
}

fn c1_counterexample() -> Outcome {
    let r = exact_lipschitz(&two_vs_five(), LipOptions { budget: Budget::default(), sup_all: true }).unwrap();
    let sup = r.sup_all_patterns.unwrap();
    let el = (r.lip - 2f64.sqrt()).abs();
    let es = (sup - 5f64.sqrt()).abs();
    outcome(el <= 1e-9 && es <= 1e-9, format!("lip={:.12} (err {el:.1e}), sup={:.12} (err {es:.1e})", r.lip, sup))
}

fn c2_half_collapse() -> Outcome {
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for i in 0..100u64 {
        let mut rng = derive_trial_rng(2, i);
        let d = rng.random_range(1..=3);
        let n = rng.random_range(1..=6);
        let net = sample_network_with(d, &[n], &laws()[i as usize % 6], &mut rng).unwrap();
        let lip = exact_lipschitz(&net, LipOptions::default()).unwrap().lip;
        let half = 0.5 * net.linear_collapse().1;
        min_slack = min_slack.min(lip - half);
        if lip < half - 1e-12 * (1.0 + half) {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("100 nets, {violations} violations, min(lip - lip_linear/2) = {min_slack:.3e}"))
}

fn c3_oracle_equivalence() -> Outcome {
    let mut equal = 0;
    let mut below = 0;
    for i in 0..50u64 {
        let mut rng = derive_trial_rng(3, i);
        let n = rng.random_range(1..=5);
        let l = rng.random_range(1..=2);
        let net = sample_network_with(2, &vec![n; l], &laws()[i as usize % 6], &mut rng).unwrap();
        let exact = exact_lipschitz(&net, LipOptions::default()).unwrap().lip;
        let ball = EstimateConfig {
            n_samples: 100_000,
            sample_law: SampleLaw::MultiscaleBall { radius: 1e3, min_radius: 1e-3 },
            hill_climb_steps: 0,
            seed: 2 * i,
        };
        let sphere = EstimateConfig { sample_law: SampleLaw::Sphere { radius: 1e6 }, seed: 2 * i + 1, ..ball.clone() };
        let sampled = sampled_lip_lower(&net, &ball).unwrap().lower_bound.max(sampled_lip_lower(&net, &sphere).unwrap().lower_bound);
        if sampled > exact + 1e-12 * (1.0 + exact) {
            below += 1;
        }
        if (exact - sampled).abs() <= 1e-9 {
            equal += 1;
        }
    }
    let frac = equal as f64 / 50.0;
    outcome(below == 0 && frac >= 0.95, format!("exact < sampled in {below}/50, equal within 1e-9 in {equal}/50"))
}

fn c4_pattern_bound() -> Outcome {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let mut rng = derive_trial_rng(4, i);
        let d = rng.random_range(1..=2);
        let n = rng.random_range(d + 3..=8);
        let l = rng.random_range(1..=2);
        let net = sample_network_with(d, &vec![n; l], &laws()[i as usize % 6], &mut rng).unwrap();
        let pc = pattern_count_check(&net, Budget::default()).unwrap();
        worst = worst.max(pc.count as f64 / pc.bound);
        if !pc.ok {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("100 nets, {violations} violations, max count/bound = {worst:.4}"))
}

fn c5_scaling() -> Outcome {
    let rep = scaling_shallow(&ScalingConfig::default()).unwrap();
    let slope = rep.derived["loglog_slope"];
    let medians: Vec<String> = rep
        .aggregates
        .iter()
        .filter(|a| a.quantity == "lip_over_sqrt_d")
        .map(|a| format!("{}:{:.3}", a.group, a.median))
        .collect();
    outcome(
        rep.passed() && rep.failures.is_empty(),
        format!("slope = {slope:.4}, median lip/sqrt(d) = [{}], failed trials = {}", medians.join(" "), rep.failures.len()),
    )
}

fn c6_isotropy() -> Outcome {
    let rep = isotropy_check(&IsotropyConfig::default()).unwrap();
    let f = rep.derived["frobenius_error"];
    outcome(f <= 0.05, format!("||Sigma_hat - I||_F = {f:.5} (noise scale {:.5})", rep.derived["frobenius_noise_scale"]))
}

fn c7_deep_lower() -> Outcome {
    let zero = deep_lower_event(&DeepLowerConfig::default()).unwrap();
    let gauss = deep_lower_event(&DeepLowerConfig { bias: BiasSpec::Gaussian { sigma: 1.0 }, ..Default::default() }).unwrap();
    let f = zero.derived["event_frequency"];
    let dz = gauss.derived["differentiable_frequency"];
    outcome(
        f >= 0.9 && dz == 1.0,
        format!(
            "P(||grad|| >= sqrt(d)/4) = {f:.3} (3-sigma Wilson [{:.3}, {:.3}]), differentiable freq (Gaussian bias) = {dz}",
            zero.derived["event_wilson_lo"], zero.derived["event_wilson_hi"]
        ),
    )
}

fn random_point(net: &NetworkParams, rng: &mut impl Rng) -> Vec<f64> {
    (0..net.input_dim()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn c8_gradient() -> Outcome {
    let h = 1e-5;
    let (mut pairs, mut bad, mut worst) = (0, 0, 0.0f64);
    let mut i = 0u64;
    while pairs < 1000 {
        let mut rng = derive_trial_rng(8, i);
        i += 1;
        let d = rng.random_range(1..=5);
        let l = rng.random_range(1..=3);
        let widths: Vec<usize> = (0..l).map(|_| rng.random_range(1..=16)).collect();
        let net = sample_network_with(d, &widths, &laws()[i as usize % 6], &mut rng).unwrap();
        let x = random_point(&net, &mut rng);
        let (g, margin) = net.gradient_at(&x).unwrap();
        if margin <= 1e-4 {
            continue;
        }
        pairs += 1;
        let mut fd = vec![0.0; d];
        for j in 0..d {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            fd[j] = (net.forward(&xp).unwrap().0 - net.forward(&xm).unwrap().0) / (2.0 * h);
        }
        let diff = norm2(&fd.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>());
        let gn = norm2(&g);
        let rel = if gn > 0.0 { diff / gn } else { diff };
        worst = worst.max(rel);
        if rel > 1e-6 {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{pairs} pairs, {bad} mismatches, max relative error {worst:.2e}"))
}

fn c9_dudley() -> Outcome {
    let v = dudley_shallow(1.0, 1, &BoundConstants::default()).unwrap();
    let t0 = 9f64.ln().sqrt();
    let oracle = 9.0 * (t0 * (-t0 * t0).exp() + 0.5 * std::f64::consts::PI.sqrt() * statrs::function::erf::erfc(t0));
    let rel = (v - oracle).abs() / oracle;
    outcome(rel <= 1e-5, format!("integral = {v:.10}, erfc oracle = {oracle:.10}, relative error {rel:.2e}"))
}

fn csv_under(threads: usize, f: &(dyn Fn() -> Vec<u8> + Sync)) -> Vec<u8> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn c10_determinism() -> Outcome {
    type Job = Box<dyn Fn() -> Vec<u8> + Sync>;
    let jobs: Vec<(&str, Job)> = vec![
        (
            "scaling_shallow",
            Box::new(|| {
                let cfg = ScalingConfig { ds: vec![2, 4], n: 16, trials: 8, samples: 2000, ..Default::default() };
                scaling_shallow(&cfg).unwrap().rows_csv().unwrap()
            }),
        ),
        (
            "isotropy_check",
            Box::new(|| isotropy_check(&IsotropyConfig { samples: 20_000, ..Default::default() }).unwrap().rows_csv().unwrap()),
        ),
        (
            "deep_lower_event",
            Box::new(|| deep_lower_event(&DeepLowerConfig { trials: 40, ..Default::default() }).unwrap().rows_csv().unwrap()),
        ),
        (
            "counterexample_suite",
            Box::new(|| counterexample_suite(&CounterexampleConfig::default()).unwrap().rows_csv().unwrap()),
        ),
    ];
    let mut mismatched = Vec::new();
    for (name, job) in &jobs {
        let reference = csv_under(1, job.as_ref());
        for threads in [2, 4, 8] {
            if csv_under(threads, job.as_ref()) != reference {
                mismatched.push(format!("{name}@{threads}"));
            }
        }
    }
    outcome(mismatched.is_empty(), format!("4 experiments x threads {{1,2,4,8}}, mismatches: {mismatched:?}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("counterexample exactness", c1_counterexample, Duration::from_secs(1)),
        ("half linear collapse lower bound", c2_half_collapse, Duration::from_secs(30)),
        ("exact vs sampling oracle", c3_oracle_equivalence, Duration::from_secs(300)),
        ("pattern-count bound", c4_pattern_bound, Duration::from_secs(600)),
        ("shallow scaling law", c5_scaling, Duration::from_secs(900)),
        ("isotropy of activated rows", c6_isotropy, Duration::from_secs(60)),
        ("deep lower-bound event", c7_deep_lower, Duration::from_secs(120)),
        ("gradient vs finite differences", c8_gradient, Duration::from_secs(600)),
        ("entropy integral quadrature", c9_dudley, Duration::from_secs(60)),
        ("determinism across thread counts", c10_determinism, Duration::from_secs(600)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "{} [{id:>2}] {name}: {} ({:.2}s, limit {}s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
