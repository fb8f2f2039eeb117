use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Check, ExperimentReport, TrialFailure};
use crate::error::Result;
use crate::exact::{exact_lipschitz, Budget, LipOptions};
use crate::init::{derive_trial_rng, sample_network_with, trial_seed, BiasSpec};
use crate::net::fixtures::{collapse_vanishes, dead_deep, two_vs_five};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleConfig {
    pub seed: u64,
    /// Random one-hidden-layer nets checked against half the linear collapse.
    pub random_nets: usize,
    pub max_d: usize,
    pub max_n: usize,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig { seed: 0, random_nets: 100, max_d: 3, max_n: 6 }
    }
}

const EXACT_TOL: f64 = 1e-9;

/// Bias laws cycled through by the random shallow nets.
fn bias_for(i: usize) -> BiasSpec {
    match i % 5 {
        0 => BiasSpec::Zero,
        1 => BiasSpec::Gaussian { sigma: 1.0 },
        2 => BiasSpec::Uniform { m: 0.5 },
        3 => BiasSpec::Rademacher { scale: 0.3 },
        _ => BiasSpec::Constant { value: 0.2 },
    }
}

/// The fixed constructions separating `lip(Φ)` from the pattern supremum and
/// from the linear collapse, plus random checks of `lip ≥ ½ lip_linear` for one
/// hidden layer.
pub fn counterexample_suite(cfg: &CounterexampleConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("counterexample_suite", cfg, cfg.seed, cfg.random_nets as u64 + 3)?;
    let opts = LipOptions { budget: Budget::default(), sup_all: true };

    let net = two_vs_five();
    let r = exact_lipschitz(&net, opts)?;
    let sup = r.sup_all_patterns.unwrap_or(f64::NAN);
    rep.row(0, 2, 3, 1, 0, "lip", r.lip);
    rep.row(0, 2, 3, 1, 0, "sup_all_patterns", sup);
    rep.row(0, 2, 3, 1, 0, "lip_linear", net.linear_collapse().1);
    let ok = (r.lip - 2f64.sqrt()).abs() <= EXACT_TOL && (sup - 5f64.sqrt()).abs() <= EXACT_TOL;
    rep.checks.push(Check::assertive(
        "two_vs_five: lip = sqrt(2) and sup over patterns = sqrt(5)",
        ok,
        r.lip,
        format!("lip = {}, sup = {}", 2f64.sqrt(), 5f64.sqrt()),
        format!("absolute {EXACT_TOL:e}"),
    ));

    let net = collapse_vanishes();
    let r = exact_lipschitz(&net, opts)?;
    let linear = net.linear_collapse().1;
    rep.row(1, 2, 3, 1, 0, "lip", r.lip);
    rep.row(1, 2, 3, 1, 0, "lip_linear", linear);
    rep.checks.push(Check::assertive(
        "collapse_vanishes: lip_linear = 0 < lip = 1",
        linear.abs() <= EXACT_TOL && (r.lip - 1.0).abs() <= EXACT_TOL,
        r.lip,
        "lip_linear = 0, lip = 1",
        format!("absolute {EXACT_TOL:e}"),
    ));

    let net = dead_deep();
    let r = exact_lipschitz(&net, opts)?;
    let linear = net.linear_collapse().1;
    rep.row(2, 1, 1, 2, 0, "lip", r.lip);
    rep.row(2, 1, 1, 2, 0, "lip_linear", linear);
    rep.checks.push(Check::assertive(
        "dead_deep: lip = 0 < lip_linear = 1",
        r.lip.abs() <= EXACT_TOL && (linear - 1.0).abs() <= EXACT_TOL,
        r.lip,
        "lip = 0, lip_linear = 1",
        format!("absolute {EXACT_TOL:e}"),
    ));

    let trials: Vec<_> = (0..cfg.random_nets)
        .into_par_iter()
        .map(|i| {
            let idx = i as u64 + 3;
            let mut rng = derive_trial_rng(cfg.seed, idx);
            let d = rng.random_range(1..=cfg.max_d.max(1));
            let n = rng.random_range(1..=cfg.max_n.max(1));
            let net = sample_network_with(d, &[n], &bias_for(i), &mut rng)?;
            let lip = exact_lipschitz(&net, LipOptions::default())?.lip;
            Ok((idx, d, n, lip, net.linear_collapse().1))
        })
        .collect::<Vec<Result<_>>>();
    let mut violations = 0usize;
    let mut worst = f64::INFINITY;
    for (i, t) in trials.into_iter().enumerate() {
        match t {
            Ok((idx, d, n, lip, linear)) => {
                let seed = trial_seed(cfg.seed, idx);
                rep.row(idx, d, n, 1, seed, "lip", lip);
                rep.row(idx, d, n, 1, seed, "lip_linear", linear);
                let slack = lip - 0.5 * linear;
                worst = worst.min(slack);
                if slack < -EXACT_TOL * (1.0 + linear) {
                    violations += 1;
                }
            }
            Err(e) => rep.failures.push(TrialFailure { trial: i as u64 + 3, error: e.to_string() }),
        }
    }
    rep.derived.insert("half_collapse_min_slack".into(), worst);
    rep.checks.push(Check::assertive(
        "random shallow nets: lip >= lip_linear / 2",
        violations == 0 && rep.failures.is_empty(),
        violations as f64,
        format!("0 violations over {} nets", cfg.random_nets),
        format!("relative {EXACT_TOL:e}"),
    ));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let rep = counterexample_suite(&CounterexampleConfig { random_nets: 20, ..Default::default() }).unwrap();
        assert_eq!(rep.checks.len(), 4);
        assert!(rep.passed(), "{:?}", rep.failed_checks());
    }
}
