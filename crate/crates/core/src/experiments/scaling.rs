use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{linear_fit, median};
use super::{Aggregate, Check, ExperimentReport, TrialFailure};
use crate::error::{LipError, Result};
use crate::estimators::{pattern_hill_climb, sampled_lip_lower, EstimateConfig, SampleLaw};
use crate::exact::{exact_lipschitz, Budget, LipOptions};
use crate::init::{derive_trial_rng, mix64, sample_network_with, trial_seed, BiasSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipMethod {
    /// Exact enumeration for `d ≤ exact_max_dim`, sampling plus local search above.
    Auto,
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub ds: Vec<usize>,
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    pub bias: BiasSpec,
    pub seed: u64,
    pub method: LipMethod,
    pub exact_max_dim: usize,
    pub samples: usize,
    pub sample_law: SampleLaw,
    pub hill_climb_steps: usize,
    pub budget_lps: u64,
    /// Accepted range of the fitted slope of `ln median lip` against `ln d`.
    pub slope_range: (f64, f64),
    /// Accepted range of each cell's median of `lip / √d`.
    pub ratio_range: (f64, f64),
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            ds: vec![2, 4, 8, 16],
            n: 64,
            trials: 200,
            bias: BiasSpec::Gaussian { sigma: 1.0 },
            seed: 0,
            method: LipMethod::Auto,
            exact_max_dim: 2,
            samples: 20_000,
            sample_law: SampleLaw::MultiscaleBall { radius: 1e4, min_radius: 1e-3 },
            hill_climb_steps: 64,
            budget_lps: 1_000_000,
            slope_range: (0.4, 0.6),
            ratio_range: (1.0 / (4.0 * std::f64::consts::SQRT_2), 20.0),
        }
    }
}

struct Trial {
    lip: f64,
    exact: bool,
    sampled: f64,
}

fn run_trial(cfg: &ScalingConfig, d: usize, idx: u64) -> Result<Trial> {
    let mut rng = derive_trial_rng(cfg.seed, idx);
    let net = sample_network_with(d, &[cfg.n], &cfg.bias, &mut rng)?;
    let est_cfg = EstimateConfig {
        n_samples: cfg.samples,
        sample_law: cfg.sample_law,
        hill_climb_steps: cfg.hill_climb_steps,
        seed: mix64(trial_seed(cfg.seed, idx) ^ 0x5eed),
    };
    let est = sampled_lip_lower(&net, &est_cfg)?;
    let exact = match cfg.method {
        LipMethod::Exact => true,
        LipMethod::Sampled => false,
        LipMethod::Auto => d <= cfg.exact_max_dim,
    };
    if exact {
        let r = exact_lipschitz(&net, LipOptions { budget: Budget::lp_calls(cfg.budget_lps), sup_all: false })?;
        return Ok(Trial { lip: r.lip, exact: true, sampled: est.lower_bound });
    }
    let lip = match &est.best_point {
        Some(x) => pattern_hill_climb(&net, x, cfg.hill_climb_steps, &mut rng)?.grad_norm.max(est.lower_bound),
        None => est.lower_bound,
    };
    Ok(Trial { lip, exact: false, sampled: est.lower_bound })
}

/// `lip(Φ)` of one-hidden-layer nets over a grid of input dimensions, with the
/// log-log slope of the per-cell median against `d`.
pub fn scaling_shallow(cfg: &ScalingConfig) -> Result<ExperimentReport> {
    if cfg.ds.len() < 2 || cfg.ds.contains(&0) || cfg.n == 0 || cfg.trials == 0 || cfg.samples == 0 {
        return Err(LipError::InvalidConfig(
            "scaling_shallow needs at least two positive d values, N >= 1, trials >= 1 and samples >= 1".into(),
        ));
    }
    cfg.bias.validate()?;
    let total = (cfg.ds.len() * cfg.trials) as u64;
    let mut rep = ExperimentReport::new("scaling_shallow", cfg, cfg.seed, total)?;
    let jobs: Vec<(usize, u64)> = cfg
        .ds
        .iter()
        .enumerate()
        .flat_map(|(c, &d)| (0..cfg.trials).map(move |r| (d, (c * cfg.trials + r) as u64)))
        .collect();
    let results: Vec<Result<Trial>> = jobs.par_iter().map(|&(d, idx)| run_trial(cfg, d, idx)).collect();

    let lower_const = 1.0 / (4.0 * std::f64::consts::SQRT_2);
    let mut ordering_ok = true;
    for (&(d, idx), res) in jobs.iter().zip(results) {
        let seed = trial_seed(cfg.seed, idx);
        match res {
            Ok(t) => {
                let sd = (d as f64).sqrt();
                rep.row(idx, d, cfg.n, 1, seed, "lip", t.lip);
                rep.row(idx, d, cfg.n, 1, seed, "lip_exact", if t.exact { 1.0 } else { 0.0 });
                rep.row(idx, d, cfg.n, 1, seed, "sampled_lower", t.sampled);
                rep.row(idx, d, cfg.n, 1, seed, "lip_over_sqrt_d", t.lip / sd);
                rep.row(idx, d, cfg.n, 1, seed, "above_shallow_lower", if t.lip >= lower_const * sd { 1.0 } else { 0.0 });
                if t.lip < t.sampled - 1e-12 * (1.0 + t.sampled) {
                    ordering_ok = false;
                }
            }
            Err(e) => rep.failures.push(TrialFailure { trial: idx, error: e.to_string() }),
        }
    }

    let mut log_d = Vec::new();
    let mut log_med = Vec::new();
    let mut ratios_ok = true;
    let mut ratio_medians = Vec::new();
    for &d in &cfg.ds {
        let group = format!("d={d},N={}", cfg.n);
        let in_cell = |r: &super::Row| r.d == d;
        let lips = rep.values("lip", in_cell);
        if lips.is_empty() {
            ratios_ok = false;
            continue;
        }
        let ratios = rep.values("lip_over_sqrt_d", in_cell);
        let above = rep.values("above_shallow_lower", in_cell);
        let m = median(&lips);
        let rm = median(&ratios);
        log_d.push((d as f64).ln());
        log_med.push(m.ln());
        ratio_medians.push(rm);
        if !(rm >= cfg.ratio_range.0 && rm <= cfg.ratio_range.1) {
            ratios_ok = false;
        }
        rep.aggregates.push(Aggregate::of(&group, "lip", &lips));
        rep.aggregates.push(Aggregate::of(&group, "lip_over_sqrt_d", &ratios));
        rep.aggregates.push(Aggregate::of(&group, "above_shallow_lower", &above));
        rep.aggregates.push(Aggregate::of(&group, "sampled_lower", &rep.values("sampled_lower", in_cell)));
        rep.checks.push(Check::descriptive(
            format!("{group}: fraction with lip >= sqrt(d)/(4 sqrt 2)"),
            true,
            above.iter().sum::<f64>() / above.len() as f64,
            "reported only; the lower bound holds with an unknown constant in its probability",
            "none",
        ));
    }
    let slope = if log_d.len() >= 2 { linear_fit(&log_d, &log_med).1 } else { f64::NAN };
    rep.derived.insert("loglog_slope".into(), slope);
    rep.derived.insert("failed_trials".into(), rep.failures.len() as f64);

    rep.checks.push(Check::assertive(
        "lip >= sampled lower bound in every trial",
        ordering_ok,
        if ordering_ok { 1.0 } else { 0.0 },
        "all trials",
        "relative 1e-12",
    ));
    rep.checks.push(Check::assertive(
        "log-log slope of median lip against d",
        slope >= cfg.slope_range.0 && slope <= cfg.slope_range.1,
        slope,
        format!("in [{}, {}]", cfg.slope_range.0, cfg.slope_range.1),
        "fixed interval around the predicted exponent 1/2; OLS over cell medians",
    ));
    let worst = ratio_medians
        .iter()
        .copied()
        .fold(f64::NAN, |acc, r| if acc.is_nan() || (r - 1.0).abs() > (acc - 1.0).abs() { r } else { acc });
    rep.checks.push(Check::assertive(
        "per-cell median of lip / sqrt(d)",
        ratios_ok,
        worst,
        format!("every cell in [{}, {}]", cfg.ratio_range.0, cfg.ratio_range.1),
        "fixed interval; lower end is the shallow lower-bound constant",
    ));
    Ok(rep)
}
