use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{wilson_interval, Summary};
use super::{fixed_point, Aggregate, Check, ExperimentReport, TrialFailure};
use crate::bounds::{isometry_distortion, BoundConstants};
use crate::error::{LipError, Result};
use crate::estimators::{fixed_point_report, layer_products};
use crate::exact::{sup_all_patterns, Budget};
use crate::init::{derive_trial_rng, sample_network_with, trial_seed, BiasSpec};
use crate::linalg::norm2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NearIsometryConfig {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    /// Fixed point; defaults to `e₁`.
    pub x0: Option<Vec<f64>>,
    pub bias: BiasSpec,
    pub trials: usize,
    pub probes: usize,
    /// Deviation parameter of the sandwich `(1 ± C(√d + u)/√N)^l`.
    pub u: f64,
    /// Stand-in for the sandwich constant `C`.
    pub c_iso: f64,
    pub seed: u64,
}

impl Default for NearIsometryConfig {
    fn default() -> Self {
        NearIsometryConfig {
            d: 4,
            n: 1024,
            l: 3,
            x0: None,
            bias: BiasSpec::Zero,
            trials: 100,
            probes: 32,
            u: 2.0,
            c_iso: 1.0,
            seed: 0,
        }
    }
}

struct IsoTrial {
    ratio_min: Vec<f64>,
    ratio_max: Vec<f64>,
    sigma: Vec<(f64, f64)>,
    preact_nonzero: bool,
    nonvanishing: bool,
}

fn check_dims(d: usize, n: usize, l: usize, trials: usize) -> Result<()> {
    if d == 0 || n == 0 || l == 0 || trials == 0 {
        return Err(LipError::InvalidConfig("d, N, L and trials must be at least 1".into()));
    }
    Ok(())
}

/// Norm distortion of the masked products `D⁽ˡ⁻¹⁾W⁽ˡ⁻¹⁾⋯D⁽⁰⁾W⁽⁰⁾` at a fixed point.
pub fn near_isometry_check(cfg: &NearIsometryConfig) -> Result<ExperimentReport> {
    check_dims(cfg.d, cfg.n, cfg.l, cfg.trials)?;
    if cfg.probes == 0 {
        return Err(LipError::InvalidConfig("probes must be at least 1".into()));
    }
    let x0 = fixed_point(&cfg.x0, cfg.d)?;
    let consts = BoundConstants { c_iso: cfg.c_iso, ..Default::default() };
    let delta = isometry_distortion(cfg.d, cfg.n, cfg.u, &consts)?;
    cfg.bias.validate()?;
    let mut rep = ExperimentReport::new("near_isometry_check", cfg, cfg.seed, cfg.trials as u64)?;

    let results: Vec<Result<IsoTrial>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = derive_trial_rng(cfg.seed, t);
            let net = sample_network_with(cfg.d, &vec![cfg.n; cfg.l], &cfg.bias, &mut rng)?;
            let report = fixed_point_report(&net, &x0)?;
            let (_, trace) = net.forward(&x0)?;
            let products = layer_products(&net, &trace.pattern)?;
            let mut ratio_min = vec![f64::INFINITY; cfg.l];
            let mut ratio_max = vec![0.0f64; cfg.l];
            for _ in 0..cfg.probes {
                let y: Vec<f64> = (0..cfg.d).map(|_| rng.sample(StandardNormal)).collect();
                let ny = norm2(&y);
                for (l, p) in products.iter().enumerate() {
                    let r = norm2(&p.matvec(&y)) / ny;
                    ratio_min[l] = ratio_min[l].min(r);
                    ratio_max[l] = ratio_max[l].max(r);
                }
            }
            Ok(IsoTrial {
                ratio_min,
                ratio_max,
                sigma: report.layer_singular_values,
                preact_nonzero: report.all_preactivations_nonzero,
                nonvanishing: report.layer_nonvanishing.iter().all(|&b| b),
            })
        })
        .collect();

    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let mut sandwich_hits = vec![0u64; cfg.l];
    let mut ok_trials = 0u64;
    let mut nonvanishing_count = 0u64;
    for (t, res) in results.into_iter().enumerate() {
        let t = t as u64;
        let seed = trial_seed(cfg.seed, t);
        let tr = match res {
            Ok(tr) => tr,
            Err(e) => {
                rep.failures.push(TrialFailure { trial: t, error: e.to_string() });
                continue;
            }
        };
        ok_trials += 1;
        let mut max_dev: f64 = 0.0;
        for l in 0..cfg.l {
            let layer = l + 1;
            let (smin, smax) = tr.sigma[l];
            rep.row(t, cfg.d, cfg.n, cfg.l, seed, &format!("ratio_min_l{layer}"), tr.ratio_min[l]);
            rep.row(t, cfg.d, cfg.n, cfg.l, seed, &format!("ratio_max_l{layer}"), tr.ratio_max[l]);
            rep.row(t, cfg.d, cfg.n, cfg.l, seed, &format!("sigma_min_l{layer}"), smin);
            rep.row(t, cfg.d, cfg.n, cfg.l, seed, &format!("sigma_max_l{layer}"), smax);
            let inside = smin >= (1.0 - delta).max(0.0).powi(layer as i32) && smax <= (1.0 + delta).powi(layer as i32);
            rep.row(t, cfg.d, cfg.n, cfg.l, seed, &format!("sandwich_l{layer}"), flag(inside));
            if inside {
                sandwich_hits[l] += 1;
            }
            max_dev = max_dev.max((tr.ratio_min[l] - 1.0).abs()).max((tr.ratio_max[l] - 1.0).abs());
        }
        rep.row(t, cfg.d, cfg.n, cfg.l, seed, "max_ratio_deviation", max_dev);
        rep.row(t, cfg.d, cfg.n, cfg.l, seed, "event_preactivations_nonzero", flag(tr.preact_nonzero));
        rep.row(t, cfg.d, cfg.n, cfg.l, seed, "event_layers_nonvanishing", flag(tr.nonvanishing));
        if tr.nonvanishing {
            nonvanishing_count += 1;
        }
    }

    let group = format!("d={},N={},L={}", cfg.d, cfg.n, cfg.l);
    let devs = rep.values("max_ratio_deviation", |_| true);
    let med_dev = Summary::of(&devs).median;
    for q in ["max_ratio_deviation", "event_preactivations_nonzero", "event_layers_nonvanishing"] {
        let v = rep.values(q, |_| true);
        rep.aggregates.push(Aggregate::of(&group, q, &v));
    }
    rep.derived.insert("median_max_ratio_deviation".into(), med_dev);
    rep.derived.insert("distortion_delta".into(), delta);
    rep.checks.push(Check::descriptive(
        "median over trials of max_l |ratio - 1|",
        med_dev <= 0.5,
        med_dev,
        format!("<= 0.5; predicted order sqrt(d/N) = {:.4} times an unknown constant", (cfg.d as f64 / cfg.n as f64).sqrt()),
        "none",
    ));
    for l in 0..cfg.l {
        let layer = (l + 1) as i32;
        let freq = if ok_trials > 0 { sandwich_hits[l] as f64 / ok_trials as f64 } else { f64::NAN };
        let predicted = (1.0 - 2f64.powi(-(cfg.n.min(2000) as i32)) - (-cfg.u * cfg.u).exp()).max(0.0).powi(layer);
        rep.derived.insert(format!("sandwich_frequency_l{layer}"), freq);
        rep.checks.push(Check::descriptive(
            format!("layer {layer}: frequency of the near-isometry sandwich"),
            freq >= predicted,
            freq,
            format!(">= (1 - 2^-N - e^-u^2)^l = {predicted:.4} with C = {}", cfg.c_iso),
            "reported only; the sandwich constant is unknown",
        ));
    }
    let floor = (1.0 - 2f64.powi(-(cfg.n.min(2000) as i32))).powi(cfg.l as i32);
    let (_, hi) = wilson_interval(nonvanishing_count, ok_trials, 3.0);
    let check = if cfg.bias.is_symmetric() { Check::assertive } else { Check::descriptive };
    rep.checks.push(check(
        "frequency of x^(l) != 0 for all layers",
        hi >= floor && rep.failures.is_empty(),
        nonvanishing_count as f64 / ok_trials.max(1) as f64,
        format!(">= (1 - 2^-N)^L = {floor}"),
        "3-sigma Wilson upper bound compared with the floor",
    ));
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeepLowerConfig {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub bias: BiasSpec,
    pub trials: usize,
    /// Fixed point; defaults to `e₁`.
    pub x0: Option<Vec<f64>>,
    pub seed: u64,
    /// Smallest accepted frequency of `‖∇Φ(x₀)‖ ≥ √d/4`.
    pub min_frequency: f64,
    /// Also compare against the exact pattern supremum (small nets only).
    pub sup_all_check: bool,
    pub budget_lps: u64,
}

impl Default for DeepLowerConfig {
    fn default() -> Self {
        DeepLowerConfig {
            d: 4,
            n: 256,
            l: 2,
            bias: BiasSpec::Zero,
            trials: 500,
            x0: None,
            seed: 0,
            min_frequency: 0.9,
            sup_all_check: false,
            budget_lps: 1_000_000,
        }
    }
}

/// Frequency of `‖∇Φ(x₀)‖ ≥ √d/4` and of differentiability at `x₀`.
pub fn deep_lower_event(cfg: &DeepLowerConfig) -> Result<ExperimentReport> {
    check_dims(cfg.d, cfg.n, cfg.l, cfg.trials)?;
    cfg.bias.validate()?;
    let x0 = fixed_point(&cfg.x0, cfg.d)?;
    let mut rep = ExperimentReport::new("deep_lower_event", cfg, cfg.seed, cfg.trials as u64)?;
    let threshold = (cfg.d as f64).sqrt() / 4.0;

    let results: Vec<Result<(f64, bool, Option<f64>)>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = derive_trial_rng(cfg.seed, t);
            let net = sample_network_with(cfg.d, &vec![cfg.n; cfg.l], &cfg.bias, &mut rng)?;
            let report = fixed_point_report(&net, &x0)?;
            let sup = if cfg.sup_all_check {
                Some(sup_all_patterns(&net, Budget::lp_calls(cfg.budget_lps))?)
            } else {
                None
            };
            Ok((report.grad_norm, report.all_preactivations_nonzero, sup))
        })
        .collect();

    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let (mut hits, mut diff, mut ok) = (0u64, 0u64, 0u64);
    let mut ordering_ok = true;
    for (t, res) in results.into_iter().enumerate() {
        let t = t as u64;
        let seed = trial_seed(cfg.seed, t);
        match res {
            Ok((g, differentiable, sup)) => {
                ok += 1;
                hits += (g >= threshold) as u64;
                diff += differentiable as u64;
                rep.row(t, cfg.d, cfg.n, cfg.l, seed, "grad_norm", g);
                rep.row(t, cfg.d, cfg.n, cfg.l, seed, "event_grad_above_sqrt_d_over_4", flag(g >= threshold));
                rep.row(t, cfg.d, cfg.n, cfg.l, seed, "event_differentiable", flag(differentiable));
                if let Some(s) = sup {
                    rep.row(t, cfg.d, cfg.n, cfg.l, seed, "sup_all_patterns", s);
                    if differentiable && g > s * (1.0 + 1e-12) + 1e-12 {
                        ordering_ok = false;
                    }
                }
            }
            Err(e) => rep.failures.push(TrialFailure { trial: t, error: e.to_string() }),
        }
    }
    let group = format!("d={},N={},L={}", cfg.d, cfg.n, cfg.l);
    let grads = rep.values("grad_norm", |_| true);
    rep.aggregates.push(Aggregate::of(&group, "grad_norm", &grads));
    let freq = hits as f64 / ok.max(1) as f64;
    let diff_freq = diff as f64 / ok.max(1) as f64;
    let (lo, hi) = wilson_interval(hits, ok, 3.0);
    rep.derived.insert("event_frequency".into(), freq);
    rep.derived.insert("event_wilson_lo".into(), lo);
    rep.derived.insert("event_wilson_hi".into(), hi);
    rep.derived.insert("differentiable_frequency".into(), diff_freq);

    rep.checks.push(Check::assertive(
        "frequency of ||grad Phi(x0)|| >= sqrt(d)/4",
        freq >= cfg.min_frequency && ok > 0,
        freq,
        format!(">= {}", cfg.min_frequency),
        format!("point estimate over {ok} trials; 3-sigma Wilson interval [{lo:.4}, {hi:.4}]"),
    ));
    let check = if cfg.bias.is_continuous() { Check::assertive } else { Check::descriptive };
    rep.checks.push(check(
        "frequency of differentiability at x0",
        diff == ok,
        diff_freq,
        "= 1 (almost sure for continuous bias laws)",
        "exact",
    ));
    if cfg.sup_all_check {
        rep.checks.push(Check::assertive(
            "grad norm <= sup over activation patterns",
            ordering_ok,
            flag(ordering_ok),
            "all trials",
            "relative 1e-12",
        ));
    }
    Ok(rep)
}
