use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::wilson_interval;
use super::{fixed_point, Check, ExperimentReport};
use crate::error::{LipError, Result};
use crate::init::{derive_trial_rng, BiasSpec};
use crate::linalg::{dot, norm2};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsotropyConfig {
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// Fixed input `x ∈ ℝᵏ`; defaults to `e₁`.
    pub x: Option<Vec<f64>>,
    pub bias: BiasSpec,
    pub samples: usize,
    pub seed: u64,
    /// Largest accepted `‖Σ̂ − I‖_F` for symmetric bias laws.
    pub frobenius_tol: f64,
}

impl Default for IsotropyConfig {
    fn default() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        IsotropyConfig {
            k: 4,
            n: 32,
            x: Some(vec![h, h, 0.0, 0.0]),
            bias: BiasSpec::Gaussian { sigma: 1.0 },
            samples: 100_000,
            seed: 0,
            frobenius_tol: 0.05,
        }
    }
}

fn check_common(k: usize, n: usize, samples: usize, bias: &BiasSpec) -> Result<()> {
    if k == 0 || n == 0 || samples == 0 {
        return Err(LipError::InvalidConfig("k, N and the sample count must be at least 1".into()));
    }
    if matches!(bias, BiasSpec::PerLayer { .. }) {
        return Err(LipError::InvalidConfig("row statistics use a single bias law, not a per-layer one".into()));
    }
    bias.validate()
}

/// Draws one row `√N · 1{⟨w, x⟩ + b > 0} · w` with `w ~ N(0, 2/N · I_k)`.
///
/// Rows of the full matrix are i.i.d., so drawing a single row per sample is
/// equivalent to drawing the whole matrix and keeping its first row.
fn draw_row<R: Rng + ?Sized>(rng: &mut R, x: &[f64], n: usize, bias: &BiasSpec, out: &mut [f64]) {
    let std = (2.0 / n as f64).sqrt();
    for v in out.iter_mut() {
        *v = std * rng.sample::<f64, _>(StandardNormal);
    }
    let b = bias.sample(rng);
    if dot(out, x) + b > 0.0 {
        let s = (n as f64).sqrt();
        out.iter_mut().for_each(|v| *v *= s);
    } else {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Fixed chunks with derived generators, summed in chunk order.
fn chunked<T: Send, F>(seed: u64, samples: usize, f: F) -> Vec<T>
where
    F: Fn(&mut crate::init::TrialRng, usize) -> T + Sync,
{
    (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = derive_trial_rng(seed, c as u64);
            f(&mut rng, CHUNK.min(samples - c * CHUNK))
        })
        .collect()
}

/// Empirical second-moment matrix of one row of `√N · D(x) · W`, compared to the identity.
pub fn isotropy_check(cfg: &IsotropyConfig) -> Result<ExperimentReport> {
    check_common(cfg.k, cfg.n, cfg.samples, &cfg.bias)?;
    let x = fixed_point(&cfg.x, cfg.k)?;
    let k = cfg.k;
    let mut rep = ExperimentReport::new("isotropy_check", cfg, cfg.seed, 1)?;

    // Per chunk: Σ r_i r_j, Σ (r_i r_j)², number of active rows.
    let parts = chunked(cfg.seed, cfg.samples, |rng, len| {
        let mut s1 = vec![0.0; k * k];
        let mut s2 = vec![0.0; k * k];
        let mut active = 0u64;
        let mut r = vec![0.0; k];
        for _ in 0..len {
            draw_row(rng, &x, cfg.n, &cfg.bias, &mut r);
            if r.iter().any(|&v| v != 0.0) {
                active += 1;
            }
            for i in 0..k {
                for j in 0..k {
                    let p = r[i] * r[j];
                    s1[i * k + j] += p;
                    s2[i * k + j] += p * p;
                }
            }
        }
        (s1, s2, active)
    });
    let mut s1 = vec![0.0; k * k];
    let mut s2 = vec![0.0; k * k];
    let mut active = 0u64;
    for (a, b, c) in parts {
        s1.iter_mut().zip(&a).for_each(|(s, v)| *s += v);
        s2.iter_mut().zip(&b).for_each(|(s, v)| *s += v);
        active += c;
    }

    let m = cfg.samples as f64;
    let mut frob2 = 0.0;
    let mut noise2 = 0.0;
    let mut max_z: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let mean = s1[i * k + j] / m;
            let var = (s2[i * k + j] / m - mean * mean).max(0.0);
            let target = if i == j { 1.0 } else { 0.0 };
            frob2 += (mean - target).powi(2);
            noise2 += var / m;
            let se = (var / m).sqrt();
            let z = if se > 0.0 { (mean - target) / se } else { 0.0 };
            max_z = max_z.max(z.abs());
            if i <= j {
                rep.row(0, k, cfg.n, 1, cfg.seed, &format!("sigma_{i}_{j}"), mean);
                rep.row(0, k, cfg.n, 1, cfg.seed, &format!("z_{i}_{j}"), z);
            }
        }
    }
    let frob = frob2.sqrt();
    rep.row(0, k, cfg.n, 1, cfg.seed, "frobenius_error", frob);
    rep.row(0, k, cfg.n, 1, cfg.seed, "active_fraction", active as f64 / m);
    rep.derived.insert("frobenius_error".into(), frob);
    rep.derived.insert("frobenius_noise_scale".into(), noise2.sqrt());
    rep.derived.insert("max_abs_z".into(), max_z);
    rep.derived.insert("sigma_0_0".into(), s1[0] / m);

    if cfg.bias.is_symmetric() {
        rep.checks.push(Check::assertive(
            "||Sigma_hat - I||_F",
            frob <= cfg.frobenius_tol,
            frob,
            format!("<= {}", cfg.frobenius_tol),
            format!(
                "fixed tolerance; Monte Carlo noise scale sqrt(sum Var(r_i r_j) / M) = {:.4}",
                noise2.sqrt()
            ),
        ));
        rep.checks.push(Check::descriptive(
            "max entrywise |z|",
            max_z <= 4.0,
            max_z,
            "<= 4 expected under isotropy",
            "z = (Sigma_hat_ij - I_ij) / (sample sd / sqrt(M))",
        ));
    } else {
        rep.checks.push(Check::descriptive(
            "negative control: asymmetric bias, Sigma_hat_00",
            true,
            s1[0] / m,
            "isotropy is not expected without symmetric biases",
            "none",
        ));
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailConfig {
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// Fixed input `x ∈ ℝᵏ`; defaults to `e₁`.
    pub x: Option<Vec<f64>>,
    pub bias: BiasSpec,
    pub samples: usize,
    pub seed: u64,
    pub thresholds: Vec<f64>,
    /// Projection directions (normalized internally); defaults to `e₁…e_k` and `x/‖x‖`.
    pub directions: Option<Vec<Vec<f64>>>,
    /// Width of the Wilson intervals in standard deviations.
    pub z: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig {
            k: 4,
            n: 32,
            x: None,
            bias: BiasSpec::Zero,
            samples: 1_000_000,
            seed: 0,
            thresholds: vec![0.0, 1.0, 2.0, 3.0, 4.0, 4.0 * std::f64::consts::SQRT_2],
            directions: None,
            z: 3.0,
        }
    }
}

/// Tail frequencies `P(|⟨row, y⟩| ≥ s)` against the sub-gaussian envelope `2e^{−s²/8}`.
pub fn subgaussian_tail_check(cfg: &TailConfig) -> Result<ExperimentReport> {
    check_common(cfg.k, cfg.n, cfg.samples, &cfg.bias)?;
    let x = fixed_point(&cfg.x, cfg.k)?;
    if cfg.thresholds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) || !(cfg.z > 0.0) {
        return Err(LipError::InvalidConfig("thresholds must be finite and nonnegative, z positive".into()));
    }
    let dirs: Vec<Vec<f64>> = match &cfg.directions {
        Some(d) => d.clone(),
        None => {
            let mut d: Vec<Vec<f64>> = (0..cfg.k)
                .map(|i| {
                    let mut e = vec![0.0; cfg.k];
                    e[i] = 1.0;
                    e
                })
                .collect();
            d.push(x.clone());
            d
        }
    };
    let mut units = Vec::with_capacity(dirs.len());
    for y in &dirs {
        let n = norm2(y);
        if y.len() != cfg.k || !(n > 0.0) {
            return Err(LipError::InvalidConfig(format!("direction {y:?} must be a nonzero vector of length {}", cfg.k)));
        }
        units.push(y.iter().map(|v| v / n).collect::<Vec<_>>());
    }
    let ns = cfg.thresholds.len();
    let mut rep = ExperimentReport::new("subgaussian_tail_check", cfg, cfg.seed, units.len() as u64)?;

    let parts = chunked(cfg.seed, cfg.samples, |rng, len| {
        let mut counts = vec![0u64; units.len() * ns];
        let mut r = vec![0.0; cfg.k];
        for _ in 0..len {
            draw_row(rng, &x, cfg.n, &cfg.bias, &mut r);
            for (di, y) in units.iter().enumerate() {
                let p = dot(&r, y).abs();
                for (si, &s) in cfg.thresholds.iter().enumerate() {
                    if p >= s {
                        counts[di * ns + si] += 1;
                    }
                }
            }
        }
        counts
    });
    let mut counts = vec![0u64; units.len() * ns];
    for c in parts {
        counts.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
    }

    let m = cfg.samples as u64;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut envelope_ok = true;
    for di in 0..units.len() {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (si, &s) in cfg.thresholds.iter().enumerate() {
            let c = counts[di * ns + si];
            let freq = c as f64 / m as f64;
            let (lo, hi) = wilson_interval(c, m, cfg.z);
            let envelope = (2.0 * (-s * s / 8.0).exp()).min(1.0);
            worst_excess = worst_excess.max(lo - envelope);
            if lo > envelope {
                envelope_ok = false;
            }
            let tag = format!("s={s}");
            rep.row(di as u64, cfg.k, cfg.n, 1, cfg.seed, &format!("tail_freq_{tag}"), freq);
            rep.row(di as u64, cfg.k, cfg.n, 1, cfg.seed, &format!("wilson_lo_{tag}"), lo);
            rep.row(di as u64, cfg.k, cfg.n, 1, cfg.seed, &format!("wilson_hi_{tag}"), hi);
            if s > 0.0 && c > 0 {
                xs.push(s * s);
                ys.push(freq.ln());
            }
        }
        // ln P ≈ a − s²/K²  ⇒  K = 1/√(−slope).
        let proxy = if xs.len() >= 2 {
            let slope = super::stats::linear_fit(&xs, &ys).1;
            if slope < 0.0 {
                1.0 / (-slope).sqrt()
            } else {
                f64::INFINITY
            }
        } else {
            f64::NAN
        };
        rep.row(di as u64, cfg.k, cfg.n, 1, cfg.seed, "fitted_proxy", proxy);
        rep.derived.insert(format!("fitted_proxy_dir{di}"), proxy);
    }
    rep.checks.push(Check::assertive(
        "tail frequencies below 2 exp(-s^2/8)",
        envelope_ok,
        worst_excess,
        "Wilson lower bound <= envelope for every direction and threshold",
        format!("{}-sigma Wilson score intervals over M = {} samples", cfg.z, cfg.samples),
    ));
    if let Some(si) = cfg.thresholds.iter().position(|&s| (s - 4.0 * std::f64::consts::SQRT_2).abs() < 1e-12) {
        let worst = (0..units.len()).map(|di| counts[di * ns + si]).max().unwrap_or(0) as f64 / m as f64;
        rep.checks.push(Check::descriptive(
            "P(|projection| >= 4 sqrt 2)",
            worst < 1e-4,
            worst,
            "< 1e-4",
            "point estimate, maximum over directions",
        ));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_zero_bias_diagonal_is_one() {
        let cfg = IsotropyConfig { k: 1, n: 8, x: Some(vec![1.0]), bias: BiasSpec::Zero, samples: 200_000, ..Default::default() };
        let rep = isotropy_check(&cfg).unwrap();
        assert!((rep.derived["sigma_0_0"] - 1.0).abs() < 0.02);
        assert!(rep.passed());
    }

    #[test]
    fn positive_constant_bias_inflates_diagonal() {
        let cfg = IsotropyConfig { k: 1, n: 8, x: Some(vec![1.0]), bias: BiasSpec::Constant { value: 5.0 }, samples: 50_000, ..Default::default() };
        let rep = isotropy_check(&cfg).unwrap();
        assert!(rep.derived["sigma_0_0"] > 1.5);
        assert!(rep.checks.iter().all(|c| c.kind == super::super::CheckKind::Descriptive));
    }

    #[test]
    fn zero_x_rejected() {
        let cfg = IsotropyConfig { k: 2, x: Some(vec![0.0, 0.0]), ..Default::default() };
        assert!(isotropy_check(&cfg).is_err());
        let cfg = TailConfig { k: 2, x: Some(vec![0.0, 0.0]), ..Default::default() };
        assert!(subgaussian_tail_check(&cfg).is_err());
    }

    #[test]
    fn tails_and_degenerate_cases() {
        let cfg = TailConfig { samples: 100_000, ..Default::default() };
        let rep = subgaussian_tail_check(&cfg).unwrap();
        assert!(rep.passed());
        assert!(rep.values("tail_freq_s=0", |_| true).iter().all(|&f| f == 1.0));

        // Every neuron off: all projections vanish.
        let off = TailConfig { samples: 1000, bias: BiasSpec::Constant { value: -1e9 }, ..Default::default() };
        let rep = subgaussian_tail_check(&off).unwrap();
        assert!(rep.values("tail_freq_s=1", |_| true).iter().all(|&f| f == 0.0));
        assert!(rep.values("tail_freq_s=0", |_| true).iter().all(|&f| f == 1.0));
    }
}
