//! Lower bounds on `lip(Φ)` that scale beyond exact enumeration, and the
//! fixed-point gradient quantities behind the deep lower bound.
//!
//! Any point where `Φ` is differentiable gives `lip(Φ) ≥ ‖∇Φ(x)‖₂`. A positive
//! boundary margin certifies differentiability, so every estimate here is a
//! certified lower bound.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LipError, Result};
use crate::exact::region_system;
use crate::feasibility::{solve_margin, FeasibilityStatus};
use crate::init::derive_trial_rng;
use crate::linalg::{norm2, Matrix};
use crate::net::{ActivationPattern, NetworkParams};

/// Where sample points come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleLaw {
    /// Standard Gaussian in `ℝ^d`.
    StdGaussian,
    /// Uniform on the sphere of the given radius.
    Sphere { radius: f64 },
    /// Uniform in the ball of the given radius.
    Ball { radius: f64 },
    /// Uniform direction, `log r` uniform on `[ln min_radius, ln radius]`.
    /// Covers every scale of the ball, so small bounded regions near the
    /// origin are hit as reliably as the unbounded ones.
    MultiscaleBall { radius: f64, min_radius: f64 },
}

impl Default for SampleLaw {
    fn default() -> Self {
        SampleLaw::StdGaussian
    }
}

impl SampleLaw {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SampleLaw::StdGaussian => true,
            SampleLaw::Sphere { radius } | SampleLaw::Ball { radius } => radius > 0.0 && radius.is_finite(),
            SampleLaw::MultiscaleBall { radius, min_radius } => {
                min_radius > 0.0 && radius >= min_radius && radius.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(LipError::InvalidConfig(format!("sampling radii must be positive and finite: {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<f64> {
        let mut g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let r = match *self {
            SampleLaw::StdGaussian => return g,
            SampleLaw::Sphere { radius } => radius,
            SampleLaw::Ball { radius } => radius * rng.random::<f64>().powf(1.0 / d as f64),
            SampleLaw::MultiscaleBall { radius, min_radius } => {
                let (lo, hi) = (min_radius.ln(), radius.ln());
                (lo + (hi - lo) * rng.random::<f64>()).exp()
            }
        };
        let n = norm2(&g);
        if n > 0.0 {
            g.iter_mut().for_each(|v| *v *= r / n);
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub n_samples: usize,
    #[serde(default)]
    pub sample_law: SampleLaw,
    #[serde(default)]
    pub hill_climb_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig { n_samples: 10_000, sample_law: SampleLaw::StdGaussian, hill_climb_steps: 0, seed: 0 }
    }
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(LipError::InvalidConfig("n_samples must be at least 1".into()));
        }
        self.sample_law.validate()
    }
}

/// Best point found by sampling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledEstimate {
    pub lower_bound: f64,
    /// `None` when no sample had a positive margin.
    pub best_point: Option<Vec<f64>>,
    pub best_pattern: Option<ActivationPattern>,
    /// Samples with positive margin (the only ones that count).
    pub certified_samples: usize,
}

const CHUNK: usize = 1024;

/// Maximum of `‖∇Φ(x)‖₂` over sampled differentiability points.
///
/// Samples are drawn in fixed chunks, each with its own derived stream, so the
/// result does not depend on the number of threads.
pub fn sampled_lip_lower(net: &NetworkParams, cfg: &EstimateConfig) -> Result<SampledEstimate> {
    cfg.validate()?;
    let d = net.input_dim();
    let chunks = cfg.n_samples.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = derive_trial_rng(cfg.seed, c as u64);
            let len = CHUNK.min(cfg.n_samples - c * CHUNK);
            let mut local: (f64, usize, Option<Vec<f64>>) = (0.0, 0, None);
            for _ in 0..len {
                let x = cfg.sample_law.sample(d, &mut rng);
                let (g, margin) = net.gradient_at(&x).expect("sample has input dimension");
                if margin > 0.0 {
                    local.1 += 1;
                    let n = norm2(&g);
                    if local.2.is_none() || n > local.0 {
                        local = (n, local.1, Some(x));
                    }
                }
            }
            local
        })
        .collect::<Vec<_>>();
    // Fold in chunk order: first strict maximum wins.
    let mut lower = 0.0;
    let mut point = None;
    let mut certified = 0;
    for (n, count, x) in best {
        certified += count;
        if x.is_some() && (point.is_none() || n > lower) {
            lower = n;
            point = x;
        }
    }
    let best_pattern = match &point {
        Some(x) => Some(net.forward(x)?.1.pattern),
        None => None,
    };
    Ok(SampledEstimate { lower_bound: lower, best_point: point, best_pattern, certified_samples: certified })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HillClimbResult {
    pub pattern: ActivationPattern,
    pub grad_norm: f64,
    /// Gradient norm after each accepted move, starting with the initial region.
    pub trajectory: Vec<f64>,
    /// Interior point of the final region.
    pub witness: Vec<f64>,
}

/// Local search over neighbouring regions: repeatedly flip the single neuron
/// bit that increases the gradient norm most, among flips whose region is
/// full-dimensional, until no flip helps or `steps` moves were made.
pub fn pattern_hill_climb<R: Rng + ?Sized>(
    net: &NetworkParams,
    start: &[f64],
    steps: usize,
    rng: &mut R,
) -> Result<HillClimbResult> {
    let (mut grad, mut margin) = net.gradient_at(start)?;
    let mut witness = start.to_vec();
    if margin <= 0.0 {
        witness = start.iter().map(|v| v + 1e-6 * rng.sample::<f64, _>(StandardNormal)).collect();
        (grad, margin) = net.gradient_at(&witness)?;
        if margin <= 0.0 {
            return Err(LipError::InvalidConfig("hill climb start lies on a region boundary".into()));
        }
    }
    let mut pattern = net.forward(&witness)?.1.pattern;
    let mut norm = norm2(&grad);
    let mut trajectory = vec![norm];
    for _ in 0..steps {
        let mut candidates = Vec::new();
        for bit in 0..pattern.bit_count() {
            let mut p = pattern.clone();
            p.flip_flat(bit);
            let n = norm2(&net.pattern_gradient(&p)?);
            if n > norm {
                candidates.push((n, bit, p));
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut moved = false;
        for (n, _, p) in candidates {
            let res = solve_margin(&region_system(net, &p)?, 1.0)?;
            if res.status == FeasibilityStatus::FullDim {
                pattern = p;
                norm = n;
                witness = res.witness.expect("full-dimensional result has a witness");
                trajectory.push(n);
                moved = true;
                break;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(HillClimbResult { pattern, grad_norm: norm, trajectory, witness })
}

/// `½ ‖W⁽¹⁾W⁽⁰⁾‖₂`, a deterministic lower bound on `lip(Φ)` for one hidden layer.
pub fn shallow_collapse_lower(net: &NetworkParams) -> Result<f64> {
    if net.depth() != 1 {
        return Err(LipError::Precondition(format!(
            "the half-linear-collapse lower bound holds only for one hidden layer (got L={}); \
             already for L=2 a network can be constant while its linear collapse is not",
            net.depth()
        )));
    }
    Ok(0.5 * net.linear_collapse().1)
}

/// Gradient-related quantities at one fixed input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointReport {
    pub x0: Vec<f64>,
    pub gradient: Vec<f64>,
    /// Norm of `W⁽ᴸ⁾D⁽ᴸ⁻¹⁾(x₀)⋯D⁽⁰⁾(x₀)W⁽⁰⁾`.
    pub grad_norm: f64,
    /// No hidden pre-activation is exactly zero, so `Φ` is differentiable at `x₀`.
    pub all_preactivations_nonzero: bool,
    pub boundary_margin: f64,
    /// `x⁽ˡ⁾ ≠ 0` for `l = 0..=L`.
    pub layer_nonvanishing: Vec<bool>,
    /// `(σ_min, σ_max)` of `D⁽ˡ⁻¹⁾W⁽ˡ⁻¹⁾⋯D⁽⁰⁾W⁽⁰⁾` for `l = 1..=L`: the tightest
    /// constants with `σ_min‖y‖ ≤ ‖…y‖ ≤ σ_max‖y‖` for all `y`.
    pub layer_singular_values: Vec<(f64, f64)>,
}

/// Masked products `D⁽ˡ⁻¹⁾W⁽ˡ⁻¹⁾⋯D⁽⁰⁾W⁽⁰⁾` for `l = 1..=L`.
pub fn layer_products(net: &NetworkParams, pattern: &ActivationPattern) -> Result<Vec<Matrix>> {
    pattern.check_shape(net.hidden_widths())?;
    let d = net.input_dim();
    let mut out: Vec<Matrix> = Vec::with_capacity(net.depth());
    let mut current = Matrix::identity(d);
    for l in 0..net.depth() {
        let mut p = net.weights()[l].matmul(&current);
        for (i, &on) in pattern.layer(l).iter().enumerate() {
            if !on {
                for j in 0..d {
                    p.set(i, j, 0.0);
                }
            }
        }
        out.push(p.clone());
        current = p;
    }
    Ok(out)
}

pub fn fixed_point_report(net: &NetworkParams, x0: &[f64]) -> Result<FixedPointReport> {
    if x0.iter().all(|&v| v == 0.0) {
        return Err(LipError::InvalidConfig("the fixed point x0 must be nonzero".into()));
    }
    let (_, gradient, trace) = net.value_and_gradient(x0)?;
    let layer_singular_values = layer_products(net, &trace.pattern)?
        .iter()
        .map(Matrix::singular_value_extremes)
        .collect();
    Ok(FixedPointReport {
        x0: x0.to_vec(),
        grad_norm: norm2(&gradient),
        gradient,
        all_preactivations_nonzero: trace.boundary_margin > 0.0,
        boundary_margin: trace.boundary_margin,
        layer_nonvanishing: trace.post_activations.iter().map(|x| x.iter().any(|&v| v != 0.0)).collect(),
        layer_singular_values,
    })
}
