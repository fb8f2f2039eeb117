//! Closed-form bounds on `lip(Φ)` for He-initialized networks, covering numbers
//! of the gradient set, and the entropy integral over them.
//!
//! These bounds hold with unspecified absolute constants.
//! [`BoundConstants`] carries user-supplied stand-ins (all default to 1); no
//! function asserts particular values for them.

use serde::{Deserialize, Serialize};

use crate::error::{LipError, Result};
use crate::quadrature::integrate;

/// Stand-ins for the unspecified absolute constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConstants {
    /// Leading constant of the upper bounds.
    pub c_upper: f64,
    /// Tail constant of the width deviation in the upper bounds and the deep lower bound.
    pub c1: f64,
    /// Distortion constant of the deep lower bound.
    pub c_lower: f64,
    /// Tail constant of the shallow lower bound.
    pub c: f64,
    /// Constant of the near-isometry sandwich.
    pub c_iso: f64,
    /// Exponent constant of the shallow covering number.
    pub c_cov: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants { c_upper: 1.0, c1: 1.0, c_lower: 1.0, c: 1.0, c_iso: 1.0, c_cov: 1.0 }
    }
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("c_upper", self.c_upper),
            ("c1", self.c1),
            ("c_lower", self.c_lower),
            ("c", self.c),
            ("c_iso", self.c_iso),
            ("c_cov", self.c_cov),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LipError::InvalidConfig(format!("constant {name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// A bound together with a lower bound on the probability that it holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub prob_lower_bound: f64,
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

fn check_dims(d: usize, n: usize) -> Result<()> {
    if d == 0 || n == 0 {
        return Err(LipError::InvalidConfig(format!("d and N must be at least 1 (d={d}, N={n})")));
    }
    Ok(())
}

fn check_deviation(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(LipError::InvalidConfig(format!("{name} must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

fn check_depth(l: usize) -> Result<()> {
    if l == 0 {
        return Err(LipError::InvalidConfig("L must be at least 1".into()));
    }
    Ok(())
}

fn require_wide(d: usize, n: usize) -> Result<()> {
    if n <= d + 2 {
        return Err(LipError::Precondition(format!(
            "the deep bounds require N > d + 2 (got d={d}, N={n})"
        )));
    }
    Ok(())
}

fn sqrt(x: usize) -> f64 {
    (x as f64).sqrt()
}

/// `ln(eN/(d+1))`.
fn log_pattern_factor(d: usize, n: usize) -> f64 {
    1.0 + (n as f64 / (d + 1) as f64).ln()
}

/// `C(1 + (√d + t)/√N)(√k + u)` with `k = min(d, N)`, holding with probability
/// at least `(1 − 2e^{−u²})₊(1 − 2e^{−c₁t²})₊`.
pub fn shallow_upper(d: usize, n: usize, u: f64, t: f64, k: &BoundConstants) -> Result<BoundValue> {
    check_dims(d, n)?;
    check_deviation("u", u)?;
    check_deviation("t", t)?;
    k.validate()?;
    let value = k.c_upper * (1.0 + (sqrt(d) + t) / sqrt(n)) * (sqrt(d.min(n)) + u);
    let prob = pos(1.0 - 2.0 * (-u * u).exp()) * pos(1.0 - 2.0 * (-k.c1 * t * t).exp());
    Ok(BoundValue { value, prob_lower_bound: prob })
}

/// `C√d`.
pub fn shallow_upper_simple(d: usize, k: &BoundConstants) -> Result<f64> {
    check_dims(d, 1)?;
    k.validate()?;
    Ok(k.c_upper * sqrt(d))
}

/// Bound on `E[lip(Φ)]`: `C(1 + √(d/N))√min(d, N)`. `n = None` is the infinite-width limit `C√d`.
pub fn shallow_expectation(d: usize, n: Option<usize>, k: &BoundConstants) -> Result<f64> {
    k.validate()?;
    match n {
        Some(n) => {
            check_dims(d, n)?;
            Ok(k.c_upper * (1.0 + (d as f64 / n as f64).sqrt()) * sqrt(d.min(n)))
        }
        None => {
            check_dims(d, 1)?;
            Ok(k.c_upper * sqrt(d))
        }
    }
}

/// `C(1 + (√d + t)/√N)(2√2 + √2t/√N)^{L−1}√L√ln(eN/(d+1))(√d + u)`, holding with
/// probability at least `(1 − 2e^{−u²})₊((1 − 2e^{−c₁t²})₊)^L`.
pub fn deep_upper(d: usize, n: usize, l: usize, u: f64, t: f64, k: &BoundConstants) -> Result<BoundValue> {
    check_dims(d, n)?;
    check_depth(l)?;
    check_deviation("u", u)?;
    check_deviation("t", t)?;
    k.validate()?;
    require_wide(d, n)?;
    let s2 = std::f64::consts::SQRT_2;
    let value = k.c_upper
        * (1.0 + (sqrt(d) + t) / sqrt(n))
        * (2.0 * s2 + s2 * t / sqrt(n)).powi(l as i32 - 1)
        * sqrt(l)
        * log_pattern_factor(d, n).sqrt()
        * (sqrt(d) + u);
    let prob = pos(1.0 - 2.0 * (-u * u).exp()) * pos(1.0 - 2.0 * (-k.c1 * t * t).exp()).powi(l as i32);
    Ok(BoundValue { value, prob_lower_bound: prob })
}

/// [`deep_upper`] at `u = √d`, `t = √N`.
pub fn deep_upper_convenience(d: usize, n: usize, l: usize, k: &BoundConstants) -> Result<BoundValue> {
    deep_upper(d, n, l, sqrt(d), sqrt(n), k)
}

/// `C(3√2)^L√L√ln(eN/(d+1))√d`. Dominates [`deep_upper_convenience`] up to a factor √2.
pub fn deep_upper_simple(d: usize, n: usize, l: usize, k: &BoundConstants) -> Result<f64> {
    check_dims(d, n)?;
    check_depth(l)?;
    k.validate()?;
    require_wide(d, n)?;
    Ok(k.c_upper * (3.0 * std::f64::consts::SQRT_2).powi(l as i32) * sqrt(l) * log_pattern_factor(d, n).sqrt() * sqrt(d))
}

/// Bound on `E[lip(Φ)]` for deep nets: `C(1 + √(d/N))(2√2)^{L−1}√L√ln(eN/(d+1))√d`.
pub fn deep_expectation(d: usize, n: usize, l: usize, k: &BoundConstants) -> Result<f64> {
    check_dims(d, n)?;
    check_depth(l)?;
    k.validate()?;
    require_wide(d, n)?;
    Ok(k.c_upper
        * (1.0 + (d as f64 / n as f64).sqrt())
        * (2.0 * std::f64::consts::SQRT_2).powi(l as i32 - 1)
        * sqrt(l)
        * log_pattern_factor(d, n).sqrt()
        * sqrt(d))
}

/// `(1/√2)(1 − u/√N)₊(√d − t)₊`, holding with probability at least
/// `(1 − 2e^{−ct²})₊(1 − 2e^{−cu²})₊`.
pub fn shallow_lower(d: usize, n: usize, u: f64, t: f64, k: &BoundConstants) -> Result<BoundValue> {
    check_dims(d, n)?;
    check_deviation("u", u)?;
    check_deviation("t", t)?;
    k.validate()?;
    let value = pos(1.0 - u / sqrt(n)) * pos(sqrt(d) - t) / std::f64::consts::SQRT_2;
    let prob = pos(1.0 - 2.0 * (-k.c * t * t).exp()) * pos(1.0 - 2.0 * (-k.c * u * u).exp());
    Ok(BoundValue { value, prob_lower_bound: prob })
}

/// [`shallow_lower`] at `u = √N/2`, `t = √d/2`, giving `√d/(4√2)`.
pub fn shallow_lower_convenience(d: usize, n: usize, k: &BoundConstants) -> Result<BoundValue> {
    shallow_lower(d, n, sqrt(n) / 2.0, sqrt(d) / 2.0, k)
}

/// `((1 − C(√d + u)/√N)₊)^L(√k − t)₊` with `k = min(d, N)`, holding with
/// probability at least `((1 − 2^{−N} − e^{−u²})₊)^L(1 − 2e^{−c₁t²})₊`.
pub fn deep_lower(d: usize, n: usize, l: usize, u: f64, t: f64, k: &BoundConstants) -> Result<BoundValue> {
    check_dims(d, n)?;
    check_depth(l)?;
    check_deviation("u", u)?;
    check_deviation("t", t)?;
    k.validate()?;
    let li = l as i32;
    let value = pos(1.0 - k.c_lower * (sqrt(d) + u) / sqrt(n)).powi(li) * pos(sqrt(d.min(n)) - t);
    let per_layer = pos(1.0 - 2f64.powi(-(n.min(2000) as i32)) - (-u * u).exp());
    let prob = per_layer.powi(li) * pos(1.0 - 2.0 * (-k.c1 * t * t).exp());
    Ok(BoundValue { value, prob_lower_bound: prob })
}

/// [`deep_lower`] at `u = √N/(4CL)`, `t = √d/2`; at least `√d/4` once `N ≥ 16C²dL²`.
pub fn deep_lower_convenience(d: usize, n: usize, l: usize, k: &BoundConstants) -> Result<BoundValue> {
    check_depth(l)?;
    k.validate()?;
    deep_lower(d, n, l, sqrt(n) / (4.0 * k.c_lower * l as f64), sqrt(d) / 2.0, k)
}

/// `C(√d + u)/√N`, the per-layer distortion of the near-isometry sandwich.
pub fn isometry_distortion(d: usize, n: usize, u: f64, k: &BoundConstants) -> Result<f64> {
    check_dims(d, n)?;
    check_deviation("u", u)?;
    k.validate()?;
    Ok(k.c_iso * (sqrt(d) + u) / sqrt(n))
}

/// `(9‖W⁽⁰⁾‖/ε)^{C_cov·k}` for `0 < ε < ‖W⁽⁰⁾‖`.
pub fn covering_bound_shallow(norm_w0: f64, k: usize, eps: f64, consts: &BoundConstants) -> Result<f64> {
    Ok(log_covering_shallow(norm_w0, k, eps, consts)?.exp())
}

/// Natural log of [`covering_bound_shallow`].
pub fn log_covering_shallow(norm_w0: f64, k: usize, eps: f64, consts: &BoundConstants) -> Result<f64> {
    consts.validate()?;
    if !(eps > 0.0 && eps < norm_w0 && norm_w0.is_finite()) {
        return Err(LipError::Precondition(format!(
            "the shallow covering bound requires 0 < eps < ||W0|| (got eps={eps}, ||W0||={norm_w0})"
        )));
    }
    Ok(consts.c_cov * k as f64 * (9.0 * norm_w0 / eps).ln())
}

/// `(3Λ/ε)^d(eN/(d+1))^{L(d+1)}` for `0 < ε < Λ` and `N > d + 2`.
pub fn covering_bound_deep(lambda: f64, d: usize, n: usize, l: usize, eps: f64) -> Result<f64> {
    Ok(log_covering_deep(lambda, d, n, l, eps)?.exp())
}

/// Natural log of [`covering_bound_deep`].
pub fn log_covering_deep(lambda: f64, d: usize, n: usize, l: usize, eps: f64) -> Result<f64> {
    check_dims(d, n)?;
    check_depth(l)?;
    if !(eps > 0.0 && eps < lambda && lambda.is_finite()) {
        return Err(LipError::Precondition(format!(
            "the deep covering bound requires 0 < eps < Lambda (got eps={eps}, Lambda={lambda})"
        )));
    }
    if n <= d + 2 {
        return Err(LipError::Precondition(format!(
            "the deep covering bound requires d + 2 < N (got d={d}, N={n})"
        )));
    }
    Ok(d as f64 * (3.0 * lambda / eps).ln() + (l * (d + 1)) as f64 * log_pattern_factor(d, n))
}

/// Requested relative accuracy of [`dudley_entropy_integral`].
pub const DUDLEY_REL_TOL: f64 = 1e-6;

/// `∫₀^Λ √(log_cov(ε)) dε`.
///
/// `log_cov` bounds the log covering number at scale `ε`; it must be
/// nonnegative and is only evaluated on `(0, Λ)`. The substitution
/// `ε = Λs²` removes the integrable singularity at `ε → 0`.
pub fn dudley_entropy_integral<F: FnMut(f64) -> f64>(mut log_cov: F, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(LipError::InvalidConfig(format!("Lambda must be finite and nonnegative, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let mut bad = None;
    let integral = integrate(
        |s| {
            if s <= 0.0 {
                return 0.0;
            }
            let v = log_cov(lambda * s * s);
            if !(v >= 0.0) || v.is_infinite() {
                bad.get_or_insert(v);
                return 0.0;
            }
            2.0 * lambda * s * v.sqrt()
        },
        0.0,
        1.0,
        DUDLEY_REL_TOL * 1e-3,
        lambda * 1e-15,
    );
    if let Some(v) = bad {
        return Err(LipError::InvalidConfig(format!("log covering number must be finite and nonnegative, got {v}")));
    }
    Ok(integral?.value)
}

/// Entropy integral of the shallow covering bound over `(0, ‖W⁽⁰⁾‖)`.
pub fn dudley_shallow(norm_w0: f64, k: usize, consts: &BoundConstants) -> Result<f64> {
    consts.validate()?;
    if !(norm_w0 > 0.0) {
        return Ok(0.0);
    }
    dudley_entropy_integral(|eps| consts.c_cov * k as f64 * (9.0 * norm_w0 / eps).ln().max(0.0), norm_w0)
}

/// Entropy integral of the deep covering bound over `(0, Λ)`.
pub fn dudley_deep(lambda: f64, d: usize, n: usize, l: usize) -> Result<f64> {
    log_covering_deep(lambda, d, n, l, lambda / 2.0)?;
    dudley_entropy_integral(
        |eps| d as f64 * (3.0 * lambda / eps).ln().max(0.0) + (l * (d + 1)) as f64 * log_pattern_factor(d, n),
        lambda,
    )
}
