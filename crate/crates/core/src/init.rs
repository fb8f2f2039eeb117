//! Random initialization: Gaussian weights with variance `2/N` in the hidden
//! layers and variance `1` in the output layer, biases from a [`BiasSpec`].
//!
//! All randomness flows from a 64-bit seed. Experiments derive one independent
//! stream per trial with [`derive_trial_rng`], so results never depend on how
//! trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LipError, Result};
use crate::linalg::Matrix;
use crate::net::NetworkParams;

/// Random number generator used for every trial.
pub type TrialRng = ChaCha8Rng;

/// Distribution of the entries of one bias vector (or, via `PerLayer`, of all of them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BiasSpec {
    Zero,
    Gaussian {
        sigma: f64,
    },
    /// Uniform on `[-m, m]`.
    Uniform {
        m: f64,
    },
    /// `±scale` with equal probability.
    Rademacher {
        #[serde(default = "one")]
        scale: f64,
    },
    /// Draws a table entry and flips its sign with probability ½.
    CustomSymmetricTable {
        values: Vec<f64>,
    },
    /// Every bias equals `value`. Asymmetric unless `value == 0`; for negative controls.
    Constant {
        value: f64,
    },
    /// Draws a table entry as is. Generally asymmetric; for negative controls.
    Table {
        values: Vec<f64>,
    },
    /// One law per affine layer `0..=L`.
    PerLayer {
        layers: Vec<BiasSpec>,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for BiasSpec {
    fn default() -> Self {
        BiasSpec::Zero
    }
}

impl BiasSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LipError::InvalidConfig(msg));
        match self {
            BiasSpec::Zero => Ok(()),
            BiasSpec::Gaussian { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => {
                bad(format!("gaussian bias needs sigma >= 0, got {sigma}"))
            }
            BiasSpec::Uniform { m } if !(m.is_finite() && *m >= 0.0) => bad(format!("uniform bias needs m >= 0, got {m}")),
            BiasSpec::Rademacher { scale } if !(scale.is_finite() && *scale >= 0.0) => {
                bad(format!("rademacher bias needs scale >= 0, got {scale}"))
            }
            BiasSpec::CustomSymmetricTable { values } | BiasSpec::Table { values } => {
                if values.is_empty() {
                    bad("bias table must not be empty".into())
                } else if values.iter().any(|v| !v.is_finite()) {
                    bad("bias table contains non-finite values".into())
                } else {
                    Ok(())
                }
            }
            BiasSpec::Constant { value } if !value.is_finite() => bad("constant bias must be finite".into()),
            BiasSpec::PerLayer { layers } => {
                if layers.iter().any(|l| matches!(l, BiasSpec::PerLayer { .. })) {
                    return bad("per-layer bias laws cannot nest".into());
                }
                layers.iter().try_for_each(BiasSpec::validate)
            }
            _ => Ok(()),
        }
    }

    /// Whether every law involved is symmetric about zero (the hypothesis of the
    /// isotropy and deep lower-bound results).
    pub fn is_symmetric(&self) -> bool {
        match self {
            BiasSpec::Zero
            | BiasSpec::Gaussian { .. }
            | BiasSpec::Uniform { .. }
            | BiasSpec::Rademacher { .. }
            | BiasSpec::CustomSymmetricTable { .. } => true,
            BiasSpec::Constant { value } => *value == 0.0,
            BiasSpec::Table { values } => {
                let mut pos: Vec<f64> = values.clone();
                let mut neg: Vec<f64> = values.iter().map(|v| -v).collect();
                pos.sort_by(f64::total_cmp);
                neg.sort_by(f64::total_cmp);
                pos == neg
            }
            BiasSpec::PerLayer { layers } => layers.iter().all(BiasSpec::is_symmetric),
        }
    }

    /// Whether every law has no atoms, so pre-activations at a fixed point are a.s. nonzero.
    pub fn is_continuous(&self) -> bool {
        match self {
            BiasSpec::Gaussian { sigma } => *sigma > 0.0,
            BiasSpec::Uniform { m } => *m > 0.0,
            BiasSpec::PerLayer { layers } => layers.iter().all(BiasSpec::is_continuous),
            _ => false,
        }
    }

    pub(crate) fn for_layer(&self, l: usize) -> &BiasSpec {
        match self {
            BiasSpec::PerLayer { layers } => &layers[l],
            other => other,
        }
    }

    /// One draw from this (non per-layer) law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            BiasSpec::Zero => 0.0,
            BiasSpec::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            BiasSpec::Uniform { m } => {
                if *m == 0.0 {
                    0.0
                } else {
                    rng.random_range(-*m..=*m)
                }
            }
            BiasSpec::Rademacher { scale } => {
                if rng.random::<bool>() {
                    *scale
                } else {
                    -*scale
                }
            }
            BiasSpec::CustomSymmetricTable { values } => {
                let v = values[rng.random_range(0..values.len())];
                if rng.random::<bool>() {
                    v
                } else {
                    -v
                }
            }
            BiasSpec::Constant { value } => *value,
            BiasSpec::Table { values } => values[rng.random_range(0..values.len())],
            BiasSpec::PerLayer { .. } => panic!("sample() called on a per-layer bias spec"),
        }
    }
}

/// Dimensions, bias law and seed of one random network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(default)]
    pub bias: BiasSpec,
    #[serde(default)]
    pub seed: u64,
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 || self.l == 0 {
            return Err(LipError::InvalidConfig(format!(
                "d, N and L must all be at least 1 (got d={}, N={}, L={})",
                self.d, self.n, self.l
            )));
        }
        self.bias.validate()?;
        if let BiasSpec::PerLayer { layers } = &self.bias {
            if layers.len() != self.l + 1 {
                return Err(LipError::InvalidConfig(format!(
                    "per-layer bias needs L+1 = {} laws, got {}",
                    self.l + 1,
                    layers.len()
                )));
            }
        }
        Ok(())
    }
}

/// Samples a network from `cfg`, seeded by `cfg.seed`.
pub fn sample_network(cfg: &InitConfig) -> Result<NetworkParams> {
    cfg.validate()?;
    let mut rng = TrialRng::seed_from_u64(cfg.seed);
    sample_network_with(cfg.d, &vec![cfg.n; cfg.l], &cfg.bias, &mut rng)
}

/// Samples a network with arbitrary hidden widths from an existing generator.
///
/// Layer `l` weights have variance `2 / (fan-out)` for hidden layers and `1`
/// for the output layer. Draw order: `W⁽⁰⁾` row-major, `b⁽⁰⁾`, `W⁽¹⁾`, …
pub fn sample_network_with<R: Rng + ?Sized>(
    d: usize,
    widths: &[usize],
    bias: &BiasSpec,
    rng: &mut R,
) -> Result<NetworkParams> {
    bias.validate()?;
    let layers = widths.len() + 1;
    if let BiasSpec::PerLayer { layers: laws } = bias {
        if laws.len() != layers {
            return Err(LipError::InvalidConfig(format!("per-layer bias needs {layers} laws, got {}", laws.len())));
        }
    }
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    let mut fan_in = d;
    for l in 0..layers {
        let hidden = l < widths.len();
        let fan_out = if hidden { widths[l] } else { 1 };
        let std = if hidden { (2.0 / fan_out as f64).sqrt() } else { 1.0 };
        let w = Matrix::from_fn(fan_out, fan_in, |_, _| std * rng.sample::<f64, _>(StandardNormal));
        let law = bias.for_layer(l);
        let b = (0..fan_out).map(|_| law.sample(rng)).collect();
        weights.push(w);
        biases.push(b);
        fan_in = fan_out;
    }
    NetworkParams::new(d, widths.to_vec(), weights, biases)
}

/// SplitMix64 finalizer: a bijection on `u64` with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial_index` under `master_seed`: `mix64(master ⊕ mix64(index))`.
/// For a fixed master seed this is a bijection of the trial index.
pub fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    mix64(master_seed ^ mix64(trial_index))
}

/// Independent generator for one trial.
pub fn derive_trial_rng(master_seed: u64, trial_index: u64) -> TrialRng {
    TrialRng::seed_from_u64(trial_seed(master_seed, trial_index))
}
