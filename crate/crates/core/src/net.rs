//! Fully connected scalar-output ReLU networks.
//!
//! A network with `L` hidden layers is the composition
//! `V⁽ᴸ⁾ ∘ relu ∘ V⁽ᴸ⁻¹⁾ ∘ … ∘ relu ∘ V⁽⁰⁾` of affine maps `V⁽ˡ⁾(x) = W⁽ˡ⁾x + b⁽ˡ⁾`.
//! On every set of inputs sharing one activation pattern the network is affine,
//! and its gradient there is the product `W⁽ᴸ⁾ D⁽ᴸ⁻¹⁾ W⁽ᴸ⁻¹⁾ ⋯ D⁽⁰⁾ W⁽⁰⁾`
//! with `D⁽ˡ⁾` the 0/1 diagonal of strictly positive pre-activations.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LipError, Result};
use crate::linalg::{norm2, Matrix};

/// Weights and biases of one network. Immutable once validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork", into = "RawNetwork")]
pub struct NetworkParams {
    input_dim: usize,
    hidden_widths: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    d: usize,
    hidden_widths: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl TryFrom<RawNetwork> for NetworkParams {
    type Error = LipError;

    fn try_from(raw: RawNetwork) -> Result<Self> {
        NetworkParams::new(raw.d, raw.hidden_widths, raw.weights, raw.biases)
    }
}

impl From<NetworkParams> for RawNetwork {
    fn from(net: NetworkParams) -> Self {
        RawNetwork { d: net.input_dim, hidden_widths: net.hidden_widths, weights: net.weights, biases: net.biases }
    }
}

impl NetworkParams {
    /// Validates shapes and finiteness.
    ///
    /// `weights[l]` maps layer `l` to layer `l + 1`: `weights[0]` is `N₁ × d`,
    /// the last one is `1 × N_L`. There is one bias vector per weight matrix.
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(LipError::Shape("input dimension d must be at least 1".into()));
        }
        if hidden_widths.is_empty() {
            return Err(LipError::Shape("a network needs at least one hidden layer (L >= 1)".into()));
        }
        if let Some(l) = hidden_widths.iter().position(|&w| w == 0) {
            return Err(LipError::Shape(format!("hidden layer {l} has width 0")));
        }
        let layers = hidden_widths.len() + 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(LipError::Shape(format!(
                "expected {layers} weight matrices and bias vectors, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        let mut fan_in = input_dim;
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            let fan_out = hidden_widths.get(l).copied().unwrap_or(1);
            if w.rows() != fan_out || w.cols() != fan_in {
                return Err(LipError::Shape(format!(
                    "W({l}) is {}x{} but must be {fan_out}x{fan_in}",
                    w.rows(),
                    w.cols()
                )));
            }
            if b.len() != fan_out {
                return Err(LipError::Shape(format!("b({l}) has length {} but must be {fan_out}", b.len())));
            }
            if !w.is_finite() || b.iter().any(|v| !v.is_finite()) {
                return Err(LipError::Shape(format!("layer {l} contains non-finite entries")));
            }
            fan_in = fan_out;
        }
        Ok(NetworkParams { input_dim, hidden_widths, weights, biases })
    }

    /// Convenience constructor from nested row arrays.
    pub fn from_rows(input_dim: usize, weights: &[Vec<Vec<f64>>], biases: Vec<Vec<f64>>) -> Result<Self> {
        let weights = weights.iter().map(|w| Matrix::from_rows(w)).collect::<Result<Vec<_>>>()?;
        let hidden_widths = weights[..weights.len().saturating_sub(1)].iter().map(Matrix::rows).collect();
        NetworkParams::new(input_dim, hidden_widths, weights, biases)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.hidden_widths.len()
    }

    /// `Some(N)` when every hidden layer has the same width.
    pub fn constant_width(&self) -> Option<usize> {
        let n = self.hidden_widths[0];
        self.hidden_widths.iter().all(|&w| w == n).then_some(n)
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn total_hidden(&self) -> usize {
        self.hidden_widths.iter().sum()
    }

    /// Copy with the output layer multiplied by `alpha`.
    pub fn with_scaled_output(&self, alpha: f64) -> NetworkParams {
        let mut net = self.clone();
        let last = net.weights.len() - 1;
        net.weights[last] = net.weights[last].scale(alpha);
        net.biases[last].iter_mut().for_each(|b| *b *= alpha);
        net
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(LipError::Shape(format!("input has length {} but d = {}", x.len(), self.input_dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LipError::InvalidConfig("input contains non-finite entries".into()));
        }
        Ok(())
    }

    /// Evaluates `Φ(x)` and records every intermediate vector.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, LayerTrace)> {
        self.check_input(x)?;
        let depth = self.depth();
        let mut post = Vec::with_capacity(depth + 1);
        let mut pre = Vec::with_capacity(depth);
        let mut bits = Vec::with_capacity(depth);
        let mut margin = f64::INFINITY;
        post.push(x.to_vec());
        for l in 0..depth {
            let mut z = self.weights[l].matvec(&post[l]);
            z.iter_mut().zip(&self.biases[l]).for_each(|(z, b)| *z += b);
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            bits.push(z.iter().map(|&v| v > 0.0).collect::<Vec<_>>());
            post.push(z.iter().map(|&v| v.max(0.0)).collect());
            pre.push(z);
        }
        let output = self.weights[depth].matvec(&post[depth])[0] + self.biases[depth][0];
        let trace = LayerTrace {
            post_activations: post,
            pre_activations: pre,
            pattern: ActivationPattern { layers: bits },
            boundary_margin: margin,
        };
        Ok((output, trace))
    }

    /// Gradient selected by the activation pattern at `x`, with the boundary margin.
    ///
    /// When the margin is positive this is the true gradient of `Φ` at `x`; at
    /// margin zero it is the one-sided selection given by the `> 0` convention.
    pub fn gradient_at(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (_, trace) = self.forward(x)?;
        Ok((self.product_row(&trace.pattern), trace.boundary_margin))
    }

    /// `(W⁽ᴸ⁾ diag(s⁽ᴸ⁻¹⁾) W⁽ᴸ⁻¹⁾ ⋯ diag(s⁽⁰⁾) W⁽⁰⁾)ᵀ` for an arbitrary pattern.
    pub fn pattern_gradient(&self, pattern: &ActivationPattern) -> Result<Vec<f64>> {
        pattern.check_shape(&self.hidden_widths)?;
        Ok(self.product_row(pattern))
    }

    /// Backward row-vector sweep shared by every gradient routine so that they
    /// agree bit for bit.
    fn product_row(&self, pattern: &ActivationPattern) -> Vec<f64> {
        let depth = self.depth();
        let mut row = self.weights[depth].row(0).to_vec();
        for l in (0..depth).rev() {
            row.iter_mut().zip(&pattern.layers[l]).for_each(|(r, &on)| {
                if !on {
                    *r = 0.0;
                }
            });
            row = self.weights[l].vecmat(&row);
        }
        row
    }

    /// The network with every ReLU replaced by the identity: its gradient row
    /// `W⁽ᴸ⁾⋯W⁽⁰⁾` and its Lipschitz constant.
    pub fn linear_collapse(&self) -> (Vec<f64>, f64) {
        let row = self.product_row(&ActivationPattern::all(&self.hidden_widths, true));
        let lip = norm2(&row);
        (row, lip)
    }

    /// Value of `Φ` and its gradient along the whole pattern, used by tests and estimators.
    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>, LayerTrace)> {
        let (value, trace) = self.forward(x)?;
        let grad = self.product_row(&trace.pattern);
        Ok((value, grad, trace))
    }

    /// Spectral norm of `W⁽ˡ⁾`.
    pub fn layer_spectral_norm(&self, l: usize) -> f64 {
        self.weights[l].singular_value_extremes().1
    }
}

/// One 0/1 bit per hidden neuron, layer by layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationPattern {
    layers: Vec<Vec<bool>>,
}

impl ActivationPattern {
    pub fn new(layers: Vec<Vec<bool>>) -> Self {
        ActivationPattern { layers }
    }

    pub fn all(widths: &[usize], on: bool) -> Self {
        ActivationPattern { layers: widths.iter().map(|&w| vec![on; w]).collect() }
    }

    /// Parses `"101|01"`-style strings (layers separated by `|`).
    pub fn parse(s: &str) -> Result<Self> {
        let layers = s
            .split('|')
            .map(|layer| {
                layer
                    .chars()
                    .map(|c| match c {
                        '1' => Ok(true),
                        '0' => Ok(false),
                        other => Err(LipError::InvalidConfig(format!("pattern character {other:?} is not 0 or 1"))),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ActivationPattern { layers })
    }

    pub fn layers(&self) -> &[Vec<bool>] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &[bool] {
        &self.layers[l]
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Flat index of a bit, counting neurons layer by layer.
    pub fn bit_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn get_flat(&self, idx: usize) -> bool {
        let (l, i) = self.locate(idx);
        self.layers[l][i]
    }

    pub fn flip_flat(&mut self, idx: usize) {
        let (l, i) = self.locate(idx);
        self.layers[l][i] = !self.layers[l][i];
    }

    fn locate(&self, mut idx: usize) -> (usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if idx < layer.len() {
                return (l, idx);
            }
            idx -= layer.len();
        }
        panic!("bit index out of range");
    }

    pub fn check_shape(&self, widths: &[usize]) -> Result<()> {
        let ok = self.layers.len() == widths.len() && self.layers.iter().zip(widths).all(|(l, &w)| l.len() == w);
        if ok {
            Ok(())
        } else {
            let got: Vec<usize> = self.layers.iter().map(Vec::len).collect();
            Err(LipError::Shape(format!("pattern layer sizes {got:?} do not match hidden widths {widths:?}")))
        }
    }
}

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                f.write_str("|")?;
            }
            for &b in layer {
                f.write_str(if b { "1" } else { "0" })?;
            }
        }
        Ok(())
    }
}

impl Serialize for ActivationPattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let bits: Vec<Vec<u8>> = self.layers.iter().map(|l| l.iter().map(|&b| b as u8).collect()).collect();
        bits.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ActivationPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let bits: Vec<Vec<u8>> = Vec::deserialize(d)?;
        let layers = bits
            .into_iter()
            .map(|l| {
                l.into_iter()
                    .map(|b| match b {
                        0 => Ok(false),
                        1 => Ok(true),
                        _ => Err(serde::de::Error::custom("pattern entries must be 0 or 1")),
                    })
                    .collect()
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(ActivationPattern { layers })
    }
}

/// Everything computed during one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// `x⁽⁰⁾ = x, x⁽¹⁾, …, x⁽ᴸ⁾`.
    pub post_activations: Vec<Vec<f64>>,
    /// `z⁽ˡ⁾ = W⁽ˡ⁾x⁽ˡ⁾ + b⁽ˡ⁾` for the hidden layers.
    pub pre_activations: Vec<Vec<f64>>,
    pub pattern: ActivationPattern,
    /// Smallest `|z⁽ˡ⁾ᵢ|` over all hidden neurons.
    pub boundary_margin: f64,
}

/// Small hand-built networks whose Lipschitz constants are known in closed form.
pub mod fixtures {
    use super::*;

    /// Shallow `ℝ² → ℝ` net with `W⁽⁰⁾ = [[1,-1],[-1,1],[2,-1]]`, `W⁽¹⁾ = [-1,1,1]`, zero biases.
    pub fn two_vs_five() -> NetworkParams {
        NetworkParams::from_rows(
            2,
            &[vec![vec![1.0, -1.0], vec![-1.0, 1.0], vec![2.0, -1.0]], vec![vec![-1.0, 1.0, 1.0]]],
            vec![vec![0.0; 3], vec![0.0]],
        )
        .unwrap()
    }

    /// `relu(x₁+x₂) − relu(x₁) − relu(x₂)`, whose linear collapse vanishes.
    pub fn collapse_vanishes() -> NetworkParams {
        NetworkParams::from_rows(
            2,
            &[vec![vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![1.0, -1.0, -1.0]]],
            vec![vec![0.0; 3], vec![0.0]],
        )
        .unwrap()
    }

    /// `relu(-relu(x))`, identically zero.
    pub fn dead_deep() -> NetworkParams {
        NetworkParams::from_rows(1, &[vec![vec![1.0]], vec![vec![-1.0]], vec![vec![1.0]]], vec![vec![0.0], vec![0.0], vec![0.0]])
            .unwrap()
    }
}
