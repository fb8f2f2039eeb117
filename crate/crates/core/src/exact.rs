//! Exact Lipschitz constants of small networks by enumerating activation regions.
//!
//! The network is affine on every activation region, and the union of the open
//! full-dimensional regions has full measure, so the Lipschitz constant equals
//! the largest gradient norm over those regions. Regions are found by splitting
//! input space neuron by neuron, layer by layer: each split adds one halfspace
//! (in input coordinates) to the region's system and is pruned with
//! [`solve_margin`].

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{LipError, Result};
use crate::feasibility::{solve_full_dim, solve_margin, FeasibilityStatus, HalfspaceSystem, Relation, FULL_DIM_TOL};
use crate::linalg::{dot, norm2, Matrix};
use crate::net::{ActivationPattern, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnumerationMode {
    /// Open regions with nonempty interior only.
    FullDimOnly,
    /// Every pattern realized by at least one input, including thin loci.
    AllRealizable,
}

/// Work limits for one enumeration. Exceeding either is an error, never a truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_lp_calls: u64,
    pub max_time: Duration,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_lp_calls: 1_000_000, max_time: Duration::from_secs(60) }
    }
}

impl Budget {
    pub fn lp_calls(max_lp_calls: u64) -> Self {
        Budget { max_lp_calls, ..Budget::default() }
    }
}

/// A realized activation pattern with a point proving it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionCertificate {
    pub pattern: ActivationPattern,
    pub witness: Vec<f64>,
    /// Distance from the witness to the region boundary (0 for thin regions).
    pub margin: f64,
    pub full_dim: bool,
    /// Pre-activations of the last hidden layer on this region: `z = A x + c`.
    #[serde(skip)]
    pub affine: (Matrix, Vec<f64>),
}

#[derive(Debug, Clone, Serialize)]
pub struct Enumeration {
    pub regions: Vec<RegionCertificate>,
    pub lp_calls: u64,
}

/// Result of [`exact_lipschitz`].
#[derive(Debug, Clone, Serialize)]
pub struct LipResult {
    pub lip: f64,
    pub argmax_region: RegionCertificate,
    pub full_dim_region_count: usize,
    /// Number of realizable patterns, thin ones included, when requested.
    pub all_pattern_count: Option<usize>,
    /// Largest gradient norm over all realizable patterns, when requested.
    pub sup_all_patterns: Option<f64>,
    pub lp_calls: u64,
}

#[derive(Clone)]
struct Node {
    full_dim: bool,
    witness: Vec<f64>,
    margin: f64,
}

struct Explorer<'a> {
    net: &'a NetworkParams,
    mode: EnumerationMode,
    budget: Budget,
    started: Instant,
    lp_calls: u64,
    out: Vec<RegionCertificate>,
}

/// Enumerates regions depth first: layers in order, neurons in index order,
/// the "on" branch before the "off" branch.
pub fn enumerate_regions(net: &NetworkParams, mode: EnumerationMode, budget: Budget) -> Result<Enumeration> {
    let d = net.input_dim();
    let mut ex = Explorer { net, mode, budget, started: Instant::now(), lp_calls: 0, out: Vec::new() };
    let root = Node { full_dim: true, witness: vec![0.0; d], margin: 1.0 };
    let a = net.weights()[0].clone();
    let c = net.biases()[0].clone();
    let mut sys = HalfspaceSystem::new(d);
    let mut done = Vec::with_capacity(net.depth());
    let mut bits = Vec::new();
    ex.descend(0, &mut sys, &mut done, &mut bits, &a, &c, &root)?;
    Ok(Enumeration { regions: ex.out, lp_calls: ex.lp_calls })
}

impl Explorer<'_> {
    #[allow(clippy::too_many_arguments)]
    fn descend(
        &mut self,
        layer: usize,
        sys: &mut HalfspaceSystem,
        done: &mut Vec<Vec<bool>>,
        bits: &mut Vec<bool>,
        a: &Matrix,
        c: &[f64],
        node: &Node,
    ) -> Result<()> {
        let i = bits.len();
        if i == a.rows() {
            if layer + 1 == self.net.depth() {
                let mut layers = done.clone();
                layers.push(bits.clone());
                self.out.push(RegionCertificate {
                    pattern: ActivationPattern::new(layers),
                    witness: node.witness.clone(),
                    margin: node.margin,
                    full_dim: node.full_dim,
                    affine: (a.clone(), c.to_vec()),
                });
                return Ok(());
            }
            let (na, nc) = next_layer_map(self.net, layer + 1, a, c, bits);
            done.push(std::mem::take(bits));
            let mut next_bits = Vec::new();
            let res = self.descend(layer + 1, sys, done, &mut next_bits, &na, &nc, node);
            *bits = done.pop().expect("layer pushed above");
            return res;
        }
        let row = a.row(i);
        for on in [true, false] {
            let relation = if on { Relation::StrictGt } else { Relation::Le };
            sys.push(row.to_vec(), c[i], relation)?;
            let child = self.classify(sys, node, row, c[i], on);
            let outcome = match child {
                Ok(Some(child)) => {
                    bits.push(on);
                    let r = self.descend(layer, sys, done, bits, a, c, &child);
                    bits.pop();
                    r
                }
                Ok(None) => Ok(()),
                Err(e) => Err(e),
            };
            sys.pop();
            outcome?;
        }
        Ok(())
    }

    /// Status of the child obtained by adding `row` to the parent's system.
    fn classify(&mut self, sys: &HalfspaceSystem, parent: &Node, a: &[f64], b: f64, on: bool) -> Result<Option<Node>> {
        let norm = norm2(a);
        let v = dot(a, &parent.witness) + b;
        if norm <= 1e-13 {
            let holds = if on { b > 0.0 } else { b <= 0.0 };
            return Ok(holds.then(|| parent.clone()));
        }
        let slack = if on { v / norm } else { -v / norm };
        if parent.full_dim && slack > FULL_DIM_TOL {
            return Ok(Some(Node { full_dim: true, witness: parent.witness.clone(), margin: parent.margin.min(slack) }));
        }
        if !parent.full_dim {
            // A thin parent only has thin children; reuse its witness when it already qualifies.
            if (on && slack > FULL_DIM_TOL) || (!on && v <= 0.0) {
                return Ok(Some(parent.clone()));
            }
        }
        self.charge()?;
        let res = match self.mode {
            EnumerationMode::FullDimOnly => solve_full_dim(sys, 1.0)?,
            EnumerationMode::AllRealizable => solve_margin(sys, 1.0)?,
        };
        let keep = match res.status {
            FeasibilityStatus::FullDim => true,
            FeasibilityStatus::FeasibleLowerDim => self.mode == EnumerationMode::AllRealizable,
            FeasibilityStatus::Infeasible => false,
        };
        Ok(keep.then(|| Node {
            full_dim: res.status == FeasibilityStatus::FullDim,
            witness: res.witness.expect("feasible results carry a witness"),
            margin: res.margin,
        }))
    }

    fn charge(&mut self) -> Result<()> {
        self.lp_calls += 1;
        if self.lp_calls > self.budget.max_lp_calls {
            return Err(LipError::BudgetExceeded(format!(
                "region enumeration needs more than {} LP calls",
                self.budget.max_lp_calls
            )));
        }
        if self.lp_calls % 64 == 0 && self.started.elapsed() > self.budget.max_time {
            return Err(LipError::BudgetExceeded(format!(
                "region enumeration exceeded {:.1} s",
                self.budget.max_time.as_secs_f64()
            )));
        }
        Ok(())
    }
}

/// Pre-activation map of layer `layer` restricted to a region, given the
/// previous layer's map `(a, c)` and its activation bits.
fn next_layer_map(net: &NetworkParams, layer: usize, a: &Matrix, c: &[f64], bits: &[bool]) -> (Matrix, Vec<f64>) {
    let d = a.cols();
    let mut masked = Matrix::zeros(a.rows(), d);
    let mut mc = vec![0.0; c.len()];
    for (i, &on) in bits.iter().enumerate() {
        if on {
            for j in 0..d {
                masked.set(i, j, a.get(i, j));
            }
            mc[i] = c[i];
        }
    }
    let w = &net.weights()[layer];
    let na = w.matmul(&masked);
    let mut nc = w.matvec(&mc);
    nc.iter_mut().zip(&net.biases()[layer]).for_each(|(v, b)| *v += b);
    (na, nc)
}

/// Halfspace system (in input coordinates) of the inputs realizing `pattern`.
pub fn region_system(net: &NetworkParams, pattern: &ActivationPattern) -> Result<HalfspaceSystem> {
    pattern.check_shape(net.hidden_widths())?;
    let mut sys = HalfspaceSystem::new(net.input_dim());
    let mut a = net.weights()[0].clone();
    let mut c = net.biases()[0].clone();
    for l in 0..net.depth() {
        if l > 0 {
            let (na, nc) = next_layer_map(net, l, &a, &c, pattern.layer(l - 1));
            a = na;
            c = nc;
        }
        for (i, &on) in pattern.layer(l).iter().enumerate() {
            sys.push(a.row(i).to_vec(), c[i], if on { Relation::StrictGt } else { Relation::Le })?;
        }
    }
    Ok(sys)
}

/// Options for [`exact_lipschitz`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LipOptions {
    pub budget: Budget,
    /// Also enumerate thin regions and report their supremum and count.
    pub sup_all: bool,
}

/// `lip(Φ)` as the largest gradient norm over full-dimensional regions.
pub fn exact_lipschitz(net: &NetworkParams, opts: LipOptions) -> Result<LipResult> {
    let (full, all) = if opts.sup_all {
        let all = enumerate_regions(net, EnumerationMode::AllRealizable, opts.budget)?;
        let full: Vec<RegionCertificate> = all.regions.iter().filter(|r| r.full_dim).cloned().collect();
        (Enumeration { regions: full, lp_calls: all.lp_calls }, Some(all))
    } else {
        (enumerate_regions(net, EnumerationMode::FullDimOnly, opts.budget)?, None)
    };
    let (best, lip) = max_gradient(net, &full.regions)?;
    let argmax_region = best
        .cloned()
        .ok_or_else(|| LipError::Indeterminate("no full-dimensional region found".into()))?;
    let (all_pattern_count, sup_all_patterns) = match &all {
        Some(all) => (Some(all.regions.len()), Some(max_gradient(net, &all.regions)?.1)),
        None => (None, None),
    };
    Ok(LipResult {
        lip,
        argmax_region,
        full_dim_region_count: full.regions.len(),
        all_pattern_count,
        sup_all_patterns,
        lp_calls: full.lp_calls,
    })
}

fn max_gradient<'r>(net: &NetworkParams, regions: &'r [RegionCertificate]) -> Result<(Option<&'r RegionCertificate>, f64)> {
    let mut best = None;
    let mut lip = 0.0;
    for r in regions {
        let g = norm2(&net.pattern_gradient(&r.pattern)?);
        if best.is_none() || g > lip {
            best = Some(r);
            lip = g;
        }
    }
    Ok((best, lip))
}

/// Largest gradient norm over every realizable pattern, thin loci included.
pub fn sup_all_patterns(net: &NetworkParams, budget: Budget) -> Result<f64> {
    let all = enumerate_regions(net, EnumerationMode::AllRealizable, budget)?;
    Ok(max_gradient(net, &all.regions)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatternCount {
    pub count: usize,
    pub bound: f64,
    pub ok: bool,
}

/// `(eN/(d+1))^{L(d+1)}`, the bound on the number of realizable pattern tuples.
pub fn pattern_count_bound(d: usize, n: usize, l: usize) -> f64 {
    let base = std::f64::consts::E * n as f64 / (d as f64 + 1.0);
    base.powf((l * (d + 1)) as f64)
}

/// Counts realizable patterns and compares them with [`pattern_count_bound`].
pub fn pattern_count_check(net: &NetworkParams, budget: Budget) -> Result<PatternCount> {
    let d = net.input_dim();
    let n = net
        .constant_width()
        .ok_or_else(|| LipError::Precondition("the pattern-count bound needs constant hidden width".into()))?;
    if d + 2 >= n {
        return Err(LipError::Precondition(format!("the pattern-count bound requires d + 2 < N (got d={d}, N={n})")));
    }
    let count = enumerate_regions(net, EnumerationMode::AllRealizable, budget)?.regions.len();
    let bound = pattern_count_bound(d, n, net.depth());
    Ok(PatternCount { count, bound, ok: count as f64 <= bound })
}
