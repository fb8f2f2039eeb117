//! Feasibility and full-dimensionality of small systems of linear inequalities.
//!
//! Each row reads `aᵢ·x + bᵢ > 0` (strict) or `aᵢ·x + bᵢ ≤ 0`. Rows are scaled
//! to unit normals, so the margin below is a Euclidean distance: the radius of
//! the largest ball (capped) that fits inside the open solution set.
//!
//! Two margin programs decide the status:
//!
//! * every row with slack `t`  → `t* > τ` means the set has interior (`FullDim`);
//! * strict rows with slack `t`, `≤` rows exact → `t* > τ` means the set is
//!   nonempty but thin (`FeasibleLowerDim`); otherwise `Infeasible`.

use crate::error::{LipError, Result};
use crate::linalg::{dot, norm2};

/// Separates full-dimensional regions from degenerate ones.
pub const FULL_DIM_TOL: f64 = 1e-8;

/// Rows whose normal is shorter than this are treated as constants.
const ZERO_ROW: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `a·x + b > 0`
    StrictGt,
    /// `a·x + b ≤ 0`
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
    pub relation: Relation,
}

impl Halfspace {
    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) + self.b
    }

    /// Whether `x` satisfies the row up to `ε_lp = 1e-9 (1 + ‖a‖)`.
    pub fn is_satisfied_by(&self, x: &[f64]) -> bool {
        let tol = 1e-9 * (1.0 + norm2(&self.a));
        let v = self.value(x);
        match self.relation {
            Relation::StrictGt => v > -tol,
            Relation::Le => v <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HalfspaceSystem {
    dim: usize,
    rows: Vec<Halfspace>,
}

impl HalfspaceSystem {
    pub fn new(dim: usize) -> Self {
        HalfspaceSystem { dim, rows: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[Halfspace] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, a: Vec<f64>, b: f64, relation: Relation) -> Result<()> {
        if a.len() != self.dim {
            return Err(LipError::Shape(format!("row has {} coefficients, system has dimension {}", a.len(), self.dim)));
        }
        if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(LipError::InvalidConfig("halfspace coefficients must be finite".into()));
        }
        self.rows.push(Halfspace { a, b, relation });
        Ok(())
    }

    pub fn pop(&mut self) -> Option<Halfspace> {
        self.rows.pop()
    }

    pub fn with_row(&self, a: Vec<f64>, b: f64, relation: Relation) -> Result<Self> {
        let mut s = self.clone();
        s.push(a, b, relation)?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityStatus {
    FullDim,
    FeasibleLowerDim,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    /// Present unless infeasible.
    pub witness: Option<Vec<f64>>,
    /// Smallest normalized slack of all rows at the witness (0 unless `FullDim`), capped.
    pub margin: f64,
    /// Smallest normalized slack of the strict rows alone at the witness, capped.
    pub strict_margin: f64,
}

impl FeasibilityResult {
    fn infeasible() -> Self {
        FeasibilityResult { status: FeasibilityStatus::Infeasible, witness: None, margin: 0.0, strict_margin: 0.0 }
    }

    pub fn is_feasible(&self) -> bool {
        self.status != FeasibilityStatus::Infeasible
    }
}

struct NormalizedRow {
    a: Vec<f64>,
    b: f64,
    strict: bool,
}

/// Classifies `sys` and returns a witness with its margin. `cap` bounds the margin LP.
pub fn solve_margin(sys: &HalfspaceSystem, cap: f64) -> Result<FeasibilityResult> {
    solve(sys, cap, true)
}

/// Like [`solve_margin`] but only separates `FullDim` from everything else;
/// lower-dimensional systems are reported as `Infeasible`. Saves the second LP.
pub(crate) fn solve_full_dim(sys: &HalfspaceSystem, cap: f64) -> Result<FeasibilityResult> {
    solve(sys, cap, false)
}

fn solve(sys: &HalfspaceSystem, cap: f64, classify_thin: bool) -> Result<FeasibilityResult> {
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(LipError::InvalidConfig(format!("margin cap must be positive, got {cap}")));
    }
    let d = sys.dim;
    let mut rows = Vec::with_capacity(sys.rows.len());
    for r in &sys.rows {
        let n = norm2(&r.a);
        let strict = r.relation == Relation::StrictGt;
        if n <= ZERO_ROW {
            // Constant row: either everywhere true or nowhere true.
            let holds = if strict { r.b > 0.0 } else { r.b <= 0.0 };
            if !holds {
                return Ok(FeasibilityResult::infeasible());
            }
            continue;
        }
        rows.push(NormalizedRow { a: r.a.iter().map(|v| v / n).collect(), b: r.b / n, strict });
    }

    let full = margin_lp(d, &rows, cap, true)?;
    let Some(x) = full else {
        return Ok(FeasibilityResult::infeasible());
    };
    let (all, strict_only) = slacks(&rows, &x, cap);
    if all > FULL_DIM_TOL {
        return Ok(FeasibilityResult {
            status: FeasibilityStatus::FullDim,
            witness: Some(x),
            margin: all,
            strict_margin: strict_only,
        });
    }
    if !classify_thin {
        return Ok(FeasibilityResult::infeasible());
    }

    let Some(x) = margin_lp(d, &rows, cap, false)? else {
        return Ok(FeasibilityResult::infeasible());
    };
    let (_, strict_only) = slacks(&rows, &x, cap);
    if strict_only <= FULL_DIM_TOL {
        return Ok(FeasibilityResult::infeasible());
    }
    for r in rows.iter().filter(|r| !r.strict) {
        let v = dot(&r.a, &x) + r.b;
        if v > 1e-9 * (1.0 + norm2(&x)) {
            return Err(LipError::Indeterminate(format!("witness violates a non-strict row by {v:e}")));
        }
    }
    Ok(FeasibilityResult {
        status: FeasibilityStatus::FeasibleLowerDim,
        witness: Some(x),
        margin: 0.0,
        strict_margin: strict_only,
    })
}

/// `(min slack over all rows, min slack over strict rows)` at `x`, both capped.
fn slacks(rows: &[NormalizedRow], x: &[f64], cap: f64) -> (f64, f64) {
    let mut all = cap;
    let mut strict = cap;
    for r in rows {
        let v = dot(&r.a, x) + r.b;
        if r.strict {
            strict = strict.min(v);
            all = all.min(v);
        } else {
            all = all.min(-v);
        }
    }
    (all, strict)
}

/// Maximizes `t ∈ [0, cap]` subject to `â·x + b̂ ≥ t` on strict rows and
/// `â·x + b̂ ≤ -t` (when `slack_le`) or `≤ 0` on the others. Returns the
/// maximizing `x`, or `None` when even `t = 0` is infeasible.
fn margin_lp(d: usize, rows: &[NormalizedRow], cap: f64, slack_le: bool) -> Result<Option<Vec<f64>>> {
    // Variables: x⁺ (d), x⁻ (d), t.
    let n = 2 * d + 1;
    let mut a = Vec::with_capacity((rows.len() + 1) * n);
    let mut rhs = Vec::with_capacity(rows.len() + 1);
    for r in rows {
        let sign = if r.strict { -1.0 } else { 1.0 };
        a.extend(r.a.iter().map(|v| sign * v));
        a.extend(r.a.iter().map(|v| -sign * v));
        a.push(if r.strict || slack_le { 1.0 } else { 0.0 });
        rhs.push(if r.strict { r.b } else { -r.b });
    }
    a.extend(std::iter::repeat(0.0).take(2 * d));
    a.push(1.0);
    rhs.push(cap);
    let mut objective = vec![0.0; n];
    objective[n - 1] = 1.0;
    match simplex_max(&a, &rhs, &objective)? {
        LpOutcome::Optimal(y) => Ok(Some((0..d).map(|j| y[j] - y[d + j]).collect())),
        LpOutcome::Infeasible => Ok(None),
    }
}

enum LpOutcome {
    Optimal(Vec<f64>),
    Infeasible,
}

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-11;

/// Dense two-phase tableau simplex with Bland's rule:
/// maximize `c·y` subject to `A y ≤ r`, `y ≥ 0` (`A` row-major, `m × n`).
fn simplex_max(a: &[f64], rhs: &[f64], c: &[f64]) -> Result<LpOutcome> {
    let m = rhs.len();
    let n = c.len();
    let n_art = rhs.iter().filter(|&&r| r < 0.0).count();
    // Columns: structural, slack/surplus, artificial, then the right-hand side.
    let cols = n + m + n_art;
    let width = cols + 1;
    let mut t = vec![0.0; m * width];
    let mut basis = vec![0usize; m];
    let mut art = n + m;
    for i in 0..m {
        let row = &mut t[i * width..(i + 1) * width];
        let flip = rhs[i] < 0.0;
        let s = if flip { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = s * a[i * n + j];
        }
        row[n + i] = s;
        row[cols] = s * rhs[i];
        if flip {
            row[art] = 1.0;
            basis[i] = art;
            art += 1;
        } else {
            basis[i] = n + i;
        }
    }
    let scale = 1.0 + rhs.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
    let max_iter = 50 * (m + cols) + 1000;
    let mut tab = Tableau { t, width, m, cols, basis, iterations: 0, max_iter };

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[n + m..].iter_mut().for_each(|v| *v = -1.0);
        tab.optimize(&phase1, cols)?;
        let infeas: f64 = (0..m).filter(|&i| tab.basis[i] >= n + m).map(|i| tab.rhs(i)).sum();
        if infeas > 1e-9 * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive remaining (zero-level) artificials out of the basis.
        for i in 0..m {
            if tab.basis[i] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| tab.at(i, j).abs() > 1e-9) {
                    tab.pivot(i, j);
                }
            }
        }
    }
    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(c);
    tab.optimize(&phase2, n + m)?;
    let mut y = vec![0.0; n];
    for i in 0..m {
        if tab.basis[i] < n {
            y[tab.basis[i]] = tab.rhs(i);
        }
    }
    Ok(LpOutcome::Optimal(y))
}

struct Tableau {
    t: Vec<f64>,
    width: usize,
    m: usize,
    cols: usize,
    basis: Vec<usize>,
    iterations: usize,
    max_iter: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.t[i * self.width + self.cols]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.t[r * w + e];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[e];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[e] = 0.0;
            }
        }
        self.basis[r] = e;
    }

    /// Maximizes `cost · y` over columns `< allowed`; basic columns must be canonical.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        // Reduced costs, kept current across pivots.
        let mut z = vec![0.0; self.cols];
        z.copy_from_slice(&cost[..self.cols]);
        let mut basic = vec![false; self.cols];
        for i in 0..self.m {
            let b = self.basis[i];
            basic[b] = true;
            let cb = cost[b];
            if cb != 0.0 {
                for (zj, &v) in z.iter_mut().zip(&self.t[i * self.width..i * self.width + self.cols]) {
                    *zj -= cb * v;
                }
            }
        }
        // Columns whose ratio test came back empty since the last pivot. Both
        // phases are bounded, so such a column only looks improving by roundoff.
        let mut stalled = vec![false; self.cols];
        loop {
            if self.iterations >= self.max_iter {
                return Err(LipError::Indeterminate(format!("simplex hit its iteration limit ({})", self.max_iter)));
            }
            // Bland: lowest-index column with positive reduced cost enters.
            let mut entering = None;
            for j in 0..allowed {
                if basic[j] || stalled[j] || z[j] <= COST_EPS {
                    continue;
                }
                // The running row drifts; confirm against the tableau before entering.
                let mut reduced = cost[j];
                let mut scale = 1.0f64;
                for i in 0..self.m {
                    let v = self.at(i, j);
                    if v != 0.0 {
                        reduced -= cost[self.basis[i]] * v;
                        scale = scale.max(v.abs());
                    }
                }
                z[j] = reduced;
                if reduced > COST_EPS * scale {
                    entering = Some(j);
                    break;
                }
            }
            let Some(e) = entering else {
                return Ok(());
            };
            // Ratio test; ties broken by the lowest basic index.
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let v = self.at(i, e);
                if v > PIVOT_EPS {
                    let ratio = self.rhs(i).max(0.0) / v;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                stalled[e] = true;
                continue;
            };
            stalled.iter_mut().for_each(|s| *s = false);
            basic[self.basis[r]] = false;
            self.pivot(r, e);
            basic[e] = true;
            let f = z[e];
            for (zj, &v) in z.iter_mut().zip(&self.t[r * self.width..r * self.width + self.cols]) {
                *zj -= f * v;
            }
            z[e] = 0.0;
            self.iterations += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sys(dim: usize, rows: &[(&[f64], f64, Relation)]) -> HalfspaceSystem {
        let mut s = HalfspaceSystem::new(dim);
        for (a, b, rel) in rows {
            s.push(a.to_vec(), *b, *rel).unwrap();
        }
        s
    }

    use Relation::{Le, StrictGt};

    #[test]
    fn positive_half_line() {
        let r = solve_margin(&sys(1, &[(&[1.0], 0.0, StrictGt)]), 1.0).unwrap();
        assert_eq!(r.status, FeasibilityStatus::FullDim);
        assert!((r.witness.unwrap()[0] - 1.0).abs() < 1e-12);
        assert!((r.margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_strict_rows() {
        let r = solve_margin(&sys(1, &[(&[1.0], 0.0, StrictGt), (&[-1.0], 0.0, StrictGt)]), 1.0).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Infeasible);
        assert!(r.witness.is_none());
    }

    #[test]
    fn strict_against_nonstrict() {
        let r = solve_margin(&sys(2, &[(&[1.0, 0.0], 0.0, StrictGt), (&[1.0, 0.0], 0.0, Le)]), 1.0).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Infeasible);
    }

    #[test]
    fn line_is_lower_dimensional() {
        let r = solve_margin(&sys(2, &[(&[1.0, 0.0], 0.0, Le), (&[-1.0, 0.0], 0.0, Le)]), 1.0).unwrap();
        assert_eq!(r.status, FeasibilityStatus::FeasibleLowerDim);
        assert!(r.witness.unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn ray_inside_line_is_lower_dimensional() {
        // x₁ = 0 and x₂ > 3.
        let r = solve_margin(
            &sys(2, &[(&[1.0, 0.0], 0.0, Le), (&[-1.0, 0.0], 0.0, Le), (&[0.0, 1.0], -3.0, StrictGt)]),
            1.0,
        )
        .unwrap();
        assert_eq!(r.status, FeasibilityStatus::FeasibleLowerDim);
        let w = r.witness.unwrap();
        assert!(w[0].abs() < 1e-12 && w[1] > 3.0);
    }

    #[test]
    fn constant_rows() {
        let open = solve_margin(&sys(2, &[(&[0.0, 0.0], 0.0, Le), (&[1.0, 1.0], 0.0, StrictGt)]), 1.0).unwrap();
        assert_eq!(open.status, FeasibilityStatus::FullDim);
        let dead = solve_margin(&sys(2, &[(&[0.0, 0.0], 0.0, StrictGt)]), 1.0).unwrap();
        assert_eq!(dead.status, FeasibilityStatus::Infeasible);
        let empty = solve_margin(&HalfspaceSystem::new(3), 1.0).unwrap();
        assert_eq!(empty.status, FeasibilityStatus::FullDim);
        assert_eq!(empty.margin, 1.0);
    }

    #[test]
    fn far_triangle_margin_is_inradius() {
        // Triangle x > 100, y > 100, x + y <= 203: inradius (3 / (2 + √2)).
        let s = sys(2, &[(&[1.0, 0.0], -100.0, StrictGt), (&[0.0, 1.0], -100.0, StrictGt), (&[1.0, 1.0], -203.0, Le)]);
        let r = solve_margin(&s, 10.0).unwrap();
        assert_eq!(r.status, FeasibilityStatus::FullDim);
        assert!((r.margin - 3.0 / (2.0 + 2f64.sqrt())).abs() < 1e-9);
        let w = r.witness.unwrap();
        assert!(s.rows().iter().all(|h| h.is_satisfied_by(&w)));
    }

    #[test]
    fn bad_cap_rejected() {
        assert!(solve_margin(&HalfspaceSystem::new(1), 0.0).is_err());
    }

    fn arb_system() -> impl Strategy<Value = HalfspaceSystem> {
        prop::collection::vec((prop::array::uniform2(-1.0f64..1.0), -1.0f64..1.0, any::<bool>()), 1..7).prop_map(|rows| {
            let mut s = HalfspaceSystem::new(2);
            for (a, b, strict) in rows {
                s.push(a.to_vec(), b, if strict { StrictGt } else { Le }).unwrap();
            }
            s
        })
    }

    proptest! {
        #[test]
        fn witness_is_sound(s in arb_system()) {
            let r = solve_margin(&s, 1.0).unwrap();
            if let Some(w) = &r.witness {
                for h in s.rows() {
                    prop_assert!(h.is_satisfied_by(w));
                }
            }
        }

        #[test]
        fn adding_rows_never_restores_feasibility(s in arb_system(), a in prop::array::uniform2(-1.0f64..1.0), b in -1.0f64..1.0, strict in any::<bool>()) {
            let before = solve_margin(&s, 1.0).unwrap();
            let after = solve_margin(&s.with_row(a.to_vec(), b, if strict { StrictGt } else { Le }).unwrap(), 1.0).unwrap();
            if before.status == FeasibilityStatus::Infeasible {
                prop_assert_eq!(after.status, FeasibilityStatus::Infeasible);
            }
            if before.status != FeasibilityStatus::FullDim {
                prop_assert!(after.status != FeasibilityStatus::FullDim);
            }
        }
    }
}
