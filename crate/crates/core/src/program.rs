//! Solver-agnostic representation of the convex programs built elsewhere in
//! the crate, plus residual/KKT evaluation against a candidate point.
//!
//! A [`QuadProgram`] is
//!
//! ```text
//! minimize    1/2 sum_i d_i x_i^2  +  q' x  +  c
//! subject to  A_eq x  = b_eq
//!             A_le x <= b_le
//!             lo <= x <= hi          (entrywise, +-inf allowed)
//!             x_p^2 + x_q^2 <= x_u * x_w   for each registered cone
//! ```
//!
//! The quadratic form is diagonal; that is all the generator costs and
//! consensus penalty terms ever need. Rows carry a [`RowLabel`] so that
//! residual reports and infeasibility hints can name the agent and hour a
//! constraint belongs to.
//!
//! Backends implement [`ConicSolver`]. The canonical lowering order for
//! backends that want a single stacked constraint matrix is given by
//! [`QuadProgram::row_layout`]: equality rows, inequality rows, finite lower
//! bounds, finite upper bounds, then one 4-row second-order-cone block per
//! registered cone. [`kkt_report`] assumes dual variables in that order.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Index of a decision variable within one [`QuadProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// What a constraint row means, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Hourly active-power balance of one agent.
    Balance,
    /// Hourly reactive-power balance of one agent.
    ReactiveBalance,
    /// Signed trade equals buy part minus sell part.
    SplitDef,
    /// Storage state-of-charge recursion.
    StorageDynamics,
    /// Nodal flow conservation.
    NodalFlow,
    /// Squared-voltage drop along a line.
    VoltageDrop,
    /// Reference-voltage anchor.
    Anchor,
    /// Generator ramp limit.
    Ramp,
    /// Pairwise coupling equality in the monolithic program.
    Coupling,
    /// Anything else.
    Other,
}

/// Row provenance: which agent/hour produced it. `mg == u32::MAX` when the
/// row is not agent-specific.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowLabel {
    pub kind: RowKind,
    pub mg: u32,
    pub hour: u32,
}

impl RowLabel {
    pub fn new(kind: RowKind, mg: usize, hour: usize) -> Self {
        Self {
            kind,
            mg: mg as u32,
            hour: hour as u32,
        }
    }

    pub fn bare(kind: RowKind) -> Self {
        Self {
            kind,
            mg: u32::MAX,
            hour: u32::MAX,
        }
    }
}

/// Sparse linear rows stored as parallel arrays (CSR-like).
#[derive(Debug, Clone, Default)]
pub struct RowBlock {
    starts: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    pub rhs: Vec<f64>,
    pub labels: Vec<RowLabel>,
}

impl RowBlock {
    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    fn push(&mut self, terms: &[(VarId, f64)], rhs: f64, label: RowLabel) {
        if self.starts.is_empty() {
            self.starts.push(0);
        }
        for &(v, c) in terms {
            self.cols.push(v.0);
            self.vals.push(c);
        }
        self.starts.push(self.cols.len());
        self.rhs.push(rhs);
        self.labels.push(label);
    }

    /// Terms of row `i` as `(column, coefficient)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.starts[i];
        let hi = self.starts[i + 1];
        self.cols[lo..hi]
            .iter()
            .copied()
            .zip(self.vals[lo..hi].iter().copied())
    }

    fn dot(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).map(|(c, v)| v * x[c]).sum()
    }
}

/// A rotated-cone triple-plus-one: `p^2 + q^2 <= u * w`.
#[derive(Debug, Clone, Copy)]
pub struct ConeRef {
    pub p: VarId,
    pub q: VarId,
    pub u: VarId,
    pub w: VarId,
}

/// Diagonal-quadratic program with linear rows, bounds and rotated cones.
#[derive(Debug, Clone, Default)]
pub struct QuadProgram {
    quad_diag: Vec<f64>,
    lin: Vec<f64>,
    pub constant: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    pub eq: RowBlock,
    pub le: RowBlock,
    pub cones: Vec<ConeRef>,
}

impl QuadProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.lin.len()
    }

    /// Adds a free variable and returns its id.
    pub fn add_var(&mut self) -> VarId {
        self.quad_diag.push(0.0);
        self.lin.push(0.0);
        self.lower.push(f64::NEG_INFINITY);
        self.upper.push(f64::INFINITY);
        VarId(self.lin.len() - 1)
    }

    pub fn add_bounded_var(&mut self, lo: f64, hi: f64) -> VarId {
        let v = self.add_var();
        self.set_bounds(v, lo, hi);
        v
    }

    pub fn set_bounds(&mut self, v: VarId, lo: f64, hi: f64) {
        debug_assert!(lo <= hi);
        self.lower[v.0] = lo;
        self.upper[v.0] = hi;
    }

    pub fn bounds(&self, v: VarId) -> (f64, f64) {
        (self.lower[v.0], self.upper[v.0])
    }

    /// Adds `coeff/2 * x^2` to the objective.
    pub fn add_quad(&mut self, v: VarId, coeff: f64) {
        self.quad_diag[v.0] += coeff;
    }

    /// Adds `coeff * x` to the objective.
    pub fn add_lin(&mut self, v: VarId, coeff: f64) {
        self.lin[v.0] += coeff;
    }

    pub fn quad_diag(&self) -> &[f64] {
        &self.quad_diag
    }

    pub fn lin(&self) -> &[f64] {
        &self.lin
    }

    pub fn lin_mut(&mut self) -> &mut [f64] {
        &mut self.lin
    }

    pub fn add_eq(&mut self, terms: &[(VarId, f64)], rhs: f64, label: RowLabel) {
        self.eq.push(terms, rhs, label);
    }

    /// `terms . x <= rhs`.
    pub fn add_le(&mut self, terms: &[(VarId, f64)], rhs: f64, label: RowLabel) {
        self.le.push(terms, rhs, label);
    }

    pub fn add_cone(&mut self, p: VarId, q: VarId, u: VarId, w: VarId) {
        self.cones.push(ConeRef { p, q, u, w });
    }

    /// Objective value at `x`, including the constant term.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        let mut obj = self.constant;
        for i in 0..self.n_vars() {
            obj += 0.5 * self.quad_diag[i] * x[i] * x[i] + self.lin[i] * x[i];
        }
        obj
    }

    /// Concatenates `other`'s variables and constraints into `self`,
    /// returning the variable-index offset assigned to `other`'s block.
    pub fn append(&mut self, other: &QuadProgram) -> usize {
        let offset = self.n_vars();
        self.quad_diag.extend_from_slice(&other.quad_diag);
        self.lin.extend_from_slice(&other.lin);
        self.lower.extend_from_slice(&other.lower);
        self.upper.extend_from_slice(&other.upper);
        self.constant += other.constant;
        for i in 0..other.eq.len() {
            let terms: Vec<(VarId, f64)> = other
                .eq
                .row(i)
                .map(|(c, v)| (VarId(c + offset), v))
                .collect();
            self.eq.push(&terms, other.eq.rhs[i], other.eq.labels[i]);
        }
        for i in 0..other.le.len() {
            let terms: Vec<(VarId, f64)> = other
                .le
                .row(i)
                .map(|(c, v)| (VarId(c + offset), v))
                .collect();
            self.le.push(&terms, other.le.rhs[i], other.le.labels[i]);
        }
        for c in &other.cones {
            self.cones.push(ConeRef {
                p: VarId(c.p.0 + offset),
                q: VarId(c.q.0 + offset),
                u: VarId(c.u.0 + offset),
                w: VarId(c.w.0 + offset),
            });
        }
        offset
    }

    /// Worst equality residual among rows of the given kind.
    pub fn residual_of_kind(&self, x: &[f64], kind: RowKind) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.eq.len() {
            if self.eq.labels[i].kind == kind {
                worst = math::max(worst, math::abs(self.eq.dot(i, x) - self.eq.rhs[i]));
            }
        }
        worst
    }

    /// Canonical stacked-row layout used by backends and by [`kkt_report`].
    pub fn row_layout(&self) -> RowLayout {
        let mut bound_lo = Vec::new();
        let mut bound_hi = Vec::new();
        for i in 0..self.n_vars() {
            if self.lower[i].is_finite() {
                bound_lo.push(i);
            }
        }
        for i in 0..self.n_vars() {
            if self.upper[i].is_finite() {
                bound_hi.push(i);
            }
        }
        RowLayout {
            n_eq: self.eq.len(),
            n_le: self.le.len(),
            bound_lo,
            bound_hi,
            n_cones: self.cones.len(),
        }
    }

    /// Worst violations of every constraint class at `x`.
    pub fn residuals_at(&self, x: &[f64]) -> Residuals {
        let mut r = Residuals::default();
        for i in 0..self.eq.len() {
            let v = math::abs(self.eq.dot(i, x) - self.eq.rhs[i]);
            if v > r.eq {
                r.eq = v;
                r.worst_eq = Some(self.eq.labels[i]);
            }
        }
        for i in 0..self.le.len() {
            let v = self.le.dot(i, x) - self.le.rhs[i];
            if v > r.le {
                r.le = v;
            }
        }
        for i in 0..self.n_vars() {
            r.bounds = math::max(r.bounds, self.lower[i] - x[i]);
            r.bounds = math::max(r.bounds, x[i] - self.upper[i]);
        }
        for c in &self.cones {
            let gap = x[c.p.0] * x[c.p.0] + x[c.q.0] * x[c.q.0] - x[c.u.0] * x[c.w.0];
            r.cone = math::max(r.cone, gap);
        }
        r
    }
}

/// Canonical row ordering for stacked-matrix backends.
#[derive(Debug, Clone)]
pub struct RowLayout {
    pub n_eq: usize,
    pub n_le: usize,
    /// Variables with a finite lower bound, in ascending order; row is `-x <= -lo`.
    pub bound_lo: Vec<usize>,
    /// Variables with a finite upper bound, in ascending order; row is `x <= hi`.
    pub bound_hi: Vec<usize>,
    pub n_cones: usize,
}

impl RowLayout {
    pub fn n_rows(&self) -> usize {
        self.n_eq + self.n_le + self.bound_lo.len() + self.bound_hi.len() + 4 * self.n_cones
    }
}

/// Worst-case constraint violations at a candidate point.
#[derive(Debug, Clone, Copy, Default)]
pub struct Residuals {
    pub eq: f64,
    pub le: f64,
    pub bounds: f64,
    /// Max of `p^2 + q^2 - u*w` over cones (positive means violated).
    pub cone: f64,
    pub worst_eq: Option<RowLabel>,
}

impl Residuals {
    pub fn max_violation(&self) -> f64 {
        self.eq.max(self.le).max(self.bounds).max(self.cone)
    }
}

/// Terminal state of one conic solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalLimit,
}

/// Primal/dual point returned by a backend.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Dual variables in [`QuadProgram::row_layout`] order.
    pub dual: Vec<f64>,
    /// Objective at `x` including the program constant.
    pub objective: f64,
    pub iterations: usize,
}

/// Outcome of one conic solve.
#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Optimal(Solution),
    /// Best iterate when the backend stopped short of full accuracy.
    NumericalLimit(Solution),
    Infeasible,
}

impl SolveOutcome {
    pub fn status(&self) -> SolveStatus {
        match self {
            SolveOutcome::Optimal(_) => SolveStatus::Optimal,
            SolveOutcome::NumericalLimit(_) => SolveStatus::NumericalLimit,
            SolveOutcome::Infeasible => SolveStatus::Infeasible,
        }
    }

    pub fn solution(&self) -> Option<&Solution> {
        match self {
            SolveOutcome::Optimal(s) | SolveOutcome::NumericalLimit(s) => Some(s),
            SolveOutcome::Infeasible => None,
        }
    }

    /// The solution if the solve reached full accuracy.
    pub fn optimal(&self) -> Option<&Solution> {
        match self {
            SolveOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

/// A malformed program or a backend failure (not infeasibility, which is a
/// regular [`SolveOutcome`]).
#[derive(Debug, Clone)]
pub struct SolveError(pub String);

impl core::fmt::Display for SolveError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "solver error: {}", self.0)
    }
}

impl core::error::Error for SolveError {}

/// Numerical backend for [`QuadProgram`].
pub trait ConicSolver {
    fn solve(&self, program: &QuadProgram) -> Result<SolveOutcome, SolveError>;
}

/// Batch interface used by the coordination loop; agent programs are
/// independent, so implementations are free to run them concurrently as long
/// as results come back in input order.
pub trait SolverPool {
    fn solve_all(&self, programs: &[&QuadProgram]) -> Vec<Result<SolveOutcome, SolveError>>;
}

impl<S: ConicSolver> SolverPool for S {
    fn solve_all(&self, programs: &[&QuadProgram]) -> Vec<Result<SolveOutcome, SolveError>> {
        programs.iter().map(|p| self.solve(p)).collect()
    }
}

/// KKT-style quality metrics for a solved program.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    /// Max absolute equality-row residual.
    pub eq_residual: f64,
    /// Max inequality violation (rows and bounds).
    pub ineq_residual: f64,
    /// Max cone violation `p^2+q^2-u*w`.
    pub cone_residual: f64,
    /// `||P x + q + A' z||_inf / max(1, ||q||_inf)` over the stacked rows.
    pub stationarity: f64,
    /// `|primal - dual objective| / max(1, |primal|)`.
    pub duality_gap: f64,
}

impl KktReport {
    pub fn worst(&self) -> f64 {
        self.eq_residual
            .max(self.ineq_residual)
            .max(self.cone_residual)
            .max(self.stationarity)
            .max(self.duality_gap)
    }
}

/// Evaluates optimality residuals for `sol` against `program`.
///
/// Duals must follow the canonical row layout; backends that solve the
/// lowered form `min 1/2 x'Px + q'x, Ax + s = b, s in K` satisfy the
/// stationarity identity `Px + q + A'z = 0`, which is what is measured here.
pub fn kkt_report(program: &QuadProgram, sol: &Solution) -> KktReport {
    let res = program.residuals_at(&sol.x);
    let layout = program.row_layout();
    let x = &sol.x;
    let z = &sol.dual;
    let n = program.n_vars();

    // grad = P x + q, then accumulate A' z block by block.
    let mut grad: Vec<f64> = (0..n)
        .map(|i| program.quad_diag[i] * x[i] + program.lin[i])
        .collect();
    let mut row = 0usize;
    if z.len() == layout.n_rows() {
        for i in 0..program.eq.len() {
            for (c, v) in program.eq.row(i) {
                grad[c] += v * z[row];
            }
            row += 1;
        }
        for i in 0..program.le.len() {
            for (c, v) in program.le.row(i) {
                grad[c] += v * z[row];
            }
            row += 1;
        }
        for &c in &layout.bound_lo {
            grad[c] -= z[row];
            row += 1;
        }
        for &c in &layout.bound_hi {
            grad[c] += z[row];
            row += 1;
        }
        for cone in &program.cones {
            // Rows lowered as s = (u+w, 2p, 2q, u-w); A entries are the
            // negations of those expressions' coefficients.
            grad[cone.u.0] += -z[row] - z[row + 3];
            grad[cone.w.0] += -z[row] + z[row + 3];
            grad[cone.p.0] += -2.0 * z[row + 1];
            grad[cone.q.0] += -2.0 * z[row + 2];
            row += 4;
        }
    } else {
        // No usable duals: report stationarity as unknown-large.
        for g in grad.iter_mut() {
            *g = f64::INFINITY;
        }
    }

    let scale = math::max(
        1.0,
        program.lin.iter().fold(0.0_f64, |a, &b| math::max(a, math::abs(b))),
    );
    let stationarity = grad
        .iter()
        .fold(0.0_f64, |a, &g| math::max(a, math::abs(g)))
        / scale;

    // Dual objective of the lowered form: -1/2 x'Px - b'z.
    let mut bz = 0.0;
    if z.len() == layout.n_rows() {
        let mut r = 0usize;
        for i in 0..program.eq.len() {
            bz += program.eq.rhs[i] * z[r];
            r += 1;
        }
        for i in 0..program.le.len() {
            bz += program.le.rhs[i] * z[r];
            r += 1;
        }
        for &c in &layout.bound_lo {
            bz += -program.lower[c] * z[r];
            r += 1;
        }
        for &c in &layout.bound_hi {
            bz += program.upper[c] * z[r];
            r += 1;
        }
        // Cone rows have zero rhs.
    } else {
        bz = f64::INFINITY;
    }
    let xpx: f64 = (0..n).map(|i| program.quad_diag[i] * x[i] * x[i]).sum();
    let primal = program.objective_at(x);
    let dual_obj = -0.5 * xpx - bz + program.constant;
    let duality_gap = math::abs(primal - dual_obj) / math::max(1.0, math::abs(primal));

    KktReport {
        eq_residual: res.eq,
        ineq_residual: math::max(res.le, res.bounds),
        cone_residual: math::max(0.0, res.cone),
        stationarity,
        duality_gap,
    }
}

/// Human-readable one-line description of a row label.
pub fn describe_label(l: &RowLabel) -> String {
    let kind = match l.kind {
        RowKind::Balance => "active balance",
        RowKind::ReactiveBalance => "reactive balance",
        RowKind::SplitDef => "trade split",
        RowKind::StorageDynamics => "storage dynamics",
        RowKind::NodalFlow => "nodal flow",
        RowKind::VoltageDrop => "voltage drop",
        RowKind::Anchor => "voltage anchor",
        RowKind::Ramp => "ramp limit",
        RowKind::Coupling => "coupling",
        RowKind::Other => "constraint",
    };
    if l.mg == u32::MAX {
        String::from(kind)
    } else if l.hour == u32::MAX {
        format!("{kind} (microgrid {})", l.mg)
    } else {
        format!("{kind} (microgrid {}, hour {})", l.mg, l.hour)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_program() -> (QuadProgram, VarId, VarId) {
        // min x^2 + y  s.t. x + y = 2, y >= 0.5
        let mut p = QuadProgram::new();
        let x = p.add_var();
        let y = p.add_bounded_var(0.5, f64::INFINITY);
        p.add_quad(x, 2.0);
        p.add_lin(y, 1.0);
        p.add_eq(&[(x, 1.0), (y, 1.0)], 2.0, RowLabel::bare(RowKind::Other));
        (p, x, y)
    }

    #[test]
    fn residuals_flag_violations() {
        let (p, _, _) = tiny_program();
        let good = [0.5, 1.5];
        let r = p.residuals_at(&good);
        assert!(r.max_violation() <= 1e-12);

        let bad = [0.5, 0.4]; // bound violated and eq off by 1.1
        let r = p.residuals_at(&bad);
        assert!(r.bounds >= 0.1 - 1e-12);
        assert!(r.eq >= 1.1 - 1e-12);
    }

    #[test]
    fn objective_value_includes_constant() {
        let (mut p, x, y) = tiny_program();
        p.constant = 3.0;
        let v = p.objective_at(&[1.0, 1.0]);
        // 1/2*2*1 + 1 + 3
        assert!((v - 5.0_f64).abs() < 1e-12);
        let _ = (x, y);
    }

    #[test]
    fn cone_residual_sign() {
        let mut p = QuadProgram::new();
        let a = p.add_var();
        let b = p.add_var();
        let u = p.add_var();
        let w = p.add_var();
        p.add_cone(a, b, u, w);
        // 3^2 + 4^2 = 25 <= 1 * 25: feasible, gap 0
        let r = p.residuals_at(&[3.0, 4.0, 1.0, 25.0]);
        assert!(r.cone <= 1e-12);
        // l too small: violated by 5
        let r = p.residuals_at(&[3.0, 4.0, 1.0, 20.0]);
        assert!((r.cone - 5.0_f64).abs() < 1e-12);
    }

    #[test]
    fn row_layout_counts() {
        let (p, _, _) = tiny_program();
        let l = p.row_layout();
        assert_eq!(l.n_eq, 1);
        assert_eq!(l.n_le, 0);
        assert_eq!(l.bound_lo.len(), 1);
        assert_eq!(l.bound_hi.len(), 0);
        assert_eq!(l.n_rows(), 2);
    }

    #[test]
    fn kkt_on_hand_solved_qp() {
        // min x^2 s.t. x >= 1: x* = 1, bound dual = 2 (grad 2x - z = 0).
        let mut p = QuadProgram::new();
        let x = p.add_bounded_var(1.0, f64::INFINITY);
        p.add_quad(x, 2.0);
        let sol = Solution {
            x: vec![1.0],
            dual: vec![2.0],
            objective: 1.0,
            iterations: 0,
        };
        let rep = kkt_report(&p, &sol);
        assert!(rep.eq_residual <= 1e-12);
        assert!(rep.stationarity <= 1e-12);
        assert!(rep.duality_gap <= 1e-12);

        // Perturbing the point must show up in stationarity.
        let sol = Solution {
            x: vec![1.001],
            dual: vec![2.0],
            objective: 0.0,
            iterations: 0,
        };
        let rep = kkt_report(&p, &sol);
        assert!(rep.stationarity > 1e-5);
    }
}
