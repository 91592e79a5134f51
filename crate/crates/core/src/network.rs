//! Branch-flow (DistFlow) constraint fragments for radial networks, the
//! second-order-cone relaxation of the current equality, and ex-post
//! relaxation-exactness checks.
//!
//! Per line and hour the model carries the sending-end flows `P`, `Q` and
//! the squared current `l`; per bus and hour the squared voltage `v`. The
//! squared-voltage drop along a line keeps its full quadratic form
//!
//! ```text
//! v_to = v_from - 2 (R P + X Q) + (R^2 + X^2) l
//! ```
//!
//! and the current equality is relaxed to the rotated cone
//! `P^2 + Q^2 <= v_from * l`, which the loss price keeps tight at optimum.
//!
//! Flow conservation at each bus is written without the `R l` / `X l`
//! drawdown terms. The agent-level trade balances account for no loss
//! compensation and trades cancel pairwise, so a loss-inclusive nodal
//! balance would make every islanded instance with nonzero flows
//! infeasible; losses instead remain priced (they enter the objective
//! through `l`) without being withdrawn from the shipped power. Nodal rows
//! themselves are assembled by the agent-program builder, which owns the
//! injection bookkeeping; this module contributes the per-line physics.

use alloc::vec::Vec;

use crate::math;
use crate::program::{QuadProgram, RowKind, RowLabel, VarId};
use crate::scenario::{Bus, LineSegment};

/// Decision variables of one line over the horizon.
#[derive(Debug, Clone)]
pub struct LineVars {
    /// Sending-end active flow, MW, measured from-bus -> to-bus.
    pub p: Vec<VarId>,
    /// Sending-end reactive flow, MVAr.
    pub q: Vec<VarId>,
    /// Squared current magnitude, p.u.^2.
    pub l: Vec<VarId>,
}

/// Upper bound given to squared-current variables; generous and never
/// binding at the scales this crate targets.
pub const SQUARED_CURRENT_CAP: f64 = 100.0;

/// Allocates per-hour flow variables for one line, with flow bounds applied.
pub fn allocate_line_vars(prog: &mut QuadProgram, line: &LineSegment, horizon: usize) -> LineVars {
    let mut p = Vec::with_capacity(horizon);
    let mut q = Vec::with_capacity(horizon);
    let mut l = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        p.push(prog.add_bounded_var(line.p_min, line.p_max));
        q.push(prog.add_bounded_var(line.q_min, line.q_max));
        l.push(prog.add_bounded_var(0.0, SQUARED_CURRENT_CAP));
    }
    LineVars { p, q, l }
}

/// Allocates per-hour squared-voltage variables for a set of buses.
pub fn allocate_bus_voltages(
    prog: &mut QuadProgram,
    buses: &[Bus],
    horizon: usize,
) -> Vec<Vec<VarId>> {
    buses
        .iter()
        .map(|b| {
            (0..horizon)
                .map(|_| prog.add_bounded_var(b.v_min_sq, b.v_max_sq))
                .collect()
        })
        .collect()
}

/// Emits the voltage-drop equality and the cone relaxation for one line,
/// every hour. `v_from`/`v_to` are the squared-voltage variables at the two
/// ends (the cone uses the sending end).
pub fn emit_line_physics(
    prog: &mut QuadProgram,
    mg: usize,
    line: &LineSegment,
    vars: &LineVars,
    v_from: &[VarId],
    v_to: &[VarId],
) {
    let rr_xx = line.r * line.r + line.x * line.x;
    for t in 0..vars.p.len() {
        prog.add_eq(
            &[
                (v_to[t], 1.0),
                (v_from[t], -1.0),
                (vars.p[t], 2.0 * line.r),
                (vars.q[t], 2.0 * line.x),
                (vars.l[t], -rr_xx),
            ],
            0.0,
            RowLabel::new(RowKind::VoltageDrop, mg, t),
        );
        prog.add_cone(vars.p[t], vars.q[t], v_from[t], vars.l[t]);
    }
}

/// Structure error raised when a line set is not a tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotRadial;

impl core::fmt::Display for NotRadial {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "line set is not a radial tree")
    }
}

impl core::error::Error for NotRadial {}

/// Confirms `lines` form a spanning tree over `buses`.
pub fn radial_check(buses: &[Bus], lines: &[LineSegment]) -> Result<(), NotRadial> {
    let n = buses.len();
    if n == 0 || lines.len() != n - 1 {
        return Err(NotRadial);
    }
    let mut index_of = alloc::collections::BTreeMap::new();
    for (i, b) in buses.iter().enumerate() {
        index_of.insert(b.index, i);
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for line in lines {
        let (Some(&a), Some(&b)) = (index_of.get(&line.from_bus), index_of.get(&line.to_bus))
        else {
            return Err(NotRadial);
        };
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return Err(NotRadial);
        }
        parent[ra] = rb;
    }
    Ok(())
}

/// Relative slack of one relaxed current equality:
/// `(v l - P^2 - Q^2) / max(1, v l)`.
pub fn relative_cone_gap(p: f64, q: f64, v: f64, l: f64) -> f64 {
    (v * l - p * p - q * q) / math::max(1.0, v * l)
}

/// Worst-case relaxation slack over every cone of a solved program.
#[derive(Debug, Clone)]
pub struct ExactnessReport {
    pub max_gap: f64,
    /// Indices (into the program's cone list) whose gap exceeded the
    /// threshold passed to [`check_exactness`].
    pub flagged: Vec<usize>,
}

/// Measures how tight the cone relaxation is at the point `x`.
pub fn check_exactness(prog: &QuadProgram, x: &[f64], threshold: f64) -> ExactnessReport {
    let mut max_gap = 0.0;
    let mut flagged = Vec::new();
    for (i, c) in prog.cones.iter().enumerate() {
        let gap = relative_cone_gap(x[c.p.0], x[c.q.0], x[c.u.0], x[c.w.0]);
        if gap > max_gap {
            max_gap = gap;
        }
        if gap > threshold {
            flagged.push(i);
        }
    }
    ExactnessReport { max_gap, flagged }
}

/// Hourly line-loss cost: `sum_lines R * l * c_loss` for each hour.
/// `l_by_line[i][t]` is the squared current of line `i` at hour `t`.
pub fn line_loss_cost(r: &[f64], l_by_line: &[Vec<f64>], c_loss: &[f64]) -> Vec<f64> {
    let horizon = c_loss.len();
    let mut out = alloc::vec![0.0; horizon];
    for (ri, series) in r.iter().zip(l_by_line.iter()) {
        for (t, cost) in out.iter_mut().enumerate() {
            *cost += ri * series[t] * c_loss[t];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn bus(index: usize) -> Bus {
        Bus {
            index,
            v_min_sq: 0.81,
            v_max_sq: 1.21,
        }
    }

    fn line(from: usize, to: usize, r: f64, x: f64) -> LineSegment {
        LineSegment {
            from_bus: from,
            to_bus: to,
            r,
            x,
            p_min: -2.0,
            p_max: 2.0,
            q_min: -2.0,
            q_max: 2.0,
        }
    }

    #[test]
    fn radial_check_accepts_tree_rejects_cycle() {
        let buses = vec![bus(0), bus(1), bus(2)];
        let tree = vec![line(0, 1, 0.1, 0.1), line(1, 2, 0.1, 0.1)];
        assert!(radial_check(&buses, &tree).is_ok());

        let cycle = vec![
            line(0, 1, 0.1, 0.1),
            line(1, 2, 0.1, 0.1),
            line(2, 0, 0.1, 0.1),
        ];
        assert!(radial_check(&buses, &cycle).is_err());

        let disconnected = vec![line(0, 1, 0.1, 0.1), line(0, 1, 0.2, 0.2)];
        assert!(radial_check(&buses, &disconnected).is_err());
    }

    #[test]
    fn lossless_identity_on_zero_impedance_line() {
        // Zero load, zero impedance: equal flat voltages and zero flows
        // satisfy the drop equality exactly.
        let mut prog = QuadProgram::new();
        let seg = line(0, 1, 0.0, 0.0);
        let vars = allocate_line_vars(&mut prog, &seg, 1);
        let v = allocate_bus_voltages(&mut prog, &[bus(0), bus(1)], 1);
        emit_line_physics(&mut prog, 0, &seg, &vars, &v[0], &v[1]);
        let mut x = vec![0.0; prog.n_vars()];
        x[v[0][0].0] = 1.0;
        x[v[1][0].0] = 1.0;
        let res = prog.residuals_at(&x);
        assert!(res.max_violation() <= 1e-12);
    }

    #[test]
    fn drop_equality_matches_hand_computation() {
        // R = X = 0.1, sending flow 0.1 MW, cone held with equality.
        let mut prog = QuadProgram::new();
        let seg = line(0, 1, 0.1, 0.1);
        let vars = allocate_line_vars(&mut prog, &seg, 1);
        let v = allocate_bus_voltages(&mut prog, &[bus(0), bus(1)], 1);
        emit_line_physics(&mut prog, 0, &seg, &vars, &v[0], &v[1]);
        let mut x = vec![0.0; prog.n_vars()];
        x[v[0][0].0] = 1.0;
        x[vars.p[0].0] = 0.1;
        x[vars.q[0].0] = 0.0;
        let l = 0.01; // (P^2 + Q^2) / v_from
        x[vars.l[0].0] = l;
        x[v[1][0].0] = 1.0 - 2.0 * (0.1 * 0.1) + 0.02 * l;
        let res = prog.residuals_at(&x);
        assert!(res.max_violation() <= 1e-12, "{res:?}");
        assert!((x[v[1][0].0] - 0.9802_f64).abs() < 1e-12);
    }

    #[test]
    fn cone_gap_examples() {
        // Exact by construction.
        assert!(relative_cone_gap(3.0, 4.0, 1.0, 25.0).abs() <= 1e-12);
        // Inflating l by 10% gives gap 1/11.
        let gap = relative_cone_gap(3.0, 4.0, 1.0, 27.5);
        assert!((gap - 1.0_f64 / 11.0).abs() < 1e-12);
        // Trivially satisfied at zero flow.
        assert!(relative_cone_gap(0.0, 0.0, 1.0, 0.5) >= 0.0);
    }

    #[test]
    fn exactness_report_flags_inflated_cones() {
        let mut prog = QuadProgram::new();
        let seg = line(0, 1, 0.1, 0.1);
        let vars = allocate_line_vars(&mut prog, &seg, 2);
        let v = allocate_bus_voltages(&mut prog, &[bus(0), bus(1)], 2);
        emit_line_physics(&mut prog, 0, &seg, &vars, &v[0], &v[1]);
        let mut x = vec![0.0; prog.n_vars()];
        for t in 0..2 {
            x[v[0][t].0] = 1.0;
            x[vars.p[t].0] = 3.0;
            x[vars.q[t].0] = 4.0;
            x[vars.l[t].0] = 25.0;
        }
        x[vars.l[1].0] = 27.5; // one slack cone
        let rep = check_exactness(&prog, &x, 1e-5);
        assert_eq!(rep.flagged, vec![1]);
        assert!((rep.max_gap - 1.0_f64 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn loss_cost_examples() {
        // All currents zero: no cost.
        let zero = line_loss_cost(&[0.1], &[vec![0.0, 0.0]], &[50.0, 50.0]);
        assert_eq!(zero, vec![0.0, 0.0]);
        // One line, R=0.1, l=0.2, price 50 -> 1.0 $ that hour.
        let one = line_loss_cost(&[0.1], &[vec![0.2]], &[50.0]);
        assert!((one[0] - 1.0_f64).abs() < 1e-12);
    }
}
