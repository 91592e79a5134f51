//! Assembly of one agent's convex program over the horizon: device
//! fragments, trade variables with buy/sell splits, internal branch-flow
//! physics, shared-edge copies, the hourly power balances, and (optionally)
//! the quadratic consensus penalty used by the distributed loop.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::devices::{emit_generator, emit_storage, GeneratorVars, StorageVars};
use crate::network::{
    allocate_bus_voltages, allocate_line_vars, emit_line_physics, radial_check, LineVars,
};
use crate::program::{QuadProgram, RowKind, RowLabel, VarId};
use crate::scenario::{Mode, Scenario};

/// Grid-trade variables of one agent (grid-connected mode only).
#[derive(Debug, Clone)]
pub struct DsoTradeVars {
    pub p: Vec<VarId>,
    pub p_buy: Vec<VarId>,
    pub p_sell: Vec<VarId>,
    pub q: Vec<VarId>,
    pub q_buy: Vec<VarId>,
    pub q_sell: Vec<VarId>,
}

/// This agent's copy of one shared edge. Flows are oriented from the edge's
/// lower-indexed agent toward the higher-indexed one regardless of which
/// side this copy belongs to.
#[derive(Debug, Clone)]
pub struct EdgeCopyVars {
    /// Index into `scenario.edges`.
    pub edge: usize,
    /// Whether this agent is the `mgs.0` (sending) side.
    pub own_is_from: bool,
    pub flow: LineVars,
    /// Squared-voltage copy of the far endpoint, one per hour.
    pub v_far: Vec<VarId>,
}

/// Where every decision variable of one agent lives.
#[derive(Debug, Clone)]
pub struct LocalVarMap {
    pub mg: usize,
    pub hours: Range<usize>,
    pub generators: Vec<GeneratorVars>,
    pub storages: Vec<StorageVars>,
    /// Counterparties in ascending id order.
    pub peers: Vec<usize>,
    /// `[peer][hour]` signed trade, positive = this agent imports.
    pub trade_p: Vec<Vec<VarId>>,
    pub trade_p_buy: Vec<Vec<VarId>>,
    pub trade_p_sell: Vec<Vec<VarId>>,
    pub trade_q: Vec<Vec<VarId>>,
    pub trade_q_buy: Vec<Vec<VarId>>,
    pub trade_q_sell: Vec<Vec<VarId>>,
    pub dso: Option<DsoTradeVars>,
    /// Local bus order mirrors `scenario.microgrids[mg].buses`.
    pub bus_v: Vec<Vec<VarId>>,
    /// Global bus index of each local bus slot.
    pub bus_index: Vec<usize>,
    pub lines: Vec<LineVars>,
    pub edges: Vec<EdgeCopyVars>,
    /// Physical grid-import variables `(p, q)` per hour at the attachment
    /// bus; present only for the agent that hosts the attachment.
    pub grid_injection: Option<(Vec<VarId>, Vec<VarId>)>,
}

impl LocalVarMap {
    pub fn horizon(&self) -> usize {
        self.hours.len()
    }

    pub fn peer_slot(&self, peer: usize) -> Option<usize> {
        self.peers.iter().position(|&p| p == peer)
    }

    /// The four shared components `[P, Q, v_from, v_to]` of one edge copy at
    /// hour `t`. The own-side endpoint voltage is the actual bus variable,
    /// the far side the local copy.
    pub fn edge_y(&self, copy_idx: usize, def: &crate::scenario::EdgeDef, t: usize) -> [VarId; 4] {
        let copy = &self.edges[copy_idx];
        let own_global = if copy.own_is_from {
            def.line.from_bus
        } else {
            def.line.to_bus
        };
        let own_slot = self
            .bus_index
            .iter()
            .position(|&b| b == own_global)
            .expect("edge endpoint present in owning agent");
        let own_v = self.bus_v[own_slot][t];
        let (v_from, v_to) = if copy.own_is_from {
            (own_v, copy.v_far[t])
        } else {
            (copy.v_far[t], own_v)
        };
        [copy.flow.p[t], copy.flow.q[t], v_from, v_to]
    }
}

/// Which shared quantity a consensus-coupled variable represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SharedKind {
    TradeP { peer: usize },
    TradeQ { peer: usize },
    EdgeFlowP { edge: usize },
    EdgeFlowQ { edge: usize },
    /// Squared voltage at the edge's `mgs.0` endpoint.
    EdgeVoltageFrom { edge: usize },
    /// Squared voltage at the edge's `mgs.1` endpoint.
    EdgeVoltageTo { edge: usize },
}

/// One consensus-coupled variable of one agent.
#[derive(Debug, Clone, Copy)]
pub struct SharedSlot {
    pub kind: SharedKind,
    /// Hour offset within the program's hour range.
    pub hour: usize,
    pub var: VarId,
}

/// A fully assembled agent program.
///
/// When built with a penalty weight `rho`, every shared variable carries the
/// quadratic term `rho/2 (x - target + dual)^2`; targets and duals start at
/// zero (voltage targets at nominal) and are refreshed between iterations
/// with [`LocalProgram::set_consensus`].
#[derive(Debug, Clone)]
pub struct LocalProgram {
    pub mg: usize,
    pub program: QuadProgram,
    pub vars: LocalVarMap,
    pub shared: Vec<SharedSlot>,
    pub rho: f64,
    base_lin: Vec<f64>,
    base_const: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildError {
    BadHourRange { start: usize, end: usize, horizon: usize },
    NotRadial { mg: usize },
    UnknownAgent { mg: usize },
}

impl core::fmt::Display for BuildError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            BuildError::BadHourRange { start, end, horizon } => {
                write!(f, "hour range {start}..{end} inconsistent with horizon {horizon}")
            }
            BuildError::NotRadial { mg } => {
                write!(f, "microgrid {mg}: internal lines are not a radial tree")
            }
            BuildError::UnknownAgent { mg } => write!(f, "no microgrid with id {mg}"),
        }
    }
}

impl core::error::Error for BuildError {}

/// Builds the convex program of agent `mg` over `hours`. Pass a penalty
/// weight to add the consensus augmentation; `None` gives the plain
/// subproblem.
pub fn build_local_program(
    scenario: &Scenario,
    mg: usize,
    hours: Range<usize>,
    rho: Option<f64>,
) -> Result<LocalProgram, BuildError> {
    if mg >= scenario.microgrids.len() {
        return Err(BuildError::UnknownAgent { mg });
    }
    if hours.start >= hours.end || hours.end > scenario.horizon {
        return Err(BuildError::BadHourRange {
            start: hours.start,
            end: hours.end,
            horizon: scenario.horizon,
        });
    }
    let model = &scenario.microgrids[mg];
    radial_check(&model.buses, &model.lines).map_err(|_| BuildError::NotRadial { mg })?;

    let t_count = hours.len();
    let grid = scenario.mode == Mode::GridConnected;
    let mut prog = QuadProgram::new();

    // --- devices ---
    let generators: Vec<GeneratorVars> = model
        .generators
        .iter()
        .map(|g| emit_generator(&mut prog, g, mg, t_count))
        .collect();
    let storages: Vec<StorageVars> = model
        .storages
        .iter()
        .map(|s| {
            emit_storage(
                &mut prog,
                s,
                mg,
                t_count,
                scenario.terminal_soc_equals_initial,
            )
        })
        .collect();

    // --- trades: signed value plus nonnegative buy/sell parts ---
    let peers: Vec<usize> = scenario.peers(mg).collect();
    let mut trade_p = Vec::new();
    let mut trade_p_buy = Vec::new();
    let mut trade_p_sell = Vec::new();
    let mut trade_q = Vec::new();
    let mut trade_q_buy = Vec::new();
    let mut trade_q_sell = Vec::new();
    for _ in &peers {
        let bound = scenario.trade_bound;
        let p: Vec<VarId> = (0..t_count).map(|_| prog.add_var()).collect();
        let pb: Vec<VarId> = (0..t_count)
            .map(|_| prog.add_bounded_var(0.0, bound))
            .collect();
        let ps: Vec<VarId> = (0..t_count)
            .map(|_| prog.add_bounded_var(0.0, bound))
            .collect();
        let q: Vec<VarId> = (0..t_count).map(|_| prog.add_var()).collect();
        let qb: Vec<VarId> = (0..t_count)
            .map(|_| prog.add_bounded_var(0.0, bound))
            .collect();
        let qs: Vec<VarId> = (0..t_count)
            .map(|_| prog.add_bounded_var(0.0, bound))
            .collect();
        for t in 0..t_count {
            let label = RowLabel::new(RowKind::SplitDef, mg, t);
            prog.add_eq(&[(p[t], 1.0), (pb[t], -1.0), (ps[t], 1.0)], 0.0, label);
            prog.add_eq(&[(q[t], 1.0), (qb[t], -1.0), (qs[t], 1.0)], 0.0, label);
        }
        trade_p.push(p);
        trade_p_buy.push(pb);
        trade_p_sell.push(ps);
        trade_q.push(q);
        trade_q_buy.push(qb);
        trade_q_sell.push(qs);
    }

    let dso = if grid {
        let bound = scenario.dso_bound;
        let p: Vec<VarId> = (0..t_count).map(|_| prog.add_var()).collect();
        let pb: Vec<VarId> = (0..t_count)
            .map(|_| prog.add_bounded_var(0.0, bound))
            .collect();
        let ps: Vec<VarId> = (0..t_count)
            .map(|_| prog.add_bounded_var(0.0, bound))
            .collect();
        let q: Vec<VarId> = (0..t_count).map(|_| prog.add_var()).collect();
        let qb: Vec<VarId> = (0..t_count)
            .map(|_| prog.add_bounded_var(0.0, bound))
            .collect();
        let qs: Vec<VarId> = (0..t_count)
            .map(|_| prog.add_bounded_var(0.0, bound))
            .collect();
        for t in 0..t_count {
            let label = RowLabel::new(RowKind::SplitDef, mg, t);
            prog.add_eq(&[(p[t], 1.0), (pb[t], -1.0), (ps[t], 1.0)], 0.0, label);
            prog.add_eq(&[(q[t], 1.0), (qb[t], -1.0), (qs[t], 1.0)], 0.0, label);
        }
        Some(DsoTradeVars {
            p,
            p_buy: pb,
            p_sell: ps,
            q,
            q_buy: qb,
            q_sell: qs,
        })
    } else {
        None
    };

    // --- network variables ---
    let bus_v = allocate_bus_voltages(&mut prog, &model.buses, t_count);
    let local_bus = |global: usize| -> usize {
        model
            .buses
            .iter()
            .position(|b| b.index == global)
            .expect("validated bus reference")
    };
    let lines: Vec<LineVars> = model
        .lines
        .iter()
        .map(|l| allocate_line_vars(&mut prog, l, t_count))
        .collect();

    let mut edges = Vec::new();
    for (edge_idx, own_is_from) in scenario.incident_edges(mg) {
        let def = &scenario.edges[edge_idx];
        let flow = allocate_line_vars(&mut prog, &def.line, t_count);
        // Far-end voltage copy takes the far bus's own bounds.
        let (far_mg, far_bus) = if own_is_from {
            (def.mgs.1, def.line.to_bus)
        } else {
            (def.mgs.0, def.line.from_bus)
        };
        let far = scenario.microgrids[far_mg]
            .buses
            .iter()
            .find(|b| b.index == far_bus)
            .expect("validated edge endpoint");
        let v_far: Vec<VarId> = (0..t_count)
            .map(|_| prog.add_bounded_var(far.v_min_sq, far.v_max_sq))
            .collect();
        edges.push(EdgeCopyVars {
            edge: edge_idx,
            own_is_from,
            flow,
            v_far,
        });
    }

    let hosts_attachment = matches!(scenario.dso_attachment, Some((m, _)) if m == mg);
    let grid_injection = if grid && hosts_attachment {
        let cap = scenario.dso_bound * scenario.n_agents() as f64;
        let p: Vec<VarId> = (0..t_count)
            .map(|_| prog.add_bounded_var(-cap, cap))
            .collect();
        let q: Vec<VarId> = (0..t_count)
            .map(|_| prog.add_bounded_var(-cap, cap))
            .collect();
        Some((p, q))
    } else {
        None
    };

    // --- line physics: voltage drops and cone relaxations ---
    for (line, vars) in model.lines.iter().zip(lines.iter()) {
        let vf = &bus_v[local_bus(line.from_bus)];
        let vt = &bus_v[local_bus(line.to_bus)];
        // Split borrows: emit needs &mut prog plus the voltage slices.
        let vf = vf.clone();
        let vt = vt.clone();
        emit_line_physics(&mut prog, mg, line, vars, &vf, &vt);
    }
    for copy in &edges {
        let def = &scenario.edges[copy.edge];
        let (v_from, v_to): (Vec<VarId>, Vec<VarId>) = if copy.own_is_from {
            (bus_v[local_bus(def.line.from_bus)].clone(), copy.v_far.clone())
        } else {
            (copy.v_far.clone(), bus_v[local_bus(def.line.to_bus)].clone())
        };
        emit_line_physics(&mut prog, mg, &def.line, &copy.flow, &v_from, &v_to);
    }

    // --- voltage anchor ---
    if scenario.anchor.0 == mg {
        let anchored = &bus_v[local_bus(scenario.anchor.1)];
        for t in 0..t_count {
            prog.add_eq(
                &[(anchored[t], 1.0)],
                1.0,
                RowLabel::new(RowKind::Anchor, mg, t),
            );
        }
    }

    // --- nodal flow conservation ---
    for bus in model.buses.iter() {
        for t in 0..t_count {
            let abs_t = hours.start + t;
            let mut p_terms: Vec<(VarId, f64)> = Vec::new();
            let mut q_terms: Vec<(VarId, f64)> = Vec::new();
            for (line, lv) in model.lines.iter().zip(lines.iter()) {
                if line.to_bus == bus.index {
                    p_terms.push((lv.p[t], 1.0));
                    q_terms.push((lv.q[t], 1.0));
                } else if line.from_bus == bus.index {
                    p_terms.push((lv.p[t], -1.0));
                    q_terms.push((lv.q[t], -1.0));
                }
            }
            for copy in &edges {
                let def = &scenario.edges[copy.edge];
                let own_bus = if copy.own_is_from {
                    def.line.from_bus
                } else {
                    def.line.to_bus
                };
                if own_bus == bus.index {
                    // Flow is oriented from->to; it leaves the from side.
                    let sign = if copy.own_is_from { -1.0 } else { 1.0 };
                    p_terms.push((copy.flow.p[t], sign));
                    q_terms.push((copy.flow.q[t], sign));
                }
            }
            for (g, gv) in model.generators.iter().zip(generators.iter()) {
                if g.bus == bus.index {
                    p_terms.push((gv.p[t], 1.0));
                    q_terms.push((gv.q[t], 1.0));
                }
            }
            for (s, sv) in model.storages.iter().zip(storages.iter()) {
                if s.bus == bus.index {
                    p_terms.push((sv.discharge[t], s.beta_disc));
                    p_terms.push((sv.charge[t], -s.beta_char));
                }
            }
            if let (Some((gp, gq)), Some((_, attach_bus))) =
                (&grid_injection, scenario.dso_attachment)
            {
                if attach_bus == bus.index {
                    p_terms.push((gp[t], 1.0));
                    q_terms.push((gq[t], 1.0));
                }
            }
            let (mut p_net, mut q_net) = (0.0, 0.0);
            for load in &model.net_loads {
                if load.bus == bus.index {
                    p_net += load.p[abs_t];
                    q_net += load.q[abs_t];
                }
            }
            let label = RowLabel::new(RowKind::NodalFlow, mg, t);
            prog.add_eq(&p_terms, p_net, label);
            prog.add_eq(&q_terms, q_net, label);
        }
    }

    // --- hourly agent balances ---
    for t in 0..t_count {
        let abs_t = hours.start + t;
        let mut p_terms: Vec<(VarId, f64)> = Vec::new();
        let mut q_terms: Vec<(VarId, f64)> = Vec::new();
        for (s, sv) in model.storages.iter().zip(storages.iter()) {
            p_terms.push((sv.charge[t], s.beta_char));
            p_terms.push((sv.discharge[t], -s.beta_disc));
        }
        for gv in &generators {
            p_terms.push((gv.p[t], -1.0));
            q_terms.push((gv.q[t], -1.0));
        }
        for slot in 0..peers.len() {
            p_terms.push((trade_p[slot][t], -1.0));
            q_terms.push((trade_q[slot][t], -1.0));
        }
        if let Some(d) = &dso {
            p_terms.push((d.p[t], -1.0));
            q_terms.push((d.q[t], -1.0));
        }
        let p_net: f64 = model.net_loads.iter().map(|l| l.p[abs_t]).sum();
        let q_net: f64 = model.net_loads.iter().map(|l| l.q[abs_t]).sum();
        prog.add_eq(&p_terms, -p_net, RowLabel::new(RowKind::Balance, mg, t));
        prog.add_eq(
            &q_terms,
            -q_net,
            RowLabel::new(RowKind::ReactiveBalance, mg, t),
        );
    }

    // --- objective: grid energy, losses, preferences ---
    // (generator costs were added by emit_generator)
    for t in 0..t_count {
        let abs_t = hours.start + t;
        let c_loss = scenario.prices.c_loss[abs_t];
        for (line, lv) in model.lines.iter().zip(lines.iter()) {
            prog.add_lin(lv.l[t], c_loss * line.r);
        }
        // Each endpoint copy carries half of a shared edge's loss cost so the
        // edge is priced exactly once at consensus.
        for copy in &edges {
            let r = scenario.edges[copy.edge].line.r;
            prog.add_lin(copy.flow.l[t], 0.5 * c_loss * r);
        }
        let kappa = scenario.prices.kappa[abs_t];
        let weights = &scenario.preferences.weights[mg];
        for (slot, &peer) in peers.iter().enumerate() {
            let lam = kappa * weights[peer];
            prog.add_lin(trade_p_buy[slot][t], lam);
            prog.add_lin(trade_p_sell[slot][t], lam);
        }
        let local_lam = kappa * weights[mg];
        for sv in &storages {
            prog.add_lin(sv.charge[t], local_lam);
            prog.add_lin(sv.discharge[t], local_lam);
        }
        if let Some(d) = &dso {
            prog.add_lin(d.p[t], scenario.prices.c_dso[abs_t]);
            let lam = kappa * scenario.preferences.grid[mg];
            prog.add_lin(d.p_buy[t], lam);
            prog.add_lin(d.p_sell[t], lam);
        }
    }

    let vars = LocalVarMap {
        mg,
        hours: hours.clone(),
        generators,
        storages,
        peers,
        trade_p,
        trade_p_buy,
        trade_p_sell,
        trade_q,
        trade_q_buy,
        trade_q_sell,
        dso,
        bus_v,
        bus_index: model.buses.iter().map(|b| b.index).collect(),
        lines,
        edges,
        grid_injection,
    };
    let shared = enumerate_shared(&vars, scenario);

    let rho = rho.unwrap_or(0.0);
    if rho > 0.0 {
        for slot in &shared {
            prog.add_quad(slot.var, rho);
        }
    }
    let base_lin = prog.lin().to_vec();
    let base_const = prog.constant;

    let mut lp = LocalProgram {
        mg,
        program: prog,
        vars,
        shared,
        rho,
        base_lin,
        base_const,
    };
    if rho > 0.0 {
        // Neutral start: zero trades and flows, nominal voltages, zero duals.
        let refs: Vec<(f64, f64)> = lp
            .shared
            .iter()
            .map(|s| match s.kind {
                SharedKind::EdgeVoltageFrom { .. } | SharedKind::EdgeVoltageTo { .. } => (1.0, 0.0),
                _ => (0.0, 0.0),
            })
            .collect();
        lp.set_consensus(&refs);
    }
    Ok(lp)
}

/// Canonical ordering of the consensus-coupled variables; the coordinator
/// relies on every agent enumerating its shared quantities this way.
fn enumerate_shared(vars: &LocalVarMap, scenario: &Scenario) -> Vec<SharedSlot> {
    let t_count = vars.horizon();
    let mut out = Vec::new();
    for (slot, &peer) in vars.peers.iter().enumerate() {
        for t in 0..t_count {
            out.push(SharedSlot {
                kind: SharedKind::TradeP { peer },
                hour: t,
                var: vars.trade_p[slot][t],
            });
        }
    }
    for (slot, &peer) in vars.peers.iter().enumerate() {
        for t in 0..t_count {
            out.push(SharedSlot {
                kind: SharedKind::TradeQ { peer },
                hour: t,
                var: vars.trade_q[slot][t],
            });
        }
    }
    for copy in &vars.edges {
        for t in 0..t_count {
            out.push(SharedSlot {
                kind: SharedKind::EdgeFlowP { edge: copy.edge },
                hour: t,
                var: copy.flow.p[t],
            });
        }
        for t in 0..t_count {
            out.push(SharedSlot {
                kind: SharedKind::EdgeFlowQ { edge: copy.edge },
                hour: t,
                var: copy.flow.q[t],
            });
        }
        // Own-side voltage is the actual bus variable, far side the copy.
        let def = &scenario.edges[copy.edge];
        let own_bus_global = if copy.own_is_from {
            def.line.from_bus
        } else {
            def.line.to_bus
        };
        let own_slot = vars
            .bus_index
            .iter()
            .position(|&b| b == own_bus_global)
            .expect("edge endpoint present in owning agent");
        for t in 0..t_count {
            let (kind_own, kind_far) = if copy.own_is_from {
                (
                    SharedKind::EdgeVoltageFrom { edge: copy.edge },
                    SharedKind::EdgeVoltageTo { edge: copy.edge },
                )
            } else {
                (
                    SharedKind::EdgeVoltageTo { edge: copy.edge },
                    SharedKind::EdgeVoltageFrom { edge: copy.edge },
                )
            };
            out.push(SharedSlot {
                kind: kind_own,
                hour: t,
                var: vars.bus_v[own_slot][t],
            });
            out.push(SharedSlot {
                kind: kind_far,
                hour: t,
                var: copy.v_far[t],
            });
        }
    }
    out
}

impl LocalProgram {
    /// Refreshes the consensus reference of every shared variable. `refs`
    /// pairs `(target, scaled_dual)` aligned with [`LocalProgram::shared`].
    pub fn set_consensus(&mut self, refs: &[(f64, f64)]) {
        assert_eq!(refs.len(), self.shared.len());
        assert!(self.rho > 0.0, "program was built without a penalty term");
        let rho = self.rho;
        let lin = self.program.lin_mut();
        lin.copy_from_slice(&self.base_lin);
        let mut constant = self.base_const;
        for (slot, &(target, dual)) in self.shared.iter().zip(refs.iter()) {
            let shift = dual - target;
            lin[slot.var.0] += rho * shift;
            constant += 0.5 * rho * shift * shift;
        }
        self.program.constant = constant;
    }

    /// Objective with any consensus penalty removed: the agent's own cost.
    pub fn plain_objective_at(&self, x: &[f64]) -> f64 {
        let mut obj = self.base_const;
        let quad = self.program.quad_diag();
        let mut penalty_curv = vec![0.0; self.program.n_vars()];
        for slot in &self.shared {
            penalty_curv[slot.var.0] += self.rho;
        }
        for i in 0..self.program.n_vars() {
            obj += 0.5 * (quad[i] - penalty_curv[i]) * x[i] * x[i] + self.base_lin[i] * x[i];
        }
        obj
    }

    /// Values of the shared slots at `x`, in canonical order.
    pub fn shared_values(&self, x: &[f64]) -> Vec<f64> {
        self.shared.iter().map(|s| x[s.var.0]).collect()
    }
}

/// Itemized agent cost at a solution point.
#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
pub struct CostBreakdown {
    pub dso: f64,
    pub generation: f64,
    pub loss: f64,
    pub preference: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.dso + self.generation + self.loss + self.preference
    }

    pub fn add(&mut self, other: &CostBreakdown) {
        self.dso += other.dso;
        self.generation += other.generation;
        self.loss += other.loss;
        self.preference += other.preference;
    }
}

/// Decomposes one agent's plain objective into its four printed components.
/// Summing them reproduces [`LocalProgram::plain_objective_at`] exactly.
pub fn cost_breakdown(scenario: &Scenario, lp: &LocalProgram, x: &[f64]) -> CostBreakdown {
    let model = &scenario.microgrids[lp.mg];
    let vars = &lp.vars;
    let mut out = CostBreakdown::default();
    for t in 0..vars.horizon() {
        let abs_t = vars.hours.start + t;
        for (g, gv) in model.generators.iter().zip(vars.generators.iter()) {
            let p = x[gv.p[t].0];
            out.generation += 0.5 * g.a * g.a * p * p + g.b * p + g.c;
        }
        let c_loss = scenario.prices.c_loss[abs_t];
        for (line, lv) in model.lines.iter().zip(vars.lines.iter()) {
            out.loss += c_loss * line.r * x[lv.l[t].0];
        }
        for copy in &vars.edges {
            let r = scenario.edges[copy.edge].line.r;
            out.loss += 0.5 * c_loss * r * x[copy.flow.l[t].0];
        }
        let kappa = scenario.prices.kappa[abs_t];
        let weights = &scenario.preferences.weights[lp.mg];
        for (slot, &peer) in vars.peers.iter().enumerate() {
            out.preference += kappa
                * weights[peer]
                * (x[vars.trade_p_buy[slot][t].0] + x[vars.trade_p_sell[slot][t].0]);
        }
        for sv in &vars.storages {
            out.preference +=
                kappa * weights[lp.mg] * (x[sv.charge[t].0] + x[sv.discharge[t].0]);
        }
        if let Some(d) = &vars.dso {
            out.dso += scenario.prices.c_dso[abs_t] * x[d.p[t].0];
            out.preference += kappa
                * scenario.preferences.grid[lp.mg]
                * (x[d.p_buy[t].0] + x[d.p_sell[t].0]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ieee33::{build_ieee33_case, PreferenceCase};
    use crate::scenario::KappaSpec;

    fn grid_case() -> Scenario {
        build_ieee33_case(
            PreferenceCase::Case0,
            Mode::GridConnected,
            KappaSpec::Fixed(60.0),
        )
    }

    fn island_case() -> Scenario {
        build_ieee33_case(
            PreferenceCase::Case0,
            Mode::Islanding,
            KappaSpec::Fixed(60.0),
        )
    }

    #[test]
    fn grid_program_has_eight_split_quadruples_per_hour() {
        let s = grid_case();
        let lp = build_local_program(&s, 0, 0..s.horizon, None).unwrap();
        // 7 counterparties plus the grid, each with buy/sell parts for
        // active and reactive power.
        assert_eq!(lp.vars.peers.len(), 7);
        assert!(lp.vars.dso.is_some());
        let quadruples = lp.vars.peers.len() + 1;
        assert_eq!(quadruples, 8);
    }

    #[test]
    fn islanding_program_has_no_grid_variables() {
        let s = island_case();
        for mg in 0..s.n_agents() {
            let lp = build_local_program(&s, mg, 0..s.horizon, None).unwrap();
            assert!(lp.vars.dso.is_none());
            assert!(lp.vars.grid_injection.is_none());
        }
    }

    #[test]
    fn bad_hour_range_is_rejected() {
        let s = grid_case();
        assert!(matches!(
            build_local_program(&s, 0, 5..3, None),
            Err(BuildError::BadHourRange { .. })
        ));
        assert!(matches!(
            build_local_program(&s, 0, 0..99, None),
            Err(BuildError::BadHourRange { .. })
        ));
    }

    #[test]
    fn penalty_vanishes_at_reference_point() {
        let s = grid_case();
        let mut lp = build_local_program(&s, 1, 0..4, Some(10.0)).unwrap();
        // Synthetic targets/duals, then evaluate at x = target - dual.
        let refs: Vec<(f64, f64)> = lp
            .shared
            .iter()
            .enumerate()
            .map(|(i, _)| (0.01 * (i % 7) as f64, 0.001 * (i % 3) as f64))
            .collect();
        lp.set_consensus(&refs);
        let mut x = vec![0.0; lp.program.n_vars()];
        for (slot, &(target, dual)) in lp.shared.iter().zip(refs.iter()) {
            x[slot.var.0] = target - dual;
        }
        let augmented = lp.program.objective_at(&x);
        let plain = lp.plain_objective_at(&x);
        assert!(
            (augmented - plain).abs() < 1e-9,
            "penalty did not vanish: {augmented} vs {plain}"
        );
    }

    #[test]
    fn breakdown_matches_plain_objective_at_arbitrary_point() {
        let s = grid_case();
        let lp = build_local_program(&s, 3, 0..s.horizon, Some(7.0)).unwrap();
        // Any point works: the identity is algebraic.
        let x: Vec<f64> = (0..lp.program.n_vars())
            .map(|i| 0.001 * ((i * 37 % 100) as f64 - 50.0))
            .collect();
        let parts = cost_breakdown(&s, &lp, &x);
        let plain = lp.plain_objective_at(&x);
        assert!(
            (parts.total() - plain).abs() < 1e-10,
            "decomposition mismatch: {} vs {plain}",
            parts.total()
        );
    }

    #[test]
    fn shared_slots_cover_trades_and_edges() {
        let s = grid_case();
        let lp = build_local_program(&s, 0, 0..24, None).unwrap();
        let t = 24;
        let n_edges = lp.vars.edges.len();
        // trades p + q, then 4 components per incident edge.
        let expected = 7 * t * 2 + n_edges * 4 * t;
        assert_eq!(lp.shared.len(), expected);
    }
}
