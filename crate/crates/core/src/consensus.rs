//! The distributed coordination loop: synchronous rounds of per-agent
//! solves, pairwise consensus updates, and scaled dual ascent over every
//! shared quantity.
//!
//! Coupled quantities come in two flavors. Trade pairs must cancel,
//! `p_nm + p_mn = 0`, so the consensus target is `z = (p_nm - p_mn) / 2`
//! assigned with opposite signs to the two sides. Physical edge copies must
//! agree, `Y_n = Y_m`, so the target is the arithmetic mean. Scaled duals
//! follow `u <- u + (local - target)` on both sides.
//!
//! Agents reveal only their shared quantities: an [`AgentMessage`] carries
//! trade values and edge physics, never device parameters, net loads, or
//! cost coefficients.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::local::{build_local_program, cost_breakdown, CostBreakdown, LocalProgram, SharedKind};
use crate::math;
use crate::program::{SolveError, SolveOutcome, SolverPool};
use crate::scenario::{validate_scenario, Scenario, Violation};

/// Tuning knobs of the coordination loop.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdmmParams {
    /// Quadratic penalty weight.
    pub rho: f64,
    pub max_iter: usize,
    /// Stop threshold on the worst pairwise disagreement.
    pub eps_primal: f64,
    /// Stop threshold on `rho * max |z_k - z_{k-1}|`.
    pub eps_dual: f64,
    /// Residual-balancing adaptation of `rho` (factor-2 steps when the
    /// primal/dual ratio exceeds 10). Off by default to keep runs exactly
    /// reproducible under the documented parameters.
    pub adaptive_rho: bool,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            rho: 10.0,
            max_iter: 2000,
            eps_primal: 1e-4,
            eps_dual: 1e-4,
            adaptive_rho: false,
        }
    }
}

/// Residuals and objective of one iteration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal: f64,
    pub dual: f64,
    pub objective: f64,
}

/// One shared value as published by an agent.
#[derive(Debug, Clone, Copy)]
pub struct SharedValue {
    pub kind: SharedKind,
    pub hour: usize,
    pub value: f64,
}

/// Everything an agent reveals per iteration.
#[derive(Debug, Clone)]
pub struct AgentMessage {
    pub sender: usize,
    pub iteration: usize,
    pub values: Vec<SharedValue>,
}

impl AgentMessage {
    fn from_local(lp: &LocalProgram, iteration: usize, x: &[f64]) -> Self {
        AgentMessage {
            sender: lp.mg,
            iteration,
            values: lp
                .shared
                .iter()
                .map(|s| SharedValue {
                    kind: s.kind,
                    hour: s.hour,
                    value: x[s.var.0],
                })
                .collect(),
        }
    }
}

/// Consensus target for one trade pair: `(p_nm - p_mn) / 2`, to be applied
/// with opposite signs on the two sides.
pub fn trade_consensus(p_nm: f64, p_mn: f64) -> f64 {
    0.5 * (p_nm - p_mn)
}

/// Consensus target for a physical copy pair: the arithmetic mean.
pub fn physical_consensus(y_n: f64, y_m: f64) -> f64 {
    0.5 * (y_n + y_m)
}

/// Targets and scaled duals for one unordered trade pair, per hour.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairChannel {
    pub low: usize,
    pub high: usize,
    /// Target for `p_{low,high}`; the high side receives the negation.
    pub z_p: Vec<f64>,
    pub z_q: Vec<f64>,
    pub dual_p_low: Vec<f64>,
    pub dual_p_high: Vec<f64>,
    pub dual_q_low: Vec<f64>,
    pub dual_q_high: Vec<f64>,
}

/// Targets and scaled duals for one shared edge: components
/// `[P, Q, v_from, v_to]`, per hour.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeChannel {
    pub edge: usize,
    pub z: [Vec<f64>; 4],
    pub dual_low: [Vec<f64>; 4],
    pub dual_high: [Vec<f64>; 4],
}

/// Full coordination state across iterations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmmState {
    pub iteration: usize,
    pub rho: f64,
    pub pairs: Vec<PairChannel>,
    pub edges: Vec<EdgeChannel>,
    pub history: Vec<IterationRecord>,
}

impl AdmmState {
    /// Fresh state: zero trades and duals, flat (nominal) voltage targets.
    pub fn new(scenario: &Scenario, rho: f64) -> Self {
        let t = scenario.horizon;
        let n = scenario.n_agents();
        let mut pairs = Vec::new();
        for low in 0..n {
            for high in (low + 1)..n {
                pairs.push(PairChannel {
                    low,
                    high,
                    z_p: vec![0.0; t],
                    z_q: vec![0.0; t],
                    dual_p_low: vec![0.0; t],
                    dual_p_high: vec![0.0; t],
                    dual_q_low: vec![0.0; t],
                    dual_q_high: vec![0.0; t],
                });
            }
        }
        let edges = scenario
            .edges
            .iter()
            .enumerate()
            .map(|(i, _)| EdgeChannel {
                edge: i,
                z: [vec![0.0; t], vec![0.0; t], vec![1.0; t], vec![1.0; t]],
                dual_low: core::array::from_fn(|_| vec![0.0; t]),
                dual_high: core::array::from_fn(|_| vec![0.0; t]),
            })
            .collect();
        AdmmState {
            iteration: 0,
            rho,
            pairs,
            edges,
            history: Vec::new(),
        }
    }

    fn pair_index(&self, low: usize, high: usize) -> usize {
        self.pairs
            .iter()
            .position(|p| p.low == low && p.high == high)
            .expect("pair channel exists for every unordered agent pair")
    }
}

/// Worst current disagreement across all coupled quantities, from the
/// latest messages: `max |p_nm + p_mn|` over trade pairs and
/// `max |Y_n - Y_m|` over edge copies.
pub fn primal_residual(state: &AdmmState, lookup: &MessageLookup<'_>) -> f64 {
    let mut r = 0.0_f64;
    for pair in &state.pairs {
        for t in 0..lookup.horizon {
            let a = lookup.trade_p(pair.low, pair.high, t);
            let b = lookup.trade_p(pair.high, pair.low, t);
            r = math::max(r, math::abs(a + b));
            let aq = lookup.trade_q(pair.low, pair.high, t);
            let bq = lookup.trade_q(pair.high, pair.low, t);
            r = math::max(r, math::abs(aq + bq));
        }
    }
    for ch in &state.edges {
        for comp in 0..4 {
            for t in 0..lookup.horizon {
                let yn = lookup.edge(ch.edge, pair_side(lookup, ch.edge, true), comp, t);
                let ym = lookup.edge(ch.edge, pair_side(lookup, ch.edge, false), comp, t);
                r = math::max(r, math::abs(yn - ym));
            }
        }
    }
    r
}

fn pair_side(lookup: &MessageLookup<'_>, edge: usize, low: bool) -> usize {
    let (n, m) = lookup.edge_mgs[edge];
    if low {
        n
    } else {
        m
    }
}

/// Index over one round of agent messages.
pub struct MessageLookup<'a> {
    horizon: usize,
    edge_mgs: &'a [(usize, usize)],
    by_agent: Vec<BTreeMap<(SharedKind, usize), f64>>,
}

impl<'a> MessageLookup<'a> {
    pub fn new(
        messages: &[AgentMessage],
        n_agents: usize,
        horizon: usize,
        edge_mgs: &'a [(usize, usize)],
    ) -> Self {
        let mut by_agent = vec![BTreeMap::new(); n_agents];
        for msg in messages {
            let map = &mut by_agent[msg.sender];
            for v in &msg.values {
                map.insert((v.kind, v.hour), v.value);
            }
        }
        MessageLookup {
            horizon,
            edge_mgs,
            by_agent,
        }
    }

    fn trade_p(&self, owner: usize, peer: usize, hour: usize) -> f64 {
        self.by_agent[owner][&(SharedKind::TradeP { peer }, hour)]
    }

    fn trade_q(&self, owner: usize, peer: usize, hour: usize) -> f64 {
        self.by_agent[owner][&(SharedKind::TradeQ { peer }, hour)]
    }

    fn edge(&self, edge: usize, owner: usize, comp: usize, hour: usize) -> f64 {
        let kind = match comp {
            0 => SharedKind::EdgeFlowP { edge },
            1 => SharedKind::EdgeFlowQ { edge },
            2 => SharedKind::EdgeVoltageFrom { edge },
            _ => SharedKind::EdgeVoltageTo { edge },
        };
        self.by_agent[owner][&(kind, hour)]
    }
}

/// Errors of the coordination loop.
#[derive(Debug, Clone)]
pub enum AdmmError {
    InvalidScenario(Vec<Violation>),
    /// A local solve reported infeasibility; carries the agent and round.
    LocalInfeasible { mg: usize, iteration: usize },
    Solver(SolveError),
    Build(crate::local::BuildError),
}

impl core::fmt::Display for AdmmError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AdmmError::InvalidScenario(v) => write!(f, "scenario failed validation ({} issues)", v.len()),
            AdmmError::LocalInfeasible { mg, iteration } => {
                write!(f, "agent {mg} reported an infeasible subproblem at iteration {iteration}")
            }
            AdmmError::Solver(e) => write!(f, "{e}"),
            AdmmError::Build(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for AdmmError {}

/// Result of a full coordination run.
#[derive(Debug)]
pub struct AdmmRun {
    pub converged: bool,
    pub iterations: usize,
    /// Sum of plain agent objectives at the final iterate.
    pub objective: f64,
    pub breakdown: CostBreakdown,
    /// Final primal vector of each agent.
    pub locals: Vec<Vec<f64>>,
    /// The agent programs, for downstream residual checks and reporting.
    pub programs: Vec<LocalProgram>,
    pub state: AdmmState,
}

/// Runs the synchronous consensus loop to convergence or `max_iter`.
///
/// Per round: every agent solves its penalized program against the current
/// targets (a batch the pool may execute concurrently), agents publish their
/// shared values, the coordinator averages each coupled pair, and scaled
/// duals move by the remaining disagreement. Deterministic for a fixed
/// scenario and parameters: channel processing order is fixed and the
/// consensus step is single-threaded.
pub fn run_admm<P: SolverPool>(
    scenario: &Scenario,
    params: &AdmmParams,
    pool: &P,
) -> Result<AdmmRun, AdmmError> {
    let issues = validate_scenario(scenario);
    if !issues.is_empty() {
        return Err(AdmmError::InvalidScenario(issues));
    }
    let n = scenario.n_agents();
    let horizon = scenario.horizon;
    let mut rho = params.rho;

    let build_all = |rho: f64| -> Result<Vec<LocalProgram>, AdmmError> {
        (0..n)
            .map(|mg| {
                build_local_program(scenario, mg, 0..horizon, Some(rho)).map_err(AdmmError::Build)
            })
            .collect()
    };
    let mut programs = build_all(rho)?;
    let mut state = AdmmState::new(scenario, rho);
    let edge_mgs: Vec<(usize, usize)> = scenario.edges.iter().map(|e| e.mgs).collect();

    // Precomputed slot bindings: for each agent, where each shared slot's
    // target/dual lives in the state.
    #[derive(Clone, Copy)]
    enum Binding {
        PairP { idx: usize, is_low: bool },
        PairQ { idx: usize, is_low: bool },
        Edge { idx: usize, comp: usize, is_low: bool },
    }
    let bindings: Vec<Vec<(Binding, usize)>> = programs
        .iter()
        .map(|lp| {
            lp.shared
                .iter()
                .map(|slot| {
                    let mg = lp.mg;
                    let b = match slot.kind {
                        SharedKind::TradeP { peer } => Binding::PairP {
                            idx: state.pair_index(mg.min(peer), mg.max(peer)),
                            is_low: mg < peer,
                        },
                        SharedKind::TradeQ { peer } => Binding::PairQ {
                            idx: state.pair_index(mg.min(peer), mg.max(peer)),
                            is_low: mg < peer,
                        },
                        SharedKind::EdgeFlowP { edge } => Binding::Edge {
                            idx: edge,
                            comp: 0,
                            is_low: edge_mgs[edge].0 == mg,
                        },
                        SharedKind::EdgeFlowQ { edge } => Binding::Edge {
                            idx: edge,
                            comp: 1,
                            is_low: edge_mgs[edge].0 == mg,
                        },
                        SharedKind::EdgeVoltageFrom { edge } => Binding::Edge {
                            idx: edge,
                            comp: 2,
                            is_low: edge_mgs[edge].0 == mg,
                        },
                        SharedKind::EdgeVoltageTo { edge } => Binding::Edge {
                            idx: edge,
                            comp: 3,
                            is_low: edge_mgs[edge].0 == mg,
                        },
                    };
                    (b, slot.hour)
                })
                .collect()
        })
        .collect();

    let reference_for = |state: &AdmmState, bindings_mg: &[(Binding, usize)]| {
        bindings_mg
            .iter()
            .map(|&(b, t)| match b {
                Binding::PairP { idx, is_low } => {
                    let ch = &state.pairs[idx];
                    let sign = if is_low { 1.0 } else { -1.0 };
                    let dual = if is_low {
                        ch.dual_p_low[t]
                    } else {
                        ch.dual_p_high[t]
                    };
                    (sign * ch.z_p[t], dual)
                }
                Binding::PairQ { idx, is_low } => {
                    let ch = &state.pairs[idx];
                    let sign = if is_low { 1.0 } else { -1.0 };
                    let dual = if is_low {
                        ch.dual_q_low[t]
                    } else {
                        ch.dual_q_high[t]
                    };
                    (sign * ch.z_q[t], dual)
                }
                Binding::Edge { idx, comp, is_low } => {
                    let ch = &state.edges[idx];
                    let dual = if is_low {
                        ch.dual_low[comp][t]
                    } else {
                        ch.dual_high[comp][t]
                    };
                    (ch.z[comp][t], dual)
                }
            })
            .collect::<Vec<(f64, f64)>>()
    };

    let mut locals: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut converged = false;

    while state.iteration < params.max_iter {
        state.iteration += 1;

        for (mg, lp) in programs.iter_mut().enumerate() {
            let refs = reference_for(&state, &bindings[mg]);
            lp.set_consensus(&refs);
        }

        let progs: Vec<&crate::program::QuadProgram> =
            programs.iter().map(|lp| &lp.program).collect();
        let outcomes = pool.solve_all(&progs);
        let mut messages = Vec::with_capacity(n);
        for (mg, outcome) in outcomes.into_iter().enumerate() {
            match outcome.map_err(AdmmError::Solver)? {
                SolveOutcome::Optimal(sol) => {
                    messages.push(AgentMessage::from_local(&programs[mg], state.iteration, &sol.x));
                    locals[mg] = sol.x;
                }
                SolveOutcome::NumericalLimit(sol) => {
                    log::warn!(
                        "agent {mg} hit the numerical limit at iteration {}; using best iterate",
                        state.iteration
                    );
                    messages.push(AgentMessage::from_local(&programs[mg], state.iteration, &sol.x));
                    locals[mg] = sol.x;
                }
                SolveOutcome::Infeasible => {
                    return Err(AdmmError::LocalInfeasible {
                        mg,
                        iteration: state.iteration,
                    });
                }
            }
        }

        let lookup = MessageLookup::new(&messages, n, horizon, &edge_mgs);
        let r = primal_residual(&state, &lookup);

        // Consensus and dual updates; track the dual residual as the target
        // movement scaled by rho.
        let mut max_dz = 0.0_f64;
        for pair in state.pairs.iter_mut() {
            for t in 0..horizon {
                let a = lookup.trade_p(pair.low, pair.high, t);
                let b = lookup.trade_p(pair.high, pair.low, t);
                let z_new = trade_consensus(a, b);
                max_dz = math::max(max_dz, math::abs(z_new - pair.z_p[t]));
                pair.z_p[t] = z_new;
                pair.dual_p_low[t] += a - z_new;
                pair.dual_p_high[t] += b + z_new;

                let aq = lookup.trade_q(pair.low, pair.high, t);
                let bq = lookup.trade_q(pair.high, pair.low, t);
                let zq_new = trade_consensus(aq, bq);
                max_dz = math::max(max_dz, math::abs(zq_new - pair.z_q[t]));
                pair.z_q[t] = zq_new;
                pair.dual_q_low[t] += aq - zq_new;
                pair.dual_q_high[t] += bq + zq_new;
            }
        }
        for ch in state.edges.iter_mut() {
            let (low, high) = edge_mgs[ch.edge];
            for comp in 0..4 {
                for t in 0..horizon {
                    let yn = lookup.edge(ch.edge, low, comp, t);
                    let ym = lookup.edge(ch.edge, high, comp, t);
                    let z_new = physical_consensus(yn, ym);
                    max_dz = math::max(max_dz, math::abs(z_new - ch.z[comp][t]));
                    ch.z[comp][t] = z_new;
                    ch.dual_low[comp][t] += yn - z_new;
                    ch.dual_high[comp][t] += ym - z_new;
                }
            }
        }
        let s = rho * max_dz;

        let objective: f64 = programs
            .iter()
            .zip(locals.iter())
            .map(|(lp, x)| lp.plain_objective_at(x))
            .sum();
        state.history.push(IterationRecord {
            iteration: state.iteration,
            primal: r,
            dual: s,
            objective,
        });
        log::debug!(
            "iteration {}: primal {r:.3e}, dual {s:.3e}, objective {objective:.6}",
            state.iteration
        );

        if r <= params.eps_primal && s <= params.eps_dual {
            converged = true;
            break;
        }

        if params.adaptive_rho {
            let mut changed = false;
            if r > 10.0 * s && rho < 1e6 {
                rho *= 2.0;
                for pair in state.pairs.iter_mut() {
                    for series in [
                        &mut pair.dual_p_low,
                        &mut pair.dual_p_high,
                        &mut pair.dual_q_low,
                        &mut pair.dual_q_high,
                    ] {
                        series.iter_mut().for_each(|d| *d *= 0.5);
                    }
                }
                for ch in state.edges.iter_mut() {
                    for comp in 0..4 {
                        ch.dual_low[comp].iter_mut().for_each(|d| *d *= 0.5);
                        ch.dual_high[comp].iter_mut().for_each(|d| *d *= 0.5);
                    }
                }
                changed = true;
            } else if s > 10.0 * r && rho > 1e-6 {
                rho *= 0.5;
                for pair in state.pairs.iter_mut() {
                    for series in [
                        &mut pair.dual_p_low,
                        &mut pair.dual_p_high,
                        &mut pair.dual_q_low,
                        &mut pair.dual_q_high,
                    ] {
                        series.iter_mut().for_each(|d| *d *= 2.0);
                    }
                }
                for ch in state.edges.iter_mut() {
                    for comp in 0..4 {
                        ch.dual_low[comp].iter_mut().for_each(|d| *d *= 2.0);
                        ch.dual_high[comp].iter_mut().for_each(|d| *d *= 2.0);
                    }
                }
                changed = true;
            }
            if changed {
                state.rho = rho;
                programs = build_all(rho)?;
            }
        }
    }

    let objective: f64 = programs
        .iter()
        .zip(locals.iter())
        .map(|(lp, x)| lp.plain_objective_at(x))
        .sum();
    let mut breakdown = CostBreakdown::default();
    for (lp, x) in programs.iter().zip(locals.iter()) {
        breakdown.add(&cost_breakdown(scenario, lp, x));
    }
    state.rho = rho;
    Ok(AdmmRun {
        converged,
        iterations: state.iteration,
        objective,
        breakdown,
        locals,
        programs,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn trade_consensus_examples() {
        // Already agreed: p_nm = 0.5, p_mn = -0.5.
        let z = trade_consensus(0.5, -0.5);
        assert_eq!(z, 0.5);
        assert_eq!(0.5 + (-0.5_f64), 0.0);
        // Midpoint when the copies disagree.
        assert_eq!(trade_consensus(0.6, -0.4), 0.5);
    }

    #[test]
    fn physical_consensus_identity() {
        let y = [1.0, 0.0, 1.0, 0.98];
        for &v in &y {
            assert_eq!(physical_consensus(v, v), v);
        }
    }

    #[test]
    fn residual_is_max_gap_over_channels() {
        // Two agents, one pair, no edges; hand-built messages.
        let msgs = vec![
            AgentMessage {
                sender: 0,
                iteration: 1,
                values: vec![
                    SharedValue { kind: SharedKind::TradeP { peer: 1 }, hour: 0, value: 0.6 },
                    SharedValue { kind: SharedKind::TradeP { peer: 1 }, hour: 1, value: 0.1 },
                    SharedValue { kind: SharedKind::TradeQ { peer: 1 }, hour: 0, value: 0.0 },
                    SharedValue { kind: SharedKind::TradeQ { peer: 1 }, hour: 1, value: 0.0 },
                ],
            },
            AgentMessage {
                sender: 1,
                iteration: 1,
                values: vec![
                    SharedValue { kind: SharedKind::TradeP { peer: 0 }, hour: 0, value: -0.4 },
                    SharedValue { kind: SharedKind::TradeP { peer: 0 }, hour: 1, value: -0.1 },
                    SharedValue { kind: SharedKind::TradeQ { peer: 0 }, hour: 0, value: 0.0 },
                    SharedValue { kind: SharedKind::TradeQ { peer: 0 }, hour: 1, value: 0.0 },
                ],
            },
        ];
        let state = AdmmState {
            iteration: 1,
            rho: 10.0,
            pairs: vec![PairChannel {
                low: 0,
                high: 1,
                z_p: vec![0.0; 2],
                z_q: vec![0.0; 2],
                dual_p_low: vec![0.0; 2],
                dual_p_high: vec![0.0; 2],
                dual_q_low: vec![0.0; 2],
                dual_q_high: vec![0.0; 2],
            }],
            edges: vec![],
            history: vec![],
        };
        let lookup = MessageLookup::new(&msgs, 2, 2, &[]);
        let r = primal_residual(&state, &lookup);
        assert!((r - 0.2_f64).abs() < 1e-12);
    }

    #[test]
    fn zero_messages_give_zero_residual() {
        let msgs = vec![
            AgentMessage {
                sender: 0,
                iteration: 1,
                values: vec![SharedValue {
                    kind: SharedKind::TradeP { peer: 1 },
                    hour: 0,
                    value: 0.0,
                }, SharedValue {
                    kind: SharedKind::TradeQ { peer: 1 },
                    hour: 0,
                    value: 0.0,
                }],
            },
            AgentMessage {
                sender: 1,
                iteration: 1,
                values: vec![SharedValue {
                    kind: SharedKind::TradeP { peer: 0 },
                    hour: 0,
                    value: 0.0,
                }, SharedValue {
                    kind: SharedKind::TradeQ { peer: 0 },
                    hour: 0,
                    value: 0.0,
                }],
            },
        ];
        let state = AdmmState {
            iteration: 1,
            rho: 10.0,
            pairs: vec![PairChannel {
                low: 0,
                high: 1,
                z_p: vec![0.0],
                z_q: vec![0.0],
                dual_p_low: vec![0.0],
                dual_p_high: vec![0.0],
                dual_q_low: vec![0.0],
                dual_q_high: vec![0.0],
            }],
            edges: vec![],
            history: vec![],
        };
        let lookup = MessageLookup::new(&msgs, 2, 1, &[]);
        assert_eq!(primal_residual(&state, &lookup), 0.0);
    }

    #[test]
    fn messages_carry_only_shared_kinds() {
        // Structural privacy: every published value is a trade or an edge
        // quantity; the message type has no room for device or load data.
        use crate::ieee33::{build_ieee33_case, PreferenceCase};
        use crate::scenario::{KappaSpec, Mode};
        let s = build_ieee33_case(
            PreferenceCase::Case0,
            Mode::GridConnected,
            KappaSpec::Fixed(60.0),
        );
        let lp = crate::local::build_local_program(&s, 0, 0..s.horizon, None).unwrap();
        let x = vec![0.0; lp.program.n_vars()];
        let msg = AgentMessage::from_local(&lp, 1, &x);
        assert_eq!(msg.values.len(), lp.shared.len());
        for v in &msg.values {
            assert!(matches!(
                v.kind,
                SharedKind::TradeP { .. }
                    | SharedKind::TradeQ { .. }
                    | SharedKind::EdgeFlowP { .. }
                    | SharedKind::EdgeFlowQ { .. }
                    | SharedKind::EdgeVoltageFrom { .. }
                    | SharedKind::EdgeVoltageTo { .. }
            ));
        }
    }
}
