//! Monolithic reference path: every agent's block in one program, with the
//! pairwise couplings written as explicit equalities. Shares the exact
//! constraint builders with the distributed path, so the two routes differ
//! only in how coupling is treated.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::local::{build_local_program, cost_breakdown, BuildError, CostBreakdown, LocalProgram};
use crate::program::{
    kkt_report, ConicSolver, KktReport, QuadProgram, RowKind, RowLabel, SolveError, SolveOutcome,
    SolveStatus,
};
use crate::scenario::{validate_scenario, Scenario, Violation};

/// One agent's block inside the monolithic program.
#[derive(Debug)]
pub struct MonoBlock {
    pub local: LocalProgram,
    /// Variable-index offset of this block.
    pub offset: usize,
}

/// The concatenated program plus enough bookkeeping to slice solutions back
/// into per-agent vectors.
#[derive(Debug)]
pub struct MonolithicProgram {
    pub program: QuadProgram,
    pub blocks: Vec<MonoBlock>,
    /// Number of coupling equality rows appended after the blocks.
    pub n_coupling_rows: usize,
}

/// Builds the monolithic program: plain agent blocks plus, per hour,
/// `p_nm + p_mn = 0`, `q_nm + q_mn = 0` for every unordered pair and
/// `Y_n - Y_m = 0` componentwise for every shared edge.
pub fn build_monolithic(scenario: &Scenario) -> Result<MonolithicProgram, BuildError> {
    let n = scenario.n_agents();
    let horizon = scenario.horizon;
    let mut program = QuadProgram::new();
    let mut blocks = Vec::with_capacity(n);
    for mg in 0..n {
        let local = build_local_program(scenario, mg, 0..horizon, None)?;
        let offset = program.append(&local.program);
        blocks.push(MonoBlock { local, offset });
    }

    let var_of = |mg: usize, v: crate::program::VarId| crate::program::VarId(blocks[mg].offset + v.0);
    let mut n_coupling = 0usize;

    for low in 0..n {
        for high in (low + 1)..n {
            let slot_low = blocks[low].local.vars.peer_slot(high).expect("peer slot");
            let slot_high = blocks[high].local.vars.peer_slot(low).expect("peer slot");
            for t in 0..horizon {
                let label = RowLabel::new(RowKind::Coupling, low, t);
                program.add_eq(
                    &[
                        (var_of(low, blocks[low].local.vars.trade_p[slot_low][t]), 1.0),
                        (var_of(high, blocks[high].local.vars.trade_p[slot_high][t]), 1.0),
                    ],
                    0.0,
                    label,
                );
                program.add_eq(
                    &[
                        (var_of(low, blocks[low].local.vars.trade_q[slot_low][t]), 1.0),
                        (var_of(high, blocks[high].local.vars.trade_q[slot_high][t]), 1.0),
                    ],
                    0.0,
                    label,
                );
                n_coupling += 2;
            }
        }
    }

    for (edge_idx, def) in scenario.edges.iter().enumerate() {
        let (low, high) = def.mgs;
        let copy_low = blocks[low]
            .local
            .vars
            .edges
            .iter()
            .position(|c| c.edge == edge_idx)
            .expect("edge copy on low side");
        let copy_high = blocks[high]
            .local
            .vars
            .edges
            .iter()
            .position(|c| c.edge == edge_idx)
            .expect("edge copy on high side");
        for t in 0..horizon {
            let y_low = blocks[low].local.vars.edge_y(copy_low, def, t);
            let y_high = blocks[high].local.vars.edge_y(copy_high, def, t);
            for comp in 0..4 {
                program.add_eq(
                    &[
                        (var_of(low, y_low[comp]), 1.0),
                        (var_of(high, y_high[comp]), -1.0),
                    ],
                    0.0,
                    RowLabel::new(RowKind::Coupling, low, t),
                );
                n_coupling += 1;
            }
        }
    }

    Ok(MonolithicProgram {
        program,
        blocks,
        n_coupling_rows: n_coupling,
    })
}

/// Result of the centralized solve.
#[derive(Debug)]
pub struct CentralizedSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub breakdown: CostBreakdown,
    /// Full primal vector.
    pub x: Vec<f64>,
    /// Per-agent slices of `x`, aligned with the block order.
    pub locals: Vec<Vec<f64>>,
    pub monolithic: MonolithicProgram,
    pub kkt: KktReport,
    pub iterations: usize,
}

#[derive(Debug)]
pub enum CentralError {
    InvalidScenario(Vec<Violation>),
    /// No feasible point; the hint names the narrowest failing piece found.
    Infeasible { hint: String },
    Solver(SolveError),
    Build(BuildError),
}

impl core::fmt::Display for CentralError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CentralError::InvalidScenario(v) => {
                write!(f, "scenario failed validation ({} issues)", v.len())
            }
            CentralError::Infeasible { hint } => write!(f, "infeasible: {hint}"),
            CentralError::Solver(e) => write!(f, "{e}"),
            CentralError::Build(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for CentralError {}

/// Solves the whole network in one shot and slices the solution per agent.
///
/// On infeasibility, each agent is re-solved standalone to point at the
/// narrowest cause: either a single agent's own constraints cannot hold
/// (its balance cannot be met by its devices) or the coupling is to blame.
pub fn solve_centralized<S: ConicSolver>(
    scenario: &Scenario,
    solver: &S,
) -> Result<CentralizedSolution, CentralError> {
    let issues = validate_scenario(scenario);
    if !issues.is_empty() {
        return Err(CentralError::InvalidScenario(issues));
    }
    let mono = build_monolithic(scenario).map_err(CentralError::Build)?;
    let outcome = solver.solve(&mono.program).map_err(CentralError::Solver)?;
    let (status, sol) = match outcome {
        SolveOutcome::Optimal(s) => (SolveStatus::Optimal, s),
        SolveOutcome::NumericalLimit(s) => (SolveStatus::NumericalLimit, s),
        SolveOutcome::Infeasible => {
            let hint = infeasibility_hint(scenario, solver);
            return Err(CentralError::Infeasible { hint });
        }
    };

    let locals: Vec<Vec<f64>> = mono
        .blocks
        .iter()
        .map(|b| sol.x[b.offset..b.offset + b.local.program.n_vars()].to_vec())
        .collect();
    let mut breakdown = CostBreakdown::default();
    for (block, x) in mono.blocks.iter().zip(locals.iter()) {
        breakdown.add(&cost_breakdown(scenario, &block.local, x));
    }
    let kkt = kkt_report(&mono.program, &sol);
    Ok(CentralizedSolution {
        status,
        objective: sol.objective,
        breakdown,
        x: sol.x,
        locals,
        monolithic: mono,
        kkt,
        iterations: sol.iterations,
    })
}

fn infeasibility_hint<S: ConicSolver>(scenario: &Scenario, solver: &S) -> String {
    for mg in 0..scenario.n_agents() {
        if let Ok(lp) = build_local_program(scenario, mg, 0..scenario.horizon, None) {
            match solver.solve(&lp.program) {
                Ok(SolveOutcome::Infeasible) => {
                    return format!(
                        "microgrid {mg} cannot satisfy its own constraints; its hourly balance \
                         is unreachable with the given devices and net load"
                    );
                }
                Ok(_) => {}
                Err(_) => {}
            }
        }
    }
    String::from("every agent is feasible standalone; the pairwise coupling cannot hold")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ieee33::{build_ieee33_case, PreferenceCase};
    use crate::scenario::{KappaSpec, Mode};

    #[test]
    fn monolithic_block_and_coupling_counts() {
        let s = build_ieee33_case(
            PreferenceCase::Case1,
            Mode::GridConnected,
            KappaSpec::Fixed(60.0),
        );
        let mono = build_monolithic(&s).unwrap();
        assert_eq!(mono.blocks.len(), 8);
        let pairs = 8 * 7 / 2;
        let expected = pairs * 2 * s.horizon + s.edges.len() * 4 * s.horizon;
        assert_eq!(mono.n_coupling_rows, expected);
        // Blocks keep their variable counts: total equals the sum.
        let sum: usize = mono.blocks.iter().map(|b| b.local.program.n_vars()).sum();
        assert_eq!(mono.program.n_vars(), sum);
    }

    #[test]
    fn coupling_rows_reference_matching_pairs_once() {
        let s = build_ieee33_case(
            PreferenceCase::Case0,
            Mode::Islanding,
            KappaSpec::Fixed(20.0),
        );
        let mono = build_monolithic(&s).unwrap();
        let coupling_rows = mono
            .program
            .eq
            .labels
            .iter()
            .filter(|l| l.kind == RowKind::Coupling)
            .count();
        assert_eq!(coupling_rows, mono.n_coupling_rows);
    }
}
