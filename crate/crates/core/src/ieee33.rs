//! Built-in case: the 33-bus radial distribution feeder partitioned into a
//! network of 8 microgrids, with the three preference presets and synthetic
//! deterministic load profiles.
//!
//! Line resistances/reactances and the load mix are the classical Baran-Wu
//! 33-bus data, converted to per-unit on a 12.66 kV, 1 MVA base. The bus
//! partition and the resulting agent-level graph are bundled configuration:
//!
//! ```text
//! agents:  0:{0,1,2,3}  1:{18..21}  2:{22,23,24}  3:{4..7}
//!          4:{8..11}    5:{12,13,14}  6:{25..32}  7:{15,16,17}
//! edges:   (0,1) (0,2) (0,3) (3,4) (3,6) (4,5) (5,7)
//! ```
//!
//! Edge (0,3) is the only link between {0,1,2} and {3..7}. The grid
//! attaches at bus 0 (agent 0) in grid-connected mode.
//!
//! Generator marginal costs differ across agents; the spread is what makes
//! trading worthwhile at all under the preference penalties, and its
//! magnitudes are chosen so that each preset's intended exchange topology
//! emerges at the documented prices. Load profiles are diurnal shapes with
//! staggered peaks and a small seeded jitter, scaled so every agent can
//! cover its own peak from local capacity (trades are an economic choice,
//! never a lifeline).

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::devices::{FuelGenerator, StorageUnit};
use crate::math;
use crate::preference::PreferenceMatrix;
use crate::scenario::{
    Bus, EdgeDef, KappaSpec, LineSegment, MicrogridModel, Mode, NetLoad, PriceSeries, Scenario,
};

/// `(from, to, R ohm, X ohm)` for the 32 branches.
const LINES: [(usize, usize, f64, f64); 32] = [
    (0, 1, 0.0922, 0.0470),
    (1, 2, 0.4930, 0.2511),
    (2, 3, 0.3660, 0.1864),
    (3, 4, 0.3811, 0.1941),
    (4, 5, 0.8190, 0.7070),
    (5, 6, 0.1872, 0.6188),
    (6, 7, 0.7114, 0.2351),
    (7, 8, 1.0300, 0.7400),
    (8, 9, 1.0440, 0.7400),
    (9, 10, 0.1966, 0.0650),
    (10, 11, 0.3744, 0.1238),
    (11, 12, 1.4680, 1.1550),
    (12, 13, 0.5416, 0.7129),
    (13, 14, 0.5910, 0.5260),
    (14, 15, 0.7463, 0.5450),
    (15, 16, 1.2890, 1.7210),
    (16, 17, 0.7320, 0.5740),
    (1, 18, 0.1640, 0.1565),
    (18, 19, 1.5042, 1.3554),
    (19, 20, 0.4095, 0.4784),
    (20, 21, 0.7089, 0.9373),
    (2, 22, 0.4512, 0.3083),
    (22, 23, 0.8980, 0.7091),
    (23, 24, 0.8960, 0.7011),
    (5, 25, 0.2030, 0.1034),
    (25, 26, 0.2842, 0.1447),
    (26, 27, 1.0590, 0.9337),
    (27, 28, 0.8042, 0.7006),
    (28, 29, 0.5075, 0.2585),
    (29, 30, 0.9744, 0.9630),
    (30, 31, 0.3105, 0.3619),
    (31, 32, 0.3410, 0.5302),
];

/// `(bus, kW, kVAr)` nominal loads; bus 0 carries none.
const LOADS: [(usize, f64, f64); 32] = [
    (1, 100.0, 60.0),
    (2, 90.0, 40.0),
    (3, 120.0, 80.0),
    (4, 60.0, 30.0),
    (5, 60.0, 20.0),
    (6, 200.0, 100.0),
    (7, 200.0, 100.0),
    (8, 60.0, 20.0),
    (9, 60.0, 20.0),
    (10, 45.0, 30.0),
    (11, 60.0, 35.0),
    (12, 60.0, 35.0),
    (13, 120.0, 80.0),
    (14, 60.0, 10.0),
    (15, 60.0, 20.0),
    (16, 60.0, 20.0),
    (17, 90.0, 40.0),
    (18, 90.0, 40.0),
    (19, 90.0, 40.0),
    (20, 90.0, 40.0),
    (21, 90.0, 40.0),
    (22, 90.0, 50.0),
    (23, 420.0, 200.0),
    (24, 420.0, 200.0),
    (25, 60.0, 25.0),
    (26, 60.0, 25.0),
    (27, 60.0, 20.0),
    (28, 120.0, 70.0),
    (29, 200.0, 600.0),
    (30, 150.0, 70.0),
    (31, 210.0, 100.0),
    (32, 60.0, 40.0),
];

/// Impedance base: (12.66 kV)^2 / 1 MVA.
const Z_BASE_OHM: f64 = 12.66 * 12.66;

/// Bus membership of each agent.
const PARTITION: [&[usize]; 8] = [
    &[0, 1, 2, 3],
    &[18, 19, 20, 21],
    &[22, 23, 24],
    &[4, 5, 6, 7],
    &[8, 9, 10, 11],
    &[12, 13, 14],
    &[25, 26, 27, 28, 29, 30, 31, 32],
    &[15, 16, 17],
];

/// Physical branches that join two agents, as `(from, to)` bus pairs.
const EDGE_BUS_PAIRS: [(usize, usize); 7] = [
    (1, 18),  // agents (0,1)
    (2, 22),  // agents (0,2)
    (3, 4),   // agents (0,3)
    (7, 8),   // agents (3,4)
    (5, 25),  // agents (3,6)
    (11, 12), // agents (4,5)
    (14, 15), // agents (5,7)
];

/// Bus hosting each agent's fuel generator.
const FG_BUS: [usize; 8] = [0, 18, 22, 4, 8, 12, 25, 15];

/// Linear generation cost per agent, $/MWh. The spread drives who sells to
/// whom once the preference penalties are subtracted.
const FG_LINEAR_COST: [f64; 8] = [38.5, 34.0, 39.1, 40.0, 43.5, 47.0, 43.0, 38.5];

const FG_QUAD_A: f64 = 0.6;
const FG_CAPACITY_MW: f64 = 0.30;
const FG_RAMP_MW_PER_H: f64 = 0.10;
const FG_REACTIVE_MVAR: f64 = 0.30;

/// The two storage buses per agent (the highest-load buses of each).
const ESS_BUSES: [[usize; 2]; 8] = [
    [3, 1],
    [18, 19],
    [23, 24],
    [6, 7],
    [8, 9],
    [13, 12],
    [31, 29],
    [17, 15],
];

const ESS_CAPACITY: f64 = 0.2;
const ESS_EFFICIENCY: f64 = 0.9;

/// Peak net load per agent, MW; each stays below the local generator
/// capacity so islanded operation is always feasible.
const PEAK_MW: [f64; 8] = [0.24, 0.20, 0.24, 0.18, 0.18, 0.26, 0.24, 0.18];

/// Phase offset of each agent's diurnal shape, hours. Sellers peak early,
/// buyers late, so spare capacity exists when it is wanted.
const PHASE_H: [f64; 8] = [0.0, 3.0, -2.0, 5.0, 2.0, -1.0, -4.0, 4.0];

const VOLT_MIN_SQ: f64 = 0.81;
const VOLT_MAX_SQ: f64 = 1.21;
const LINE_FLOW_BOUND: f64 = 2.0;
const DSO_TRADE_BOUND: f64 = 5.0;

/// Seed behind the bundled profiles.
pub const DEFAULT_PROFILE_SEED: u64 = 7;

/// The three bundled preference presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreferenceCase {
    /// Equal preferences toward every counterparty.
    Case0,
    /// Favors exchanges inside {0,1,2} and inside {3..7}.
    Case1,
    /// Favors three groups: {0,1,2}, {3,4,6}, {5,7}.
    Case2,
}

impl PreferenceCase {
    pub fn index(self) -> u8 {
        match self {
            PreferenceCase::Case0 => 0,
            PreferenceCase::Case1 => 1,
            PreferenceCase::Case2 => 2,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            0 => Some(PreferenceCase::Case0),
            1 => Some(PreferenceCase::Case1),
            2 => Some(PreferenceCase::Case2),
            _ => None,
        }
    }
}

#[rustfmt::skip]
const CASE1_ROWS: [[f64; 8]; 8] = [
    [0.02, 0.04, 0.04, 0.18, 0.18, 0.18, 0.18, 0.18],
    [0.04, 0.02, 0.04, 0.18, 0.18, 0.18, 0.18, 0.18],
    [0.04, 0.04, 0.02, 0.18, 0.18, 0.18, 0.18, 0.18],
    [0.30, 0.30, 0.30, 0.02, 0.02, 0.01, 0.03, 0.02],
    [0.30, 0.30, 0.30, 0.02, 0.01, 0.03, 0.02, 0.02],
    [0.30, 0.30, 0.30, 0.01, 0.02, 0.02, 0.02, 0.03],
    [0.30, 0.30, 0.30, 0.01, 0.02, 0.03, 0.02, 0.02],
    [0.30, 0.30, 0.30, 0.02, 0.02, 0.02, 0.02, 0.02],
];

#[rustfmt::skip]
const CASE2_ROWS: [[f64; 8]; 8] = [
    [0.03, 0.03, 0.04, 0.18, 0.18, 0.18, 0.18, 0.18],
    [0.04, 0.02, 0.04, 0.18, 0.18, 0.18, 0.18, 0.18],
    [0.03, 0.05, 0.02, 0.18, 0.18, 0.18, 0.18, 0.18],
    [0.18, 0.18, 0.18, 0.03, 0.03, 0.18, 0.04, 0.18],
    [0.18, 0.18, 0.18, 0.05, 0.02, 0.18, 0.03, 0.18],
    [0.15, 0.15, 0.15, 0.15, 0.15, 0.03, 0.15, 0.07],
    [0.18, 0.18, 0.18, 0.04, 0.04, 0.18, 0.02, 0.18],
    [0.15, 0.15, 0.15, 0.15, 0.15, 0.05, 0.15, 0.05],
];

/// Preference matrix of a preset (grid column all ones).
pub fn preference_matrix(case: PreferenceCase) -> PreferenceMatrix {
    let weights: Vec<Vec<f64>> = match case {
        PreferenceCase::Case0 => (0..8)
            .map(|i| {
                (0..8)
                    .map(|j| if i == j { 0.02 } else { 0.14 })
                    .collect()
            })
            .collect(),
        PreferenceCase::Case1 => CASE1_ROWS.iter().map(|r| r.to_vec()).collect(),
        PreferenceCase::Case2 => CASE2_ROWS.iter().map(|r| r.to_vec()).collect(),
    };
    PreferenceMatrix {
        weights,
        grid: vec![1.0; 8],
    }
}

fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    // 53 mantissa bits of the next draw, scaled into [0, 1).
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Hourly scaling series drawn uniformly from `[low, high]`.
pub fn random_kappa(low: f64, high: f64, seed: u64, horizon: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..horizon)
        .map(|_| low + (high - low) * uniform01(&mut rng))
        .collect()
}

/// Deterministic synthetic profiles: per-agent net loads distributed over
/// buses by the nominal load mix, plus a price series with a time-varying
/// scaling factor drawn from `[20, 100]` $/MWh.
///
/// Shapes are diurnal with the phase offsets above and a +-3% jitter; draws
/// happen agent-major, hour-minor, so output is a pure function of `seed`.
pub fn generate_profiles(seed: u64, horizon: usize) -> (Vec<Vec<NetLoad>>, PriceSeries) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_agent = Vec::with_capacity(8);
    for (mg, members) in PARTITION.iter().enumerate() {
        // Agent-level hourly series.
        let mut series = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let angle =
                2.0 * core::f64::consts::PI * ((t as f64) - 6.0 + PHASE_H[mg]) / 24.0;
            let diurnal = 0.5 * (1.0 - math::cos(angle));
            let jitter = 0.97 + 0.06 * uniform01(&mut rng);
            series.push(PEAK_MW[mg] * (0.4 + 0.6 * diurnal) * jitter);
        }
        // Distribute over buses by nominal weight; reactive follows each
        // bus's nominal power factor.
        let weight_of = |bus: usize| -> (f64, f64) {
            LOADS
                .iter()
                .find(|(b, _, _)| *b == bus)
                .map(|&(_, p, q)| (p, q))
                .unwrap_or((0.0, 0.0))
        };
        let total_kw: f64 = members.iter().map(|&b| weight_of(b).0).sum();
        let loads = members
            .iter()
            .filter(|&&b| weight_of(b).0 > 0.0)
            .map(|&b| {
                let (kw, kvar) = weight_of(b);
                let share = kw / total_kw;
                let pf_ratio = kvar / kw;
                NetLoad {
                    bus: b,
                    p: series.iter().map(|v| v * share).collect(),
                    q: series.iter().map(|v| v * share * pf_ratio).collect(),
                }
            })
            .collect();
        per_agent.push(loads);
    }
    let kappa = random_kappa(20.0, 100.0, seed ^ 0x6b61707061, horizon);
    let prices = PriceSeries {
        c_dso: kappa.clone(),
        c_loss: kappa.clone(),
        kappa,
    };
    (per_agent, prices)
}

/// Builds the 8-agent case with the bundled profile seed.
pub fn build_ieee33_case(case: PreferenceCase, mode: Mode, kappa: KappaSpec) -> Scenario {
    build_ieee33_case_seeded(case, mode, kappa, DEFAULT_PROFILE_SEED)
}

/// Builds the 8-agent case with an explicit profile seed.
pub fn build_ieee33_case_seeded(
    case: PreferenceCase,
    mode: Mode,
    kappa: KappaSpec,
    profile_seed: u64,
) -> Scenario {
    let horizon = 24;
    let (loads, _) = generate_profiles(profile_seed, horizon);

    let agent_of = |bus: usize| -> usize {
        PARTITION
            .iter()
            .position(|members| members.contains(&bus))
            .expect("every bus belongs to an agent")
    };
    let to_pu = |ohm: f64| ohm / Z_BASE_OHM;
    let segment = |from: usize, to: usize, r: f64, x: f64| LineSegment {
        from_bus: from,
        to_bus: to,
        r: to_pu(r),
        x: to_pu(x),
        p_min: -LINE_FLOW_BOUND,
        p_max: LINE_FLOW_BOUND,
        q_min: -LINE_FLOW_BOUND,
        q_max: LINE_FLOW_BOUND,
    };

    let mut microgrids: Vec<MicrogridModel> = (0..8)
        .map(|mg| MicrogridModel {
            id: mg,
            buses: PARTITION[mg]
                .iter()
                .map(|&b| Bus {
                    index: b,
                    v_min_sq: VOLT_MIN_SQ,
                    v_max_sq: VOLT_MAX_SQ,
                })
                .collect(),
            lines: Vec::new(),
            generators: vec![FuelGenerator {
                a: FG_QUAD_A,
                b: FG_LINEAR_COST[mg],
                c: 0.0,
                p_min: 0.0,
                p_max: FG_CAPACITY_MW,
                q_min: -FG_REACTIVE_MVAR,
                q_max: FG_REACTIVE_MVAR,
                ramp: FG_RAMP_MW_PER_H,
                bus: FG_BUS[mg],
            }],
            storages: ESS_BUSES[mg]
                .iter()
                .map(|&bus| StorageUnit {
                    x_min: 0.0,
                    x_max: ESS_CAPACITY,
                    x_init: 0.5 * ESS_CAPACITY,
                    beta_char: ESS_EFFICIENCY,
                    beta_disc: ESS_EFFICIENCY,
                    p_char_max: ESS_CAPACITY,
                    p_disc_max: ESS_CAPACITY,
                    bus,
                })
                .collect(),
            net_loads: loads[mg].clone(),
        })
        .collect();

    let mut edges = Vec::new();
    for &(from, to, r, x) in LINES.iter() {
        let (a, b) = (agent_of(from), agent_of(to));
        if a == b {
            microgrids[a].lines.push(segment(from, to, r, x));
        } else {
            debug_assert!(EDGE_BUS_PAIRS.contains(&(from, to)));
            let (low, high, seg) = if a < b {
                (a, b, segment(from, to, r, x))
            } else {
                (b, a, segment(to, from, r, x))
            };
            edges.push(EdgeDef {
                mgs: (low, high),
                line: seg,
            });
        }
    }
    edges.sort_by_key(|e| e.mgs);

    let kappa_series = match kappa {
        KappaSpec::Fixed(v) => vec![v; horizon],
        KappaSpec::Uniform { low, high, seed } => random_kappa(low, high, seed, horizon),
    };
    let prices = PriceSeries {
        c_dso: kappa_series.clone(),
        c_loss: kappa_series.clone(),
        kappa: kappa_series,
    };

    Scenario {
        microgrids,
        edges,
        horizon,
        mode,
        prices,
        preferences: preference_matrix(case),
        dso_attachment: match mode {
            Mode::GridConnected => Some((0, 0)),
            Mode::Islanding => None,
        },
        anchor: (0, 0),
        trade_bound: LINE_FLOW_BOUND,
        dso_bound: DSO_TRADE_BOUND,
        terminal_soc_equals_initial: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::validate_scenario;

    #[test]
    fn partition_covers_every_bus_once() {
        let mut seen = [false; 33];
        for members in PARTITION.iter() {
            for &b in members.iter() {
                assert!(!seen[b], "bus {b} in two agents");
                seen[b] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn case_builds_with_expected_shape() {
        let s = build_ieee33_case(
            PreferenceCase::Case0,
            Mode::GridConnected,
            KappaSpec::Fixed(60.0),
        );
        assert_eq!(s.microgrids.len(), 8);
        let internal: usize = s.microgrids.iter().map(|m| m.lines.len()).sum();
        assert_eq!(internal + s.edges.len(), 32);
        assert_eq!(s.edges.len(), 7);
        let pairs: Vec<(usize, usize)> = s.edges.iter().map(|e| e.mgs).collect();
        assert_eq!(
            pairs,
            vec![(0, 1), (0, 2), (0, 3), (3, 4), (3, 6), (4, 5), (5, 7)]
        );
    }

    #[test]
    fn edge_0_3_is_the_unique_link_between_the_two_halves() {
        let s = build_ieee33_case(
            PreferenceCase::Case1,
            Mode::GridConnected,
            KappaSpec::Fixed(60.0),
        );
        let left = [0usize, 1, 2];
        let crossing: Vec<(usize, usize)> = s
            .edges
            .iter()
            .map(|e| e.mgs)
            .filter(|&(a, b)| left.contains(&a) != left.contains(&b))
            .collect();
        assert_eq!(crossing, vec![(0, 3)]);
    }

    #[test]
    fn all_six_built_in_scenarios_validate_clean() {
        for case in [
            PreferenceCase::Case0,
            PreferenceCase::Case1,
            PreferenceCase::Case2,
        ] {
            for mode in [Mode::GridConnected, Mode::Islanding] {
                let s = build_ieee33_case(case, mode, KappaSpec::Fixed(60.0));
                let report = validate_scenario(&s);
                assert!(report.is_empty(), "{case:?}/{mode:?}: {report:?}");
            }
        }
    }

    #[test]
    fn preset_rows_match_published_values() {
        let m = preference_matrix(PreferenceCase::Case1);
        assert_eq!(
            m.weights[3],
            vec![0.30, 0.30, 0.30, 0.02, 0.02, 0.01, 0.03, 0.02]
        );
        assert_eq!(m.grid[3], 1.0);

        let m0 = preference_matrix(PreferenceCase::Case0);
        for i in 0..8 {
            for j in 0..8 {
                let expect = if i == j { 0.02 } else { 0.14 };
                assert_eq!(m0.weights[i][j], expect);
            }
        }
    }

    #[test]
    fn every_preset_row_sums_to_one() {
        for case in [
            PreferenceCase::Case0,
            PreferenceCase::Case1,
            PreferenceCase::Case2,
        ] {
            let m = preference_matrix(case);
            for (i, row) in m.weights.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                assert!(
                    (sum - 1.0_f64).abs() <= 1e-9,
                    "{case:?} row {i} sums to {sum}"
                );
            }
        }
    }

    #[test]
    fn two_storages_per_agent_with_bundled_capacity() {
        let s = build_ieee33_case(
            PreferenceCase::Case2,
            Mode::Islanding,
            KappaSpec::Fixed(20.0),
        );
        for mg in &s.microgrids {
            assert_eq!(mg.storages.len(), 2);
            for st in &mg.storages {
                assert_eq!(st.x_max, 0.2);
                assert_eq!(st.p_char_max, 0.2);
                assert_eq!(st.beta_char, 0.9);
            }
        }
    }

    #[test]
    fn profiles_are_deterministic_in_the_seed() {
        let (a, pa) = generate_profiles(7, 24);
        let (b, pb) = generate_profiles(7, 24);
        for (la, lb) in a.iter().flatten().zip(b.iter().flatten()) {
            assert_eq!(la.p, lb.p);
            assert_eq!(la.q, lb.q);
        }
        assert_eq!(pa.kappa, pb.kappa);
        let (c, _) = generate_profiles(8, 24);
        assert_ne!(a[0][0].p, c[0][0].p);
    }

    #[test]
    fn random_kappa_stays_in_range() {
        let k = random_kappa(20.0, 100.0, 99, 240);
        assert!(k.iter().all(|&v| (20.0..=100.0).contains(&v)));
    }

    #[test]
    fn profiles_leave_headroom_and_ramp_slack() {
        let (loads, _) = generate_profiles(DEFAULT_PROFILE_SEED, 24);
        for (mg, agent_loads) in loads.iter().enumerate() {
            let total: Vec<f64> = (0..24)
                .map(|t| agent_loads.iter().map(|l| l.p[t]).sum())
                .collect();
            for (t, &v) in total.iter().enumerate() {
                assert!(
                    v < FG_CAPACITY_MW - 0.02,
                    "agent {mg} hour {t}: load {v} too close to capacity"
                );
                assert!(v > 0.05, "agent {mg} hour {t}: load {v} implausibly small");
                if t > 0 {
                    assert!(
                        (v - total[t - 1]).abs() < 0.08,
                        "agent {mg} hour {t}: ramp too steep"
                    );
                }
            }
            let q_peak: f64 = (0..24)
                .map(|t| agent_loads.iter().map(|l| l.q[t]).sum::<f64>())
                .fold(0.0, f64::max);
            assert!(q_peak < FG_REACTIVE_MVAR, "agent {mg}: reactive peak {q_peak}");
        }
    }
}
