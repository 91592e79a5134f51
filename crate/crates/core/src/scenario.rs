//! Problem-instance data model and validation.
//!
//! A [`Scenario`] is immutable after construction and safe to share across
//! threads; everything downstream (program builders, the coordination loop,
//! the monolithic reference) only reads it.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::devices::{check_generator, check_storage, FuelGenerator, StorageUnit};
use crate::preference::PreferenceMatrix;

/// Operating mode of the network of microgrids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    GridConnected,
    Islanding,
}

/// One physical distribution line, impedances in p.u., flow bounds in
/// MW / MVAr.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineSegment {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

impl LineSegment {
    pub fn check(&self) -> Result<(), String> {
        if self.from_bus == self.to_bus {
            return Err(String::from("line endpoints coincide"));
        }
        if self.r < 0.0 || self.x < 0.0 {
            return Err(String::from("impedances must be nonnegative"));
        }
        if self.p_min > self.p_max || self.q_min > self.q_max {
            return Err(String::from("flow bounds inverted"));
        }
        Ok(())
    }
}

/// A bus with squared-voltage bounds (p.u.^2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bus {
    /// Global bus index, unique across the whole scenario.
    pub index: usize,
    pub v_min_sq: f64,
    pub v_max_sq: f64,
}

/// Hourly net load at one bus: local demand offset by co-located renewable
/// generation, so entries may be negative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetLoad {
    pub bus: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// One agent: an internal radial network with its devices and net loads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MicrogridModel {
    pub id: usize,
    pub buses: Vec<Bus>,
    /// Internal lines; must form a tree over `buses`.
    pub lines: Vec<LineSegment>,
    pub generators: Vec<FuelGenerator>,
    pub storages: Vec<StorageUnit>,
    pub net_loads: Vec<NetLoad>,
}

impl MicrogridModel {
    pub fn has_bus(&self, index: usize) -> bool {
        self.buses.iter().any(|b| b.index == index)
    }

    /// Total net active load of the agent at hour `t`.
    pub fn total_net_p(&self, t: usize) -> f64 {
        self.net_loads.iter().map(|l| l.p[t]).sum()
    }

    pub fn total_net_q(&self, t: usize) -> f64 {
        self.net_loads.iter().map(|l| l.q[t]).sum()
    }
}

/// Physical link between two agents; `line.from_bus` belongs to `mgs.0`,
/// `line.to_bus` to `mgs.1`, and flows are measured positive in that
/// direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeDef {
    /// `(n, m)` with `n < m`.
    pub mgs: (usize, usize),
    pub line: LineSegment,
}

/// Price inputs, $/MWh, one entry per hour.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceSeries {
    /// Price of energy traded with the grid operator.
    pub c_dso: Vec<f64>,
    /// Price applied to line losses.
    pub c_loss: Vec<f64>,
    /// Scaling series for the preference weights.
    pub kappa: Vec<f64>,
}

/// How the preference scaling series is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KappaSpec {
    Fixed(f64),
    /// Hourly draws from `U[low, high]`, deterministic in `seed`.
    Uniform { low: f64, high: f64, seed: u64 },
}

/// A full problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub microgrids: Vec<MicrogridModel>,
    pub edges: Vec<EdgeDef>,
    /// Number of hourly steps.
    pub horizon: usize,
    pub mode: Mode,
    pub prices: PriceSeries,
    pub preferences: PreferenceMatrix,
    /// `(microgrid, bus)` where the grid attaches; present exactly in
    /// grid-connected mode.
    pub dso_attachment: Option<(usize, usize)>,
    /// `(microgrid, bus)` whose squared voltage is pinned to 1.0. In
    /// grid-connected mode this is the attachment bus.
    pub anchor: (usize, usize),
    /// Bound on each nonnegative trade part between two agents, MW/MVAr.
    pub trade_bound: f64,
    /// Bound on each nonnegative grid-trade part, MW/MVAr.
    pub dso_bound: f64,
    /// Optional terminal condition pinning each storage back to its initial
    /// state; off by default.
    pub terminal_soc_equals_initial: bool,
}

impl Scenario {
    pub fn n_agents(&self) -> usize {
        self.microgrids.len()
    }

    /// Trading counterparties of agent `n`: every other agent.
    pub fn peers(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        let count = self.microgrids.len();
        (0..count).filter(move |&m| m != n)
    }

    /// Edges incident to agent `n`, with a flag telling whether `n` is the
    /// sending (`mgs.0`) side.
    pub fn incident_edges(&self, n: usize) -> Vec<(usize, bool)> {
        self.edges
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                if e.mgs.0 == n {
                    Some((i, true))
                } else if e.mgs.1 == n {
                    Some((i, false))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Buses of agent `n` that touch an inter-agent edge or the grid
    /// attachment.
    pub fn boundary_buses(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for e in &self.edges {
            if e.mgs.0 == n {
                out.push(e.line.from_bus);
            } else if e.mgs.1 == n {
                out.push(e.line.to_bus);
            }
        }
        if let Some((mg, bus)) = self.dso_attachment {
            if mg == n {
                out.push(bus);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// One broken invariant found by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

/// Union-find connectivity/acyclicity check over one agent's internal lines.
fn is_radial(mg: &MicrogridModel) -> bool {
    let n = mg.buses.len();
    if n == 0 {
        return false;
    }
    if mg.lines.len() != n - 1 {
        return false;
    }
    let mut index_of = alloc::collections::BTreeMap::new();
    for (i, b) in mg.buses.iter().enumerate() {
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
    for line in &mg.lines {
        let (Some(&a), Some(&b)) = (index_of.get(&line.from_bus), index_of.get(&line.to_bus))
        else {
            return false;
        };
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return false; // cycle
        }
        parent[ra] = rb;
    }
    let root = find(&mut parent, 0);
    (1..n).all(|i| find(&mut parent, i) == root)
}

/// Checks every structural invariant of a scenario. An empty report means
/// the instance is well formed; violations are data, not errors.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |entity: String, rule: String| out.push(Violation { entity, rule });

    if s.horizon == 0 {
        push(String::from("scenario"), String::from("horizon must be at least 1"));
    }

    // Global bus ownership: every bus id in exactly one agent.
    let mut seen = alloc::collections::BTreeMap::new();
    for mg in &s.microgrids {
        for b in &mg.buses {
            if let Some(prev) = seen.insert(b.index, mg.id) {
                push(
                    format!("bus {}", b.index),
                    format!("owned by both microgrid {prev} and microgrid {}", mg.id),
                );
            }
            if b.v_min_sq <= 0.0 || b.v_min_sq > b.v_max_sq {
                push(format!("bus {}", b.index), String::from("bad voltage bounds"));
            }
        }
    }

    for mg in &s.microgrids {
        let name = format!("microgrid {}", mg.id);
        if !is_radial(mg) {
            push(name.clone(), String::from("internal lines must form a radial tree"));
        }
        for line in &mg.lines {
            if let Err(e) = line.check() {
                push(format!("{name} line {}-{}", line.from_bus, line.to_bus), e);
            }
            if !mg.has_bus(line.from_bus) || !mg.has_bus(line.to_bus) {
                push(
                    format!("{name} line {}-{}", line.from_bus, line.to_bus),
                    String::from("endpoint bus not in this microgrid"),
                );
            }
        }
        for (i, g) in mg.generators.iter().enumerate() {
            if let Err(e) = check_generator(g) {
                push(format!("{name} generator {i}"), e);
            }
            if !mg.has_bus(g.bus) {
                push(format!("{name} generator {i}"), format!("references missing bus {}", g.bus));
            }
        }
        for (i, st) in mg.storages.iter().enumerate() {
            if let Err(e) = check_storage(st) {
                push(format!("{name} storage {i}"), e);
            }
            if !mg.has_bus(st.bus) {
                push(format!("{name} storage {i}"), format!("references missing bus {}", st.bus));
            }
        }
        for l in &mg.net_loads {
            if !mg.has_bus(l.bus) {
                push(format!("{name} net load"), format!("references missing bus {}", l.bus));
            }
            if l.p.len() != s.horizon || l.q.len() != s.horizon {
                push(
                    format!("{name} net load at bus {}", l.bus),
                    format!("series length differs from horizon {}", s.horizon),
                );
            }
        }
    }

    // Inter-agent edges.
    let mut pair_seen = alloc::collections::BTreeSet::new();
    for e in &s.edges {
        let (n, m) = e.mgs;
        let name = format!("edge ({n},{m})");
        if n >= m {
            push(name.clone(), String::from("edge pair must be ordered n < m"));
        }
        if !pair_seen.insert((n, m)) {
            push(name.clone(), String::from("duplicate edge pair"));
        }
        if n >= s.microgrids.len() || m >= s.microgrids.len() {
            push(name.clone(), String::from("references a missing microgrid"));
            continue;
        }
        if let Err(err) = e.line.check() {
            push(name.clone(), err);
        }
        if !s.microgrids[n].has_bus(e.line.from_bus) {
            push(
                name.clone(),
                format!("boundary bus {} not in microgrid {n}", e.line.from_bus),
            );
        }
        if !s.microgrids[m].has_bus(e.line.to_bus) {
            push(
                name.clone(),
                format!("boundary bus {} not in microgrid {m}", e.line.to_bus),
            );
        }
    }

    // No line, internal or edge, may appear twice.
    let mut line_seen = alloc::collections::BTreeSet::new();
    let all_lines = s
        .microgrids
        .iter()
        .flat_map(|mg| mg.lines.iter())
        .chain(s.edges.iter().map(|e| &e.line));
    for line in all_lines {
        let key = if line.from_bus < line.to_bus {
            (line.from_bus, line.to_bus)
        } else {
            (line.to_bus, line.from_bus)
        };
        if !line_seen.insert(key) {
            push(
                format!("line {}-{}", key.0, key.1),
                String::from("appears more than once across the scenario"),
            );
        }
    }

    // Mode / attachment consistency.
    match (s.mode, s.dso_attachment) {
        (Mode::Islanding, Some(_)) => push(
            String::from("scenario"),
            String::from("islanding mode must not carry a grid attachment"),
        ),
        (Mode::GridConnected, None) => push(
            String::from("scenario"),
            String::from("grid-connected mode requires a grid attachment"),
        ),
        (Mode::GridConnected, Some((mg, bus))) => {
            if mg >= s.microgrids.len() || !s.microgrids[mg].has_bus(bus) {
                push(
                    String::from("dso attachment"),
                    format!("references missing bus {bus} in microgrid {mg}"),
                );
            }
        }
        _ => {}
    }

    let (amg, abus) = s.anchor;
    if amg >= s.microgrids.len() || !s.microgrids[amg].has_bus(abus) {
        push(
            String::from("voltage anchor"),
            format!("references missing bus {abus} in microgrid {amg}"),
        );
    }

    // Prices.
    for (series, label) in [
        (&s.prices.c_dso, "c_dso"),
        (&s.prices.c_loss, "c_loss"),
        (&s.prices.kappa, "kappa"),
    ] {
        if series.len() != s.horizon {
            push(
                format!("prices.{label}"),
                format!("length {} differs from horizon {}", series.len(), s.horizon),
            );
        }
        if series.iter().any(|&v| v < 0.0) {
            push(format!("prices.{label}"), String::from("negative price entry"));
        }
    }

    // Preference matrix shape and row sums.
    if s.preferences.n_agents() != s.microgrids.len() {
        push(
            String::from("preferences"),
            format!(
                "matrix is {} x ?, expected one row per microgrid ({})",
                s.preferences.n_agents(),
                s.microgrids.len()
            ),
        );
    } else if let Err(e) = s.preferences.check(s.mode == Mode::GridConnected) {
        push(String::from("preferences"), e);
    }

    if s.trade_bound <= 0.0 || s.dso_bound <= 0.0 {
        push(String::from("scenario"), String::from("trade bounds must be positive"));
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ieee33::{build_ieee33_case, PreferenceCase};

    fn valid_built_in() -> Scenario {
        build_ieee33_case(PreferenceCase::Case0, Mode::GridConnected, KappaSpec::Fixed(60.0))
    }

    #[test]
    fn built_in_case_is_valid() {
        let report = validate_scenario(&valid_built_in());
        assert!(report.is_empty(), "unexpected violations: {report:?}");
    }

    #[test]
    fn cycle_is_flagged_as_radiality_violation() {
        let mut s = valid_built_in();
        // Duplicate an existing internal line backwards to create a cycle.
        let line = s.microgrids[0].lines[0].clone();
        s.microgrids[0].lines.push(LineSegment {
            from_bus: line.to_bus,
            to_bus: line.from_bus,
            ..line
        });
        let report = validate_scenario(&s);
        assert!(report
            .iter()
            .any(|v| v.rule.contains("radial")), "report: {report:?}");
    }

    #[test]
    fn islanding_with_attachment_is_flagged() {
        let mut s = valid_built_in();
        s.mode = Mode::Islanding;
        // dso_attachment intentionally left set.
        let report = validate_scenario(&s);
        assert!(report.iter().any(|v| v.rule.contains("islanding")));
    }

    #[test]
    fn dangling_device_bus_is_flagged() {
        let mut s = valid_built_in();
        s.microgrids[2].generators[0].bus = 99;
        let report = validate_scenario(&s);
        assert!(report.iter().any(|v| v.rule.contains("missing bus 99")));
    }

    #[test]
    fn boundary_buses_of_built_in_case() {
        let s = valid_built_in();
        // Agent 0 touches three edges plus the grid attachment at bus 0.
        let b = s.boundary_buses(0);
        assert!(b.contains(&0));
        assert_eq!(b.len(), 4);
    }
}
