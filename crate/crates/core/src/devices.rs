//! Fuel generators and storage units: cost evaluation, dynamics, and the
//! per-device constraint fragments of an agent's program.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::program::{QuadProgram, RowKind, RowLabel, VarId};

/// Dispatchable fuel generator with quadratic cost
/// `1/2 a^2 p^2 + b p + c` ($/h for p in MW).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuelGenerator {
    /// Square root of the quadratic cost coefficient; the quadratic term is
    /// `1/2 a^2 p^2`.
    pub a: f64,
    /// Linear cost coefficient, $/MWh.
    pub b: f64,
    /// Constant cost, $/h.
    pub c: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Ramp limit between consecutive hours, MW/h.
    pub ramp: f64,
    /// Global bus index the unit connects to.
    pub bus: usize,
}

/// First-order storage unit. The state update is
/// `x[t+1] = x[t] + beta_char * p_char - beta_disc * p_disc`, and the same
/// `beta`-weighted net draw is what the unit exchanges with its bus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StorageUnit {
    pub x_min: f64,
    pub x_max: f64,
    /// Initial state of charge, MWh.
    pub x_init: f64,
    pub beta_char: f64,
    pub beta_disc: f64,
    pub p_char_max: f64,
    pub p_disc_max: f64,
    /// Global bus index the unit connects to.
    pub bus: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceError {
    PowerOutOfBounds { p: f64, lo: f64, hi: f64 },
    NegativePower(f64),
}

impl core::fmt::Display for DeviceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DeviceError::PowerOutOfBounds { p, lo, hi } => {
                write!(f, "power {p} outside [{lo}, {hi}]")
            }
            DeviceError::NegativePower(p) => write!(f, "negative power {p}"),
        }
    }
}

impl core::error::Error for DeviceError {}

/// Generation cost at output `p`.
pub fn fg_cost(g: &FuelGenerator, p: f64) -> Result<f64, DeviceError> {
    if p < g.p_min - 1e-12 || p > g.p_max + 1e-12 {
        return Err(DeviceError::PowerOutOfBounds {
            p,
            lo: g.p_min,
            hi: g.p_max,
        });
    }
    Ok(0.5 * g.a * g.a * p * p + g.b * p + g.c)
}

/// One-hour state update. No clamping: keeping the state inside its bounds
/// is the optimizer's job, this is just the recursion.
pub fn storage_step(
    s: &StorageUnit,
    x: f64,
    p_char: f64,
    p_disc: f64,
) -> Result<f64, DeviceError> {
    if p_char < 0.0 {
        return Err(DeviceError::NegativePower(p_char));
    }
    if p_disc < 0.0 {
        return Err(DeviceError::NegativePower(p_disc));
    }
    Ok(x + s.beta_char * p_char - s.beta_disc * p_disc)
}

/// Per-generator decision variables over a horizon.
#[derive(Debug, Clone)]
pub struct GeneratorVars {
    /// Active output per hour.
    pub p: Vec<VarId>,
    /// Reactive output per hour.
    pub q: Vec<VarId>,
}

/// Per-storage decision variables over a horizon.
#[derive(Debug, Clone)]
pub struct StorageVars {
    pub charge: Vec<VarId>,
    pub discharge: Vec<VarId>,
    /// State of charge at the end of each hour (`soc[t]` is the state after
    /// hour `t`; the state entering hour 0 is the unit's `x_init`).
    pub soc: Vec<VarId>,
}

/// Allocates variables and emits box, ramp, and dynamics constraints for one
/// generator. Objective terms are added here as well so the cost definition
/// lives in one place.
pub fn emit_generator(
    prog: &mut QuadProgram,
    g: &FuelGenerator,
    mg: usize,
    horizon: usize,
) -> GeneratorVars {
    let mut p = Vec::with_capacity(horizon);
    let mut q = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        p.push(prog.add_bounded_var(g.p_min, g.p_max));
        q.push(prog.add_bounded_var(g.q_min, g.q_max));
    }
    for t in 0..horizon {
        prog.add_quad(p[t], g.a * g.a);
        prog.add_lin(p[t], g.b);
        prog.constant += g.c;
    }
    // Ramp couples consecutive modeled hours only; there is no anchor tying
    // the first hour to a pre-horizon output.
    for t in 0..horizon.saturating_sub(1) {
        let label = RowLabel::new(RowKind::Ramp, mg, t);
        prog.add_le(&[(p[t + 1], 1.0), (p[t], -1.0)], g.ramp, label);
        prog.add_le(&[(p[t], 1.0), (p[t + 1], -1.0)], g.ramp, label);
    }
    GeneratorVars { p, q }
}

/// Allocates variables and emits box constraints plus the state-of-charge
/// recursion for one storage unit.
pub fn emit_storage(
    prog: &mut QuadProgram,
    s: &StorageUnit,
    mg: usize,
    horizon: usize,
    terminal_equals_initial: bool,
) -> StorageVars {
    let mut charge = Vec::with_capacity(horizon);
    let mut discharge = Vec::with_capacity(horizon);
    let mut soc = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        charge.push(prog.add_bounded_var(0.0, s.p_char_max));
        discharge.push(prog.add_bounded_var(0.0, s.p_disc_max));
        soc.push(prog.add_bounded_var(s.x_min, s.x_max));
    }
    for t in 0..horizon {
        let label = RowLabel::new(RowKind::StorageDynamics, mg, t);
        if t == 0 {
            // x[0] - beta_c*pc[0] + beta_d*pd[0] = x_init
            prog.add_eq(
                &[
                    (soc[0], 1.0),
                    (charge[0], -s.beta_char),
                    (discharge[0], s.beta_disc),
                ],
                s.x_init,
                label,
            );
        } else {
            prog.add_eq(
                &[
                    (soc[t], 1.0),
                    (soc[t - 1], -1.0),
                    (charge[t], -s.beta_char),
                    (discharge[t], s.beta_disc),
                ],
                0.0,
                label,
            );
        }
    }
    if terminal_equals_initial && horizon > 0 {
        prog.add_eq(
            &[(soc[horizon - 1], 1.0)],
            s.x_init,
            RowLabel::new(RowKind::StorageDynamics, mg, horizon - 1),
        );
    }
    StorageVars {
        charge,
        discharge,
        soc,
    }
}

/// Basic parameter sanity used by scenario validation.
pub fn check_generator(g: &FuelGenerator) -> Result<(), String> {
    if g.a < 0.0 || g.b < 0.0 || g.c < 0.0 {
        return Err(String::from("cost coefficients must be nonnegative"));
    }
    if g.p_min > g.p_max || g.q_min > g.q_max {
        return Err(String::from("power bounds inverted"));
    }
    if g.ramp < 0.0 {
        return Err(String::from("ramp limit must be nonnegative"));
    }
    Ok(())
}

pub fn check_storage(s: &StorageUnit) -> Result<(), String> {
    if !(0.0 <= s.x_min && s.x_min <= s.x_init && s.x_init <= s.x_max) {
        return Err(String::from("state bounds must satisfy 0 <= min <= init <= max"));
    }
    if !(s.beta_char > 0.0 && s.beta_char <= 1.0 && s.beta_disc > 0.0 && s.beta_disc <= 1.0) {
        return Err(String::from("efficiencies must lie in (0, 1]"));
    }
    if s.p_char_max < 0.0 || s.p_disc_max < 0.0 {
        return Err(String::from("power limits must be nonnegative"));
    }
    Ok(())
}
