//! The preference mechanism: normalized per-counterparty weights, price
//! scaling, and the linear trade-penalty term of each agent's objective.
//!
//! Row `n` of the weight matrix holds the normalized preference of microgrid
//! `n` toward each counterparty, with the diagonal entry weighting local
//! storage throughput. Each row, counterparties plus the diagonal, sums to
//! one. The grid column sits outside that normalization and equals 1 in
//! grid-connected mode so that peer trades are preferred over the grid.
//! Hourly prices are obtained by scaling the weights with the `kappa`
//! series.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

/// Normalized preference weights plus the scaling price series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferenceMatrix {
    /// `weights[n][m]`: preference of agent `n` toward agent `m`
    /// (diagonal = local/storage preference). Row sums are 1.
    pub weights: Vec<Vec<f64>>,
    /// Per-agent weight on trading with the grid operator; 1.0 in
    /// grid-connected mode, unused when islanded.
    pub grid: Vec<f64>,
}

impl PreferenceMatrix {
    pub fn n_agents(&self) -> usize {
        self.weights.len()
    }

    /// Prices for hour `t`: `kappa[t] * weight`, elementwise.
    pub fn scale(&self, kappa: &[f64], hour: usize) -> Result<ScaledPreferences, PreferenceError> {
        if hour >= kappa.len() {
            return Err(PreferenceError::HourOutOfRange {
                hour,
                horizon: kappa.len(),
            });
        }
        let k = kappa[hour];
        Ok(ScaledPreferences {
            pair: self
                .weights
                .iter()
                .map(|row| row.iter().map(|w| k * w).collect())
                .collect(),
            grid: self.grid.iter().map(|w| k * w).collect(),
        })
    }

    /// Checks the structural invariants; returns the first problem found.
    pub fn check(&self, grid_connected: bool) -> Result<(), String> {
        use alloc::format;
        let n = self.weights.len();
        if self.grid.len() != n {
            return Err(String::from("grid column length differs from row count"));
        }
        for (i, row) in self.weights.iter().enumerate() {
            if row.len() != n {
                return Err(format!("row {i} has {} entries, expected {n}", row.len()));
            }
            if row.iter().any(|&w| w < 0.0) {
                return Err(format!("row {i} has a negative weight"));
            }
            let sum: f64 = row.iter().sum();
            if math::abs(sum - 1.0) > 1e-9 {
                return Err(format!("row {i} sums to {sum}, expected 1"));
            }
        }
        if grid_connected {
            for (i, &g) in self.grid.iter().enumerate() {
                if math::abs(g - 1.0) > 1e-9 {
                    return Err(format!("grid weight of agent {i} is {g}, expected 1"));
                }
            }
        }
        Ok(())
    }
}

/// Prices ($/MWh) for one hour.
#[derive(Debug, Clone)]
pub struct ScaledPreferences {
    pub pair: Vec<Vec<f64>>,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PreferenceError {
    AllZeroRow,
    NegativeEntry(f64),
    HourOutOfRange { hour: usize, horizon: usize },
}

impl core::fmt::Display for PreferenceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PreferenceError::AllZeroRow => write!(f, "cannot normalize an all-zero row"),
            PreferenceError::NegativeEntry(v) => write!(f, "negative preference entry {v}"),
            PreferenceError::HourOutOfRange { hour, horizon } => {
                write!(f, "hour {hour} outside horizon {horizon}")
            }
        }
    }
}

impl core::error::Error for PreferenceError {}

/// Scales a nonnegative weight vector so it sums to one.
pub fn normalize_row(raw: &[f64]) -> Result<Vec<f64>, PreferenceError> {
    for &w in raw {
        if w < 0.0 {
            return Err(PreferenceError::NegativeEntry(w));
        }
    }
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(PreferenceError::AllZeroRow);
    }
    Ok(raw.iter().map(|w| w / sum).collect())
}

/// One agent's trade volumes for one hour, already split into nonnegative
/// buy/sell parts.
#[derive(Debug, Clone, Default)]
pub struct TradeVolumes {
    /// `(counterparty, bought, sold)` — both parts nonnegative MW.
    pub pair: Vec<(usize, f64, f64)>,
    /// Grid trade split, MW.
    pub grid: Option<(f64, f64)>,
    /// `(charge, discharge)` per storage unit, MW.
    pub storage: Vec<(f64, f64)>,
}

/// The linear preference penalty for agent `n` at one hour:
/// grid price times grid volume, local weight times storage throughput, and
/// pair price times pair volume. Equals the absolute-value form whenever
/// each buy/sell split has at most one nonzero part.
pub fn preference_cost(
    agent: usize,
    volumes: &TradeVolumes,
    prices: &ScaledPreferences,
) -> Result<f64, PreferenceError> {
    let mut cost = 0.0;
    if let Some((buy, sell)) = volumes.grid {
        if buy < 0.0 || sell < 0.0 {
            return Err(PreferenceError::NegativeEntry(math::min(buy, sell)));
        }
        cost += prices.grid[agent] * (buy + sell);
    }
    let local = prices.pair[agent][agent];
    for &(ch, dis) in &volumes.storage {
        if ch < 0.0 || dis < 0.0 {
            return Err(PreferenceError::NegativeEntry(math::min(ch, dis)));
        }
        cost += local * (ch + dis);
    }
    for &(m, buy, sell) in &volumes.pair {
        if buy < 0.0 || sell < 0.0 {
            return Err(PreferenceError::NegativeEntry(math::min(buy, sell)));
        }
        cost += prices.pair[agent][m] * (buy + sell);
    }
    Ok(cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn uniform_matrix() -> PreferenceMatrix {
        // Equal-preference layout: diagonal 0.02, every counterparty 0.14.
        let n = 8;
        let weights = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.02 } else { 0.14 })
                    .collect::<Vec<_>>()
            })
            .collect();
        PreferenceMatrix {
            weights,
            grid: vec![1.0; n],
        }
    }

    #[test]
    fn already_normalized_row_is_unchanged() {
        let mut row = vec![0.14_f64; 8];
        row[0] = 0.02;
        let out = normalize_row(&row).unwrap();
        for (a, b) in out.iter().zip(row.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let sum: f64 = out.iter().sum();
        assert!((sum - 1.0_f64).abs() < 1e-12);
    }

    #[test]
    fn normalize_scales_by_row_sum() {
        let out = normalize_row(&[2.0, 2.0]).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
    }

    #[test]
    fn normalize_rejects_zero_row() {
        assert_eq!(
            normalize_row(&[0.0, 0.0, 0.0]).unwrap_err(),
            PreferenceError::AllZeroRow
        );
    }

    #[test]
    fn scaling_examples() {
        let m = uniform_matrix();
        let kappa = vec![20.0; 24];
        let s = m.scale(&kappa, 0).unwrap();
        assert!((s.pair[0][1] - 2.8_f64).abs() < 1e-12);
        let kappa = vec![100.0; 24];
        let s = m.scale(&kappa, 5).unwrap();
        assert!((s.grid[3] - 100.0_f64).abs() < 1e-12);
        assert!(m.scale(&kappa, 24).is_err());
    }

    #[test]
    fn scaling_is_proportional_to_kappa() {
        let m = uniform_matrix();
        let kappa: Vec<f64> = (0..24).map(|t| 20.0 + 3.0 * t as f64).collect();
        for t in 1..24 {
            let a = m.scale(&kappa, t).unwrap();
            let b = m.scale(&kappa, 0).unwrap();
            let ratio = kappa[t] / kappa[0];
            assert!((a.pair[2][5] / b.pair[2][5] - ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn cost_examples() {
        let m = uniform_matrix();
        let prices = m.scale(&[20.0], 0).unwrap();
        let zero = TradeVolumes::default();
        assert_eq!(preference_cost(0, &zero, &prices).unwrap(), 0.0);

        let one = TradeVolumes {
            pair: vec![(1, 0.1, 0.0)],
            ..Default::default()
        };
        assert!((preference_cost(0, &one, &prices).unwrap() - 0.28_f64).abs() < 1e-12);

        let bad = TradeVolumes {
            pair: vec![(1, -0.1, 0.0)],
            ..Default::default()
        };
        assert!(preference_cost(0, &bad, &prices).is_err());
    }

    #[test]
    fn check_flags_bad_rows() {
        let mut m = uniform_matrix();
        assert!(m.check(true).is_ok());
        m.weights[3][4] += 0.5;
        assert!(m.check(true).is_err());
    }

    proptest! {
        /// Multiplying kappa by alpha scales every price and the cost by alpha.
        #[test]
        fn scaling_equivariance(alpha in 0.01..50.0f64, buy in 0.0..1.0f64, sell in 0.0..1.0f64) {
            let m = uniform_matrix();
            let base = m.scale(&[60.0], 0).unwrap();
            let scaled = m.scale(&[60.0 * alpha], 0).unwrap();
            let vols = TradeVolumes {
                pair: vec![(2, buy, 0.0), (5, 0.0, sell)],
                grid: Some((0.0, buy)),
                storage: vec![(sell, 0.0)],
            };
            let c0 = preference_cost(0, &vols, &base).unwrap();
            let c1 = preference_cost(0, &vols, &scaled).unwrap();
            prop_assert!((c1 - alpha * c0).abs() <= 1e-9 * (1.0 + c1.abs()));
        }

        /// With complementary splits the linear form equals the
        /// absolute-value objective exactly.
        #[test]
        fn matches_absolute_form_under_complementarity(
            trades in proptest::collection::vec(-1.0..1.0f64, 7),
            grid in -1.0..1.0f64,
        ) {
            let m = uniform_matrix();
            let prices = m.scale(&[60.0], 0).unwrap();
            let mut vols = TradeVolumes::default();
            let mut abs_form = 0.0;
            for (idx, &v) in trades.iter().enumerate() {
                let peer = idx + 1;
                vols.pair.push((peer, v.max(0.0), (-v).max(0.0)));
                abs_form += prices.pair[0][peer] * v.abs();
            }
            vols.grid = Some((grid.max(0.0), (-grid).max(0.0)));
            abs_form += prices.grid[0] * grid.abs();
            let lin = preference_cost(0, &vols, &prices).unwrap();
            prop_assert!((lin - abs_form).abs() < 1e-12);
        }
    }
}
