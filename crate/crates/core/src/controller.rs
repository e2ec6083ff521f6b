//! Capacity-tracking feedback loop for CL slices.
//!
//! Each slot the controller shifts every member's target rate by
//! `-k (sum_i r_i(t-1) - C_s)` so the slice sum rate is steered to its
//! capacity. With an allocator that delivers targets exactly, the sum
//! error contracts by `1 - k N_s` per slot, so stability needs
//! `k < 1/N_s`; the gain is re-derived from a configured factor whenever
//! the population changes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Fraction of the stability bound `1/N_s` used for the gain. 0.8 settles
/// a full-scale population transient to well under 1% of C_s within five
/// slots while staying comfortably inside the stability region.
pub const DEFAULT_GAIN_FACTOR: f64 = 0.8;

/// Controller state for one CL slice. Targets are keyed by stable
/// per-slice user indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub slice_id: u32,
    pub capacity_bps: f64,
    /// Step gain k, re-clamped below `1/N_s` on population changes.
    pub gain: f64,
    gain_factor: f64,
    /// Per-user target rates in bps.
    pub targets: BTreeMap<u32, f64>,
}

impl ControllerState {
    pub fn new(slice_id: u32, capacity_bps: f64, gain_factor: f64) -> Result<Self> {
        if capacity_bps <= 0.0 {
            return Err(Error::domain("controller capacity must be > 0"));
        }
        if !(0.0 < gain_factor && gain_factor < 1.0) {
            return Err(Error::domain("controller gain factor must lie in (0, 1)"));
        }
        Ok(ControllerState {
            slice_id,
            capacity_bps,
            gain: 0.0,
            gain_factor,
            targets: BTreeMap::new(),
        })
    }

    pub fn num_users(&self) -> usize {
        self.targets.len()
    }

    /// Feedback update from the previous slot's achieved rates. The error
    /// is the sum over current members (users without a rate entry
    /// contribute zero); every member's target moves by the same
    /// correction, clamped at zero.
    pub fn update(&mut self, achieved_rates: &BTreeMap<u32, f64>) {
        if self.targets.is_empty() {
            return;
        }
        let sum: f64 = self
            .targets
            .keys()
            .map(|u| achieved_rates.get(u).copied().unwrap_or(0.0))
            .sum();
        let correction = self.gain * (sum - self.capacity_bps);
        for target in self.targets.values_mut() {
            *target = (*target - correction).max(0.0);
        }
    }

    /// Applies a membership change: departed users are dropped, survivors
    /// keep their targets, arrivals start at the equal share
    /// `C_s / N_s`, and the gain is re-derived for the new population.
    pub fn on_population_change(&mut self, current_users: &[u32]) {
        self.targets.retain(|u, _| current_users.contains(u));
        let n = current_users.len();
        if n == 0 {
            self.gain = 0.0;
            return;
        }
        let share = self.capacity_bps / n as f64;
        for &u in current_users {
            self.targets.entry(u).or_insert(share);
        }
        self.gain = self.gain_factor / n as f64;
    }

    /// Overwrites a member's target (admission control writes the
    /// readjusted value back so the loop resumes from it).
    pub fn set_target(&mut self, user: u32, target_bps: f64) {
        if let Some(t) = self.targets.get_mut(&user) {
            *t = target_bps.max(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(pairs: &[(u32, f64)]) -> BTreeMap<u32, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn zero_error_leaves_targets_unchanged() {
        let mut st = ControllerState::new(0, 27e6, 0.8).unwrap();
        st.on_population_change(&[0, 1, 2]);
        let before = st.targets.clone();
        st.update(&rates(&[(0, 9e6), (1, 9e6), (2, 9e6)]));
        assert_eq!(st.targets, before);
    }

    #[test]
    fn overshoot_reduces_targets_by_scaled_error() {
        // 5 users at 5.4 Mbps, sum 30 vs C_s = 27, k = 0.1 -> 5.1 Mbps.
        let mut st = ControllerState::new(0, 27e6, 0.5).unwrap();
        st.on_population_change(&[0, 1, 2, 3, 4]);
        for t in st.targets.values_mut() {
            *t = 5.4e6;
        }
        st.gain = 0.1e-0; // fixed gain for the reference arithmetic
        let r = rates(&[(0, 6e6), (1, 6e6), (2, 6e6), (3, 6e6), (4, 6e6)]);
        st.update(&r);
        for &t in st.targets.values() {
            assert!((t - 5.1e6).abs() < 1e-3);
        }
    }

    #[test]
    fn undershoot_raises_targets() {
        let mut st = ControllerState::new(0, 27e6, 0.8).unwrap();
        st.on_population_change(&[0, 1]);
        let before: Vec<f64> = st.targets.values().copied().collect();
        st.update(&rates(&[(0, 5e6), (1, 5e6)]));
        for (t, b) in st.targets.values().zip(before) {
            assert!(*t > b);
        }
    }

    #[test]
    fn targets_never_go_negative() {
        let mut st = ControllerState::new(0, 1e6, 0.9).unwrap();
        st.on_population_change(&[0]);
        st.update(&rates(&[(0, 1e9)]));
        assert!(st.targets.values().all(|&t| t >= 0.0));
    }

    #[test]
    fn population_change_rules() {
        let mut st = ControllerState::new(0, 27e6, 0.8).unwrap();
        // 0 -> 7 users: everyone starts at the equal share.
        st.on_population_change(&[0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(st.num_users(), 7);
        for &t in st.targets.values() {
            assert!((t - 27e6 / 7.0).abs() < 1e-6);
        }
        assert!((st.gain - 0.8 / 7.0).abs() < 1e-12);

        // 7 -> 2: survivors keep their targets, gain re-clamped below 1/2.
        for t in st.targets.values_mut() {
            *t = 5.4e6;
        }
        st.on_population_change(&[0, 1]);
        assert_eq!(st.num_users(), 2);
        assert!(st.targets.values().all(|&t| (t - 5.4e6).abs() < 1e-9));
        assert!(st.gain < 0.5);

        // No change is the identity.
        let before = st.clone();
        st.on_population_change(&[0, 1]);
        assert_eq!(st, before);

        // 2 -> 0: controller idles.
        st.on_population_change(&[]);
        assert_eq!(st.num_users(), 0);
        assert_eq!(st.gain, 0.0);
    }

    #[test]
    fn ideal_plant_converges_geometrically() {
        // Plant: achieved = target. The sum error must contract by
        // |1 - k N| each slot and reach 1% of C_s well inside 30 slots.
        let c = 27e6;
        let mut st = ControllerState::new(0, c, 0.8).unwrap();
        st.on_population_change(&[0, 1, 2, 3, 4]);
        // Start far from capacity.
        for t in st.targets.values_mut() {
            *t = 1e6;
        }
        let n = st.num_users() as f64;
        let rho = (1.0 - st.gain * n).abs();
        assert!(rho < 1.0);

        let mut prev_err = (st.targets.values().sum::<f64>() - c).abs();
        for slot in 0..30 {
            let achieved: BTreeMap<u32, f64> =
                st.targets.iter().map(|(&u, &t)| (u, t)).collect();
            st.update(&achieved);
            let err = (st.targets.values().sum::<f64>() - c).abs();
            // Contraction holds until the error reaches summation noise.
            if prev_err > 1e-6 * c {
                assert!(
                    err <= prev_err * (rho + 1e-9),
                    "slot {slot}: err {err} prev {prev_err}"
                );
            }
            prev_err = err;
        }
        assert!(prev_err / c < 0.01);
    }
}
