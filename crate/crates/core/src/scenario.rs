//! Scenario configuration and the slot-by-slot closed-loop simulator.
//!
//! A scenario file pins the link, the slices with their QoS contracts, a
//! population schedule, the power budget and a seed. Each slot the
//! simulator applies the schedule, samples a channel, translates QoS to
//! targets (feedback controller for CL slices, closed forms or overrides
//! for URLLC/TS), solves the allocation, runs admission control when the
//! budget is exceeded, and records metrics. Everything is deterministic
//! given the configuration and seed.
//!
//! Configuration units are explicit in the field names (`_mbps`, `_ms`,
//! `_dbm`); internally everything runs in bps, seconds and watts.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::admission::{readjust, AdmissionOptions, PowerBudget, ReadjustmentReport};
use crate::allocator::{solve, AllocationProblem, AllocationResult, SolveOptions};
use crate::channel::{sample_channel, LinkParams};
use crate::controller::{ControllerState, DEFAULT_GAIN_FACTOR};
use crate::error::Error;
use crate::qos::{SliceQos, UserQos};
use crate::units::{dbm_to_watts, mbps_to_bps, snr_gap_from_ber};
use crate::Result;

/// One contiguous run of slots with fixed per-slice user counts.
/// `[from_slot, to_slot)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub from_slot: u32,
    pub to_slot: u32,
    /// Active users per slice id; omitted slices have zero users.
    pub users: BTreeMap<String, u32>,
}

/// Slice declaration in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    pub id: String,
    pub qos: SliceQosConfig,
}

/// File-facing QoS descriptor with explicit units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SliceQosConfig {
    Cl {
        capacity_mbps: f64,
    },
    Urllc {
        arrival_rate_mbps: f64,
        reliability: f64,
        delay_max_ms: f64,
        jitter_ms: f64,
    },
    Ts {
        packet_bits: f64,
        sched_period_ms: f64,
    },
}

impl SliceQosConfig {
    /// SI-unit contract.
    pub fn to_qos(&self) -> SliceQos {
        match *self {
            SliceQosConfig::Cl { capacity_mbps } => SliceQos::Cl {
                capacity_bps: mbps_to_bps(capacity_mbps),
            },
            SliceQosConfig::Urllc {
                arrival_rate_mbps,
                reliability,
                delay_max_ms,
                jitter_ms,
            } => SliceQos::Urllc {
                arrival_rate_bps: mbps_to_bps(arrival_rate_mbps),
                reliability,
                delay_max_s: delay_max_ms * 1e-3,
                jitter_s: jitter_ms * 1e-3,
            },
            SliceQosConfig::Ts {
                packet_bits,
                sched_period_ms,
            } => SliceQos::Ts {
                packet_bits,
                sched_period_s: sched_period_ms * 1e-3,
            },
        }
    }
}

/// Admission-control settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmissionSettings {
    /// Tolerated relative power overshoot before readjustment stops.
    pub tolerance: f64,
    /// Unit the price-weighted reduction is denominated in.
    pub rate_unit_mbps: f64,
    pub max_iterations: usize,
}

impl Default for AdmissionSettings {
    fn default() -> Self {
        AdmissionSettings {
            tolerance: 0.01,
            rate_unit_mbps: 1.0,
            max_iterations: 200,
        }
    }
}

/// CL feedback-controller settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSettings {
    /// Gain as a fraction of the stability bound `1/N_s`.
    pub gain_factor: f64,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        ControllerSettings {
            gain_factor: DEFAULT_GAIN_FACTOR,
        }
    }
}

/// A complete scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub link: LinkParams,
    pub slices: Vec<SliceConfig>,
    pub schedule: Vec<ScheduleEntry>,
    /// Per-slice overrides of the per-user target rate; URLLC/TS only
    /// (CL targets are controller-driven).
    #[serde(default)]
    pub targets_override_mbps: BTreeMap<String, f64>,
    pub power_budget_dbm: f64,
    #[serde(default = "default_true")]
    pub admission_enabled: bool,
    #[serde(default)]
    pub admission: AdmissionSettings,
    #[serde(default)]
    pub controller: ControllerSettings,
    /// Target bit error rate for the SNR-gap factor; unset means
    /// `beta = 1` (pure Shannon rates).
    #[serde(default)]
    pub ber: Option<f64>,
    pub num_slots: u32,
    pub rng_seed: u64,
}

fn default_true() -> bool {
    true
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.link
            .validate()
            .map_err(|e| Error::config(format!("link: {e}")))?;

        if self.slices.is_empty() {
            return Err(Error::config("slices: at least one slice required"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, s) in self.slices.iter().enumerate() {
            if s.id.is_empty() {
                return Err(Error::config(format!("slices[{i}].id: must be nonempty")));
            }
            if !ids.insert(s.id.clone()) {
                return Err(Error::config(format!(
                    "slices[{i}].id: duplicate slice id {:?}",
                    s.id
                )));
            }
            s.qos
                .to_qos()
                .validate()
                .map_err(|e| Error::config(format!("slices[{i}] ({}): {e}", s.id)))?;
        }

        // Schedule must tile [0, num_slots) in order without gaps.
        let mut expected = 0u32;
        for (i, e) in self.schedule.iter().enumerate() {
            if e.from_slot != expected {
                return Err(Error::config(format!(
                    "schedule[{i}].from_slot: expected {expected}, got {}",
                    e.from_slot
                )));
            }
            if e.to_slot <= e.from_slot {
                return Err(Error::config(format!(
                    "schedule[{i}].to_slot: must be greater than from_slot"
                )));
            }
            for slice_id in e.users.keys() {
                if !self.slices.iter().any(|s| &s.id == slice_id) {
                    return Err(Error::config(format!(
                        "schedule[{i}].users: unknown slice id {slice_id:?}"
                    )));
                }
            }
            expected = e.to_slot;
        }
        if self.num_slots > 0 && expected != self.num_slots {
            return Err(Error::config(format!(
                "schedule: covers [0, {expected}) but num_slots is {}",
                self.num_slots
            )));
        }

        for (slice_id, &mbps) in &self.targets_override_mbps {
            let Some(slice) = self.slices.iter().find(|s| &s.id == slice_id) else {
                return Err(Error::config(format!(
                    "targets_override_mbps: unknown slice id {slice_id:?}"
                )));
            };
            if matches!(slice.qos, SliceQosConfig::Cl { .. }) {
                return Err(Error::config(format!(
                    "targets_override_mbps.{slice_id}: CL targets are controller-driven; set capacity_mbps instead"
                )));
            }
            if mbps <= 0.0 {
                return Err(Error::config(format!(
                    "targets_override_mbps.{slice_id}: must be > 0"
                )));
            }
        }

        if !self.power_budget_dbm.is_finite() {
            return Err(Error::config("power_budget_dbm: must be finite"));
        }
        if self.admission.tolerance <= 0.0 {
            return Err(Error::config("admission.tolerance: must be > 0"));
        }
        if self.admission.rate_unit_mbps <= 0.0 {
            return Err(Error::config("admission.rate_unit_mbps: must be > 0"));
        }
        if !(0.0 < self.controller.gain_factor && self.controller.gain_factor < 1.0) {
            return Err(Error::config("controller.gain_factor: must lie in (0, 1)"));
        }
        if let Some(ber) = self.ber {
            snr_gap_from_ber(ber).map_err(|e| Error::config(format!("ber: {e}")))?;
        }
        Ok(())
    }

    pub fn power_budget(&self) -> PowerBudget {
        PowerBudget {
            available_w: dbm_to_watts(self.power_budget_dbm),
            tolerance: self.admission.tolerance,
        }
    }

    pub fn admission_options(&self) -> AdmissionOptions {
        AdmissionOptions {
            rate_unit_bps: mbps_to_bps(self.admission.rate_unit_mbps),
            max_iterations: self.admission.max_iterations,
        }
    }

    pub fn snr_gap(&self) -> Result<f64> {
        match self.ber {
            Some(ber) => snr_gap_from_ber(ber),
            None => Ok(1.0),
        }
    }
}

/// Per-slice user counts for every slot.
pub fn population_schedule(config: &ScenarioConfig) -> Result<Vec<BTreeMap<String, u32>>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.num_slots as usize);
    for slot in 0..config.num_slots {
        let entry = config
            .schedule
            .iter()
            .find(|e| e.from_slot <= slot && slot < e.to_slot)
            .expect("validated schedule tiles the slot range");
        out.push(entry.users.clone());
    }
    Ok(out)
}

/// Per-slice aggregate for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSlotMetrics {
    pub slice_id: String,
    pub num_users: usize,
    pub sum_rate_bps: f64,
    pub mean_rate_bps: f64,
    pub sum_target_bps: f64,
}

/// Per-user detail for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSlotDetail {
    pub name: String,
    pub slice_id: String,
    pub target_bps: f64,
    pub rate_bps: f64,
    pub lambda: f64,
    pub power_w: f64,
    pub subchannels: usize,
}

/// Everything recorded about one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub slot: u32,
    pub per_slice: Vec<SliceSlotMetrics>,
    pub per_user: Vec<UserSlotDetail>,
    pub total_power_w: f64,
    /// Present when the admission loop actually reduced targets.
    pub readjustment: Option<ReadjustmentReport>,
    pub converged: bool,
    pub duality_gap_w: f64,
    pub solver_iterations: usize,
}

/// Full solve detail for one slot, as returned by `solve-slot`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotStep {
    pub metrics: SlotMetrics,
    pub allocation: AllocationResult,
    pub user_names: Vec<String>,
    pub distances_m: Vec<f64>,
}

struct UserRuntime {
    idx: u32,
    distance_m: f64,
}

struct SliceRuntime {
    id: String,
    qos: SliceQos,
    override_target_bps: Option<f64>,
    controller: Option<ControllerState>,
    active: Vec<UserRuntime>,
    next_idx: u32,
}

/// Deterministic closed-loop simulation over the configured slots.
pub struct Simulation {
    config: ScenarioConfig,
    seed: u64,
    beta: f64,
    budget: PowerBudget,
    admission_opts: AdmissionOptions,
    slices: Vec<SliceRuntime>,
    distance_rng: ChaCha12Rng,
    prev_rates: BTreeMap<(usize, u32), f64>,
    warm_lambda: BTreeMap<(usize, u32), f64>,
    slot: u32,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn derive_seed(base: u64, tag: u64) -> u64 {
    splitmix64(base ^ splitmix64(tag))
}

const DISTANCE_STREAM_TAG: u64 = 0xD157;
const CHANNEL_STREAM_TAG: u64 = 0xC4A7;

impl Simulation {
    pub fn new(
        config: &ScenarioConfig,
        seed_override: Option<u64>,
        admission_override: Option<bool>,
    ) -> Result<Self> {
        config.validate()?;
        let mut config = config.clone();
        if let Some(seed) = seed_override {
            config.rng_seed = seed;
        }
        if let Some(enabled) = admission_override {
            config.admission_enabled = enabled;
        }
        let seed = config.rng_seed;
        let beta = config.snr_gap()?;
        let budget = config.power_budget();
        let admission_opts = config.admission_options();

        let slices = config
            .slices
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let qos = s.qos.to_qos();
                let controller = match qos {
                    SliceQos::Cl { capacity_bps } => Some(ControllerState::new(
                        i as u32,
                        capacity_bps,
                        config.controller.gain_factor,
                    )?),
                    _ => None,
                };
                Ok(SliceRuntime {
                    id: s.id.clone(),
                    qos,
                    override_target_bps: config
                        .targets_override_mbps
                        .get(&s.id)
                        .map(|&m| mbps_to_bps(m)),
                    controller,
                    active: Vec::new(),
                    next_idx: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Simulation {
            distance_rng: ChaCha12Rng::seed_from_u64(derive_seed(seed, DISTANCE_STREAM_TAG)),
            config,
            seed,
            beta,
            budget,
            admission_opts,
            slices,
            prev_rates: BTreeMap::new(),
            warm_lambda: BTreeMap::new(),
            slot: 0,
        })
    }

    /// The configuration actually in effect (seed/admission overrides
    /// applied), suitable for echoing into `run.json`.
    pub fn effective_config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn draw_distance(&mut self) -> f64 {
        let u: f64 = self.distance_rng.random();
        1.0 + u * (self.config.link.cell_radius_m - 1.0)
    }

    /// Advances one slot; `None` once the schedule is exhausted.
    pub fn step(&mut self) -> Result<Option<SlotStep>> {
        if self.slot >= self.config.num_slots {
            return Ok(None);
        }
        let slot = self.slot;
        let counts = self
            .config
            .schedule
            .iter()
            .find(|e| e.from_slot <= slot && slot < e.to_slot)
            .expect("validated schedule tiles the slot range")
            .users
            .clone();

        // Population changes: departures drop the most recent arrivals,
        // arrivals get fresh indices and fresh distances.
        for si in 0..self.slices.len() {
            let want = *counts.get(&self.slices[si].id).unwrap_or(&0) as usize;
            let have = self.slices[si].active.len();
            let changed = want != have;
            if want < have {
                self.slices[si].active.truncate(want);
            } else if want > have {
                for _ in have..want {
                    let d = self.draw_distance();
                    let slice = &mut self.slices[si];
                    let idx = slice.next_idx;
                    slice.next_idx += 1;
                    slice.active.push(UserRuntime {
                        idx,
                        distance_m: d,
                    });
                }
            }
            let slice = &mut self.slices[si];
            if let Some(ctrl) = slice.controller.as_mut() {
                if changed {
                    let ids: Vec<u32> = slice.active.iter().map(|u| u.idx).collect();
                    ctrl.on_population_change(&ids);
                } else if slot > 0 {
                    // Steady membership: feedback update from last slot's
                    // achieved rates.
                    let achieved: BTreeMap<u32, f64> = slice
                        .active
                        .iter()
                        .map(|u| {
                            (
                                u.idx,
                                self.prev_rates.get(&(si, u.idx)).copied().unwrap_or(0.0),
                            )
                        })
                        .collect();
                    ctrl.update(&achieved);
                }
            }
        }

        // Flatten users in slice order.
        let mut names = Vec::new();
        let mut keys: Vec<(usize, u32)> = Vec::new();
        let mut distances = Vec::new();
        let mut targets: Vec<UserQos> = Vec::new();
        let mut cl_rows: Vec<usize> = Vec::new();
        for (si, slice) in self.slices.iter().enumerate() {
            for user in &slice.active {
                let row = targets.len();
                let target_bps = match &slice.qos {
                    SliceQos::Cl { .. } => {
                        cl_rows.push(row);
                        let ctrl = slice.controller.as_ref().expect("CL slice has a controller");
                        *ctrl
                            .targets
                            .get(&user.idx)
                            .expect("controller tracks every active user")
                    }
                    _ => match slice.override_target_bps {
                        Some(t) => t,
                        None => slice
                            .qos
                            .target_rate_bps()?
                            .expect("URLLC/TS have closed-form targets"),
                    },
                };
                names.push(format!("{}-{}", slice.id, user.idx));
                keys.push((si, user.idx));
                distances.push(user.distance_m);
                targets.push(UserQos {
                    user_id: row as u32,
                    slice_id: si as u32,
                    target_rate_bps: target_bps,
                });
            }
        }

        let channel = sample_channel(
            &self.config.link,
            &distances,
            derive_seed(self.seed, derive_seed(CHANNEL_STREAM_TAG, slot as u64)),
        )?;

        let n = targets.len();
        let (allocation, readjustment) = if n == 0 {
            (
                crate::allocator::AllocationResult {
                    power_w: ndarray::Array2::zeros((0, self.config.link.num_subchannels)),
                    assignment: ndarray::Array2::zeros((0, self.config.link.num_subchannels)),
                    lambda: vec![],
                    rates_bps: vec![],
                    total_power_w: 0.0,
                    converged: true,
                    iterations: 0,
                    dual_bound_w: 0.0,
                    duality_gap_w: 0.0,
                },
                None,
            )
        } else {
            let mut problem = AllocationProblem {
                channel,
                targets: targets.clone(),
                beta: vec![self.beta; n],
            };
            let warm: Vec<Option<f64>> = keys
                .iter()
                .map(|k| self.warm_lambda.get(k).copied())
                .collect();
            let opts = SolveOptions {
                warm_lambda: Some(warm),
                ..SolveOptions::default()
            };

            let outcome = if self.config.admission_enabled {
                readjust(
                    &mut problem,
                    &cl_rows,
                    &self.budget,
                    &self.admission_opts,
                    &opts,
                )
                .map(|(res, report)| {
                    let report = (report.iterations > 0).then_some(report);
                    (res, report)
                })
            } else {
                solve(&problem, &opts).map(|res| (res, None))
            };

            let (res, report) = outcome.map_err(|e| attach_slot(e, slot, &names))?;

            // Readjusted CL targets persist into the controller state so
            // the loop resumes from the reduced operating point.
            if report.is_some() {
                for &row in &cl_rows {
                    let (si, idx) = keys[row];
                    if let Some(ctrl) = self.slices[si].controller.as_mut() {
                        ctrl.set_target(idx, problem.targets[row].target_rate_bps);
                    }
                }
            }
            targets = problem.targets.clone();
            (res, report)
        };

        // Bookkeeping for the next slot.
        self.prev_rates.clear();
        for (row, key) in keys.iter().enumerate() {
            self.prev_rates.insert(*key, allocation.rates_bps[row]);
        }
        self.warm_lambda.clear();
        for (row, key) in keys.iter().enumerate() {
            self.warm_lambda.insert(*key, allocation.lambda[row]);
        }

        // Per-slice aggregation in slice declaration order.
        let mut per_slice = Vec::with_capacity(self.slices.len());
        for (si, slice) in self.slices.iter().enumerate() {
            let rows: Vec<usize> = keys
                .iter()
                .enumerate()
                .filter(|(_, k)| k.0 == si)
                .map(|(row, _)| row)
                .collect();
            let sum_rate: f64 = rows.iter().map(|&r| allocation.rates_bps[r]).sum();
            let sum_target: f64 = rows.iter().map(|&r| targets[r].target_rate_bps).sum();
            let n_users = rows.len();
            per_slice.push(SliceSlotMetrics {
                slice_id: slice.id.clone(),
                num_users: n_users,
                sum_rate_bps: sum_rate,
                mean_rate_bps: if n_users > 0 {
                    sum_rate / n_users as f64
                } else {
                    0.0
                },
                sum_target_bps: sum_target,
            });
        }

        let per_user: Vec<UserSlotDetail> = (0..n)
            .map(|row| {
                let (si, _) = keys[row];
                UserSlotDetail {
                    name: names[row].clone(),
                    slice_id: self.slices[si].id.clone(),
                    target_bps: targets[row].target_rate_bps,
                    rate_bps: allocation.rates_bps[row],
                    lambda: allocation.lambda[row],
                    power_w: allocation.power_w.row(row).sum(),
                    subchannels: allocation
                        .assignment
                        .row(row)
                        .iter()
                        .filter(|&&x| x == 1)
                        .count(),
                }
            })
            .collect();

        let metrics = SlotMetrics {
            slot,
            per_slice,
            per_user,
            total_power_w: allocation.total_power_w,
            readjustment,
            converged: allocation.converged,
            duality_gap_w: allocation.duality_gap_w,
            solver_iterations: allocation.iterations,
        };

        self.slot += 1;
        Ok(Some(SlotStep {
            metrics,
            allocation,
            user_names: names,
            distances_m: distances,
        }))
    }

    /// Runs the whole schedule and returns the metrics stream.
    pub fn run(&mut self) -> Result<Vec<SlotMetrics>> {
        let mut out = Vec::with_capacity(self.config.num_slots as usize);
        while let Some(step) = self.step()? {
            out.push(step.metrics);
        }
        Ok(out)
    }

    /// Replays the scenario up to `slot` and returns that slot's full
    /// solve detail.
    pub fn run_to_slot(&mut self, slot: u32) -> Result<SlotStep> {
        if slot >= self.config.num_slots {
            return Err(Error::config(format!(
                "slot {slot} out of range (num_slots = {})",
                self.config.num_slots
            )));
        }
        loop {
            let step = self
                .step()?
                .expect("requested slot validated against num_slots");
            if step.metrics.slot == slot {
                return Ok(step);
            }
        }
    }
}

fn attach_slot(err: Error, slot: u32, names: &[String]) -> Error {
    match err {
        Error::InfeasibleUser { users, .. } => {
            let named: Vec<String> = users
                .iter()
                .map(|&u| {
                    names
                        .get(u as usize)
                        .cloned()
                        .unwrap_or_else(|| format!("user {u}"))
                })
                .collect();
            Error::Config(format!(
                "infeasible allocation at slot {slot}: no usable subchannel for {named:?}"
            ))
        }
        Error::HardInfeasible { p_opt, .. } => Error::HardInfeasible {
            slot: Some(slot),
            p_opt,
        },
        other => other,
    }
}

/// Convenience wrapper: build, run, return metrics.
pub fn run(config: &ScenarioConfig) -> Result<Vec<SlotMetrics>> {
    Simulation::new(config, None, None)?.run()
}
