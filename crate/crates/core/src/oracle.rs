//! Independent reference checks for the engine's numerical core.
//!
//! Every suite validates an implementation path against a deliberately
//! different route: exhaustive ownership enumeration with bisection
//! water-filling against the dual solver, a discrete-event queue against
//! the delay-tail formula, central finite differences against the
//! analytic supergradient, and a grid search against the max-price rule
//! used for subchannel auctions. The suites power `validate-oracle` and
//! the acceptance tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{
    assign_subchannels, dual_value, solve, subgradient, AllocationProblem, SolveOptions,
};
use crate::channel::ChannelState;
use crate::qos::{delay_outage_probability, simulate_mm1_delay_tail, UserQos};

/// Outcome of one reference suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Worst relative deviation observed across cases.
    pub worst_rel_dev: f64,
    pub detail: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Combined report for all suites.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub suites: Vec<SuiteReport>,
    pub passed: bool,
}

/// Runs every suite with the given instance count for the allocator
/// comparison (the other suites have fixed sizes).
pub fn validate_oracles(instances: usize, seed: u64) -> OracleReport {
    let suites = vec![
        allocator_vs_exhaustive_suite(instances.max(1), seed, 0.02),
        price_minimizer_suite(1000, seed ^ 0x5eed_0001),
        mm1_tail_suite(1_000_000, seed ^ 0x5eed_0002, 0.05),
        subgradient_fd_suite(100, seed ^ 0x5eed_0003),
    ];
    let passed = suites.iter().all(|s| s.passed());
    OracleReport { suites, passed }
}

/// Random desk-scale instance with path-loss-like gains and targets of a
/// few bits/s/Hz per user.
pub fn random_small_problem(rng: &mut ChaCha12Rng, n: usize, k: usize) -> AllocationProblem {
    let bw = 180e3;
    let noise = 7.165929069962975e-16;
    let gains = Array2::from_shape_fn((n, k), |_| 10f64.powf(-rng.random_range(6.0..11.0)));
    let targets: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0) * bw).collect();
    AllocationProblem {
        channel: ChannelState {
            gains,
            noise_power_w: noise,
            subchannel_bw_hz: bw,
        },
        targets: targets
            .iter()
            .enumerate()
            .map(|(i, &t)| UserQos {
                user_id: i as u32,
                slice_id: 0,
                target_rate_bps: t,
            })
            .collect(),
        beta: vec![1.0; n],
    }
}

/// Minimum power over all subchannel ownership patterns, each evaluated
/// with bisection water-filling (a route independent of the dual
/// solver's closed forms). `None` when no pattern is feasible.
pub fn brute_force_min_power(problem: &AllocationProblem) -> Option<f64> {
    let n = problem.num_users();
    let k = problem.channel.num_subchannels();
    let noise = problem.channel.noise_power_w;
    let bw = problem.channel.subchannel_bw_hz;
    let patterns = (n as u64 + 1).checked_pow(k as u32)?;

    let mut best: Option<f64> = None;
    let mut owner = vec![0usize; k]; // 0 = unowned, 1..=n = user index + 1
    for code in 0..patterns {
        let mut c = code;
        for slot in owner.iter_mut() {
            *slot = (c % (n as u64 + 1)) as usize;
            c /= n as u64 + 1;
        }
        let mut total = 0.0;
        let mut feasible = true;
        for i in 0..n {
            let target = problem.targets[i].target_rate_bps;
            if target <= 0.0 {
                continue;
            }
            let set: Vec<f64> = (0..k)
                .filter(|&j| owner[j] == i + 1)
                .map(|j| noise / (problem.beta[i] * problem.channel.gains[[i, j]]))
                .collect();
            if set.is_empty() {
                feasible = false;
                break;
            }
            match bisect_water_level(target, &set, bw) {
                Some(p) => total += p,
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible {
            best = Some(best.map_or(total, |b: f64| b.min(total)));
        }
    }
    best
}

/// Finds the water level meeting `target` over channels with inverse
/// gains `inv` by bisection on the monotone rate-of-level curve, then
/// returns the total power. Independent of the closed-form route.
fn bisect_water_level(target_bps: f64, inv: &[f64], bw: f64) -> Option<f64> {
    let rate_at = |level: f64| -> f64 {
        inv.iter()
            .filter(|&&c| c < level)
            .map(|&c| bw * (level / c).log2())
            .sum()
    };
    let mut lo = inv.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = lo * 2.0;
    let mut guard = 0;
    while rate_at(hi) < target_bps {
        hi *= 2.0;
        guard += 1;
        if guard > 4000 || !hi.is_finite() {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid) < target_bps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let level = 0.5 * (lo + hi);
    Some(inv.iter().map(|&c| (level - c).max(0.0)).sum())
}

/// Dual solver vs exhaustive enumeration on random small instances.
pub fn allocator_vs_exhaustive_suite(instances: usize, seed: u64, tol_rel: f64) -> SuiteReport {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..instances {
        // k >= n keeps every instance feasible (each positive target
        // needs at least one owned subchannel).
        let n = rng.random_range(1..=3);
        let k = rng.random_range(n.max(2)..=4);
        let problem = random_small_problem(&mut rng, n, k);
        let reference = brute_force_min_power(&problem)
            .expect("small instances with k >= n are always feasible");
        match solve(&problem, &SolveOptions::default()) {
            Ok(res) => {
                let dev = (res.total_power_w - reference) / reference;
                worst = worst.max(dev.abs());
                worst_gap = worst_gap.max(res.duality_gap_w / res.total_power_w.max(1e-300));
                // The solver is feasible, so it cannot beat the optimum by
                // more than numerics; it must come within tolerance above.
                if !(res.converged && dev >= -1e-6 && dev <= tol_rel) {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    SuiteReport {
        name: "allocator-vs-exhaustive".into(),
        cases: instances,
        failures,
        worst_rel_dev: worst,
        detail: format!("worst relative duality gap {worst_gap:.3e}, tolerance {tol_rel}"),
    }
}

/// The per-subchannel dual term `F(mu) = sum_i (mu_i - mu)^+ + mu`.
pub fn subchannel_price_objective(mu: f64, prices: &[f64]) -> f64 {
    prices.iter().map(|&p| (p - mu).max(0.0)).sum::<f64>() + mu
}

/// Grid search confirming the minimiser of `F` sits at the maximum
/// price. `F` is flat between the two largest prices, so the check uses
/// the largest grid minimiser.
pub fn price_minimizer_suite(sequences: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..sequences {
        let n = rng.random_range(2..=10);
        let prices: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let max_price = prices.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_price = prices.iter().cloned().fold(f64::INFINITY, f64::min);
        let range = (max_price - min_price).max(1e-6);
        let lo = min_price - 0.25 * range;
        let span = 1.5 * range;
        let step = 1e-3 * span;
        let points = (span / step).ceil() as usize + 1;

        let mut best_val = f64::INFINITY;
        let mut best_mu = lo;
        for p in 0..points {
            let mu = lo + p as f64 * step;
            let v = subchannel_price_objective(mu, &prices);
            // <= keeps the largest minimiser across the flat stretch.
            if v <= best_val + 1e-12 * best_val.abs().max(1.0) {
                if v < best_val {
                    best_val = v;
                }
                best_mu = mu;
            }
        }
        let dev = (best_mu - max_price).abs() / span;
        worst = worst.max(dev);
        if (best_mu - max_price).abs() > 1.5 * step {
            failures += 1;
        }
        // No grid point may beat the claimed minimiser at the max price.
        let at_max = subchannel_price_objective(max_price, &prices);
        if at_max > best_val + 1e-9 * max_price.abs().max(1.0) {
            failures += 1;
        }
    }
    SuiteReport {
        name: "subchannel-price-minimizer".into(),
        cases: sequences,
        failures,
        worst_rel_dev: worst,
        detail: "grid argmin vs max price, resolution 1e-3 of range".into(),
    }
}

/// Margins `(r - a) d` spanning the contract range for the delay-tail
/// check.
pub const MM1_MARGINS: [f64; 6] = [0.5, 1.0, 2.0, 3.5, 5.0, 7.0];

/// Discrete-event M/M/1 tail vs the closed form across service margins.
pub fn mm1_tail_suite(packets: u64, seed: u64, tol_rel: f64) -> SuiteReport {
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let service = 2e6;
    let arrival = 0.25 * service; // utilisation 0.25 keeps sojourns weakly correlated
    for (idx, &margin) in MM1_MARGINS.iter().enumerate() {
        let d_max = margin / (service - arrival);
        let theory = delay_outage_probability(service, arrival, d_max);
        let emp = simulate_mm1_delay_tail(arrival, service, d_max, packets, seed + idx as u64)
            .expect("stable parameters");
        let dev = (emp - theory).abs() / theory;
        worst = worst.max(dev);
        if dev > tol_rel {
            failures += 1;
        }
    }
    SuiteReport {
        name: "mm1-delay-tail".into(),
        cases: MM1_MARGINS.len(),
        failures,
        worst_rel_dev: worst,
        detail: format!("{packets} packets per margin, tolerance {tol_rel}"),
    }
}

/// Analytic supergradient vs central finite differences of the dual at
/// random points with locally stable winner sets.
pub fn subgradient_fd_suite(points: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < points && attempts < points * 50 {
        attempts += 1;
        let n = rng.random_range(2..=3);
        let k = rng.random_range(2..=4);
        let problem = random_small_problem(&mut rng, n, k);
        let lambda: Vec<f64> = (0..n)
            .map(|_| 10f64.powf(rng.random_range(-11.0..-7.0)))
            .collect();
        let assignment = assign_subchannels(&lambda, &problem);
        let grad = subgradient(&lambda, &problem, &assignment);
        for i in 0..n {
            if checked >= points {
                break;
            }
            let eps = 1e-6 * lambda[i];
            let mut up = lambda.clone();
            up[i] += eps;
            let mut dn = lambda.clone();
            dn[i] -= eps;
            // Only points where the winner sets are locally stable.
            if assign_subchannels(&up, &problem).winner != assignment.winner
                || assign_subchannels(&dn, &problem).winner != assignment.winner
            {
                continue;
            }
            let fd = (dual_value(&up, &problem) - dual_value(&dn, &problem)) / (2.0 * eps);
            let scale = grad[i]
                .abs()
                .max(1e-6 * problem.targets[i].target_rate_bps.max(1.0));
            let dev = (fd - grad[i]).abs() / scale;
            worst = worst.max(dev);
            if dev > 1e-3 {
                failures += 1;
            }
            checked += 1;
        }
    }
    SuiteReport {
        name: "subgradient-finite-difference".into(),
        cases: checked,
        failures,
        worst_rel_dev: worst,
        detail: "central differences at stable winner sets, tolerance 1e-3".into(),
    }
}
