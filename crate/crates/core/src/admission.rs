//! Admission control by price-weighted rate readjustment.
//!
//! When the solved power exceeds the budget, CL users' targets are
//! reduced in proportion to their dual prices and the slot is re-solved
//! until the ratio `p_opt = p_required / p_available` drops to `1 + eps`.
//! Each pass cuts user `i` by `(p_opt - 1) lambda_i / sum_all lambda`
//! expressed in the configured rate unit (Mbps by default); URLLC and TS
//! targets are never touched, which is what preserves their isolation
//! under congestion.

use serde::{Deserialize, Serialize};

use crate::allocator::{
    solve, waterfill_assignment, AllocationProblem, AllocationResult, SolveOptions,
};
use crate::error::Error;
use crate::Result;

/// Transmit-power budget and the loop's overshoot tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub available_w: f64,
    /// Relative overshoot tolerated before readjustment kicks in.
    pub tolerance: f64,
}

impl PowerBudget {
    pub fn validate(&self) -> Result<()> {
        if self.available_w <= 0.0 {
            return Err(Error::domain("power budget must be > 0"));
        }
        if self.tolerance <= 0.0 {
            return Err(Error::domain("budget tolerance must be > 0"));
        }
        Ok(())
    }
}

/// Readjustment knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionOptions {
    /// Rate unit the dimensionless reduction is denominated in (bps per
    /// unit; 1e6 = Mbps).
    pub rate_unit_bps: f64,
    pub max_iterations: usize,
}

impl Default for AdmissionOptions {
    fn default() -> Self {
        AdmissionOptions {
            rate_unit_bps: 1e6,
            max_iterations: 200,
        }
    }
}

/// What the readjustment loop did to the CL targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadjustmentReport {
    pub iterations: usize,
    /// `(user_id, target_bps)` for the adjustable users, before and after.
    pub original_targets_bps: Vec<(u32, f64)>,
    pub final_targets_bps: Vec<(u32, f64)>,
    pub final_p_opt: f64,
    /// Users whose target actually shrank.
    pub reduced_users: Vec<u32>,
    /// True when the loop gave up at the iteration cap.
    pub hit_iteration_cap: bool,
}

/// Applies one price-weighted reduction pass to the CL targets.
fn reduce_targets(
    problem: &mut AllocationProblem,
    cl_users: &[usize],
    lambda: &[f64],
    p_opt: f64,
    rate_unit_bps: f64,
) {
    let lambda_sum: f64 = lambda.iter().sum();
    if lambda_sum <= 0.0 {
        return;
    }
    for &i in cl_users {
        let share = lambda[i] / lambda_sum;
        let delta_bps = (p_opt - 1.0) * share * rate_unit_bps;
        let t = &mut problem.targets[i].target_rate_bps;
        *t = (*t - delta_bps).max(0.0);
    }
}

/// Runs the readjustment loop. `cl_users` are row indices into the
/// problem; their targets are mutated in place. Returns the final
/// allocation and the report.
///
/// Between full assignment re-optimisations the loop evaluates the
/// reduced targets by exact water-filling of the incumbent assignment
/// (its power upper-bounds the re-optimised power, so the final full
/// solve can only land lower); every returned result comes from a full
/// solve at the final targets.
pub fn readjust(
    problem: &mut AllocationProblem,
    cl_users: &[usize],
    budget: &PowerBudget,
    admission: &AdmissionOptions,
    solve_opts: &SolveOptions,
) -> Result<(AllocationResult, ReadjustmentReport)> {
    budget.validate()?;
    let original: Vec<(u32, f64)> = cl_users
        .iter()
        .map(|&i| (problem.targets[i].user_id, problem.targets[i].target_rate_bps))
        .collect();

    let mut opts = solve_opts.clone();
    let mut result = solve(problem, &opts)?;
    let mut p_opt = result.total_power_w / budget.available_w;
    let mut iterations = 0usize;
    let mut hit_cap = false;

    'outer: while p_opt > 1.0 + budget.tolerance {
        let all_cl_exhausted = cl_users
            .iter()
            .all(|&i| problem.targets[i].target_rate_bps <= 0.0);
        let lambda_sum: f64 = result.lambda.iter().sum();
        if all_cl_exhausted || lambda_sum <= 0.0 {
            return Err(Error::HardInfeasible { slot: None, p_opt });
        }
        if iterations >= admission.max_iterations {
            hit_cap = true;
            break;
        }

        reduce_targets(problem, cl_users, &result.lambda, p_opt, admission.rate_unit_bps);
        iterations += 1;

        // Fast passes on the incumbent assignment until it fits.
        let sets = result.per_user_subchannels();
        let mut fixed = waterfill_assignment(problem, &sets);
        while let Some((power, lambda)) = &fixed {
            let p_fix = power / budget.available_w;
            if p_fix <= 1.0 + budget.tolerance || iterations >= admission.max_iterations {
                break;
            }
            if cl_users
                .iter()
                .all(|&i| problem.targets[i].target_rate_bps <= 0.0)
            {
                break;
            }
            reduce_targets(problem, cl_users, lambda, p_fix, admission.rate_unit_bps);
            iterations += 1;
            fixed = waterfill_assignment(problem, &sets);
        }

        // Re-optimise the assignment at the reduced targets; the warm
        // hints guarantee the result is no worse than the fixed one.
        opts.warm_lambda = Some(result.lambda.iter().map(|&l| Some(l)).collect());
        opts.warm_assignment = Some(result.winner_per_subchannel());
        result = solve(problem, &opts)?;
        p_opt = result.total_power_w / budget.available_w;
        if hit_cap {
            break 'outer;
        }
    }

    let final_targets: Vec<(u32, f64)> = cl_users
        .iter()
        .map(|&i| (problem.targets[i].user_id, problem.targets[i].target_rate_bps))
        .collect();
    let reduced_users = original
        .iter()
        .zip(&final_targets)
        .filter(|(o, f)| f.1 < o.1)
        .map(|(o, _)| o.0)
        .collect();

    let report = ReadjustmentReport {
        iterations,
        original_targets_bps: original,
        final_targets_bps: final_targets,
        final_p_opt: p_opt,
        reduced_users,
        hit_iteration_cap: hit_cap,
    };
    Ok((result, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelState;
    use crate::qos::UserQos;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn congestion_problem(seed: u64, n: usize, k: usize, target_per_user: f64) -> AllocationProblem {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let gains = Array2::from_shape_fn((n, k), |_| 10f64.powf(-rng.random_range(8.0..10.5)));
        AllocationProblem {
            channel: ChannelState {
                gains,
                noise_power_w: 7.165929069962975e-16,
                subchannel_bw_hz: 180e3,
            },
            targets: (0..n)
                .map(|i| UserQos {
                    user_id: i as u32,
                    slice_id: if i < n / 2 { 0 } else { 1 },
                    target_rate_bps: target_per_user,
                })
                .collect(),
            beta: vec![1.0; n],
        }
    }

    #[test]
    fn within_budget_is_a_no_op() {
        let mut p = congestion_problem(3, 4, 8, 0.5e6);
        let before: Vec<f64> = p.targets.iter().map(|t| t.target_rate_bps).collect();
        let budget = PowerBudget {
            available_w: 1e3,
            tolerance: 0.01,
        };
        let (res, report) = readjust(
            &mut p,
            &[0, 1],
            &budget,
            &AdmissionOptions::default(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(report.iterations, 0);
        assert!(report.reduced_users.is_empty());
        assert!(res.total_power_w <= 1e3);
        let after: Vec<f64> = p.targets.iter().map(|t| t.target_rate_bps).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn over_budget_trims_cl_only_and_fits() {
        let mut p = congestion_problem(9, 4, 6, 8e6);
        let budget_w = {
            // Pick a budget below the unconstrained requirement.
            let full = solve(&p, &SolveOptions::default()).unwrap();
            full.total_power_w * 0.6
        };
        let budget = PowerBudget {
            available_w: budget_w,
            tolerance: 0.01,
        };
        let cl = [0usize, 1];
        let urllc_before: Vec<f64> = [2, 3].iter().map(|&i| p.targets[i].target_rate_bps).collect();
        let (res, report) = readjust(
            &mut p,
            &cl,
            &budget,
            &AdmissionOptions::default(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(report.iterations > 0);
        assert!(res.total_power_w <= budget_w * 1.01 * (1.0 + 1e-9));
        assert!(report.final_p_opt <= 1.01 + 1e-9);
        // Protected users untouched, and still served exactly.
        for (offset, &i) in [2usize, 3].iter().enumerate() {
            assert_eq!(p.targets[i].target_rate_bps, urllc_before[offset]);
            assert!(res.rates_bps[i] >= urllc_before[offset] * (1.0 - 1e-6));
        }
        // CL targets only ever shrink.
        for (orig, fin) in report.original_targets_bps.iter().zip(&report.final_targets_bps) {
            assert!(fin.1 <= orig.1);
        }
    }

    #[test]
    fn cuts_are_price_proportional_within_an_iteration() {
        let mut p = congestion_problem(21, 3, 5, 9e6);
        let full = solve(&p, &SolveOptions::default()).unwrap();
        let budget = PowerBudget {
            available_w: full.total_power_w * 0.5,
            tolerance: 0.01,
        };
        let before: Vec<f64> = p.targets.iter().map(|t| t.target_rate_bps).collect();
        let admission = AdmissionOptions {
            max_iterations: 1, // observe a single pass
            ..AdmissionOptions::default()
        };
        let _ = readjust(
            &mut p,
            &[0, 1, 2],
            &budget,
            &admission,
            &SolveOptions::default(),
        )
        .unwrap();
        // One pass reduces each target by (p_opt - 1) lambda_i / sum
        // lambda, denominated in Mbps; larger prices get larger cuts.
        let p_opt = full.total_power_w / budget.available_w;
        let lambda_sum: f64 = full.lambda.iter().sum();
        let mut cuts = Vec::new();
        for i in 0..3 {
            let cut = before[i] - p.targets[i].target_rate_bps;
            let expected = ((p_opt - 1.0) * full.lambda[i] / lambda_sum * 1e6).min(before[i]);
            assert!(
                (cut - expected).abs() <= 1e-9 * expected.max(1.0),
                "user {i}: cut {cut} expected {expected}"
            );
            cuts.push((full.lambda[i], cut));
        }
        cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(cuts[0].1 <= cuts[1].1 && cuts[1].1 <= cuts[2].1);
    }

    #[test]
    fn power_is_nonincreasing_across_iterations() {
        let mut p = congestion_problem(33, 4, 6, 7e6);
        let full = solve(&p, &SolveOptions::default()).unwrap();
        let budget = PowerBudget {
            available_w: full.total_power_w * 0.55,
            tolerance: 0.01,
        };
        // Step one iteration at a time and watch the required power.
        let mut last = full.total_power_w;
        for pass in 1..=50 {
            let admission = AdmissionOptions {
                max_iterations: 1,
                ..AdmissionOptions::default()
            };
            let mut probe = p.clone();
            let (res, report) = readjust(
                &mut probe,
                &[0, 1],
                &budget,
                &admission,
                &SolveOptions::default(),
            )
            .unwrap();
            if report.iterations == 0 {
                break;
            }
            assert!(
                res.total_power_w <= last * (1.0 + 1e-6),
                "pass {pass}: {} -> {}",
                last,
                res.total_power_w
            );
            last = res.total_power_w;
            p = probe;
        }
    }

    #[test]
    fn protected_demand_alone_over_budget_is_hard_infeasible() {
        let mut p = congestion_problem(41, 2, 4, 6e6);
        // No adjustable users at all: everything is protected except a
        // zero-rate CL user.
        p.targets[0].target_rate_bps = 0.0;
        let full = solve(&p, &SolveOptions::default()).unwrap();
        let budget = PowerBudget {
            available_w: full.total_power_w * 0.1,
            tolerance: 0.01,
        };
        let err = readjust(
            &mut p,
            &[0],
            &budget,
            &AdmissionOptions::default(),
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::HardInfeasible { .. }));
    }
}
