//! Per-slot minimum-power OFDMA allocation under per-user rate targets.
//!
//! The slot problem is
//!
//! ```text
//!   min sum_ij p_ij   s.t.  r_i >= r_o,i,  p_ij >= 0,
//!                           x_ij in {0,1}, sum_i x_ij <= 1
//! ```
//!
//! with `r_i = B sum_j x_ij log2(1 + beta_i p_ij h_ij / (x_ij sigma^2))`.
//! It is solved by Lagrangian duality: for fixed per-user prices
//! `lambda_i`, the optimal power is water-filling with level
//! `lambda_i B / ln 2`, each subchannel goes to the user with the highest
//! marginal price `mu_ij(lambda_i)`, and the concave dual is maximised by
//! an ellipsoid subgradient search. After the search fixes the ownership
//! sets, per-user water levels are recomputed so every target is met
//! exactly; the reported `lambda` are those refined levels times
//! `ln 2 / B`, i.e. the exact marginal power cost of each user's target
//! for the chosen assignment.
//!
//! `beta_i` folds into an effective inverse gain `c_ij =
//! sigma^2 / (beta_i h_ij)` so every formula below reads as in the
//! `beta = 1` case.

mod ellipsoid;
mod waterfill;

pub use ellipsoid::DualState;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::Error;
use crate::qos::UserQos;
use crate::Result;

use ellipsoid::CutOutcome;
use waterfill::fill_to_target;

/// Gains below this are treated as zero for assignment eligibility.
pub const MIN_GAIN: f64 = 1e-30;

const LN_2: f64 = std::f64::consts::LN_2;

/// One slot's allocation problem.
#[derive(Debug, Clone)]
pub struct AllocationProblem {
    pub channel: ChannelState,
    /// Per-user resolved rate constraints, indexed like the gain rows.
    pub targets: Vec<UserQos>,
    /// Per-user SNR-gap factor; 1.0 recovers pure Shannon rates.
    pub beta: Vec<f64>,
}

impl AllocationProblem {
    pub fn num_users(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::domain("allocation problem has no users"));
        }
        if self.channel.num_users() != self.targets.len() {
            return Err(Error::domain(format!(
                "channel has {} rows but {} targets given",
                self.channel.num_users(),
                self.targets.len()
            )));
        }
        if self.beta.len() != self.targets.len() {
            return Err(Error::domain("beta must have one entry per user"));
        }
        if self.beta.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return Err(Error::domain("beta factors must be finite and >= 0"));
        }
        if self.targets.iter().any(|t| t.target_rate_bps < 0.0) {
            return Err(Error::domain("target rates must be >= 0"));
        }
        if self.channel.noise_power_w <= 0.0 || self.channel.subchannel_bw_hz <= 0.0 {
            return Err(Error::domain("noise power and bandwidth must be > 0"));
        }
        Ok(())
    }
}

/// Solver knobs. Two certified stopping rules: the primary one exits
/// once the incumbent's power sits within `gap_tol_rel` of the best dual
/// lower bound; the backstop exits once the supergradient's ellipsoid
/// norm falls below `eps_scale` of the dual objective's own scale (no
/// meaningful dual improvement left). The iteration cap defaults to
/// `50 N^2`.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Ellipsoid-ball stop, relative to the dual scale.
    pub eps_scale: f64,
    pub gap_tol_rel: f64,
    pub max_iterations: Option<usize>,
    /// Optional warm-start centre; `None` entries fall back to
    /// `lambda_upper/2`. Values are clipped to `[0, lambda_upper]`.
    pub warm_lambda: Option<Vec<Option<f64>>>,
    /// Optional ownership hint (winner per subchannel, e.g. from a
    /// previous solve of a nearby problem). Seeds the incumbent, so the
    /// returned power can only improve on water-filling that assignment.
    pub warm_assignment: Option<Vec<Option<usize>>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            eps_scale: 1e-6,
            gap_tol_rel: 1e-3,
            max_iterations: None,
            warm_lambda: None,
            warm_assignment: None,
        }
    }
}

/// Subchannel ownership at a given price vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// Winning user per subchannel; `None` where every price is zero.
    pub winner: Vec<Option<usize>>,
    /// Subchannels owned by each user.
    pub per_user: Vec<Vec<usize>>,
}

/// Final allocation for one slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationResult {
    /// Transmit power per (user, subchannel) in watts.
    pub power_w: Array2<f64>,
    /// Binary ownership matrix; column sums are <= 1.
    pub assignment: Array2<u8>,
    /// Refined per-user duals (marginal watts per bps).
    pub lambda: Vec<f64>,
    /// Achieved rates in bps, evaluated from power and assignment.
    pub rates_bps: Vec<f64>,
    pub total_power_w: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Best dual value seen (a lower bound on the optimal power).
    pub dual_bound_w: f64,
    /// `total_power_w - dual_bound_w`.
    pub duality_gap_w: f64,
}

impl AllocationResult {
    /// Owning user per subchannel (at most one by construction).
    pub fn winner_per_subchannel(&self) -> Vec<Option<usize>> {
        let (n, k) = (self.assignment.nrows(), self.assignment.ncols());
        (0..k)
            .map(|j| (0..n).find(|&i| self.assignment[[i, j]] == 1))
            .collect()
    }

    /// Subchannels owned by each user.
    pub fn per_user_subchannels(&self) -> Vec<Vec<usize>> {
        let (n, k) = (self.assignment.nrows(), self.assignment.ncols());
        (0..n)
            .map(|i| (0..k).filter(|&j| self.assignment[[i, j]] == 1).collect())
            .collect()
    }
}

/// Exact water-filling of the given ownership sets to the problem's
/// current targets: `(total power, per-user duals)`. `None` when a
/// positive target has an empty or unusable set. This is the fixed
/// assignment evaluation used between assignment re-optimisations.
pub fn waterfill_assignment(
    problem: &AllocationProblem,
    per_user: &[Vec<usize>],
) -> Option<(f64, Vec<f64>)> {
    let ws = Workspace::new(problem);
    let n = problem.num_users();
    let mut total = 0.0;
    let mut lambda = vec![0.0; n];
    for i in 0..n {
        if ws.targets[i] <= 0.0 {
            continue;
        }
        let channels: Vec<(usize, f64, f64)> = per_user[i]
            .iter()
            .filter(|&&j| ws.inv[[i, j]].is_finite())
            .map(|&j| (j, ws.inv[[i, j]], ws.log2_inv[[i, j]]))
            .collect();
        if channels.is_empty() {
            return None;
        }
        let wf = fill_to_target(ws.targets[i], &channels, ws.bandwidth_hz)?;
        total += wf.total_power_w;
        lambda[i] = wf.level_w * LN_2 / ws.bandwidth_hz;
    }
    Some((total, lambda))
}

/// Shannon rate of one user's row: `B sum_j x_j log2(1 + beta p_j h_j /
/// sigma^2)`, with unassigned terms contributing zero.
pub fn user_rate(
    channel: &ChannelState,
    user: usize,
    beta: f64,
    power: &[f64],
    assigned: &[bool],
) -> f64 {
    let b = channel.subchannel_bw_hz;
    let sigma2 = channel.noise_power_w;
    let gains = channel.gains.row(user);
    let mut sum = 0.0;
    for j in 0..gains.len() {
        if assigned[j] && power[j] > 0.0 {
            sum += (1.0 + beta * power[j] * gains[j] / sigma2).log2();
        }
    }
    b * sum
}

/// Water-filling power for one user at price `lambda_i`:
/// `p_j = x_j [lambda B / ln2 - sigma^2/(beta h_j)]^+`.
pub fn power_for_lambda(
    lambda_i: f64,
    channel: &ChannelState,
    user: usize,
    beta: f64,
    assigned: &[bool],
) -> Vec<f64> {
    let level = lambda_i * channel.subchannel_bw_hz / LN_2;
    let gains = channel.gains.row(user);
    (0..gains.len())
        .map(|j| {
            if !assigned[j] {
                return 0.0;
            }
            let c = inv_gain(channel.noise_power_w, beta, gains[j]);
            (level - c).max(0.0)
        })
        .collect()
}

/// Marginal value of a subchannel to a user at price `lambda_i`:
/// `mu = lambda B log2(1 + p* g) - p*` with `p* = [lambda B/ln2 - 1/g]^+`
/// and `g` the effective gain over noise. Zero at or below the clip
/// threshold.
pub fn mu_value(lambda_i: f64, gain_over_noise: f64, bandwidth_hz: f64) -> f64 {
    if lambda_i <= 0.0 || gain_over_noise <= 0.0 {
        return 0.0;
    }
    let c = gain_over_noise.recip();
    let level = lambda_i * bandwidth_hz / LN_2;
    if level <= c {
        return 0.0;
    }
    let p = level - c;
    (lambda_i * bandwidth_hz * (1.0 + p / c).log2() - p).max(0.0)
}

/// `d mu / d lambda`: `B log2(lambda B g / ln2)` above threshold, else 0.
pub fn mu_derivative(lambda_i: f64, gain_over_noise: f64, bandwidth_hz: f64) -> f64 {
    if lambda_i <= 0.0 || gain_over_noise <= 0.0 {
        return 0.0;
    }
    let c = gain_over_noise.recip();
    let level = lambda_i * bandwidth_hz / LN_2;
    if level <= c {
        return 0.0;
    }
    bandwidth_hz * (level / c).log2()
}

/// Gives each subchannel to the user with the highest marginal price,
/// lowest user index on ties; subchannels where every price is zero stay
/// unassigned.
pub fn assign_subchannels(lambda: &[f64], problem: &AllocationProblem) -> Assignment {
    let ws = Workspace::new(problem);
    ws.evaluate(lambda).assignment
}

/// Concave dual objective
/// `sum_i lambda_i r_o,i - sum_j max_i mu_ij(lambda_i)`.
pub fn dual_value(lambda: &[f64], problem: &AllocationProblem) -> f64 {
    let ws = Workspace::new(problem);
    ws.evaluate(lambda).dual_value
}

/// Dual supergradient `g_i = r_o,i - sum_{j in J_i} d mu_ij / d lambda_i`
/// for the ownership sets in `assignment`.
pub fn subgradient(lambda: &[f64], problem: &AllocationProblem, assignment: &Assignment) -> Vec<f64> {
    let b = problem.channel.subchannel_bw_hz;
    let sigma2 = problem.channel.noise_power_w;
    problem
        .targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let gains = problem.channel.gains.row(i);
            let served: f64 = assignment.per_user[i]
                .iter()
                .map(|&j| {
                    let g = effective_gain_over_noise(sigma2, problem.beta[i], gains[j]);
                    mu_derivative(lambda[i], g, b)
                })
                .sum();
            t.target_rate_bps - served
        })
        .collect()
}

/// Upper bound on a user's optimal dual price:
/// `2^(r_o/B) (ln2/B) sum_j c_j` over its usable subchannels, where
/// `c_j` are inverse effective gains. May be `inf` for absurd targets.
pub fn lambda_upper_bound(target_bps: f64, inv_gains: &[f64], bandwidth_hz: f64) -> f64 {
    let sum_c: f64 = inv_gains.iter().filter(|c| c.is_finite()).sum();
    if sum_c <= 0.0 {
        return f64::INFINITY;
    }
    let log2 = target_bps / bandwidth_hz + (sum_c * LN_2 / bandwidth_hz).log2();
    log2.exp2()
}

/// Stationary price for a fixed ownership set, all channels active:
/// `2^(r_o/(B m)) (prod c_j)^(1/m) ln2 / B`.
pub fn closed_form_lambda(target_bps: f64, assigned_inv_gains: &[f64], bandwidth_hz: f64) -> Result<f64> {
    if assigned_inv_gains.is_empty() {
        return Err(Error::domain(
            "closed-form price needs a nonempty subchannel set",
        ));
    }
    let m = assigned_inv_gains.len() as f64;
    let mean_lc: f64 = assigned_inv_gains.iter().map(|c| c.log2()).sum::<f64>() / m;
    let log2 = target_bps / (bandwidth_hz * m) + mean_lc + (LN_2 / bandwidth_hz).log2();
    Ok(log2.exp2())
}

fn inv_gain(sigma2: f64, beta: f64, h: f64) -> f64 {
    if h < MIN_GAIN || beta <= 0.0 {
        f64::INFINITY
    } else {
        sigma2 / (beta * h)
    }
}

fn effective_gain_over_noise(sigma2: f64, beta: f64, h: f64) -> f64 {
    if h < MIN_GAIN || beta <= 0.0 {
        0.0
    } else {
        beta * h / sigma2
    }
}

/// Precomputed per-slot pricing tables: inverse effective gains and their
/// logs, so the per-iteration price scan is a multiply-add per entry.
struct Workspace {
    bandwidth_hz: f64,
    num_users: usize,
    num_subchannels: usize,
    inv: Array2<f64>,
    log2_inv: Array2<f64>,
    targets: Vec<f64>,
}

struct Evaluation {
    assignment: Assignment,
    dual_value: f64,
    gradient: Vec<f64>,
}

impl Workspace {
    fn new(problem: &AllocationProblem) -> Self {
        let n = problem.num_users();
        let k = problem.channel.num_subchannels();
        let sigma2 = problem.channel.noise_power_w;
        let mut inv = Array2::<f64>::zeros((n, k));
        let mut log2_inv = Array2::<f64>::zeros((n, k));
        for i in 0..n {
            let beta = problem.beta[i];
            for j in 0..k {
                let c = inv_gain(sigma2, beta, problem.channel.gains[[i, j]]);
                inv[[i, j]] = c;
                log2_inv[[i, j]] = c.log2();
            }
        }
        Workspace {
            bandwidth_hz: problem.channel.subchannel_bw_hz,
            num_users: n,
            num_subchannels: k,
            inv,
            log2_inv,
            targets: problem.targets.iter().map(|t| t.target_rate_bps).collect(),
        }
    }

    /// Usable (finite inverse gain) subchannels of one user.
    fn eligible(&self, user: usize) -> Vec<usize> {
        (0..self.num_subchannels)
            .filter(|&j| self.inv[[user, j]].is_finite())
            .collect()
    }

    /// One full price scan at the given multipliers: winners, dual value
    /// and supergradient. `mu_ij = w_i (lv_i - lc_ij) - (level_i - c_ij)`
    /// above threshold with `w_i = lambda_i B`, `level_i = w_i / ln2`.
    fn evaluate(&self, lambda: &[f64]) -> Evaluation {
        let b = self.bandwidth_hz;
        let k = self.num_subchannels;
        let mut best_mu = vec![0.0f64; k];
        let mut winner: Vec<Option<usize>> = vec![None; k];

        for i in 0..self.num_users {
            let li = lambda[i];
            if li <= 0.0 {
                continue;
            }
            let w = li * b;
            let level = w / LN_2;
            let lv = level.log2();
            let base = w * lv - level;
            let inv_row = self.inv.row(i);
            let lc_row = self.log2_inv.row(i);
            for j in 0..k {
                let c = inv_row[j];
                if level > c {
                    let mu = base - w * lc_row[j] + c;
                    if mu > best_mu[j] {
                        best_mu[j] = mu;
                        winner[j] = Some(i);
                    }
                }
            }
        }

        let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); self.num_users];
        for (j, &w) in winner.iter().enumerate() {
            if let Some(i) = w {
                per_user[i].push(j);
            }
        }

        let mut dual = 0.0;
        for i in 0..self.num_users {
            dual += lambda[i] * self.targets[i];
        }
        for &mu in &best_mu {
            dual -= mu;
        }

        let mut gradient = Vec::with_capacity(self.num_users);
        for i in 0..self.num_users {
            let li = lambda[i];
            let mut served = 0.0;
            if li > 0.0 {
                let level = li * b / LN_2;
                let lv = level.log2();
                for &j in &per_user[i] {
                    let lc = self.log2_inv[[i, j]];
                    if lv > lc {
                        served += b * (lv - lc);
                    }
                }
            }
            gradient.push(self.targets[i] - served);
        }

        Evaluation {
            assignment: Assignment { winner, per_user },
            dual_value: dual,
            gradient,
        }
    }
}

/// A feasible primal point recovered from an iterate's ownership sets.
struct Incumbent {
    winner: Vec<Option<usize>>,
    /// Per-user active channels with powers, empty for zero targets.
    fills: Vec<Vec<(usize, f64)>>,
    levels: Vec<f64>,
    total_power_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StopReason {
    GapCertified,
    MetricBall,
    IterationCap,
    Degenerate,
}

/// Solves one slot. See the module docs for the method; on success every
/// user's achieved rate meets its target exactly (up to rounding) and the
/// result carries a certified duality gap.
pub fn solve(problem: &AllocationProblem, opts: &SolveOptions) -> Result<AllocationResult> {
    problem.validate()?;
    let ws = Workspace::new(problem);
    let n = ws.num_users;
    let b = ws.bandwidth_hz;

    let active: Vec<usize> = (0..n).filter(|&i| ws.targets[i] > 0.0).collect();

    // Nothing to serve.
    if active.is_empty() {
        return Ok(empty_result(n, ws.num_subchannels));
    }

    // Eligibility and dual upper bounds.
    let mut upper = vec![0.0f64; n];
    for &i in &active {
        let eligible = ws.eligible(i);
        if eligible.is_empty() {
            return Err(Error::InfeasibleUser {
                slot: None,
                users: vec![problem.targets[i].user_id],
            });
        }
        let inv: Vec<f64> = eligible.iter().map(|&j| ws.inv[[i, j]]).collect();
        let bound = lambda_upper_bound(ws.targets[i], &inv, b);
        if !bound.is_finite() {
            return Err(Error::TargetOutOfRange {
                user: problem.targets[i].user_id,
                target_bps: ws.targets[i],
                bandwidth_hz: b,
            });
        }
        upper[i] = bound;
    }

    let dim = active.len();
    let radius_sq: f64 = active.iter().map(|&i| upper[i] * upper[i]).sum();
    let mut center = Array1::<f64>::zeros(dim);
    for (d, &i) in active.iter().enumerate() {
        let hint = opts
            .warm_lambda
            .as_ref()
            .and_then(|h| h.get(i).copied().flatten())
            .filter(|v| v.is_finite() && *v >= 0.0);
        center[d] = match hint {
            Some(v) => v.min(upper[i]),
            None => upper[i] / 2.0,
        };
    }
    let mut state = DualState::ball(center, radius_sq);

    let cap = opts.max_iterations.unwrap_or(50 * n * n);

    let mut lambda_full = vec![0.0f64; n];
    let mut dual_best = 0.0f64; // lambda = 0 attains 0
    let mut incumbent: Option<Incumbent> = None;
    let mut last_uncovered: Vec<usize> = active.clone();
    let stop: StopReason;
    let mut iterations = 0usize;

    // An ownership hint becomes the starting incumbent, after dropping
    // stale owners and covering anyone it leaves out.
    if let Some(hint) = &opts.warm_assignment {
        let mut winner: Vec<Option<usize>> = vec![None; ws.num_subchannels];
        let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (j, w) in hint.iter().enumerate().take(ws.num_subchannels) {
            if let Some(i) = *w {
                if i < n && ws.targets[i] > 0.0 && ws.inv[[i, j]].is_finite() {
                    winner[j] = Some(i);
                    per_user[i].push(j);
                }
            }
        }
        let seeded = Assignment { winner, per_user };
        let uncovered: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| seeded.per_user[i].is_empty())
            .collect();
        let completed = if uncovered.is_empty() {
            Some(seeded)
        } else {
            complete_assignment(&ws, &seeded, &uncovered)
        };
        if let Some(assignment) = completed {
            incumbent = refine(&ws, &active, &assignment);
        }
    }

    loop {
        for (d, &i) in active.iter().enumerate() {
            lambda_full[i] = state.lambda[d];
        }
        let eval = ws.evaluate(&lambda_full);
        iterations += 1;
        if eval.dual_value.is_finite() && eval.dual_value > dual_best {
            dual_best = eval.dual_value;
        }

        // Primal recovery: refine this iterate's ownership sets. Iterates
        // near a degenerate dual optimum leave some user uncovered (two
        // users tied on a subchannel price); completion resolves the tie
        // integrally so a feasible candidate still emerges.
        let uncovered: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| eval.assignment.per_user[i].is_empty())
            .collect();
        let assignment = if uncovered.is_empty() {
            Some(std::borrow::Cow::Borrowed(&eval.assignment))
        } else {
            match complete_assignment(&ws, &eval.assignment, &uncovered) {
                Some(fixed) => Some(std::borrow::Cow::Owned(fixed)),
                None => {
                    last_uncovered = uncovered;
                    None
                }
            }
        };
        if let Some(assignment) = assignment {
            if let Some(candidate) = refine(&ws, &active, &assignment) {
                let better = incumbent
                    .as_ref()
                    .map(|inc| candidate.total_power_w < inc.total_power_w)
                    .unwrap_or(true);
                if better {
                    incumbent = Some(candidate);
                }
            }
        }

        // Certified-gap stop: incumbent power within tolerance of the
        // best dual lower bound.
        if let Some(inc) = &incumbent {
            let gap = inc.total_power_w - dual_best;
            if gap <= opts.gap_tol_rel * inc.total_power_w.max(f64::MIN_POSITIVE) {
                stop = StopReason::GapCertified;
                break;
            }
        }

        let g = Array1::from_iter(active.iter().map(|&i| eval.gradient[i]));
        let norm = state.metric_norm(&g);
        if std::env::var_os("SLICESIM_TRACE").is_some() {
            eprintln!(
                "it {iterations}: lambda {:?} L {:.4e} best {:.4e} norm {:.4e} P {:?} J {:?}",
                state.lambda.as_slice().unwrap(),
                eval.dual_value,
                dual_best,
                norm,
                incumbent.as_ref().map(|i| i.total_power_w),
                eval.assignment.per_user
            );
        }
        // Ball backstop: no dual improvement beyond eps_scale of the
        // dual scale remains inside the ellipsoid. Only meaningful once
        // a feasible incumbent exists.
        let dual_scale = dual_best.max(eval.dual_value.abs()).max(f64::MIN_POSITIVE);
        if incumbent.is_some() && norm <= opts.eps_scale * dual_scale {
            stop = StopReason::MetricBall;
            break;
        }
        if iterations >= cap {
            stop = StopReason::IterationCap;
            break;
        }

        let alpha = if eval.dual_value.is_finite() && norm > 0.0 {
            (dual_best - eval.dual_value) / norm
        } else {
            0.0
        };
        match state.deep_cut(&g, alpha) {
            CutOutcome::Updated => state.enforce_nonnegative(4 * dim),
            CutOutcome::Degenerate => {
                stop = StopReason::Degenerate;
                break;
            }
        }
    }

    let Some(inc) = incumbent else {
        let users = last_uncovered
            .iter()
            .map(|&i| problem.targets[i].user_id)
            .collect();
        return Err(Error::InfeasibleUser { slot: None, users });
    };

    let converged = matches!(stop, StopReason::GapCertified | StopReason::MetricBall);
    Ok(build_result(problem, &inc, dual_best, converged, iterations))
}

/// Gives every uncovered user its cheapest eligible subchannel, taking
/// unowned ones first and otherwise stealing from owners that hold more
/// than one. `None` when some user cannot be covered at all.
fn complete_assignment(
    ws: &Workspace,
    assignment: &Assignment,
    uncovered: &[usize],
) -> Option<Assignment> {
    let mut winner = assignment.winner.clone();
    let mut per_user = assignment.per_user.clone();
    for &u in uncovered {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..ws.num_subchannels {
            let c = ws.inv[[u, j]];
            if !c.is_finite() {
                continue;
            }
            let claimable = match winner[j] {
                None => true,
                Some(owner) => owner != u && per_user[owner].len() >= 2,
            };
            if claimable && best.map_or(true, |(_, bc)| c < bc) {
                best = Some((j, c));
            }
        }
        let (j, _) = best?;
        if let Some(owner) = winner[j] {
            per_user[owner].retain(|&ch| ch != j);
        }
        winner[j] = Some(u);
        per_user[u].push(j);
    }
    Some(Assignment { winner, per_user })
}

/// Exact-rate refinement of an iterate's ownership sets; `None` if some
/// user's target cannot be represented on its set.
fn refine(ws: &Workspace, active: &[usize], assignment: &Assignment) -> Option<Incumbent> {
    let mut fills: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ws.num_users];
    let mut levels = vec![0.0f64; ws.num_users];
    let mut total = 0.0;
    for &i in active {
        let channels: Vec<(usize, f64, f64)> = assignment.per_user[i]
            .iter()
            .map(|&j| (j, ws.inv[[i, j]], ws.log2_inv[[i, j]]))
            .collect();
        let wf = fill_to_target(ws.targets[i], &channels, ws.bandwidth_hz)?;
        total += wf.total_power_w;
        levels[i] = wf.level_w;
        fills[i] = wf.active;
    }
    Some(Incumbent {
        winner: assignment.winner.clone(),
        fills,
        levels,
        total_power_w: total,
    })
}

fn build_result(
    problem: &AllocationProblem,
    inc: &Incumbent,
    dual_bound_w: f64,
    converged: bool,
    iterations: usize,
) -> AllocationResult {
    let n = problem.num_users();
    let k = problem.channel.num_subchannels();
    let mut power = Array2::<f64>::zeros((n, k));
    let mut assignment = Array2::<u8>::zeros((n, k));
    for (j, &w) in inc.winner.iter().enumerate() {
        if let Some(i) = w {
            assignment[[i, j]] = 1;
        }
    }
    for i in 0..n {
        for &(j, p) in &inc.fills[i] {
            power[[i, j]] = p;
            assignment[[i, j]] = 1;
        }
    }

    let mut rates = Vec::with_capacity(n);
    let mut assigned_row = vec![false; k];
    let mut power_row = vec![0.0f64; k];
    for i in 0..n {
        for j in 0..k {
            assigned_row[j] = assignment[[i, j]] == 1;
            power_row[j] = power[[i, j]];
        }
        rates.push(user_rate(
            &problem.channel,
            i,
            problem.beta[i],
            &power_row,
            &assigned_row,
        ));
    }

    let lambda: Vec<f64> = (0..n)
        .map(|i| {
            if inc.levels[i] > 0.0 {
                inc.levels[i] * LN_2 / problem.channel.subchannel_bw_hz
            } else {
                0.0
            }
        })
        .collect();

    let total_power_w = inc.total_power_w;
    AllocationResult {
        power_w: power,
        assignment,
        lambda,
        rates_bps: rates,
        total_power_w,
        converged,
        iterations,
        dual_bound_w,
        duality_gap_w: total_power_w - dual_bound_w,
    }
}

fn empty_result(n: usize, k: usize) -> AllocationResult {
    AllocationResult {
        power_w: Array2::zeros((n, k)),
        assignment: Array2::zeros((n, k)),
        lambda: vec![0.0; n],
        rates_bps: vec![0.0; n],
        total_power_w: 0.0,
        converged: true,
        iterations: 0,
        dual_bound_w: 0.0,
        duality_gap_w: 0.0,
    }
}
