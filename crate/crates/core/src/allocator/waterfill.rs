//! Water-filling a single user's power over a fixed subchannel set so the
//! achieved rate equals the target exactly.
//!
//! Works in log2 space: with inverse gains `c_j` (noise over effective
//! gain) sorted ascending, the candidate water level for the best `m`
//! channels is `log2(level) = target/(B m) + mean_j(log2 c_j)`. The level
//! is consistent iff every used channel sits below the water
//! (`level > c_{(m)}`); the consistent `m` with all floors submerged is
//! the classic water-filling solution.

/// One user's exact-rate power allocation over a channel set.
#[derive(Debug, Clone)]
pub(crate) struct WaterFill {
    /// Water level in watts (`lambda B / ln 2`).
    pub level_w: f64,
    /// Channel ids that actually carry power, with their powers.
    pub active: Vec<(usize, f64)>,
    /// Total power in watts.
    pub total_power_w: f64,
}

/// Channels are `(id, inv_gain, log2(inv_gain))`. Returns `None` when the
/// target cannot be represented (level overflows f64).
pub(crate) fn fill_to_target(
    target_bps: f64,
    channels: &[(usize, f64, f64)],
    bandwidth_hz: f64,
) -> Option<WaterFill> {
    debug_assert!(target_bps > 0.0 && !channels.is_empty());

    let mut sorted: Vec<&(usize, f64, f64)> = channels.iter().collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));

    // Largest m whose candidate level submerges all m floors.
    let mut lc_prefix = 0.0;
    let mut best: Option<(usize, f64)> = None;
    for (m, ch) in sorted.iter().enumerate() {
        lc_prefix += ch.2;
        let count = (m + 1) as f64;
        let log2_level = target_bps / (bandwidth_hz * count) + lc_prefix / count;
        if log2_level > ch.2 {
            best = Some((m + 1, log2_level));
        }
    }
    let (m, log2_level) = best?;

    let level_w = log2_level.exp2();
    if !level_w.is_finite() {
        return None;
    }
    let mut active = Vec::with_capacity(m);
    let mut total = 0.0;
    for ch in &sorted[..m] {
        let p = (level_w - ch.1).max(0.0);
        total += p;
        active.push((ch.0, p));
    }
    Some(WaterFill {
        level_w,
        active,
        total_power_w: total,
    })
}
