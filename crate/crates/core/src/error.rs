use thiserror::Error;

/// Errors surfaced by the allocation engine and simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Scenario file failed schema or invariant validation.
    #[error("config error: {0}")]
    Config(String),

    /// The queue simulator was asked for an unstable operating point.
    #[error("unstable queue: arrival rate {arrival_bps} bps >= service rate {service_bps} bps")]
    UnstableQueue { arrival_bps: f64, service_bps: f64 },

    /// A requested rate cannot be met with any finite power.
    #[error("infeasible rate: {0}")]
    InfeasibleRate(String),

    /// A user with a positive target has no usable subchannel in the
    /// final assignment.
    #[error("infeasible allocation at slot {slot:?}: no subchannel assignable to user(s) {users:?}")]
    InfeasibleUser { slot: Option<u32>, users: Vec<u32> },

    /// URLLC/TS demand alone exceeds the power budget; admission control
    /// has nothing left to trim.
    #[error("hard infeasibility at slot {slot:?}: non-adjustable demand exceeds the power budget (p_opt = {p_opt:.4})")]
    HardInfeasible { slot: Option<u32>, p_opt: f64 },

    /// Target so large that the dual bound overflows f64.
    #[error("target rate out of numeric range for user {user}: {target_bps} bps over {bandwidth_hz} Hz subchannels")]
    TargetOutOfRange {
        user: u32,
        target_bps: f64,
        bandwidth_hz: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
