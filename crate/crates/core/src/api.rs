//! Wire types for the HTTP service. Kept next to the domain types so the
//! server and client crates share one source of truth.

use serde::{Deserialize, Serialize};

use crate::io::RunRecord;
use crate::oracle::OracleReport;
use crate::scenario::{ScenarioConfig, SlotStep};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub config: ScenarioConfig,
    #[serde(default)]
    pub seed_override: Option<u64>,
    #[serde(default)]
    pub admission_override: Option<bool>,
}

/// `simulate` responds with the same record that `run.json` carries.
pub type SimulateResponse = RunRecord;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSlotRequest {
    pub config: ScenarioConfig,
    pub slot: u32,
    #[serde(default)]
    pub seed_override: Option<u64>,
    #[serde(default)]
    pub admission_override: Option<bool>,
}

pub type SolveSlotResponse = SlotStep;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OracleRequest {
    pub instances: usize,
    pub seed: u64,
}

pub type OracleResponse = OracleReport;

/// Machine-readable error category, mirrored into CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidConfig,
    Infeasible,
    OracleFailure,
    Internal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

/// Standard error envelope returned by every endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: ErrorBody,
}

impl ErrorResponse {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ErrorResponse {
            error: ErrorBody {
                code,
                message: message.into(),
            },
        }
    }
}

/// Maps engine errors onto wire categories.
pub fn classify_error(err: &crate::Error) -> ErrorCode {
    use crate::Error::*;
    match err {
        Domain(_) | Config(_) | TargetOutOfRange { .. } => ErrorCode::InvalidConfig,
        InfeasibleUser { .. } | HardInfeasible { .. } | InfeasibleRate(_) | UnstableQueue { .. } => {
            ErrorCode::Infeasible
        }
        Io { .. } => ErrorCode::Internal,
    }
}
