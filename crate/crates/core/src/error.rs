use std::fmt;

use serde::Serialize;

/// Constraint families of the placement problem, used to report which one a
/// candidate allocation violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// `n_1 + sum L_q (n_q - n_{q-1}) <= L N`
    Budget,
    /// `L_q >= 1`
    LowerRedundancy,
    /// `L_q <= U_q = min{K_T, K pi_q / Lambda}`
    UpperRedundancy,
    /// The broadcast sub-library is pinned at redundancy 1.
    BroadcastRedundancy,
    /// Allocation length does not match the segmentation.
    Dimension,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constraint::Budget => "budget",
            Constraint::LowerRedundancy => "lower_redundancy",
            Constraint::UpperRedundancy => "upper_redundancy",
            Constraint::BroadcastRedundancy => "broadcast_redundancy",
            Constraint::Dimension => "dimension",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),

    /// Sub-library `sublibrary` (0-based, 0 is the broadcast one) cannot hold
    /// any redundancy in `[1, U_q]` because its demand is too small.
    #[error("sub-library {sublibrary} has upper redundancy bound {upper} < 1")]
    InfeasibleSegment { sublibrary: usize, upper: f64 },

    #[error("constraint `{constraint}` violated at sub-library {sublibrary:?}: {detail}")]
    ConstraintViolation {
        constraint: Constraint,
        sublibrary: Option<usize>,
        detail: String,
    },

    #[error("transmitter {transmitter} over capacity: load {load} > {capacity}")]
    Capacity {
        transmitter: usize,
        load: f64,
        capacity: f64,
    },

    #[error("oracle limited to N <= {limit}, got N = {n}")]
    OracleScale { n: usize, limit: usize },
}

impl Error {
    /// Stable machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Infeasible(_) => "infeasible",
            Error::InvalidSegmentation(_) => "invalid_segmentation",
            Error::InfeasibleSegment { .. } => "infeasible_segment",
            Error::ConstraintViolation { .. } => "constraint_violation",
            Error::Capacity { .. } => "capacity",
            Error::OracleScale { .. } => "oracle_scale",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
