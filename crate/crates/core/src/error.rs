//! Error type shared by every layer of the simulator.

use thiserror::Error;

use crate::engine::IterationTrace;

pub type Result<T> = std::result::Result<T, Error>;

/// One element that cannot be realized by a passive weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("shape mismatch: {op} got {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix is singular (pivot {pivot:e} in column {column})")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("reference matrix has zero norm")]
    ZeroReference,

    #[error("voltage {volts} V outside [0, {v_max}] V")]
    VoltageOutOfRange { volts: f64, v_max: f64 },

    #[error("weight {weight} unreachable: best residual {residual:e} exceeds {limit:e}")]
    UnreachableWeight {
        weight: f64,
        residual: f64,
        limit: f64,
    },

    #[error("matrix not encodable{}: {} element(s) with |m| > 1, first {:?}",
        tile.map(|t| format!(" in tile {t:?}")).unwrap_or_default(),
        violations.len(),
        violations.first())]
    NotEncodable {
        tile: Option<(usize, usize)>,
        violations: Vec<Violation>,
    },

    #[error("column {column} did not converge after {} circulations", trace.circulations_used)]
    NotConverged {
        column: usize,
        trace: Box<IterationTrace>,
    },

    #[error("column {column} diverged after {} circulations", trace.circulations_used)]
    Diverged {
        column: usize,
        trace: Box<IterationTrace>,
    },

    #[error("no convergent omega found for the operand")]
    NoConvergentOmega,

    #[error("dimension {rows}x{cols} is not a multiple of the tile size")]
    DimensionNotTileable { rows: usize, cols: usize },

    #[error("leading block singular at recursion level {level}")]
    SingularLeadingBlock { level: usize },

    #[error("block inverse verification failed: residual {residual:e} > {threshold:e}")]
    VerificationFailed { residual: f64, threshold: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Stable machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidMatrix(_) => "invalid_matrix",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::SingularMatrix { .. } => "singular_matrix",
            Error::ZeroReference => "zero_reference",
            Error::VoltageOutOfRange { .. } => "voltage_out_of_range",
            Error::UnreachableWeight { .. } => "unreachable_weight",
            Error::NotEncodable { .. } => "not_encodable",
            Error::NotConverged { .. } => "not_converged",
            Error::Diverged { .. } => "diverged",
            Error::NoConvergentOmega => "no_convergent_omega",
            Error::DimensionNotTileable { .. } => "dimension_not_tileable",
            Error::SingularLeadingBlock { .. } => "singular_leading_block",
            Error::VerificationFailed { .. } => "verification_failed",
            Error::InvalidConfig(_) => "config_invalid",
        }
    }

    pub(crate) fn in_tile(self, tile: (usize, usize)) -> Self {
        match self {
            Error::NotEncodable { violations, .. } => Error::NotEncodable {
                tile: Some(tile),
                violations,
            },
            other => other,
        }
    }
}
