use thiserror::Error;

/// Errors surfaced by the numeric kernels. Variants mirror the failure modes
/// of the public operations; contract violations that indicate caller bugs
/// (e.g. mismatched grids) are reported, not panicked, so batch drivers can
/// skip and continue.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid exponent field: {0}")]
    InvalidExponent(String),

    #[error("recipe does not align with the depth-{depth} grid: {detail}")]
    Alignment { depth: u8, detail: String },

    #[error("empty region")]
    EmptyRegion,

    #[error("cube not representable on this grid: {0}")]
    OutOfDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid scale range: {0}")]
    InvalidRange(String),

    #[error("scale too fine for depth-{depth} grid (scale {scale})")]
    Resolution { scale: u8, depth: u8 },

    #[error("region not contained in cube")]
    Containment,

    #[error("family of {requested} cubes infeasible at this depth (max feasible {max_feasible})")]
    Capacity {
        requested: usize,
        max_feasible: usize,
    },

    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),

    #[error("power-law fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
