use crate::lattice::{BlockId, ParamViolation};

/// Errors surfaced by the library. Names mirror the documented error codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {}", join(.0))]
    InvalidParams(Vec<ParamViolation>),
    #[error("DEGENERATE_INPUT: {0}")]
    DegenerateInput(String),
    #[error("EMPTY_SET: no segments given")]
    EmptySet,
    #[error("EMPTY_SUPPORT: site has zero mass")]
    EmptySupport,
    #[error("VARIANT_MISMATCH: {0}")]
    VariantMismatch(String),
    #[error("SCALE_MISMATCH: {0}")]
    ScaleMismatch(String),
    #[error("RANGE: {0}")]
    Range(String),
    #[error("OUT_OF_WINDOW: block ({}, {}) is outside the window", .0[0], .0[1])]
    OutOfWindow(BlockId),
    #[error("REGIONS_OVERLAP: source and target regions intersect")]
    RegionsOverlap,
    #[error("WINDOW_TOO_SMALL: {0}")]
    WindowTooSmall(String),
    #[error("BAD_M: m = {m} is not admissible for n = {n}")]
    BadM { m: i64, n: i64 },
    #[error("NO_SIGN_CHANGE: theta at [{lo}, {hi}] is {theta_lo} and {theta_hi} against threshold {threshold}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        theta_lo: f64,
        theta_hi: f64,
        threshold: f64,
    },
    #[error("N_TOO_SMALL: n = {n} but at least {min} is required")]
    NTooSmall { n: i64, min: i64 },
    #[error("DIVISION_DEGENERATE: {0}")]
    DivisionDegenerate(String),
    #[error("INSUFFICIENT_DATA: {0}")]
    InsufficientData(String),
}

fn join(v: &[ParamViolation]) -> String {
    v.iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
