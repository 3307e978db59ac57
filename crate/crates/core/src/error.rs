use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unbounded window: the intensity measure has infinite mass")]
    UnboundedWindow,
    #[error("point lies outside the window: {0}")]
    OutsideWindow(String),
    #[error("region escapes the window; counts would be censored: {0}")]
    RegionEscapesWindow(String),
    #[error("censored boundary: {0}")]
    CensoredBoundary(String),
    #[error("duplicate point at index {0}")]
    DuplicatePoint(usize),
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("empty function family")]
    EmptyFamily,
    #[error("member index {index} out of range for a family of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("probe beyond validity: {0}")]
    BeyondValidity(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("numeric overflow: {0}")]
    Overflow(String),
}

pub type Result<T> = std::result::Result<T, GeomError>;
