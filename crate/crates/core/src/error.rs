use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension {dim} exceeds the assembly limit {limit}")]
    DimensionLimit { dim: usize, limit: usize },
    #[error("charge sector {0} is empty")]
    EmptySector(i64),
    #[error("eigensolver did not converge after {iterations} iterations (residuals {residuals:?})")]
    NotConverged {
        iterations: usize,
        residuals: Vec<f64>,
    },
    #[error("operator is not charge-diagonal")]
    NotChargeDiagonal,
    #[error("site {site} out of range for a chain of {length} sites")]
    SiteOutOfRange { site: usize, length: usize },
    #[error("fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
