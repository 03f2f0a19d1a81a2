//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model id `{0}`")]
    UnknownModel(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("singular split: |dv| = {0:.3e} at a (near-)critical point")]
    SingularSplit(f64),

    #[error("path error: {0}")]
    Path(String),

    #[error("transport integration failure: {0}")]
    Integration(String),

    #[error("homotopy error: {0}")]
    Homotopy(String),

    #[error("exactness violation: {0}")]
    Exactness(String),

    #[error("degenerate frame: {0}")]
    Frame(String),

    #[error("degenerate plane: |Omega(frame)| = {0:.3e}")]
    DegeneratePlane(f64),

    #[error("transversality failure: {0}")]
    Transversality(String),

    #[error("anchor error: {0}")]
    Anchor(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("degree residual {residual:.3e} exceeds threshold {threshold:.1e}")]
    NonIntegerDegree { residual: f64, threshold: f64 },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("hypothesis error: {0}")]
    Hypothesis(String),

    #[error("theorem check failure: {0}")]
    IdentityCheck(String),

    #[error("scenario validation: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
