use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("graph contains a cycle through `{0}`")]
    Cyclic(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node sets overlap on `{0}`")]
    OverlappingSets(String),

    #[error("invalid surgery: {0}")]
    InvalidSurgery(String),

    #[error("parse error at offset {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("unknown function `{name}` at offset {position}")]
    UnknownFunction { name: String, position: usize },

    #[error("invalid model: {0}")]
    Validation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("outside the analytic subclass: {0}")]
    Unsupported(String),

    #[error("singular conditioning covariance: {0}")]
    SingularCovariance(String),

    #[error("rank-deficient regression design: {0}")]
    RankDeficient(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("policy references a descendant of the decision: `{0}`")]
    PolicyUsesDescendant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
