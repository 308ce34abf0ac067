use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("infeasible initial-state distribution: {0} consecutive constraint rejections")]
    InfeasibleDistribution(usize),

    #[error("threshold calibration found no rollouts that survived the failure conditions")]
    NoSuccessfulRollouts,

    #[error("cannot fit a threshold: every label is {}", if *.0 { "good" } else { "bad" })]
    SingleClassData(bool),

    #[error("chain construction abandoned ({reason}); partial graph retained")]
    ConstructionAbandoned { reason: String },

    #[error("invalid config:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("graph file version {found} is unsupported (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("graph file checksum mismatch: file is corrupt or truncated")]
    ChecksumMismatch,

    #[error("malformed graph file: {0}")]
    MalformedGraphFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    TomlParse(String),
}
