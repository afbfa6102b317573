use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] resvpr_core::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("no external score for query {query}, candidate {candidate}")]
    MissingScore { query: u64, candidate: u64 },
    #[error("{starts} start points requested but the query has {frames} frames")]
    TooManyStarts { starts: usize, frames: usize },
    #[error("holdout leaves no training frames")]
    HoldoutTooLarge,
    #[error("validation slice is empty")]
    EmptyValidation,
    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        use resvpr_core::Error as E;
        match self {
            HarnessError::Core(e) => match e {
                E::InvalidParameter { .. } => "invalid_parameter",
                E::DimensionMismatch { .. } => "dimension_mismatch",
                E::Empty(_) => "empty_input",
                E::ZeroSpectralRadius { .. } => "degenerate_reservoir",
                E::LabelOutOfRange { .. } | E::NotOneHot { .. } | E::NonBinaryTarget { .. } => "invalid_target",
                E::NonFinite(_) => "non_finite",
                E::MissingPositions(_) => "missing_positions",
                E::RankOutOfRange { .. } => "rank_out_of_range",
                E::Format { .. } => "format",
                E::Io { .. } => "io",
                E::Json { .. } => "config",
            },
            HarnessError::Config(_) | HarnessError::Json { .. } | HarnessError::UnknownPreset(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::MissingScore { .. } => "missing_score",
            HarnessError::TooManyStarts { .. } | HarnessError::HoldoutTooLarge => "invalid_parameter",
            HarnessError::EmptyValidation => "empty_input",
            HarnessError::AllTrialsFailed(_) => "trials_failed",
        }
    }

    /// Process exit code for the category.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 3,
            "io" => 4,
            "format" => 5,
            "invalid_parameter"
            | "dimension_mismatch"
            | "invalid_target"
            | "rank_out_of_range"
            | "non_finite"
            | "degenerate_reservoir" => 6,
            "missing_score" | "missing_positions" | "empty_input" => 7,
            "trials_failed" => 8,
            _ => 1,
        }
    }
}
