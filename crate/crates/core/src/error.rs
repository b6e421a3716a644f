use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScopError {
    #[error("list {list}: duplicate locus id `{id}`")]
    DuplicateLocus { list: String, id: String },

    #[error("list {list}: locus `{id}` has score {score} above cutoff {cutoff}")]
    ScoreAboveCutoff {
        list: String,
        id: String,
        score: f64,
        cutoff: f64,
    },

    #[error("list {list}: locus `{id}` has invalid score {score} (must be finite and >= 0)")]
    InvalidScore { list: String, id: String, score: f64 },

    #[error("list {list}: cutoff {cutoff} must be finite and > 0")]
    InvalidCutoff { list: String, cutoff: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("invalid survival input: {0}")]
    InvalidSurvivalInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("locus {index}: every mixture component has zero likelihood")]
    DegenerateLocus { index: usize },

    #[error("complete-case fit needs at least {min} loci observed in both lists, found {found}")]
    TooFewCompleteCases { found: usize, min: usize },

    #[error("unknown preset `{0}` (valid presets: case1, case2, case3)")]
    UnknownPreset(String),

    #[error("truth curves need simulation labels")]
    MissingLabels,

    #[error("labels ({labels}) and records ({records}) are not aligned")]
    LabelMismatch { labels: usize, records: usize },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ScopError>;
