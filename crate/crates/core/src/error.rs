use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error("invalid summary: {0}")]
    InvalidSummary(String),
    #[error("pellet unreachable without a ghost collision from start cell {start:?}")]
    UnreachablePellet { start: (usize, usize) },
    #[error("integration produced a non-finite value at substep {substep}: {detail}")]
    Integration { substep: usize, detail: String },
    #[error("regression failed: {0}")]
    Regression(String),
    #[error("LP solver failed: {0}")]
    Lp(String),
    #[error("extraction failed: {0}")]
    Extraction(String),
    #[error("unlabeled states {states:?} have zero similarity to every labeled state")]
    DisconnectedComponent { states: Vec<usize> },
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("non-finite Max-Ent gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },
    #[error("policy has no action at reached state {state}")]
    UndefinedAction { state: usize },
    #[error("no prediction for unseen state {state}")]
    MissingPrediction { state: usize },
    #[error("{failed} of {total} restarts failed")]
    TooManyFailures { failed: usize, total: usize },
    #[error("refusing to render an empty cross matrix")]
    EmptyMatrix,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
