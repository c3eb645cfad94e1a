use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point pair outside the cost's validity domain: {0}")]
    OutOfValidityDomain(String),

    #[error("derivative order {0} is not supported (maximum is 4)")]
    UnsupportedOrder(usize),

    #[error("mixed Hessian is degenerate (|det| = {det:.3e}){context}")]
    A2Violation { det: f64, context: String },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("domain has no defining function")]
    MissingDefiningFunction,

    #[error("could not bracket the level set inside the probe box at x' = {0:?}")]
    RootBracketFailure(Vec<f64>),

    #[error("empty measure: {0}")]
    EmptyMeasure(String),

    #[error("mass imbalance: source total {source_total}, target total {target_total}")]
    MassImbalance { source_total: f64, target_total: f64 },

    #[error("problem exceeds the configured scale limits: {0}")]
    ScaleExceeded(String),

    #[error("node {0} is on the grid boundary")]
    BoundaryNode(usize),

    #[error("function is not a c-support: violation {0:.3e}")]
    NotASupport(f64),

    #[error("no grid node qualifies for the residual check")]
    NoQualifiedNodes,

    #[error("scenarios do not match: {0}")]
    MismatchedScenarios(String),

    #[error("report is missing stage '{0}'")]
    MissingStage(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
