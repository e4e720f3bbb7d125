use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("user {user} has non-positive rate; utility is -inf")]
    NonPositiveRate { user: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid association: {0}")]
    InvalidAssociation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column} (field `{field}`): {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("user {user} has no finite association coefficient")]
    NoCandidate { user: usize },

    #[error("{solver} did not converge within {iterations} iterations")]
    NonConvergence { solver: &'static str, iterations: usize },

    #[error("no base station carries load")]
    EmptyActiveSet,

    #[error("bisection bracket could not be established for input {0}")]
    BracketFailure(f64),

    #[error("{what}: search space of size {size} exceeds limit {limit}")]
    TooLarge { what: &'static str, size: f64, limit: f64 },

    #[error("argument {0} outside the function domain")]
    DomainError(f64),

    #[error("no sign change of h on the bracket for user {user}")]
    NoRoot { user: usize },

    #[error("cell of base station {bs}: {source}")]
    Cell {
        bs: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("baseline quantile at p={p} is {value}; rate gain undefined")]
    DegenerateQuantile { p: f64, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
