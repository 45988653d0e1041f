use thiserror::Error;

/// Errors produced by the grid model, solvers and analyses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("malformed {block} row {row}: expected at least {expected} columns, found {found}")]
    MalformedRow {
        block: &'static str,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("case has no slack bus")]
    MissingSlack,

    #[error("case has {0} slack buses, expected exactly one")]
    MultipleSlack(usize),

    #[error("{element} references unknown bus {bus}")]
    DanglingBus { element: String, bus: usize },

    #[error("invalid network data: {0}")]
    Invalid(String),

    #[error("network is islanded: buses {buses:?} are not connected to the slack bus")]
    Islanded { buses: Vec<usize> },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("candidate {id} duplicates existing circuit {from}-{to} without the parallel flag")]
    DuplicateCircuit { id: usize, from: usize, to: usize },

    #[error("ecological flow matrix has no positive entry")]
    EmptyFlowMatrix,

    #[error("nonpositive logarithm argument {0} in relaxed metric")]
    NonPositiveLogArgument(f64),

    #[error("power flow solution is not converged")]
    Unsolved,

    #[error("negative load {0} MW at bus {1}")]
    NegativeLoad(f64, usize),

    #[error("line {0} has no positive capacity")]
    ZeroCapacity(usize),

    #[error("requested {requested} candidates but only {available} distinct pairs are available")]
    NotEnoughPairs { requested: usize, available: usize },

    #[error("no voltage level in scope has both two buses and a branch to fit")]
    NoFittableLevel,

    #[error("expansion problem is infeasible: {0}")]
    Infeasible(String),

    #[error("search budget exhausted without an integral incumbent")]
    BudgetExhausted,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
