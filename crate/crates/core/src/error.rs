use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("element index {index} out of range for ground set of size {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("zero multiplicity for element {element}")]
    ZeroMultiplicity { element: usize },
    #[error("instance validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("enumeration infeasible: {states} states exceed cap {cap}")]
    EnumerationInfeasible { states: String, cap: u64 },
    #[error("replication budget {requested} exceeds cap {cap}; explicit override required")]
    ReplicationCapExceeded { requested: String, cap: u64 },
    #[error("balance condition violated: ratio {ratio} exceeds omega {omega}")]
    BalanceViolated { ratio: String, omega: String },
    #[error("support shape violated: {0}")]
    SupportShape(String),
    #[error("reduction parameters infeasible: {0}")]
    InfeasibleParams(String),
    #[error("negative outcome probability solving the split system for element {index}")]
    NegativeSplit { index: usize },
    #[error("operation requires a uniform matroid")]
    NonUniformMatroid,
    #[error("contract oracle failed: {0}")]
    Oracle(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}
